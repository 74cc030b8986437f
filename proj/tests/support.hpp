#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include <unistd.h>

#include "apnea/config.hpp"
#include "apnea/corpus.hpp"
#include "apnea/error.hpp"
#include "apnea/synth.hpp"

namespace apnea::testing {

template <typename F>
void expect_error(ErrorCode code, F&& f) {
  try {
    f();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("apnea_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

/// Examples from one synthetic night of `duration_s`, every window or `per_night` of them.
inline corpus::Examples synthetic_examples(std::uint64_t seed, double duration_s, std::size_t per_night,
                                           double events_per_h = 20.0, const std::string& subject = "s000") {
  synth::SynthConfig sc;
  sc.seed = seed;
  sc.night_duration_s = duration_s;
  sc.event_rate_per_h = events_per_h;
  sc.subject_id = subject;
  auto night = synth::generate(sc);
  corpus::NightRecord rec{std::move(night.audio), std::move(night.effort)};
  RunConfig config;
  config.segments_per_night = per_night;
  corpus::Examples out;
  corpus::append_examples(rec, config, seed, out);
  return out;
}

}  // namespace apnea::testing
