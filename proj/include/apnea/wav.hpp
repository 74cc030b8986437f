#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "apnea/types.hpp"

namespace apnea::wav {

enum class Encoding { pcm16, float32 };

struct WavData {
  int sample_rate_hz = 0;
  int channels = 0;
  std::vector<float> samples;  // interleaved when channels > 1
};

/// Reads RIFF/WAVE with 16-bit PCM or 32-bit IEEE float samples.
WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate_hz,
               Encoding encoding = Encoding::pcm16);

/// Loads a mono 16 kHz recording as an AudioNight; other rates are rejected (no resampling).
AudioNight load_night(const std::filesystem::path& path, std::string subject_id = {}, std::string night_id = {});

}  // namespace apnea::wav
