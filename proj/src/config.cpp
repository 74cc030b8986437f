#include "apnea/config.hpp"

#include <fstream>
#include <sstream>

#include "apnea/error.hpp"
#include "apnea/hash.hpp"

namespace apnea {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, "config", what); }

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    invalid(std::string("field '") + key + "' has the wrong type");
  }
}

const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) invalid(std::string("section '") + key + "' must be an object");
  return j.at(key);
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) invalid("unknown field '" + where + key + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (features.window_ms <= 0 || features.shift_ms <= 0 || features.mel_bins <= 0)
    invalid("features.window_ms, shift_ms and mel_bins must be positive");
  if (!(features.floor > 0.0)) invalid("features.floor must be positive");
  if (!(segment_s > 0.0) || !(shift_s > 0.0)) invalid("features.segment_s and shift_s must be positive");
  if (!(label_min_overlap_s >= 0.0) || label_min_overlap_s > segment_s)
    invalid("data.label_min_overlap_s must lie in [0, segment_s]");
  effort_arch.validate();
  osa_arch.validate();
  effort_train.validate();
  osa_train.validate();
  if (k_folds < 3) invalid("folds.k must be at least 3");
  if (fold >= k_folds) invalid("folds.fold must be below folds.k");
  events.validate();
  if (!(max_lag_s > 0.0)) invalid("alignment.max_lag_s must be positive");
}

nlohmann::json RunConfig::to_json() const {
  return {{"seed", seed},
          {"paths",
           {{"manifest", paths.manifest},
            {"cache_dir", paths.cache_dir},
            {"checkpoint_dir", paths.checkpoint_dir},
            {"report_dir", paths.report_dir}}},
          {"features",
           {{"window_ms", features.window_ms},
            {"shift_ms", features.shift_ms},
            {"mel_bins", features.mel_bins},
            {"floor", features.floor},
            {"segment_s", segment_s},
            {"shift_s", shift_s}}},
          {"data", {{"segments_per_night", segments_per_night}, {"label_min_overlap_s", label_min_overlap_s}}},
          {"effort", {{"arch", effort_arch.to_json()}, {"train", effort_train.to_json()}}},
          {"osa",
           {{"model", osa_model == osa::ModelKind::audio_only ? "audio" : "fusion"},
            {"arch", osa_arch.to_json()},
            {"train", osa_train.to_json()}}},
          {"folds", {{"k", k_folds}, {"fold", fold}}},
          {"events",
           {{"threshold", events.threshold}, {"merge_gap_s", events.gap_s}, {"min_duration_s", events.min_duration_s}}},
          {"alignment", {{"max_lag_s", max_lag_s}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) invalid("config must be a JSON object");
  check_keys(j, {"seed", "paths", "features", "data", "effort", "osa", "folds", "events", "alignment"}, "");
  RunConfig c;
  read(j, "seed", c.seed);

  const auto& p = section(j, "paths");
  check_keys(p, {"manifest", "cache_dir", "checkpoint_dir", "report_dir"}, "paths.");
  read(p, "manifest", c.paths.manifest);
  read(p, "cache_dir", c.paths.cache_dir);
  read(p, "checkpoint_dir", c.paths.checkpoint_dir);
  read(p, "report_dir", c.paths.report_dir);

  const auto& f = section(j, "features");
  check_keys(f, {"window_ms", "shift_ms", "mel_bins", "floor", "segment_s", "shift_s"}, "features.");
  read(f, "window_ms", c.features.window_ms);
  read(f, "shift_ms", c.features.shift_ms);
  read(f, "mel_bins", c.features.mel_bins);
  read(f, "floor", c.features.floor);
  read(f, "segment_s", c.segment_s);
  read(f, "shift_s", c.shift_s);

  const auto& d = section(j, "data");
  check_keys(d, {"segments_per_night", "label_min_overlap_s"}, "data.");
  read(d, "segments_per_night", c.segments_per_night);
  read(d, "label_min_overlap_s", c.label_min_overlap_s);

  try {
    const auto& e = section(j, "effort");
    check_keys(e, {"arch", "train"}, "effort.");
    if (e.contains("arch")) c.effort_arch = effort::EffortArch::from_json(e.at("arch"));
    if (e.contains("train")) c.effort_train = TrainConfig::from_json(e.at("train"), c.effort_train);

    const auto& o = section(j, "osa");
    check_keys(o, {"model", "arch", "train"}, "osa.");
    if (o.contains("model")) c.osa_model = osa::parse_model_kind(o.at("model").get<std::string>());
    if (o.contains("arch")) c.osa_arch = osa::AudioArch::from_json(o.at("arch"));
    if (o.contains("train")) c.osa_train = TrainConfig::from_json(o.at("train"), c.osa_train);
  } catch (const nlohmann::json::exception& ex) {
    invalid(std::string("malformed model section: ") + ex.what());
  }

  const auto& k = section(j, "folds");
  check_keys(k, {"k", "fold"}, "folds.");
  read(k, "k", c.k_folds);
  read(k, "fold", c.fold);

  const auto& ev = section(j, "events");
  check_keys(ev, {"threshold", "merge_gap_s", "min_duration_s"}, "events.");
  read(ev, "threshold", c.events.threshold);
  read(ev, "merge_gap_s", c.events.gap_s);
  read(ev, "min_duration_s", c.events.min_duration_s);

  const auto& a = section(j, "alignment");
  check_keys(a, {"max_lag_s"}, "alignment.");
  read(a, "max_lag_s", c.max_lag_s);

  c.events.window_s = c.segment_s;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "config", "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    invalid(path.string() + ": " + ex.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "config", "cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

std::string config_hash(const RunConfig& config) {
  Fnv1a h;
  h.update(config.to_json().dump());
  return h.hex();
}

}  // namespace apnea
