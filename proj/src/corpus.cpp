#include "apnea/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "apnea/dsp.hpp"
#include "apnea/error.hpp"
#include "apnea/events.hpp"
#include "apnea/hash.hpp"
#include "apnea/wav.hpp"

namespace apnea::corpus {

namespace {
constexpr const char* kModule = "corpus";
}

std::filesystem::path Manifest::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::string> Manifest::subjects() const {
  std::set<std::string> s;
  for (const auto& e : entries) s.insert(e.subject_id);
  return {s.begin(), s.end()};
}

std::vector<ManifestEntry> Manifest::nights_of(const std::set<std::string>& subjects) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (subjects.contains(e.subject_id)) out.push_back(e);
  return out;
}

nlohmann::json Manifest::to_json() const {
  nlohmann::json nights = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json n = {{"subject_id", e.subject_id}, {"night_id", e.night_id}, {"audio", e.audio},
                        {"effort", e.effort},         {"labels", e.labels}};
    if (e.total_sleep_time_h) n["total_sleep_time_h"] = *e.total_sleep_time_h;
    nights.push_back(std::move(n));
  }
  return {{"provenance", provenance}, {"nights", nights}};
}

Manifest Manifest::from_json(const nlohmann::json& j, std::filesystem::path base_dir) {
  Manifest m;
  m.base_dir = std::move(base_dir);
  try {
    if (j.contains("provenance")) m.provenance = j.at("provenance");
    for (const auto& n : j.at("nights")) {
      ManifestEntry e;
      e.subject_id = n.at("subject_id").get<std::string>();
      e.night_id = n.at("night_id").get<std::string>();
      e.audio = n.at("audio").get<std::string>();
      e.effort = n.value("effort", std::string());
      e.labels = n.value("labels", std::string());
      if (n.contains("total_sleep_time_h")) e.total_sleep_time_h = n.at("total_sleep_time_h").get<double>();
      if (e.subject_id.empty() || e.audio.empty())
        throw Error(ErrorCode::ConfigInvalid, kModule, "manifest night without subject or audio");
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ConfigInvalid, kModule, std::string("malformed manifest: ") + ex.what());
  }
  if (m.entries.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "manifest lists no nights");
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, kModule, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ConfigInvalid, kModule, path.string() + ": " + ex.what());
  }
  return from_json(j, path.parent_path());
}

void Manifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, kModule, "cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

NightRecord load_record(const Manifest& manifest, const ManifestEntry& entry) {
  NightRecord r;
  r.audio = wav::load_night(manifest.resolve(entry.audio), entry.subject_id, entry.night_id);
  r.audio.total_sleep_time_h = entry.total_sleep_time_h;
  if (!entry.labels.empty()) r.audio.events = events::read_labels(manifest.resolve(entry.labels));
  if (!entry.effort.empty()) r.effort = effort::read_effort_file(manifest.resolve(entry.effort));
  r.audio.validate();
  return r;
}

nlohmann::json CorpusSpec::to_json() const {
  return {{"subjects", subjects},
          {"nights_per_subject", nights_per_subject},
          {"night_duration_s", night_duration_s},
          {"audio_snr_db", audio_snr_db},
          {"effort_suppression_factor", effort_suppression_factor},
          {"breathing_rate_hz", breathing_rate_hz},
          {"event_rates_per_h", event_rates_per_h},
          {"seed", seed}};
}

synth::SynthConfig night_config(const CorpusSpec& spec, std::size_t subject, std::size_t night) {
  if (spec.event_rates_per_h.empty()) throw Error(ErrorCode::ConfigInvalid, kModule, "no event rates given");
  char sid[16], nid[16];
  std::snprintf(sid, sizeof sid, "s%03zu", subject);
  std::snprintf(nid, sizeof nid, "n%zu", night);
  synth::SynthConfig c;
  c.subject_id = sid;
  c.night_id = nid;
  c.seed = derive_seed(spec.seed, std::string(sid) + "/" + nid);
  c.night_duration_s = spec.night_duration_s;
  c.audio_snr_db = spec.audio_snr_db;
  c.effort_suppression_factor = spec.effort_suppression_factor;
  c.breathing_rate_hz = spec.breathing_rate_hz;
  std::mt19937_64 rng(derive_seed(spec.seed, std::string(sid) + "/rate"));
  const double factor = std::uniform_real_distribution<double>(0.9, 1.1)(rng);
  c.event_rate_per_h = spec.event_rates_per_h[subject % spec.event_rates_per_h.size()] * factor;
  return c;
}

Manifest write_synthetic_corpus(const CorpusSpec& spec, const std::filesystem::path& dir,
                                const nlohmann::json& provenance) {
  if (spec.subjects == 0 || spec.nights_per_subject == 0)
    throw Error(ErrorCode::ConfigInvalid, kModule, "corpus needs at least one subject and night");
  std::filesystem::create_directories(dir);
  Manifest m;
  m.base_dir = dir;
  m.provenance = provenance.is_object() ? provenance : nlohmann::json::object();
  m.provenance["corpus"] = spec.to_json();
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    for (std::size_t n = 0; n < spec.nights_per_subject; ++n) {
      const synth::SynthConfig cfg = night_config(spec, s, n);
      const synth::SynthNight night = synth::generate(cfg);
      const std::string stem = cfg.subject_id + "_" + cfg.night_id;
      wav::write_wav(dir / (stem + ".wav"), night.audio.samples, night.audio.sample_rate_hz);
      effort::write_effort_file(dir / (stem + ".eff"), night.effort);
      events::write_labels(dir / (stem + ".csv"), night.events);
      m.entries.push_back({cfg.subject_id, cfg.night_id, stem + ".wav", stem + ".eff", stem + ".csv", std::nullopt});
    }
  }
  m.save(dir / "manifest.json");
  return m;
}

std::vector<std::size_t> select_segments(std::span<const int> labels, std::size_t max_count, std::uint64_t seed) {
  std::vector<std::size_t> all(labels.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  if (max_count == 0 || max_count >= labels.size()) return all;

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::size_t take_pos = std::min(pos.size(), max_count / 2);
  std::size_t take_neg = std::min(neg.size(), max_count - take_pos);
  take_pos = std::min(pos.size(), max_count - take_neg);
  std::vector<std::size_t> out(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(take_pos));
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(take_neg));
  std::sort(out.begin(), out.end());
  return out;
}

std::filesystem::path cache_path(const std::filesystem::path& cache_dir, const std::string& subject_id,
                                 const std::string& night_id) {
  return cache_dir / (subject_id + "_" + night_id + ".lmel");
}

void append_examples(const NightRecord& night, const RunConfig& config, std::uint64_t seed, Examples& out) {
  const auto slices = dsp::segment_night(night.audio, config.segment_s, config.shift_s);
  std::vector<SegmentIndex> index;
  index.reserve(slices.size());
  for (const auto& s : slices) index.push_back(s.index);
  const auto labels = events::segment_labels(index, night.audio.events, config.label_min_overlap_s);
  const auto chosen = select_segments(labels, config.segments_per_night, seed);

  std::filesystem::path cache;
  if (!config.paths.cache_dir.empty()) {
    cache = cache_path(config.paths.cache_dir, night.audio.subject_id, night.audio.night_id);
    if (!std::filesystem::exists(cache)) cache.clear();
  }
  const dsp::LogMelExtractor extract(night.audio.sample_rate_hz, config.features);
  for (std::size_t i : chosen) {
    FeaturePtr features = std::make_shared<const dsp::LogMelSegment>(
        cache.empty() ? extract(slices[i].samples, slices[i].index)
                      : dsp::read_feature_cache_entry(cache, i, config.segment_s, config.shift_s));
    out.osa.push_back({features, labels[i], night.audio.subject_id});
    if (!night.effort.empty())
      out.effort.push_back({features, effort::reference_segment(night.effort, slices[i].index), night.audio.subject_id});
  }
}

Examples build_examples(const Manifest& manifest, const std::set<std::string>& subjects, const RunConfig& config,
                        const std::string& split) {
  Examples out;
  for (const auto& entry : manifest.nights_of(subjects)) {
    const NightRecord rec = load_record(manifest, entry);
    append_examples(rec, config, derive_seed(config.seed, split + "/" + entry.subject_id + "/" + entry.night_id), out);
  }
  return out;
}

}  // namespace apnea::corpus
