#include "apnea/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "apnea/error.hpp"

namespace apnea::events {

namespace {
constexpr const char* kModule = "events";
}

void EventConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw Error(ErrorCode::ConfigInvalid, kModule, "threshold must lie in (0, 1)");
  if (!(gap_s >= 0.0)) throw Error(ErrorCode::ConfigInvalid, kModule, "gap_s must be non-negative");
  if (!(min_duration_s >= 0.0)) throw Error(ErrorCode::ConfigInvalid, kModule, "min_duration_s must be non-negative");
  if (!(window_s > 0.0)) throw Error(ErrorCode::ConfigInvalid, kModule, "window_s must be positive");
}

std::vector<SdbEvent> merge_events(std::span<const SegmentProb> probs, const EventConfig& config) {
  config.validate();
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i].start_s < probs[i - 1].start_s)
      throw Error(ErrorCode::UnsortedInput, kModule, "segment starts must be non-decreasing");

  std::vector<SdbEvent> merged;
  for (const SegmentProb& sp : probs) {
    if (!(sp.prob >= config.threshold)) continue;
    const double start = sp.start_s, end = sp.start_s + config.window_s;
    if (!merged.empty() && start - merged.back().end_s <= config.gap_s) {
      merged.back().end_s = std::max(merged.back().end_s, end);
    } else {
      merged.push_back({start, end, EventSource::predicted});
    }
  }
  std::erase_if(merged, [&](const SdbEvent& e) { return e.duration_s() < config.min_duration_s; });
  return merged;
}

double compute_ahi(std::size_t event_count, double tst_h) {
  if (!(tst_h > 0.0)) throw Error(ErrorCode::NonPositiveTst, kModule, "total sleep time must be positive");
  return static_cast<double>(event_count) / tst_h;
}

Severity severity(double ahi) {
  if (!(ahi >= 0.0)) throw Error(ErrorCode::NegativeAhi, kModule, "AHI must be non-negative");
  if (ahi < 5.0) return Severity::healthy;
  if (ahi < 15.0) return Severity::mild;
  if (ahi < 30.0) return Severity::moderate;
  return Severity::severe;
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::healthy: return "healthy";
    case Severity::mild: return "mild";
    case Severity::moderate: return "moderate";
    case Severity::severe: return "severe";
  }
  return "unknown";
}

std::vector<int> segment_labels(std::span<const SegmentIndex> segments, std::span<const SdbEvent> events,
                                double min_overlap_s) {
  std::vector<int> labels(segments.size(), 0);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    for (const SdbEvent& e : events) {
      const double overlap = std::min(segments[i].end_s(), e.end_s) - std::max(segments[i].start_s, e.start_s);
      if (overlap >= min_overlap_s) {
        labels[i] = 1;
        break;
      }
    }
  }
  return labels;
}

std::vector<SdbEvent> parse_labels(std::string_view text) {
  std::vector<SdbEvent> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    double a = 0.0, b = 0.0;
    char comma = 0;
    std::istringstream ls(line);
    if (!(ls >> a >> comma >> b) || comma != ',')
      throw Error(ErrorCode::UnsupportedFormat, kModule, "labels line " + std::to_string(lineno) + ": expected start_s,end_s");
    if (!(b > a) || a < 0.0)
      throw Error(ErrorCode::UnsupportedFormat, kModule, "labels line " + std::to_string(lineno) + ": empty or negative interval");
    out.push_back({a, b, EventSource::reference});
  }
  return out;
}

std::vector<SdbEvent> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, kModule, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_labels(ss.str());
}

void write_labels(const std::filesystem::path& path, std::span<const SdbEvent> events) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, kModule, "cannot write " + path.string());
  out << "# start_s,end_s\n";
  out.precision(17);
  for (const SdbEvent& e : events) out << e.start_s << ',' << e.end_s << '\n';
}

nlohmann::json NightReport::to_json() const {
  nlohmann::json probs = nlohmann::json::array();
  for (const auto& sp : segment_probs) probs.push_back({sp.start_s, sp.prob});
  nlohmann::json evs = nlohmann::json::array();
  for (const auto& e : events) evs.push_back({e.start_s, e.end_s});
  return {{"subject_id", subject_id},
          {"night_id", night_id},
          {"event_count", event_count},
          {"tst_h", tst_h},
          {"tst_source", tst_source == TstSource::metadata ? "metadata" : "recording"},
          {"ahi", ahi},
          {"severity", std::string(to_string(severity))},
          {"threshold", config.threshold},
          {"merge_gap_s", config.gap_s},
          {"min_duration_s", config.min_duration_s},
          {"events", evs},
          {"segment_probs", probs}};
}

std::pair<double, TstSource> total_sleep_time(const AudioNight& night) {
  if (night.total_sleep_time_h) return {*night.total_sleep_time_h, TstSource::metadata};
  return {night.duration_s() / 3600.0, TstSource::recording};
}

NightReport build_report(const AudioNight& night, std::vector<SegmentProb> probs, const EventConfig& config) {
  NightReport r;
  r.subject_id = night.subject_id;
  r.night_id = night.night_id;
  r.config = config;
  r.events = merge_events(probs, config);
  r.segment_probs = std::move(probs);
  std::tie(r.tst_h, r.tst_source) = total_sleep_time(night);
  r.event_count = r.events.size();
  r.ahi = compute_ahi(r.event_count, r.tst_h);
  r.severity = severity(r.ahi);
  return r;
}

}  // namespace apnea::events
