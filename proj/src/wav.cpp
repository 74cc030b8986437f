#include "apnea/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "apnea/error.hpp"

namespace apnea::wav {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& why) {
  throw Error(ErrorCode::UnsupportedFormat, "wav", path.string() + ": " + why);
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "wav", "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    bad(path, "not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const auto size = read_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) bad(path, "short fmt chunk");
      format = read_le<std::uint16_t>(bytes.data() + body);
      channels = read_le<std::uint16_t>(bytes.data() + body + 2);
      rate = read_le<std::uint32_t>(bytes.data() + body + 4);
      bits = read_le<std::uint16_t>(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (avail < 26) bad(path, "short extensible fmt chunk");
        format = read_le<std::uint16_t>(bytes.data() + body + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || rate == 0) bad(path, "missing fmt chunk");
  if (data == nullptr) bad(path, "missing data chunk");

  WavData out;
  out.sample_rate_hz = static_cast<int>(rate);
  out.channels = channels;
  if (format == kFormatPcm && bits == 16) {
    out.samples.resize(data_size / 2);
    for (std::size_t i = 0; i < out.samples.size(); ++i)
      out.samples[i] = static_cast<float>(read_le<std::int16_t>(data + 2 * i)) / 32768.0f;
  } else if (format == kFormatFloat && bits == 32) {
    out.samples.resize(data_size / 4);
    for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] = read_le<float>(data + 4 * i);
  } else {
    bad(path, "only 16-bit PCM and 32-bit float samples are supported");
  }
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate_hz,
               Encoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "wav", "cannot write " + path.string());
  const std::uint16_t bits = encoding == Encoding::pcm16 ? 16 : 32;
  const std::uint16_t format = encoding == Encoding::pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * (bits / 8));
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, format);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate_hz));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate_hz) * (bits / 8));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(bits / 8));
  write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  if (encoding == Encoding::pcm16) {
    std::vector<std::int16_t> pcm(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const float s = std::clamp(samples[i], -1.0f, 1.0f);
      pcm[i] = static_cast<std::int16_t>(std::lround(s * 32767.0f));
    }
    out.write(reinterpret_cast<const char*>(pcm.data()), static_cast<std::streamsize>(pcm.size() * 2));
  } else {
    out.write(reinterpret_cast<const char*>(samples.data()), static_cast<std::streamsize>(samples.size() * 4));
  }
  if (!out) throw Error(ErrorCode::Io, "wav", "write failed for " + path.string());
}

AudioNight load_night(const std::filesystem::path& path, std::string subject_id, std::string night_id) {
  WavData w = read_wav(path);
  if (w.channels != 1) bad(path, "expected mono audio, got " + std::to_string(w.channels) + " channels");
  if (w.sample_rate_hz != kAudioRateHz)
    bad(path, "expected 16000 Hz audio, got " + std::to_string(w.sample_rate_hz) + " Hz (resampling is not supported)");
  AudioNight night;
  night.samples = std::move(w.samples);
  night.sample_rate_hz = w.sample_rate_hz;
  night.subject_id = std::move(subject_id);
  night.night_id = night_id.empty() ? path.stem().string() : std::move(night_id);
  night.validate();
  return night;
}

}  // namespace apnea::wav
