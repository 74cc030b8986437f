#include "apnea/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "apnea/error.hpp"
#include "apnea/hash.hpp"

namespace apnea::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are little-endian");

namespace {
[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorCode::CorruptCheckpoint, "checkpoint", why); }
}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format_version"] = ckpt.format_version;
  header["rng_seed"] = ckpt.rng_seed;
  header["config"] = ckpt.config;
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    if (shape_size(t.shape) != t.values.size()) corrupt("tensor " + name + " has inconsistent shape");
    entries.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += t.values.size() * sizeof(float);
  }
  header["tensors"] = std::move(entries);
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  std::string out;
  out.reserve(kCheckpointMagic.size() + sizeof len + text.size() + offset);
  out.append(kCheckpointMagic);
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out.append(text);
  for (const auto& [name, t] : ckpt.tensors)
    out.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(float));
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  const std::size_t fixed = kCheckpointMagic.size() + sizeof(std::uint64_t);
  if (bytes.size() < fixed || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    corrupt("missing APNCKPT1 magic");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kCheckpointMagic.size(), sizeof len);
  if (len > bytes.size() - fixed) corrupt("header runs past end of file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(fixed, len));
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("unreadable header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("format_version") || !header["format_version"].is_number_integer())
    corrupt("header lacks format_version");
  Checkpoint ckpt;
  ckpt.format_version = header["format_version"].get<int>();
  if (ckpt.format_version != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint",
                "format_version " + std::to_string(ckpt.format_version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  const std::string_view blob = bytes.substr(fixed + len);
  try {
    ckpt.rng_seed = header.at("rng_seed").get<std::uint64_t>();
    ckpt.config = header.at("config");
    for (const auto& e : header.at("tensors")) {
      StoredTensor t;
      const auto name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto count = e.at("count").get<std::uint64_t>();
      if (count != shape_size(t.shape)) corrupt("tensor " + name + " count does not match its shape");
      if (offset > blob.size() || count * sizeof(float) > blob.size() - offset)
        corrupt("tensor " + name + " payload is truncated");
      t.values.resize(count);
      std::memcpy(t.values.data(), blob.data() + offset, count * sizeof(float));
      if (!ckpt.tensors.emplace(name, std::move(t)).second) corrupt("duplicate tensor " + name);
    }
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("malformed header: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "checkpoint", "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "checkpoint", "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingCheckpoint, "checkpoint", "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

void capture_state(const std::vector<StateRef>& state, Checkpoint& ckpt, const std::string& prefix) {
  for (const StateRef& ref : state) {
    StoredTensor t;
    t.shape = ref.value->shape();
    t.values.resize(ref.value->size());
    for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = static_cast<float>((*ref.value)[i]);
    if (!ckpt.tensors.emplace(prefix + ref.name, std::move(t)).second) corrupt("duplicate tensor " + prefix + ref.name);
  }
}

void restore_state(const std::vector<StateRef>& state, const Checkpoint& ckpt, const std::string& prefix) {
  std::set<std::string> used;
  for (const StateRef& ref : state) {
    const std::string name = prefix + ref.name;
    const auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) corrupt("missing tensor " + name);
    if (it->second.shape != ref.value->shape())
      corrupt("tensor " + name + " has shape " + shape_string(it->second.shape) + ", model expects " +
              shape_string(ref.value->shape()));
    for (std::size_t i = 0; i < ref.value->size(); ++i) (*ref.value)[i] = static_cast<double>(it->second.values[i]);
    used.insert(name);
  }
  for (const auto& [name, t] : ckpt.tensors)
    if (name.starts_with(prefix) && !used.contains(name)) corrupt("unexpected tensor " + name);
}

std::string state_hash(const std::vector<StateRef>& state) {
  Fnv1a h;
  for (const StateRef& ref : state) {
    h.update(ref.name);
    h.update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(ref.value->data()),
                                            ref.value->size() * sizeof(double)));
  }
  return h.hex();
}

}  // namespace apnea::nn
