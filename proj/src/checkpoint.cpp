#include "attrenh/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace attrenh {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'E', 'N', 'H'};

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw FormatError("checkpoint truncated");
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

}  // namespace

std::string checkpoint_bytes(const Checkpoint& c) {
  json index = json::array();
  std::size_t offset = 0;
  for (const auto& t : c.tensors) {
    const Shape s = t.value.shape();
    index.push_back({{"name", t.name},
                     {"role", t.role},
                     {"shape", {s.n, s.c, s.h, s.w}},
                     {"offset", offset},
                     {"count", t.value.size()}});
    offset += t.value.size();
  }
  json header = {{"kind", c.kind},
                 {"config_hash", c.config_hash},
                 {"epoch", c.epoch},
                 {"optimizer_steps", c.optimizer_steps},
                 {"rng_state", c.rng_state},
                 {"meta", json::parse(c.meta)},
                 {"tensors", index},
                 {"payload_floats", offset}};
  const std::string text = header.dump();
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset * sizeof(float));
  for (const auto& t : c.tensors)
    out.append(reinterpret_cast<const char*>(t.value.data()), t.value.size() * sizeof(float));
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  const auto len = get<std::uint64_t>(bytes, pos);
  if (pos + len > bytes.size()) throw FormatError("checkpoint header truncated");
  json h;
  try {
    h = json::parse(bytes.substr(pos, len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  pos += len;
  Checkpoint c;
  try {
    c.kind = h.at("kind");
    c.config_hash = h.at("config_hash");
    c.epoch = h.at("epoch");
    c.optimizer_steps = h.at("optimizer_steps");
    c.rng_state = h.at("rng_state");
    c.meta = h.at("meta").dump();
    const std::size_t total = h.at("payload_floats");
    if (bytes.size() - pos != total * sizeof(float)) throw FormatError("checkpoint payload size mismatch");
    std::size_t expected = 0;
    for (const auto& e : h.at("tensors")) {
      const auto shp = e.at("shape").get<std::vector<int>>();
      if (shp.size() != 4) throw FormatError("checkpoint tensor shape must have 4 dims");
      const std::size_t off = e.at("offset"), count = e.at("count");
      if (off != expected) throw FormatError("checkpoint tensor index has a gap or overlap");
      NamedTensor t{e.at("name"), e.at("role"), Tensor<float>({shp[0], shp[1], shp[2], shp[3]})};
      if (t.value.size() != count) throw FormatError("checkpoint tensor '" + t.name + "' count/shape mismatch");
      std::memcpy(t.value.data(), bytes.data() + pos + off * sizeof(float), count * sizeof(float));
      expected += count;
      c.tensors.push_back(std::move(t));
    }
    if (expected != total) throw FormatError("checkpoint tensor index does not cover the payload");
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = checkpoint_bytes(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind,
                           const std::string& expected_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  Checkpoint c = checkpoint_from_bytes(ss.str());
  if (!expected_kind.empty() && c.kind != expected_kind) {
    throw FormatError(path.string() + ": checkpoint holds a '" + c.kind + "' network, expected '" + expected_kind +
                      "'");
  }
  if (!expected_hash.empty() && c.config_hash != expected_hash) {
    throw FormatError(path.string() + ": config hash " + c.config_hash + " does not match " + expected_hash);
  }
  return c;
}

void store_params(Checkpoint& ckpt, const ParamSet<float>& set) {
  for (auto* p : set.params) ckpt.tensors.push_back({p->name, "param", p->value});
  for (auto* p : set.buffers) ckpt.tensors.push_back({p->name, "buffer", p->value});
}

void store_slots(Checkpoint& ckpt, const ParamSet<float>& set, const std::string& slot,
                 const std::vector<Tensor<float>>& values) {
  if (values.size() != set.params.size()) throw ArgumentError("optimizer slot count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i)
    ckpt.tensors.push_back({set.params[i]->name + "#" + slot, "optimizer", values[i]});
}

namespace {

std::map<std::string, const NamedTensor*> by_name(const Checkpoint& ckpt) {
  std::map<std::string, const NamedTensor*> m;
  for (const auto& t : ckpt.tensors) m[t.name] = &t;
  return m;
}

}  // namespace

void restore_params(const Checkpoint& ckpt, const ParamSet<float>& set) {
  const auto m = by_name(ckpt);
  std::size_t used = 0;
  for (auto* p : set.all()) {
    auto it = m.find(p->name);
    if (it == m.end()) throw FormatError("checkpoint lacks tensor '" + p->name + "'");
    if (!(it->second->value.shape() == p->value.shape())) {
      throw FormatError("checkpoint tensor '" + p->name + "' has shape " + it->second->value.shape().str() +
                        ", network expects " + p->value.shape().str());
    }
    p->value = it->second->value;
    ++used;
  }
  std::size_t stored = 0;
  for (const auto& t : ckpt.tensors) stored += t.role != "optimizer";
  if (stored != used) throw FormatError("checkpoint has tensors the network does not use");
}

bool restore_slots(const Checkpoint& ckpt, const ParamSet<float>& set, const std::string& slot,
                   std::vector<Tensor<float>>& values) {
  const auto m = by_name(ckpt);
  if (set.params.empty() || !m.contains(set.params[0]->name + "#" + slot)) return false;
  values.clear();
  for (auto* p : set.params) {
    auto it = m.find(p->name + "#" + slot);
    if (it == m.end() || !(it->second->value.shape() == p->value.shape())) {
      throw FormatError("checkpoint optimizer slot for '" + p->name + "' missing or misshapen");
    }
    values.push_back(it->second->value);
  }
  return true;
}

}  // namespace attrenh
