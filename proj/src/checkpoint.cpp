// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

namespace rlforge::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'L', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint64_t kMaxSection = 1ull << 34;

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_bytes(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > b_.size() - pos_) throw CheckpointError("checkpoint truncated");
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode(const Checkpoint& c) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kFormatVersion);
  put_bytes(out, c.role);
  const std::string meta = c.metadata.dump();
  put<std::uint64_t>(out, meta.size());
  out += meta;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& [name, a] : c.arrays) {
    if (ad::shape_size(a.shape) != a.data.size()) throw CheckpointError("array '" + name + "' has inconsistent shape");
    put_bytes(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put<std::uint64_t>(out, d);
    const auto* p = reinterpret_cast<const char*>(a.data.data());
    out.append(p, a.data.size() * sizeof(double));
  }
  return out;
}

Checkpoint decode(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw CheckpointError("not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.role = r.bytes(r.get<std::uint32_t>());
  const auto meta_len = r.get<std::uint64_t>();
  if (meta_len > kMaxSection) throw CheckpointError("checkpoint metadata too large");
  try {
    c.metadata = nlohmann::json::parse(r.bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.bytes(r.get<std::uint32_t>());
    ad::Shape shape(r.get<std::uint32_t>());
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = r.get<std::uint64_t>();
      if (d != 0 && count > kMaxSection / d) throw CheckpointError("array '" + name + "' too large");
      count *= d;
    }
    const std::string raw = r.bytes(count * sizeof(double));
    std::vector<double> data(count);
    std::memcpy(data.data(), raw.data(), raw.size());
    if (!c.arrays.emplace(name, ad::Array(std::move(shape), std::move(data))).second)
      throw CheckpointError("duplicate array '" + name + "'");
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return c;
}

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot rename into " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void save(const std::filesystem::path& path, const Checkpoint& c) { write_atomic(path, encode(c)); }

Checkpoint load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("missing checkpoint " + path.string());
  return decode(read_file(path));
}

nlohmann::json arch_to_json(const policy::ArchConfig& a) {
  return {{"cond_vocab", a.cond_vocab}, {"out_vocab", a.out_vocab}, {"out_eos", a.out_eos},
          {"hidden", a.hidden},         {"ffn", a.ffn},             {"context", a.context}};
}

policy::ArchConfig arch_from_json(const nlohmann::json& j) {
  policy::ArchConfig a;
  try {
    a.cond_vocab = j.at("cond_vocab");
    a.out_vocab = j.at("out_vocab");
    a.out_eos = j.at("out_eos");
    a.hidden = j.at("hidden");
    a.ffn = j.at("ffn");
    a.context = j.at("context");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint architecture: ") + e.what());
  }
  return a;
}

Checkpoint from_policy(const policy::Policy& p, const nlohmann::json& extra) {
  Checkpoint c;
  c.role = policy::to_string(p.role);
  c.metadata = extra;
  c.metadata["arch"] = arch_to_json(p.arch);
  c.arrays = p.params;
  return c;
}

policy::Policy to_policy(const Checkpoint& c) {
  if (!c.metadata.contains("arch")) throw CheckpointError("checkpoint lacks an architecture");
  policy::Policy p;
  try {
    p.role = policy::parse_role(c.role);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(e.what());
  }
  p.arch = arch_from_json(c.metadata["arch"]);
  p.params = c.arrays;
  // Reject containers whose arrays don't fit the declared architecture.
  const auto fresh = policy::init_policy(p.arch, 0);
  if (fresh.params.size() != p.params.size()) throw CheckpointError("checkpoint parameter set mismatch");
  for (const auto& [name, a] : fresh.params) {
    auto it = p.params.find(name);
    if (it == p.params.end() || it->second.shape != a.shape)
      throw CheckpointError("checkpoint parameter '" + name + "' missing or misshaped");
  }
  return p;
}

Checkpoint from_reward_model(const diffro::RewardModel& rm, const nlohmann::json& extra) {
  auto model = rm.model;
  model.role = policy::Role::RewardModel;
  auto c = from_policy(model, extra);
  c.metadata["accuracy"] = rm.accuracy;
  c.metadata["noisy_accuracy"] = rm.noisy_accuracy;
  return c;
}

diffro::RewardModel to_reward_model(const Checkpoint& c) {
  if (c.role != "reward_model") throw CheckpointError("expected a reward_model checkpoint, got '" + c.role + "'");
  diffro::RewardModel rm;
  rm.model = to_policy(c);
  rm.accuracy = c.metadata.value("accuracy", 0.0);
  rm.noisy_accuracy = c.metadata.value("noisy_accuracy", 0.0);
  return rm;
}

}  // namespace rlforge::checkpoint
