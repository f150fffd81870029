#include "pedgen/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "pedgen/common.hpp"

namespace fs = std::filesystem;

namespace pedgen {

namespace {

constexpr char kMagic[8] = {'P', 'E', 'D', 'G', 'E', 'N', 'C', 'K'};
constexpr uint64_t kTrailer = 0x454e44454e44ull;  // end marker

struct Writer {
  std::ofstream os;
  explicit Writer(const std::string& path) : os(path, std::ios::binary) {
    if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  }
  void raw(const void* p, size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void i64(int64_t v) { raw(&v, 8); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
};

struct Reader {
  std::ifstream is;
  std::string path;
  explicit Reader(const std::string& p) : is(p, std::ios::binary), path(p) {
    if (!is) throw IoError("checkpoint: cannot open " + p);
  }
  void raw(void* p, size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw IoError("checkpoint: truncated or corrupt file " + path);
  }
  uint32_t u32() {
    uint32_t v;
    raw(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    raw(&v, 8);
    return v;
  }
  int64_t i64() {
    int64_t v;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    const uint64_t n = u64();
    if (n > (1ull << 32)) throw IoError("checkpoint: implausible string length in " + path);
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::vector<double> doubles() {
    const uint64_t n = u64();
    if (n > (1ull << 32)) throw IoError("checkpoint: implausible blob length in " + path);
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
};

void write_opt(Writer& w, const CheckpointPayload::OptState& s) {
  w.i64(s.t);
  w.u32(static_cast<uint32_t>(s.slots.size()));
  for (const auto& [name, slot] : s.slots) {
    w.str(name);
    w.doubles(slot.m);
    w.doubles(slot.v);
  }
}

CheckpointPayload::OptState read_opt(Reader& r) {
  CheckpointPayload::OptState s;
  s.t = r.i64();
  const uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    Adam::Slot slot;
    slot.m = r.doubles();
    slot.v = r.doubles();
    s.slots.emplace(std::move(name), std::move(slot));
  }
  return s;
}

}  // namespace

void save_checkpoint(const CheckpointPayload& payload, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    Writer w(tmp);
    w.raw(kMagic, sizeof(kMagic));
    w.u32(CheckpointPayload::kVersion);
    w.u64(payload.config_hash);
    w.str(payload.config_json);
    w.u32(static_cast<uint32_t>(payload.vocab_tokens.size()));
    for (const auto& t : payload.vocab_tokens) w.str(t);
    w.u32(static_cast<uint32_t>(payload.tensors.size()));
    for (const auto& [name, tensor] : payload.tensors) {
      w.str(name);
      const Shape& s = tensor.shape();
      w.u32(static_cast<uint32_t>(s.size()));
      for (int d : s) w.u32(static_cast<uint32_t>(d));
      w.doubles(tensor.values());
    }
    write_opt(w, payload.gen_opt);
    write_opt(w, payload.disc_opt);
    write_opt(w, payload.match_opt);
    w.i64(payload.step);
    w.str(payload.rng_state);
    w.u64(kTrailer);
    w.os.flush();
    if (!w.os) throw IoError("checkpoint: write failure on " + tmp);
  }
  fs::rename(tmp, path);
}

CheckpointPayload load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("checkpoint: " + path + " is not a checkpoint file");
  CheckpointPayload p;
  const uint32_t version = r.u32();
  if (version != CheckpointPayload::kVersion)
    throw IoError("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                  std::to_string(CheckpointPayload::kVersion) + ")");
  p.config_hash = r.u64();
  p.config_json = r.str();
  const uint32_t vocab_n = r.u32();
  for (uint32_t i = 0; i < vocab_n; ++i) p.vocab_tokens.push_back(r.str());
  const uint32_t tensor_n = r.u32();
  for (uint32_t i = 0; i < tensor_n; ++i) {
    std::string name = r.str();
    const uint32_t rank = r.u32();
    Shape shape;
    for (uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<int>(r.u32()));
    std::vector<double> vals = r.doubles();
    if (static_cast<int64_t>(vals.size()) != shape_size(shape))
      throw IoError("checkpoint: tensor " + name + " shape/value mismatch in " + path);
    p.tensors.emplace_back(std::move(name), Tensor::leaf(std::move(shape), std::move(vals)));
  }
  p.gen_opt = read_opt(r);
  p.disc_opt = read_opt(r);
  p.match_opt = read_opt(r);
  p.step = r.i64();
  p.rng_state = r.str();
  if (r.u64() != kTrailer) throw IoError("checkpoint: missing end marker in " + path);
  return p;
}

}  // namespace pedgen
