#include "mlcc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace mlcc {
namespace {

constexpr char kMagic[4] = {'M', 'L', 'C', 'C'};

void write_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

void write_f32(std::ostream& out, double v) {
  write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void must_read(std::istream& in, char* buf, std::size_t n, const char* what) {
  in.read(buf, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw IoError(std::string("checkpoint: truncated while reading ") + what);
  }
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  char buf[4];
  must_read(in, buf, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i]))
         << (8 * i);
  }
  return v;
}

std::uint64_t read_u64(std::istream& in, const char* what) {
  char buf[8];
  must_read(in, buf, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i]))
         << (8 * i);
  }
  return v;
}

std::string read_bytes(std::istream& in, std::uint64_t n, const char* what) {
  if (n > (1ull << 32)) {
    throw IoError(std::string("checkpoint: implausible length for ") + what);
  }
  std::string s(n, '\0');
  must_read(in, s.data(), n, what);
  return s;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_u32(out, kCheckpointVersion);
  const std::string cfg = serialize_config(model.cfg);
  write_u64(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (const auto& [name, tensor] : model.params()) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, tensor.rank());
    for (std::size_t axis = 0; axis < tensor.rank(); ++axis) {
      write_u64(out, tensor.extent(axis));
    }
    for (double v : tensor.values()) write_f32(out, v);
  }
  if (!out) throw IoError("checkpoint: write to " + path + " failed");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  char magic[4];
  must_read(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("checkpoint: " + path + " is not a checkpoint file");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint: version " + std::to_string(version) +
                      " is not supported (want " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t cfg_len = read_u64(in, "config length");
  const std::string cfg_text = read_bytes(in, cfg_len, "config");
  const RunConfig cfg = parse_config(cfg_text);
  Rng rng(0);
  Model model = Model::build(cfg, rng);

  std::map<std::string, Tensor> pending;
  for (const auto& [name, tensor] : model.params()) pending[name] = tensor;

  while (true) {
    char probe;
    in.read(&probe, 1);
    if (in.gcount() == 0) break;
    in.putback(probe);
    const std::uint64_t name_len = read_u64(in, "tensor name length");
    const std::string name = read_bytes(in, name_len, "tensor name");
    const auto it = pending.find(name);
    if (it == pending.end()) {
      throw IoError("checkpoint: unexpected tensor " + name);
    }
    Tensor t = it->second;
    pending.erase(it);
    const std::uint64_t rank = read_u64(in, "tensor rank");
    if (rank != t.rank()) {
      throw IoError("checkpoint: tensor " + name + " has rank " +
                    std::to_string(rank) + ", model wants " +
                    std::to_string(t.rank()));
    }
    for (std::size_t axis = 0; axis < t.rank(); ++axis) {
      const std::uint64_t extent = read_u64(in, "tensor extent");
      if (extent != t.extent(axis)) {
        throw IoError("checkpoint: tensor " + name + " shape mismatch");
      }
    }
    std::span<double> dst = t.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<double>(
          std::bit_cast<float>(read_u32(in, "tensor payload")));
    }
  }
  if (!pending.empty()) {
    throw IoError("checkpoint: missing tensor " + pending.begin()->first);
  }
  return model;
}

}  // namespace mlcc
