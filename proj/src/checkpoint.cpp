#include "dsrgan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

namespace dsrgan {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

struct Entry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

void put_entry(std::ostream& os, const std::string& name, const Shape& shape,
               const double* data, long count) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put_u32(os, static_cast<std::uint32_t>(d));
  put_u64(os, static_cast<std::uint64_t>(count));
  os.write(reinterpret_cast<const char*>(data), count * 8);
}

Entry get_entry(std::istream& is) {
  Entry e;
  const std::uint32_t nlen = get_u32(is);
  if (nlen > 4096) throw std::runtime_error("checkpoint corrupt: name length");
  e.name.resize(nlen);
  if (!is.read(e.name.data(), nlen)) throw std::runtime_error("checkpoint truncated");
  const std::uint32_t nd = get_u32(is);
  if (nd > 8) throw std::runtime_error("checkpoint corrupt: rank");
  for (std::uint32_t i = 0; i < nd; ++i) e.shape.push_back(static_cast<int>(get_u32(is)));
  const std::uint64_t count = get_u64(is);
  if (count > (1ull << 32)) throw std::runtime_error("checkpoint corrupt: element count");
  e.data.resize(count);
  if (!is.read(reinterpret_cast<char*>(e.data.data()),
               static_cast<std::streamsize>(count * 8)))
    throw std::runtime_error("checkpoint truncated");
  return e;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void save_checkpoint(const std::string& path, DsrganModel& model, std::uint64_t config_hash,
                     std::uint64_t step) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_u64(os, config_hash);
  put_u64(os, step);

  auto tensors = model.state_tensors();
  auto opt = model.optimizer_states();
  put_u32(os, static_cast<std::uint32_t>(tensors.size() + 3 * opt.size()));
  for (auto& [name, t] : tensors) put_entry(os, name, t->shape, t->values.data(), t->size());
  for (auto& [name, st] : opt) {
    const Shape s{static_cast<int>(st->m.size())};
    put_entry(os, name + "#adam_m", s, st->m.data(), st->m.size());
    put_entry(os, name + "#adam_v", s, st->v.data(), st->v.size());
    const double t = static_cast<double>(st->t);
    put_entry(os, name + "#adam_t", {1}, &t, 1);
  }
  os.flush();
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  CheckpointHeader h;
  h.version = get_u32(is);
  h.config_hash = get_u64(is);
  h.step = get_u64(is);
  return h;
}

std::uint64_t load_checkpoint(const std::string& path, DsrganModel& model,
                              std::uint64_t expect_config_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint version mismatch in " + path + ": file has " +
                             std::to_string(version) + ", expected " + std::to_string(kVersion));
  const std::uint64_t hash = get_u64(is);
  if (hash != expect_config_hash)
    throw std::runtime_error("checkpoint/config mismatch in " + path +
                             ": the checkpoint was produced under a different resolved config");
  const std::uint64_t step = get_u64(is);

  const std::uint32_t count = get_u32(is);
  std::map<std::string, Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e = get_entry(is);
    entries[e.name] = std::move(e);
  }

  auto take = [&entries, &path](const std::string& name) -> Entry {
    auto it = entries.find(name);
    if (it == entries.end())
      throw std::runtime_error("checkpoint " + path + " is missing tensor " + name);
    Entry e = std::move(it->second);
    entries.erase(it);
    return e;
  };

  for (auto& [name, t] : model.state_tensors()) {
    Entry e = take(name);
    if (e.shape != t->shape)
      throw std::runtime_error("checkpoint tensor " + name + " has shape mismatch");
    for (long i = 0; i < t->size(); ++i) t->values[i] = e.data[static_cast<std::size_t>(i)];
  }
  for (auto& [name, st] : model.optimizer_states()) {
    Entry m = take(name + "#adam_m");
    Entry v = take(name + "#adam_v");
    Entry t = take(name + "#adam_t");
    st->m = Eigen::Map<const Eigen::ArrayXd>(m.data.data(), static_cast<long>(m.data.size()));
    st->v = Eigen::Map<const Eigen::ArrayXd>(v.data.data(), static_cast<long>(v.data.size()));
    st->t = static_cast<long>(t.data.at(0));
  }
  if (!entries.empty())
    throw std::runtime_error("checkpoint " + path + " carries unexpected tensor " +
                             entries.begin()->first);
  return step;
}

}  // namespace dsrgan
