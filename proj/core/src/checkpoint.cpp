#include "wmnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace wmnet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'W', 'M', 'N', 'E', 'T', 'C', 'P', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  WMNET_CHECK(is.good(), "checkpoint: truncated file");
  return v;
}

void write_blob(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_blob(std::istream& is) {
  const uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  WMNET_CHECK(is.good(), "checkpoint: truncated blob");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  WMNET_CHECK(os.good(), "checkpoint: cannot write " + path);
  os.write(kMagic, sizeof kMagic);
  write_blob(os, ckpt.config_text);
  write_blob(os, ckpt.history_json);
  write_u32(os, static_cast<uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, t] : ckpt.arrays) {
    write_blob(os, name);
    write_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  WMNET_CHECK(os.good(), "checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  WMNET_CHECK(is.good(), "checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  WMNET_CHECK(is.good() && std::memcmp(magic, kMagic, sizeof kMagic) == 0,
              "checkpoint: bad magic in " + path);
  Checkpoint ckpt;
  ckpt.config_text = read_blob(is);
  ckpt.history_json = read_blob(is);
  const uint32_t count = read_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = read_blob(is);
    const uint32_t ndim = read_u32(is);
    Shape shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(read_u32(is)));
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    WMNET_CHECK(is.good(), "checkpoint: truncated array " + name);
    ckpt.arrays.emplace_back(name, std::move(t));
  }
  return ckpt;
}

Checkpoint checkpoint_from_store(const ParamStore<float>& store, std::string config_text,
                                 std::string history_json) {
  Checkpoint ckpt;
  ckpt.config_text = std::move(config_text);
  ckpt.history_json = std::move(history_json);
  for (size_t i = 0; i < store.count(); ++i)
    ckpt.arrays.emplace_back(store.at(i).name, store.at(i).value);
  return ckpt;
}

void load_store_from_checkpoint(ParamStore<float>& store, const Checkpoint& ckpt) {
  WMNET_CHECK(ckpt.arrays.size() == store.count(),
              "checkpoint: parameter count mismatch with model");
  for (size_t i = 0; i < store.count(); ++i) {
    Param<float>& p = store.at(i);
    const Tensor<float>* t = ckpt.find(p.name);
    WMNET_CHECK(t != nullptr, "checkpoint: missing parameter " + p.name);
    WMNET_CHECK(t->shape == p.value.shape, "checkpoint: shape mismatch for " + p.name);
    p.value = *t;
  }
}

}  // namespace wmnet
