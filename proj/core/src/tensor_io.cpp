#include "xcap/tensor_io.hpp"

#include <cstring>
#include <fstream>

namespace xcap {

namespace {

// Host is assumed little-endian (checked once at startup of any I/O call).
bool host_little_endian() {
  uint32_t probe = 1;
  uint8_t b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

void check_endianness() {
  static const bool ok = host_little_endian();
  if (!ok) throw std::runtime_error("tensor io requires a little-endian host");
}

template <typename T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("tensor io: unexpected end of stream");
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  check_endianness();
  os.write("XTSR", 4);
  write_raw<uint32_t>(os, static_cast<uint32_t>(t.rank()));
  for (int e : t.shape()) write_raw<uint64_t>(os, static_cast<uint64_t>(e));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.numel())));
}

Tensor read_tensor(std::istream& is) {
  check_endianness();
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "XTSR", 4) != 0) {
    throw std::runtime_error("tensor io: bad magic");
  }
  uint32_t rank = read_raw<uint32_t>(is);
  if (rank > 8) throw std::runtime_error("tensor io: implausible rank");
  std::vector<int> shape(rank);
  for (uint32_t i = 0; i < rank; ++i) {
    uint64_t e = read_raw<uint64_t>(is);
    if (e == 0 || e > (1ull << 31)) throw std::runtime_error("tensor io: bad extent");
    shape[i] = static_cast<int>(e);
  }
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.numel())));
  if (!is) throw std::runtime_error("tensor io: truncated payload");
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_tensor(os, t);
  if (!os) throw std::runtime_error("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return read_tensor(is);
}

void save_tensor_table(const std::string& path, const std::map<std::string, Tensor>& table) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("XCKP", 4);
  write_raw<uint32_t>(os, 1u);
  write_raw<uint32_t>(os, static_cast<uint32_t>(table.size()));
  for (const auto& [name, tensor] : table) {
    write_raw<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, tensor);
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::map<std::string, Tensor> load_tensor_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "XCKP", 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  uint32_t version = read_raw<uint32_t>(is);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  uint32_t count = read_raw<uint32_t>(is);
  std::map<std::string, Tensor> table;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t len = read_raw<uint32_t>(is);
    if (len > 4096) throw std::runtime_error("checkpoint: implausible name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw std::runtime_error("checkpoint: truncated name");
    table.emplace(std::move(name), read_tensor(is));
  }
  return table;
}

}  // namespace xcap
