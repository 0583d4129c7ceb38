#include "eyemark/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace eyemark {

namespace {

constexpr char kMagic[8] = {'E', 'Y', 'E', 'M', 'A', 'R', 'K', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("tensor stream truncated while reading u32");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("tensor stream truncated while reading f64");
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 8);
  put_u32(os, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<uint32_t>(t.extent(i)));
  for (long long i = 0; i < t.numel(); ++i) put_f64(os, t[i]);
}

Tensor read_tensor(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("bad tensor magic (want EYEMARK1)");
  uint32_t rank = get_u32(is);
  if (rank > 8) throw std::runtime_error("tensor rank " + std::to_string(rank) + " out of range");
  Shape shape(rank);
  for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(get_u32(is));
  Tensor t(shape);
  for (long long i = 0; i < t.numel(); ++i) t[i] = get_f64(is);
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  write_tensor(f, t);
  if (!f) throw std::runtime_error("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return read_tensor(f);
}

void save_checkpoint(const std::string& bin_path, const std::string& manifest_path,
                     const std::vector<std::pair<std::string, const Tensor*>>& entries) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + bin_path + " for writing");
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  for (const auto& [name, tensor] : entries) {
    long long offset = static_cast<long long>(bin.tellp());
    write_tensor(bin, *tensor);
    manifest.push_back({{"name", name}, {"offset", offset}});
  }
  if (!bin) throw std::runtime_error("write failed: " + bin_path);
  std::ofstream mf(manifest_path);
  if (!mf) throw std::runtime_error("cannot open " + manifest_path + " for writing");
  mf << manifest.dump(2) << "\n";
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& bin_path,
                                                            const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw std::runtime_error("cannot open " + manifest_path);
  nlohmann::json manifest = nlohmann::json::parse(mf);
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + bin_path);
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& e : manifest) {
    bin.seekg(e.at("offset").get<long long>());
    out.emplace_back(e.at("name").get<std::string>(), read_tensor(bin));
  }
  return out;
}

}  // namespace eyemark
