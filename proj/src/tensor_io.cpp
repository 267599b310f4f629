#include "tpr/tensor_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tpr::io {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'R', '1'};

void write_record(std::ostream& os, const Tensor& t, const std::string* name) {
  nlohmann::json header;
  header["shape"] = t.shape();
  header["dtype"] = "f64";
  if (name) header["name"] = *name;
  const std::string hs = header.dump();
  const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
  std::uint8_t lenbuf[4] = {static_cast<std::uint8_t>(len & 0xff),
                            static_cast<std::uint8_t>((len >> 8) & 0xff),
                            static_cast<std::uint8_t>((len >> 16) & 0xff),
                            static_cast<std::uint8_t>((len >> 24) & 0xff)};
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(lenbuf), 4);
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  os.write(reinterpret_cast<const char*>(t.data().data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

bool read_record(std::istream& is, Tensor& out, std::string& name) {
  char magic[4];
  if (!is.read(magic, 4)) return false;
  TPR_CHECK(std::memcmp(magic, kMagic, 4) == 0,
            "tensor file: bad magic (expected TPR1)");
  std::uint8_t lenbuf[4];
  TPR_CHECK(static_cast<bool>(is.read(reinterpret_cast<char*>(lenbuf), 4)),
            "tensor file: truncated header length");
  const std::uint32_t len = static_cast<std::uint32_t>(lenbuf[0]) |
                            (static_cast<std::uint32_t>(lenbuf[1]) << 8) |
                            (static_cast<std::uint32_t>(lenbuf[2]) << 16) |
                            (static_cast<std::uint32_t>(lenbuf[3]) << 24);
  std::string hs(len, '\0');
  TPR_CHECK(static_cast<bool>(is.read(hs.data(), len)),
            "tensor file: truncated header");
  nlohmann::json header = nlohmann::json::parse(hs);
  TPR_CHECK(header.value("dtype", "") == "f64",
            "tensor file: unsupported dtype '" + header.value("dtype", "") + "'");
  Shape shape = header.at("shape").get<Shape>();
  name = header.value("name", "");
  const long n = numel_of(shape);
  Array data(n);
  TPR_CHECK(static_cast<bool>(is.read(reinterpret_cast<char*>(data.data()),
                                      static_cast<std::streamsize>(
                                          n * sizeof(double)))),
            "tensor file: truncated payload for shape " +
                detail::format_shape(shape));
  out = Tensor::from_array(std::move(shape), std::move(data));
  return true;
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  TPR_CHECK(os.good(), "cannot open '" + path + "' for writing");
  write_record(os, t, nullptr);
  TPR_CHECK(os.good(), "write failed for '" + path + "'");
}

Tensor read_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  TPR_CHECK(is.good(), "cannot open tensor file '" + path + "'");
  Tensor t;
  std::string name;
  TPR_CHECK(read_record(is, t, name), "empty tensor file '" + path + "'");
  return t;
}

void write_records(const std::string& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary);
  TPR_CHECK(os.good(), "cannot open '" + path + "' for writing");
  for (const auto& [name, t] : tensors) write_record(os, t, &name);
  TPR_CHECK(os.good(), "write failed for '" + path + "'");
}

NamedTensors read_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  TPR_CHECK(is.good(), "cannot open tensor file '" + path + "'");
  NamedTensors out;
  Tensor t;
  std::string name;
  while (read_record(is, t, name)) out.emplace_back(name, t);
  return out;
}

void write_pgm(const std::string& path, const Tensor& map) {
  TPR_CHECK(map.ndim() == 3 && map.dim(0) == 1,
            "write_pgm: expected [1,H,W], got " +
                detail::format_shape(map.shape()));
  const int h = map.dim(1), w = map.dim(2);
  std::ofstream os(path, std::ios::binary);
  TPR_CHECK(os.good(), "cannot open '" + path + "' for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = map.at(0, y, x);
      v = std::min(1.0, std::max(0.0, v));
      row[static_cast<size_t>(x)] =
          static_cast<unsigned char>(std::lround(255.0 * v));
    }
    os.write(reinterpret_cast<const char*>(row.data()), w);
  }
  TPR_CHECK(os.good(), "write failed for '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  TPR_CHECK(is.good(), "cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  TPR_CHECK(os.good(), "cannot open '" + path + "' for writing");
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  TPR_CHECK(os.good(), "write failed for '" + path + "'");
}

}  // namespace tpr::io
