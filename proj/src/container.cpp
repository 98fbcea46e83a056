#include "leap/container.hpp"

#include <filesystem>
#include <fstream>

namespace leap {

namespace {

constexpr char kMagic[4] = {'L', 'E', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::F64: return 8;
    case Dtype::I64: return 8;
    case Dtype::U8: return 1;
  }
  fail("unknown dtype");
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) fail("container truncated while reading " + what);
  return v;
}

}  // namespace

std::vector<std::string> ArrayFile::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

void ArrayFile::put(const std::string& name, ArrayData data) {
  require(!name.empty() && name.size() < 65536, "array name must be non-empty and short");
  require(data.bytes.size() == data.count() * dtype_size(data.dtype),
          "array '" + name + "': payload size does not match shape");
  entries_[name] = std::move(data);
}

void ArrayFile::put_matrix(const std::string& name, const Mat& m) {
  ArrayData d;
  d.dtype = Dtype::F64;
  d.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  d.bytes.resize(static_cast<std::size_t>(m.size()) * 8);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      reinterpret_cast<double*>(d.bytes.data()), m.rows(), m.cols()) = m;
  put(name, std::move(d));
}

void ArrayFile::put_vector(const std::string& name, const Vec& v) {
  ArrayData d;
  d.dtype = Dtype::F64;
  d.shape = {static_cast<std::uint64_t>(v.size())};
  d.bytes.resize(static_cast<std::size_t>(v.size()) * 8);
  std::memcpy(d.bytes.data(), v.data(), d.bytes.size());
  put(name, std::move(d));
}

void ArrayFile::put_scalar(const std::string& name, double v) {
  Vec one(1);
  one[0] = v;
  put_vector(name, one);
}

void ArrayFile::put_int(const std::string& name, std::int64_t v) { put_ints(name, {v}); }

void ArrayFile::put_ints(const std::string& name, const std::vector<std::int64_t>& v) {
  ArrayData d;
  d.dtype = Dtype::I64;
  d.shape = {v.size()};
  d.bytes.resize(v.size() * 8);
  std::memcpy(d.bytes.data(), v.data(), d.bytes.size());
  put(name, std::move(d));
}

void ArrayFile::put_string(const std::string& name, const std::string& v) {
  std::vector<std::uint8_t> b(v.begin(), v.end());
  put_bytes(name, b);
}

void ArrayFile::put_bytes(const std::string& name, const std::vector<std::uint8_t>& v) {
  ArrayData d;
  d.dtype = Dtype::U8;
  d.shape = {v.size()};
  d.bytes = v;
  put(name, std::move(d));
}

const ArrayData& ArrayFile::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail("container has no array named '" + name + "'");
  return it->second;
}

Mat ArrayFile::get_matrix(const std::string& name) const {
  const ArrayData& d = get(name);
  require(d.dtype == Dtype::F64 && d.shape.size() == 2, "array '" + name + "' is not an f64 matrix");
  Mat m(static_cast<Index>(d.shape[0]), static_cast<Index>(d.shape[1]));
  m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      reinterpret_cast<const double*>(d.bytes.data()), m.rows(), m.cols());
  return m;
}

Vec ArrayFile::get_vector(const std::string& name) const {
  const ArrayData& d = get(name);
  require(d.dtype == Dtype::F64 && d.shape.size() == 1, "array '" + name + "' is not an f64 vector");
  Vec v(static_cast<Index>(d.shape[0]));
  std::memcpy(v.data(), d.bytes.data(), d.bytes.size());
  return v;
}

double ArrayFile::get_scalar(const std::string& name) const {
  Vec v = get_vector(name);
  require(v.size() == 1, "array '" + name + "' is not a scalar");
  return v[0];
}

std::int64_t ArrayFile::get_int(const std::string& name) const {
  auto v = get_ints(name);
  require(v.size() == 1, "array '" + name + "' is not a single integer");
  return v[0];
}

std::vector<std::int64_t> ArrayFile::get_ints(const std::string& name) const {
  const ArrayData& d = get(name);
  require(d.dtype == Dtype::I64 && d.shape.size() == 1, "array '" + name + "' is not an i64 vector");
  std::vector<std::int64_t> v(d.count());
  std::memcpy(v.data(), d.bytes.data(), d.bytes.size());
  return v;
}

std::string ArrayFile::get_string(const std::string& name) const {
  auto b = get_bytes(name);
  return std::string(b.begin(), b.end());
}

std::vector<std::uint8_t> ArrayFile::get_bytes(const std::string& name) const {
  const ArrayData& d = get(name);
  require(d.dtype == Dtype::U8 && d.shape.size() == 1, "array '" + name + "' is not a byte array");
  return d.bytes;
}

void ArrayFile::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<std::uint64_t>(entries_.size()));
  for (const auto& [name, d] : entries_) {
    write_pod(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<std::uint8_t>(d.dtype));
    write_pod(os, static_cast<std::uint8_t>(d.shape.size()));
    for (auto dim : d.shape) write_pod(os, dim);
    os.write(reinterpret_cast<const char*>(d.bytes.data()),
             static_cast<std::streamsize>(d.bytes.size()));
  }
  if (!os) fail("write failed: " + path);
}

ArrayFile ArrayFile::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) fail("not a container file: " + path);
  auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kVersion)
    fail("unsupported container version " + std::to_string(version) + " in " + path);
  auto count = read_pod<std::uint64_t>(is, "entry count");
  ArrayFile out;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name_len = read_pod<std::uint16_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) fail("container truncated while reading a name");
    ArrayData d;
    auto dt = read_pod<std::uint8_t>(is, "dtype");
    if (dt > 2) fail("array '" + name + "': unknown dtype " + std::to_string(dt));
    d.dtype = static_cast<Dtype>(dt);
    auto rank = read_pod<std::uint8_t>(is, "rank");
    d.shape.resize(rank);
    for (auto& dim : d.shape) dim = read_pod<std::uint64_t>(is, "dimension");
    std::size_t payload = d.count() * dtype_size(d.dtype);
    if (payload > (1ull << 36)) fail("array '" + name + "': implausible payload size");
    d.bytes.resize(payload);
    is.read(reinterpret_cast<char*>(d.bytes.data()), static_cast<std::streamsize>(payload));
    if (!is) fail("container truncated in payload of '" + name + "'");
    out.entries_[name] = std::move(d);
  }
  return out;
}

void check_overwrite(const std::string& path, bool force) {
  if (!force && std::filesystem::exists(path))
    fail("refusing to overwrite existing file (use --force): " + path);
}

}  // namespace leap
