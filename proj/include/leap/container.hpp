#pragma once

#include <cstring>
#include <map>
#include <optional>

#include "leap/common.hpp"

namespace leap {

// One binary container holds named dense arrays. Layout, all little-endian:
//   magic "LEAP", u32 version, u64 entry count, then per entry:
//   u16 name length, name bytes, u8 dtype, u8 rank, u64 dims[rank], payload.
// dtype: 0 = f64, 1 = i64, 2 = u8.
enum class Dtype : std::uint8_t { F64 = 0, I64 = 1, U8 = 2 };

struct ArrayData {
  Dtype dtype = Dtype::F64;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> bytes;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

class ArrayFile {
 public:
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  std::vector<std::string> names() const;

  void put(const std::string& name, ArrayData data);
  void put_matrix(const std::string& name, const Mat& m);  // stored row-major
  void put_vector(const std::string& name, const Vec& v);
  void put_scalar(const std::string& name, double v);
  void put_int(const std::string& name, std::int64_t v);
  void put_ints(const std::string& name, const std::vector<std::int64_t>& v);
  void put_string(const std::string& name, const std::string& v);
  void put_bytes(const std::string& name, const std::vector<std::uint8_t>& v);

  const ArrayData& get(const std::string& name) const;
  Mat get_matrix(const std::string& name) const;
  Vec get_vector(const std::string& name) const;
  double get_scalar(const std::string& name) const;
  std::int64_t get_int(const std::string& name) const;
  std::vector<std::int64_t> get_ints(const std::string& name) const;
  std::string get_string(const std::string& name) const;
  std::vector<std::uint8_t> get_bytes(const std::string& name) const;

  void save(const std::string& path) const;
  static ArrayFile load(const std::string& path);

 private:
  std::map<std::string, ArrayData> entries_;
};

// Refuses to overwrite an existing path unless allowed.
void check_overwrite(const std::string& path, bool force);

}  // namespace leap
