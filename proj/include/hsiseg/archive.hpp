#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsiseg {

// Binary key/value tensor container used for checkpoints and dataset splits.
//
// Layout (all integers little-endian):
//   8 bytes   magic "SEGKVA01"
//   u64       entry count
//   entries, sorted by key byte order:
//     u32 key length, key bytes
//     u8  dtype: 0 = f64, 1 = i64, 2 = text (raw bytes)
//     u32 ndim, then ndim u64 dims
//     payload (f64/i64 values, or dims[0] raw bytes for text)
//
// Sorted keys make the on-disk bytes a pure function of the stored content,
// so identical states produce identical files.
class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ArchiveEntry {
  uint8_t dtype = 0;
  std::vector<uint64_t> dims;
  std::vector<double> f64;
  std::vector<int64_t> i64;
  std::string text;
};

class ArchiveWriter {
 public:
  void put_f64(const std::string& key, std::vector<uint64_t> dims,
               const double* data, size_t count);
  void put_f64(const std::string& key, const std::vector<double>& v);
  void put_scalar_f64(const std::string& key, double v);
  void put_i64(const std::string& key, std::vector<uint64_t> dims,
               const int64_t* data, size_t count);
  void put_i64(const std::string& key, const std::vector<int64_t>& v);
  void put_scalar_i64(const std::string& key, int64_t v);
  void put_text(const std::string& key, const std::string& text);

  // Copy one entry verbatim from an existing archive (any dtype).
  void copy_entry(const class Archive& ar, const std::string& key);

  void write_file(const std::string& path) const;
  std::string to_bytes() const;

 private:
  void insert(const std::string& key, ArchiveEntry e);
  std::map<std::string, ArchiveEntry> entries_;
};

class Archive {
 public:
  static Archive read_file(const std::string& path);
  static Archive from_bytes(const std::string& bytes, const std::string& origin);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::vector<std::string> keys() const;

  const std::vector<uint64_t>& dims(const std::string& key) const;
  const std::vector<double>& f64(const std::string& key) const;
  const std::vector<int64_t>& i64(const std::string& key) const;
  const std::string& text(const std::string& key) const;
  double scalar_f64(const std::string& key) const;
  int64_t scalar_i64(const std::string& key) const;

  // Raw entry access, for verbatim copying between archives.
  const ArchiveEntry& raw(const std::string& key) const;

 private:
  const ArchiveEntry& get(const std::string& key, uint8_t dtype) const;
  std::map<std::string, ArchiveEntry> entries_;
  std::string origin_;
};

}  // namespace hsiseg
