#include "hsiseg/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hsiseg/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "archive serialization assumes a little-endian host");

namespace hsiseg {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'G', 'K', 'V', 'A', '0', '1'};

template <typename T>
void append_pod(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T read_pod(const std::string& in, size_t& pos, const std::string& origin) {
  if (pos + sizeof(T) > in.size()) {
    throw ArchiveError("archive truncated: " + origin);
  }
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

uint64_t dim_product(const std::vector<uint64_t>& dims) {
  uint64_t p = 1;
  for (uint64_t d : dims) p *= d;
  return p;
}

}  // namespace

void ArchiveWriter::insert(const std::string& key, ArchiveEntry e) {
  if (key.empty()) throw ArchiveError("archive: empty key");
  if (!entries_.emplace(key, std::move(e)).second) {
    throw ArchiveError("archive: duplicate key '" + key + "'");
  }
}

void ArchiveWriter::put_f64(const std::string& key, std::vector<uint64_t> dims,
                            const double* data, size_t count) {
  if (dim_product(dims) != count) {
    throw ArchiveError("archive: dims do not match payload for '" + key + "'");
  }
  ArchiveEntry e;
  e.dtype = 0;
  e.dims = std::move(dims);
  e.f64.assign(data, data + count);
  insert(key, std::move(e));
}

void ArchiveWriter::put_f64(const std::string& key, const std::vector<double>& v) {
  put_f64(key, {static_cast<uint64_t>(v.size())}, v.data(), v.size());
}

void ArchiveWriter::put_scalar_f64(const std::string& key, double v) {
  put_f64(key, {1}, &v, 1);
}

void ArchiveWriter::put_i64(const std::string& key, std::vector<uint64_t> dims,
                            const int64_t* data, size_t count) {
  if (dim_product(dims) != count) {
    throw ArchiveError("archive: dims do not match payload for '" + key + "'");
  }
  ArchiveEntry e;
  e.dtype = 1;
  e.dims = std::move(dims);
  e.i64.assign(data, data + count);
  insert(key, std::move(e));
}

void ArchiveWriter::put_i64(const std::string& key, const std::vector<int64_t>& v) {
  put_i64(key, {static_cast<uint64_t>(v.size())}, v.data(), v.size());
}

void ArchiveWriter::put_scalar_i64(const std::string& key, int64_t v) {
  put_i64(key, {1}, &v, 1);
}

void ArchiveWriter::put_text(const std::string& key, const std::string& text) {
  ArchiveEntry e;
  e.dtype = 2;
  e.dims = {static_cast<uint64_t>(text.size())};
  e.text = text;
  insert(key, std::move(e));
}

void ArchiveWriter::copy_entry(const Archive& ar, const std::string& key) {
  insert(key, ar.raw(key));
}

std::string ArchiveWriter::to_bytes() const {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  append_pod<uint64_t>(out, entries_.size());
  for (const auto& [key, e] : entries_) {
    append_pod<uint32_t>(out, static_cast<uint32_t>(key.size()));
    out.append(key);
    append_pod<uint8_t>(out, e.dtype);
    append_pod<uint32_t>(out, static_cast<uint32_t>(e.dims.size()));
    for (uint64_t d : e.dims) append_pod<uint64_t>(out, d);
    switch (e.dtype) {
      case 0:
        out.append(reinterpret_cast<const char*>(e.f64.data()),
                   e.f64.size() * sizeof(double));
        break;
      case 1:
        out.append(reinterpret_cast<const char*>(e.i64.data()),
                   e.i64.size() * sizeof(int64_t));
        break;
      case 2:
        out.append(e.text);
        break;
      default:
        throw ArchiveError("archive: unknown dtype for '" + key + "'");
    }
  }
  return out;
}

void ArchiveWriter::write_file(const std::string& path) const {
  const std::string bytes = to_bytes();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArchiveError("archive: cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) throw ArchiveError("archive: write failed for '" + path + "'");
}

Archive Archive::read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArchiveError("archive: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_bytes(bytes, path);
}

Archive Archive::from_bytes(const std::string& bytes, const std::string& origin) {
  Archive a;
  a.origin_ = origin;
  size_t pos = 0;
  if (bytes.size() < sizeof(kMagic) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ArchiveError("archive: bad magic in '" + origin + "'");
  }
  pos = sizeof(kMagic);
  const uint64_t count = read_pod<uint64_t>(bytes, pos, origin);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t klen = read_pod<uint32_t>(bytes, pos, origin);
    if (pos + klen > bytes.size()) throw ArchiveError("archive truncated: " + origin);
    std::string key(bytes.data() + pos, klen);
    pos += klen;
    ArchiveEntry e;
    e.dtype = read_pod<uint8_t>(bytes, pos, origin);
    const uint32_t ndim = read_pod<uint32_t>(bytes, pos, origin);
    e.dims.resize(ndim);
    for (uint32_t d = 0; d < ndim; ++d) e.dims[d] = read_pod<uint64_t>(bytes, pos, origin);
    const uint64_t n = dim_product(e.dims);
    switch (e.dtype) {
      case 0: {
        if (pos + n * sizeof(double) > bytes.size()) {
          throw ArchiveError("archive truncated: " + origin);
        }
        e.f64.resize(n);
        std::memcpy(e.f64.data(), bytes.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
        break;
      }
      case 1: {
        if (pos + n * sizeof(int64_t) > bytes.size()) {
          throw ArchiveError("archive truncated: " + origin);
        }
        e.i64.resize(n);
        std::memcpy(e.i64.data(), bytes.data() + pos, n * sizeof(int64_t));
        pos += n * sizeof(int64_t);
        break;
      }
      case 2: {
        if (ndim != 1 || pos + n > bytes.size()) {
          throw ArchiveError("archive: bad text entry '" + key + "' in " + origin);
        }
        e.text.assign(bytes.data() + pos, n);
        pos += n;
        break;
      }
      default:
        throw ArchiveError("archive: unknown dtype " + std::to_string(e.dtype) +
                           " for '" + key + "' in " + origin);
    }
    if (!a.entries_.emplace(std::move(key), std::move(e)).second) {
      throw ArchiveError("archive: duplicate key in " + origin);
    }
  }
  if (pos != bytes.size()) {
    throw ArchiveError("archive: trailing bytes in " + origin);
  }
  return a;
}

std::vector<std::string> Archive::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, e] : entries_) out.push_back(k);
  return out;
}

const ArchiveEntry& Archive::get(const std::string& key, uint8_t dtype) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ArchiveError("archive: missing key '" + key + "' in " + origin_);
  }
  if (it->second.dtype != dtype) {
    throw ArchiveError("archive: wrong dtype for key '" + key + "' in " + origin_);
  }
  return it->second;
}

const std::vector<uint64_t>& Archive::dims(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ArchiveError("archive: missing key '" + key + "' in " + origin_);
  }
  return it->second.dims;
}

const std::vector<double>& Archive::f64(const std::string& key) const {
  return get(key, 0).f64;
}

const std::vector<int64_t>& Archive::i64(const std::string& key) const {
  return get(key, 1).i64;
}

const std::string& Archive::text(const std::string& key) const {
  return get(key, 2).text;
}

double Archive::scalar_f64(const std::string& key) const {
  const auto& v = f64(key);
  if (v.size() != 1) throw ArchiveError("archive: '" + key + "' is not a scalar");
  return v[0];
}

int64_t Archive::scalar_i64(const std::string& key) const {
  const auto& v = i64(key);
  if (v.size() != 1) throw ArchiveError("archive: '" + key + "' is not a scalar");
  return v[0];
}

const ArchiveEntry& Archive::raw(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ArchiveError("archive: missing key '" + key + "' in " + origin_);
  }
  return it->second;
}

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for hashing: " + path);
  uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace hsiseg
