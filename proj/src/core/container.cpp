#include "ssmae/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "ssmae/error.hpp"

namespace ssmae {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'S', 'T', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void put(T v) { bytes(&v, sizeof v); }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}

  void need(std::size_t n, const char* what) const {
    if (buf.size() - pos < n) {
      fail(Errc::format, std::string("truncated ") + what + " at byte " + std::to_string(pos) + ": need " +
                             std::to_string(n) + " bytes, " + std::to_string(buf.size() - pos) + " left");
    }
  }
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof v);
    pos += sizeof v;
    return v;
  }

  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
};

void check_value(DType dtype, double v, std::size_t index) {
  if (dtype == DType::f64 || dtype == DType::f32) return;
  const double hi = dtype == DType::u16 ? 65535.0 : 255.0;
  if (!(v >= 0.0 && v <= hi && v == std::floor(v))) {
    fail(Errc::format, "value " + std::to_string(v) + " at element " + std::to_string(index) +
                           " does not fit the integer dtype");
  }
}

void put_block(Writer& w, const StoredTensor& t) {
  if (t.shape.size() > 255) fail(Errc::format, "rank " + std::to_string(t.shape.size()) + " exceeds 255");
  if (shape_numel(t.shape) != t.values.size()) {
    fail(Errc::dimension, "entry '" + t.name + "': shape " + shape_str(t.shape) + " holds " +
                              std::to_string(shape_numel(t.shape)) + " values, given " + std::to_string(t.values.size()));
  }
  w.bytes(kMagic, 4);
  w.put(static_cast<std::uint8_t>(t.dtype));
  w.put(static_cast<std::uint8_t>(t.shape.size()));
  for (auto e : t.shape) {
    if (e > std::numeric_limits<std::uint32_t>::max()) fail(Errc::format, "extent exceeds u32");
    w.put(static_cast<std::uint32_t>(e));
  }
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    const double v = t.values[i];
    check_value(t.dtype, v, i);
    switch (t.dtype) {
      case DType::f64: w.put(v); break;
      case DType::f32: w.put(static_cast<float>(v)); break;
      case DType::u16: w.put(static_cast<std::uint16_t>(v)); break;
      case DType::u8: w.put(static_cast<std::uint8_t>(v)); break;
    }
  }
}

StoredTensor get_block(Reader& r) {
  StoredTensor t;
  const std::size_t start = r.pos;
  r.need(4, "magic");
  if (std::memcmp(r.buf.data() + r.pos, kMagic, 4) != 0) {
    fail(Errc::format, "bad magic at byte " + std::to_string(start) + ": expected \"MST1\"");
  }
  r.pos += 4;
  const auto code = r.get<std::uint8_t>("dtype");
  if (code > 3) fail(Errc::format, "unknown dtype " + std::to_string(code) + " at byte " + std::to_string(r.pos - 1));
  t.dtype = static_cast<DType>(code);
  const auto rank = r.get<std::uint8_t>("rank");
  std::size_t count = 1;
  const std::size_t extents_at = r.pos;
  for (std::size_t i = 0; i < rank; ++i) {
    const auto e = r.get<std::uint32_t>("extent");
    if (e != 0 && count > std::numeric_limits<std::size_t>::max() / e) {
      fail(Errc::format, "shape overflow in extents at byte " + std::to_string(extents_at));
    }
    count *= e;
    t.shape.push_back(e);
  }
  const std::size_t width = dtype_size(t.dtype);
  if (count > (r.buf.size() - r.pos) / width) {
    fail(Errc::format, "truncated payload at byte " + std::to_string(r.pos) + ": shape " + shape_str(t.shape) +
                           " needs " + std::to_string(count * width) + " bytes, " +
                           std::to_string(r.buf.size() - r.pos) + " left");
  }
  t.values.resize(count);
  for (auto& v : t.values) {
    switch (t.dtype) {
      case DType::f64: v = r.get<double>("payload"); break;
      case DType::f32: v = r.get<float>("payload"); break;
      case DType::u16: v = r.get<std::uint16_t>("payload"); break;
      case DType::u8: v = r.get<std::uint8_t>("payload"); break;
    }
  }
  return t;
}

void check_trailing(const Reader& r) {
  if (r.pos != r.buf.size()) {
    fail(Errc::format, "trailing bytes after byte " + std::to_string(r.pos));
  }
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io, "write failed for " + path.string());
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f64: return 8;
    case DType::f32: return 4;
    case DType::u16: return 2;
    case DType::u8: return 1;
  }
  return 0;
}

StoredTensor StoredTensor::of(std::string name, const Tensor& t, DType dtype) {
  auto d = t.data();
  return StoredTensor{std::move(name), dtype, t.shape(), std::vector<double>(d.begin(), d.end())};
}

std::vector<std::uint8_t> encode_block(const StoredTensor& t) {
  Writer w;
  put_block(w, t);
  return std::move(w.out);
}

StoredTensor decode_block(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  auto t = get_block(r);
  check_trailing(r);
  return t;
}

std::vector<std::uint8_t> encode_entries(const std::vector<StoredTensor>& entries) {
  if (entries.size() > 65535) fail(Errc::format, "too many entries for a u16 count");
  std::set<std::string> names;
  Writer w;
  w.put(static_cast<std::uint16_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() > 65535) fail(Errc::format, "entry name length out of range");
    for (unsigned char c : e.name) {
      if (c < 0x20 || c > 0x7e) fail(Errc::format, "entry name '" + e.name + "' is not printable ASCII");
    }
    if (!names.insert(e.name).second) fail(Errc::format, "duplicate entry name '" + e.name + "'");
    w.put(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    put_block(w, e);
  }
  return std::move(w.out);
}

std::vector<StoredTensor> decode_entries(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const auto count = r.get<std::uint16_t>("entry count");
  std::vector<StoredTensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("name length");
    r.need(len, "name");
    std::string name(reinterpret_cast<const char*>(r.buf.data() + r.pos), len);
    r.pos += len;
    auto t = get_block(r);
    t.name = std::move(name);
    out.push_back(std::move(t));
  }
  check_trailing(r);
  return out;
}

void write_tensor(const std::filesystem::path& path, const StoredTensor& t) { spill(path, encode_block(t)); }

StoredTensor read_tensor(const std::filesystem::path& path) { return decode_block(slurp(path)); }

void write_tensors(const std::filesystem::path& path, const std::vector<StoredTensor>& entries) {
  spill(path, encode_entries(entries));
}

std::vector<StoredTensor> read_tensors(const std::filesystem::path& path) { return decode_entries(slurp(path)); }

const StoredTensor& find_entry(const std::vector<StoredTensor>& entries, const std::string& name) {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  fail(Errc::format, "missing entry '" + name + "'");
}

}  // namespace ssmae
