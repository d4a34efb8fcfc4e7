#include "bevocc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bevocc {

namespace {

int64_t checked_product(const std::vector<int64_t>& dims) {
  int64_t n = 1;
  for (int64_t d : dims) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dim in " + shape_string(dims));
    if (d > 0 && n > std::numeric_limits<int64_t>::max() / d)
      throw std::invalid_argument("Tensor: dim product overflow in " + shape_string(dims));
    n *= d;
  }
  return n;
}

}  // namespace

std::string shape_string(const std::vector<int64_t>& dims) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ", ";
    os << dims[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int64_t> dims, double fill, std::string name)
    : dims_(std::move(dims)), name_(std::move(name)) {
  data_.assign(static_cast<size_t>(checked_product(dims_)), fill);
  init_strides();
}

Tensor Tensor::from_data(std::vector<int64_t> dims, std::vector<double> data, std::string name) {
  Tensor t;
  const int64_t n = checked_product(dims);
  if (n != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_string(dims));
  t.dims_ = std::move(dims);
  t.data_ = std::move(data);
  t.name_ = std::move(name);
  t.init_strides();
  return t;
}

void Tensor::init_strides() {
  strides_.assign(dims_.size(), 1);
  for (size_t a = dims_.size(); a-- > 1;) strides_[a - 1] = strides_[a] * dims_[a];
}

int64_t Tensor::dim(size_t axis) const {
  if (axis >= dims_.size())
    throw std::out_of_range("Tensor: axis " + std::to_string(axis) + " out of range for " +
                            shape_string(dims_));
  return dims_[axis];
}

double& Tensor::at(const std::vector<int64_t>& idx) {
  return const_cast<double&>(static_cast<const Tensor*>(this)->at(idx));
}

double Tensor::at(const std::vector<int64_t>& idx) const {
  if (idx.size() != dims_.size())
    throw std::out_of_range("Tensor: index rank mismatch for " + shape_string(dims_));
  int64_t off = 0;
  for (size_t a = 0; a < idx.size(); ++a) {
    if (idx[a] < 0 || idx[a] >= dims_[a])
      throw std::out_of_range("Tensor: index out of range for " + shape_string(dims_));
    off += idx[a] * strides_[a];
  }
  return data_[off];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::require_finite(const std::string& what) const {
  if (!all_finite()) throw std::runtime_error(what + ": non-finite value in tensor");
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::min() const {
  double m = std::numeric_limits<double>::infinity();
  for (double v : data_) m = std::min(m, v);
  return m;
}

double Tensor::max() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : data_) m = std::max(m, v);
  return m;
}

// --- .occt I/O ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'O', 'C', 'C', 'T'};
constexpr uint8_t kVersion = 0x01;
constexpr size_t kMaxRank = 8;

void put_u64_le(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

template <typename T>
void put_scalar_le(std::ostream& os, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  // Host is little-endian on every supported target; byte order is pinned by
  // writing through memcpy on LE hosts only.
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_scalar_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void save_occt(const std::string& path, const Tensor& t, OcctDtype dtype) {
  if (t.rank() > kMaxRank)
    throw std::invalid_argument("save_occt: rank " + std::to_string(t.rank()) + " exceeds " +
                                std::to_string(kMaxRank));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_occt: cannot open " + path);
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  os.put(static_cast<char>(dtype));
  os.put(static_cast<char>(t.rank()));
  for (int64_t d : t.dims()) put_u64_le(os, static_cast<uint64_t>(d));
  const double* p = t.data();
  const int64_t n = t.size();
  switch (dtype) {
    case OcctDtype::f32:
      for (int64_t i = 0; i < n; ++i) put_scalar_le<float>(os, static_cast<float>(p[i]));
      break;
    case OcctDtype::f64:
      for (int64_t i = 0; i < n; ++i) put_scalar_le<double>(os, p[i]);
      break;
    case OcctDtype::i64:
      for (int64_t i = 0; i < n; ++i) put_scalar_le<int64_t>(os, std::llround(p[i]));
      break;
    default:
      throw std::invalid_argument("save_occt: unknown dtype");
  }
  if (!os) throw std::runtime_error("save_occt: write failed for " + path);
}

Tensor load_occt(const std::string& path, OcctDtype* dtype_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_occt: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load_occt: bad magic in " + path);
  const int version = is.get();
  if (version != kVersion)
    throw std::runtime_error("load_occt: unsupported version " + std::to_string(version) + " in " + path);
  const int dtype_byte = is.get();
  if (dtype_byte != 0x00 && dtype_byte != 0x01 && dtype_byte != 0x02)
    throw std::runtime_error("load_occt: unknown dtype byte in " + path);
  const auto dtype = static_cast<OcctDtype>(dtype_byte);
  const int rank = is.get();
  if (rank < 0 || static_cast<size_t>(rank) > kMaxRank)
    throw std::runtime_error("load_occt: bad rank in " + path);
  std::vector<int64_t> dims(static_cast<size_t>(rank));
  uint64_t n = 1;
  for (auto& d : dims) {
    const uint64_t v = get_u64_le(is);
    if (v > (1ull << 40) || (v > 0 && n > (1ull << 40) / std::max<uint64_t>(v, 1)))
      throw std::runtime_error("load_occt: implausible dims in " + path);
    n *= std::max<uint64_t>(v, 1);
    d = static_cast<int64_t>(v);
  }
  if (!is) throw std::runtime_error("load_occt: truncated header in " + path);
  Tensor t{dims};
  double* p = t.data();
  const int64_t count = t.size();
  switch (dtype) {
    case OcctDtype::f32:
      for (int64_t i = 0; i < count; ++i) p[i] = static_cast<double>(get_scalar_le<float>(is));
      break;
    case OcctDtype::f64:
      for (int64_t i = 0; i < count; ++i) p[i] = get_scalar_le<double>(is);
      break;
    case OcctDtype::i64:
      for (int64_t i = 0; i < count; ++i) p[i] = static_cast<double>(get_scalar_le<int64_t>(is));
      break;
  }
  if (!is) throw std::runtime_error("load_occt: truncated payload in " + path);
  if (dtype_out) *dtype_out = dtype;
  return t;
}

}  // namespace bevocc
