#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bevocc {

// Dense row-major tensor of 64-bit floats. All pipeline values (features,
// volumes, logits, label volumes) live in this one container; 32-bit floats
// and 64-bit integer labels exist only at the .occt file boundary.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> dims, double fill = 0.0, std::string name = {});
  static Tensor from_data(std::vector<int64_t> dims, std::vector<double> data, std::string name = {});

  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t dim(size_t axis) const;
  size_t rank() const { return dims_.size(); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  // Unchecked row-major access; rank must match the index count.
  template <typename... Ix>
  double& operator()(Ix... ix) {
    return data_[flat_index(ix...)];
  }
  template <typename... Ix>
  double operator()(Ix... ix) const {
    return data_[flat_index(ix...)];
  }

  // Bounds-checked access, throws std::out_of_range.
  double& at(const std::vector<int64_t>& idx);
  double at(const std::vector<int64_t>& idx) const;

  const std::vector<int64_t>& strides() const { return strides_; }
  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  bool all_finite() const;
  // Throws std::runtime_error naming `what` if any element is NaN/Inf.
  void require_finite(const std::string& what) const;

  double sum() const;
  double min() const;
  double max() const;

  template <typename... Ix>
  int64_t flat_index(Ix... ix) const {
    const int64_t idx[] = {static_cast<int64_t>(ix)...};
    int64_t off = 0;
    for (size_t a = 0; a < sizeof...(Ix); ++a) off += idx[a] * strides_[a];
    return off;
  }

 private:
  std::vector<int64_t> dims_;
  std::vector<int64_t> strides_;
  std::vector<double> data_;
  std::string name_;

  void init_strides();
};

// Shape as "[a, b, c]" for error messages.
std::string shape_string(const std::vector<int64_t>& dims);

// --- .occt tensor files -----------------------------------------------------
//
// Layout: magic "OCCT", version byte 0x01, dtype byte, rank byte, then
// rank x uint64 little-endian dims, then the row-major payload.
// dtype 0x00 = float32 LE, 0x01 = float64 LE, 0x02 = int64 LE (labels).
enum class OcctDtype : uint8_t {
  f32 = 0x00,
  f64 = 0x01,
  i64 = 0x02,
};

void save_occt(const std::string& path, const Tensor& t, OcctDtype dtype = OcctDtype::f64);
// Loads any dtype into the double-backed Tensor. Rejects unknown magic,
// version, or dtype. If `dtype_out` is non-null it receives the stored dtype.
Tensor load_occt(const std::string& path, OcctDtype* dtype_out = nullptr);

}  // namespace bevocc
