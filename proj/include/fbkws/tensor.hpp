#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbkws/error.hpp"
#include "fbkws/rng.hpp"

namespace fbkws {

// Dense row-major float32 tensor. Reductions elsewhere accumulate in double;
// storage stays float32.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, float fill);
  Tensor(std::vector<int> shape, std::vector<float> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  float& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  float at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  float& at(int i, int j, int k) {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  float at(int i, int j, int k) const {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  float& at(int b, int c, int h, int w) {
    return data_[((static_cast<size_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  float at(int b, int c, int h, int w) const {
    return data_[((static_cast<size_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  void fill(float v);
  // Throws Error(kContract) on any NaN/Inf entry.
  void check_finite(const char* what) const;

  static int64_t numel_of(const std::vector<int>& shape);

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

}  // namespace fbkws
