#include "fbkws/tensor.hpp"

#include <cmath>
#include <sstream>

namespace fbkws {

int64_t Tensor::numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    require(d >= 0, Error::Kind::kShape, "negative dimension in tensor shape");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(numel_of(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(numel_of(shape_)), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(numel_of(shape_) == static_cast<int64_t>(data_.size()), Error::Kind::kShape,
          "tensor data length does not match shape " + shape_str());
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << "]";
  return os.str();
}

void Tensor::fill(float v) {
  for (auto& x : data_) x = v;
}

void Tensor::check_finite(const char* what) const {
  for (float v : data_) {
    if (!std::isfinite(v)) {
      throw Error(Error::Kind::kContract,
                  std::string("non-finite value in ") + what + " output");
    }
  }
}

}  // namespace fbkws
