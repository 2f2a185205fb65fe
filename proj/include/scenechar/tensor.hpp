#pragma once

#include <cassert>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace scenechar {

// Dense n-dimensional array of doubles, row-major. All extents are >= 1 and
// product(shape) == data.size() at all times.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor full(std::vector<std::size_t> shape, double value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }

  // Element count; equals product(shape).
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t flat) {
    assert(flat < data_.size());
    return data_[flat];
  }
  double operator[](std::size_t flat) const {
    assert(flat < data_.size());
    return data_[flat];
  }

  double& operator()(std::size_t i, std::size_t j) {
    assert(rank() == 2);
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(rank() == 2);
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    assert(rank() == 3);
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    assert(rank() == 3);
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k,
                     std::size_t l) {
    assert(rank() == 4);
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k,
                    std::size_t l) const {
    assert(rank() == 4);
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  // Same data, new shape; product(shape) must be unchanged.
  Tensor reshaped(std::vector<std::size_t> new_shape) const;

  void fill(double value);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

struct Shape2D {
  std::size_t height = 0;
  std::size_t width = 0;

  bool operator==(const Shape2D&) const = default;
};

// Output geometry of a convolution/pooling window: floor((dim - f + 2p)/s) + 1
// per axis. Throws if the kernel does not fit the padded input.
Shape2D conv_output_shape(Shape2D in, std::size_t f, std::size_t p,
                          std::size_t s);

// Standard rank-2 matrix product.
Tensor matmul(const Tensor& a, const Tensor& b);

// Debug dump format: one "shape: d0 d1 ..." header line followed by the
// values in row-major order, whitespace-separated.
void dump_tensor(const Tensor& t, std::ostream& out);
Tensor load_tensor(std::istream& in);

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace scenechar
