#include "scenechar/tensor.hpp"

#include <Eigen/Core>

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace scenechar {

namespace {

std::size_t checked_volume(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must be non-empty");
  std::size_t n = 1;
  for (std::size_t extent : shape) {
    if (extent < 1) {
      throw std::invalid_argument("tensor extents must be >= 1, got shape " +
                                  shape_to_string(shape));
    }
    n *= extent;
  }
  return n;
}

using MatrixMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;
using MutableMatrixMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_volume(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (checked_volume(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " +
                                shape_to_string(shape_));
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  if (checked_volume(new_shape) != data_.size()) {
    throw std::invalid_argument("cannot reshape " + shape_to_string(shape_) +
                                " to " + shape_to_string(new_shape));
  }
  return Tensor(std::move(new_shape), data_);
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

Shape2D conv_output_shape(Shape2D in, std::size_t f, std::size_t p,
                          std::size_t s) {
  if (in.height < 1 || in.width < 1)
    throw std::invalid_argument("input extents must be >= 1");
  if (f < 1) throw std::invalid_argument("spatial extent f must be >= 1");
  if (s < 1) throw std::invalid_argument("stride s must be >= 1");
  const std::size_t padded_h = in.height + 2 * p;
  const std::size_t padded_w = in.width + 2 * p;
  if (f > padded_h || f > padded_w) {
    throw std::invalid_argument(
        "kernel extent " + std::to_string(f) + " exceeds padded input " +
        std::to_string(padded_h) + "x" + std::to_string(padded_w));
  }
  return Shape2D{(padded_h - f) / s + 1, (padded_w - f) / s + 1};
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw std::invalid_argument("matmul shape mismatch: " +
                                shape_to_string(a.shape()) + " x " +
                                shape_to_string(b.shape()));
  }
  Tensor out({a.extent(0), b.extent(1)});
  MatrixMap ma(a.data(), static_cast<Eigen::Index>(a.extent(0)),
               static_cast<Eigen::Index>(a.extent(1)));
  MatrixMap mb(b.data(), static_cast<Eigen::Index>(b.extent(0)),
               static_cast<Eigen::Index>(b.extent(1)));
  MutableMatrixMap mo(out.data(), static_cast<Eigen::Index>(out.extent(0)),
                      static_cast<Eigen::Index>(out.extent(1)));
  mo.noalias() = ma * mb;
  return out;
}

void dump_tensor(const Tensor& t, std::ostream& out) {
  out << "shape:";
  for (std::size_t extent : t.shape()) out << ' ' << extent;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", t[i]);
    out << buf << (i + 1 == t.size() ? '\n' : ' ');
  }
}

Tensor load_tensor(std::istream& in) {
  std::string tag;
  in >> tag;
  if (tag != "shape:") throw std::runtime_error("tensor dump: missing shape header");
  std::string line;
  std::getline(in, line);
  std::istringstream header(line);
  std::vector<std::size_t> shape;
  std::size_t extent = 0;
  while (header >> extent) shape.push_back(extent);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(in >> t[i])) throw std::runtime_error("tensor dump: truncated data");
  }
  return t;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace scenechar
