#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace depthforge {

using Index = Eigen::Index;

/// Row-major 2-D grid. Maps, masks, feature grids and weights all use it so
/// that flat indices mean `row * cols + col` everywhere.
template <typename Scalar>
using Grid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GridXd = Grid<double>;
using GridXf = Grid<float>;
using Mask = Grid<bool>;

/// Dense n-dimensional array, row-major.
template <typename Scalar>
class BasicTensor {
 public:
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Grid<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const Grid<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<Index> shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(Storage::Constant(count(shape_), fill)) {}

  BasicTensor(std::vector<Index> shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw std::invalid_argument("tensor data length does not match shape");
    }
  }

  /// Wraps a single H x W plane as a rank-2 tensor.
  static BasicTensor from_grid(const Grid<Scalar>& g) {
    BasicTensor t({g.rows(), g.cols()});
    std::copy(g.data(), g.data() + g.size(), t.data_.data());
    return t;
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const { return data_.size(); }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  /// Plane `c` of a rank-3 tensor (C x H x W), or the whole of a rank-2 one.
  PlaneMap plane(Index c = 0) {
    const auto [h, w] = plane_extent();
    return PlaneMap(data_.data() + c * h * w, h, w);
  }
  ConstPlaneMap plane(Index c = 0) const {
    const auto [h, w] = plane_extent();
    return ConstPlaneMap(data_.data() + c * h * w, h, w);
  }

  Index height() const { return plane_extent().first; }
  Index width() const { return plane_extent().second; }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  static Index count(const std::vector<Index>& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
  }

 private:
  std::pair<Index, Index> plane_extent() const {
    if (shape_.size() < 2) throw std::logic_error("tensor has no 2-D plane");
    return {shape_[shape_.size() - 2], shape_[shape_.size() - 1]};
  }

  std::vector<Index> shape_;
  Storage data_;
};

using Tensor = BasicTensor<double>;

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace depthforge
