#ifndef DAD_TENSOR_HPP
#define DAD_TENSOR_HPP

#include <Eigen/Dense>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>
#include <vector>

#include "dad/common.hpp"

namespace dad {

// Dense n-d array over a flat Eigen buffer, row-major (last index fastest).
// The working layout for feature maps is [B, C, H, W].
template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using Storage = Eigen::Array<S, Eigen::Dynamic, 1>;
  using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapRM = Eigen::Map<MatrixRM>;
  using ConstMapRM = Eigen::Map<const MatrixRM>;

  Tensor() = default;
  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    data_ = Storage::Zero(count(shape_));
  }
  Tensor(std::vector<Index> shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    DAD_CHECK(data_.size() == count(shape_), ShapeError, "storage size does not match shape");
  }

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<Index> shape, S v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }
  static Tensor ones(std::vector<Index> shape) { return full(std::move(shape), S(1)); }
  static Tensor scalar(S v) { return full({1}, v); }

  bool defined() const { return !shape_.empty(); }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  const std::vector<Index>& shape() const { return shape_; }
  Index numel() const { return data_.size(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  S& operator[](Index i) { return data_[i]; }
  S operator[](Index i) const { return data_[i]; }

  // 4-d accessor for [B,C,H,W] tensors; used by tests and loop oracles.
  S& at(Index b, Index c, Index h, Index w) {
    return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  S at(Index b, Index c, Index h, Index w) const {
    return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  S& at(Index i, Index j) { return data_[i * shape_[1] + j]; }
  S at(Index i, Index j) const { return data_[i * shape_[1] + j]; }

  // View the flat buffer as a row-major matrix of the given extent.
  MapRM mat(Index rows, Index cols) {
    DAD_CHECK(rows * cols == numel(), ShapeError, "matrix view does not cover tensor");
    return MapRM(data(), rows, cols);
  }
  ConstMapRM mat(Index rows, Index cols) const {
    DAD_CHECK(rows * cols == numel(), ShapeError, "matrix view does not cover tensor");
    return ConstMapRM(data(), rows, cols);
  }

  Tensor reshaped(std::vector<Index> shape) const {
    DAD_CHECK(count(shape) == numel(), ShapeError, "reshape changes element count");
    return Tensor(std::move(shape), data_);
  }

  Tensor<S> clone() const { return Tensor(shape_, data_); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    for (Index i = 0; i < numel(); ++i) out[i] = static_cast<T>(data_[i]);
    return out;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  static Index count(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index d : shape) {
      DAD_CHECK(d >= 0, ShapeError, "negative dimension");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

  static std::string shape_str(const std::vector<Index>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }

 private:
  std::vector<Index> shape_;
  Storage data_;
};

// Deterministic RNG used for parameter init, data synthesis and tests.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 9377) : eng_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(eng_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(eng_);
  }
  std::int64_t randint(std::int64_t lo, std::int64_t hi) {  // inclusive range
    std::uniform_int_distribution<std::int64_t> d(lo, hi);
    return d(eng_);
  }

  template <typename S>
  void fill_normal(Tensor<S>& t, double mean = 0.0, double stddev = 1.0) {
    for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(normal(mean, stddev));
  }
  template <typename S>
  void fill_uniform(Tensor<S>& t, double lo = 0.0, double hi = 1.0) {
    for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(uniform(lo, hi));
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dad

#endif  // DAD_TENSOR_HPP
