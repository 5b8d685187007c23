#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mccws {

#ifdef MCCWS_FLOAT32
using Real = float;
#else
using Real = double;
#endif

// Dense row-major matrix. Vectors are 1 x n.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Real fill = 0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<Real> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows);
  static Tensor row_vector(std::span<const Real> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  bool same_shape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(Real value);
  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

std::string shape_string(const Tensor& t);

// A trainable tensor addressed by a stable name.
struct Parameter {
  std::string name;
  Tensor value;
  // Excluded from weight decay when false (biases, layer-norm affine terms).
  bool decay = true;
};

}  // namespace mccws
