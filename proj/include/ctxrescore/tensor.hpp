#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ctxrescore {

/// Dense row-major matrix of doubles.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// out[j] += sum_i in[i] * w(i, j)   (row vector times matrix)
inline void accumulate_vec_mat(std::span<const double> in, const Tensor& w, std::span<double> out) {
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double a = in[i];
    if (a == 0.0) continue;
    const auto wr = w.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += a * wr[j];
  }
}

/// out[i] += sum_j w(i, j) * g[j]   (matrix times column vector, i.e. g·wᵀ)
inline void accumulate_mat_vec(const Tensor& w, std::span<const double> g, std::span<double> out) {
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto wr = w.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) s += wr[j] * g[j];
    out[i] += s;
  }
}

/// dw(i, j) += in[i] * g[j]
inline void accumulate_outer(std::span<const double> in, std::span<const double> g, Tensor& dw) {
  for (std::size_t i = 0; i < dw.rows(); ++i) {
    const double a = in[i];
    if (a == 0.0) continue;
    auto dr = dw.row(i);
    for (std::size_t j = 0; j < dw.cols(); ++j) dr[j] += a * g[j];
  }
}

}  // namespace ctxrescore
