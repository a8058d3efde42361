#pragma once

#include <Eigen/Dense>
#include <string>

#include "hetgpt/errors.hpp"
#include "hetgpt/rng.hpp"

namespace hetgpt {

/// Dense row-major matrix of 64-bit reals. Row vectors are 1 x n, column
/// vectors n x 1, scalars 1 x 1.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) +
                         " vs " + shape_str(b));
  }
}

inline void require_finite(const Tensor& t, const char* op) {
  if (!t.allFinite()) {
    throw NumericError(std::string(op) + ": non-finite value in " + shape_str(t) +
                       " result");
  }
}

inline bool is_scalar(const Tensor& t) { return t.rows() == 1 && t.cols() == 1; }

/// Zero-mean Gaussian entries with variance 2/fan_in.
inline Tensor kaiming_normal(int rows, int cols, int fan_in, Rng& rng) {
  Tensor t(rows, cols);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) t(r, c) = rng.normal(0.0, stddev);
  return t;
}

}  // namespace hetgpt
