#pragma once

#include "hetgpt/rng.hpp"
#include "hetgpt/tensor.hpp"

namespace hetgpt::testing {

inline Tensor rand_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) t(r, c) = rng.normal() * scale;
  return t;
}

}  // namespace hetgpt::testing
