#pragma once

// Bare-bones dense tensor: shape plus row-major doubles. The network code
// addresses layouts explicitly, so this only carries storage and bookkeeping.

#include <cstddef>
#include <vector>

#include "cargopatch/error.hpp"

namespace cargopatch {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  static Tensor zeros(std::vector<int> shape_in) {
    Tensor t;
    t.shape = std::move(shape_in);
    std::size_t n = 1;
    for (int e : t.shape) {
      if (e < 1) throw ContractError("tensor extents must be positive");
      n *= static_cast<std::size_t>(e);
    }
    t.data.assign(n, 0.0);
    return t;
  }

  std::size_t numel() const { return data.size(); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

}  // namespace cargopatch
