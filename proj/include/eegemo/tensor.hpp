#ifndef EEGEMO_TENSOR_HPP
#define EEGEMO_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "eegemo/errors.hpp"

namespace eegemo {

// Dense row-major tensor. The scalar type selects the precision: float for
// training, double for gradient-check mode.
template <typename T>
struct Tensor {
  std::vector<size_t> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), T(0));
  }

  size_t numel() const { return v.size(); }
  size_t dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }

  static size_t numel_of(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
  }

  void require_rank(size_t r, const char* what) const {
    if (shape.size() != r)
      throw ShapeError(std::string(what) + ": expected rank " + std::to_string(r));
  }
};

}  // namespace eegemo

#endif
