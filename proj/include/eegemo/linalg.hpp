#ifndef EEGEMO_LINALG_HPP
#define EEGEMO_LINALG_HPP

#include <cstddef>
#include <vector>

#include "eegemo/threadpool.hpp"

namespace eegemo::linalg {

// Row-major matrix products. Threads always partition rows of the output, and
// every output element is accumulated in a fixed ascending order over the
// shared dimension, so parallel and serial runs agree bitwise.

// C (m x n) += A (m x k) . B (k x n)
template <typename T>
void matmul_add(const T* a, const T* b, T* c, size_t m, size_t k, size_t n,
                ThreadPool* pool) {
  auto rows = [=](size_t i0, size_t i1) {
    for (size_t i = i0; i < i1; ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        const T* brow = b + p * n;
        for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  };
  if (pool != nullptr && m > 1) {
    pool->parallel_for(0, m, rows);
  } else {
    rows(0, m);
  }
}

// C (m x n) = A (m x k) . B (k x n)
template <typename T>
void matmul(const T* a, const T* b, T* c, size_t m, size_t k, size_t n,
            ThreadPool* pool) {
  auto rows = [=](size_t i0, size_t i1) {
    for (size_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      for (size_t j = 0; j < n; ++j) crow[j] = T(0);
      const T* arow = a + i * k;
      for (size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        const T* brow = b + p * n;
        for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  };
  if (pool != nullptr && m > 1) {
    pool->parallel_for(0, m, rows);
  } else {
    rows(0, m);
  }
}

// C (m x n) += A^T . B where A is (r x m) and B is (r x n).
// Threads split the m rows of C; the reduction over r stays ascending.
template <typename T>
void matmul_tn_add(const T* a, const T* b, T* c, size_t r, size_t m, size_t n,
                   ThreadPool* pool) {
  auto rows = [=](size_t i0, size_t i1) {
    for (size_t row = 0; row < r; ++row) {
      const T* brow = b + row * n;
      const T* arow = a + row * m;
      for (size_t i = i0; i < i1; ++i) {
        const T av = arow[i];
        T* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  };
  if (pool != nullptr && m > 1) {
    pool->parallel_for(0, m, rows);
  } else {
    rows(0, m);
  }
}

template <typename T>
std::vector<T> transpose(const T* a, size_t rows, size_t cols) {
  std::vector<T> t(rows * cols);
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

}  // namespace eegemo::linalg

#endif
