#pragma once

#include <algorithm>
#include <cassert>
#include <span>
#include <string>
#include <vector>

namespace mtseg {

// Row-major dense matrix. Rows are tokens, columns are features throughout
// the model code.
template <typename T>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, T(0)) {}

  void resize(int r, int c) {
    rows = r;
    cols = c;
    data.assign(static_cast<std::size_t>(r) * c, T(0));
  }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  std::span<T> row_span(int r) { return {row(r), static_cast<std::size_t>(cols)}; }
  std::span<const T> row_span(int r) const { return {row(r), static_cast<std::size_t>(cols)}; }
  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

template <typename T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  void allocate(std::string n, int r, int c) {
    name = std::move(n);
    value.resize(r, c);
    grad.resize(r, c);
  }
};

// Packed variable-length sequences: sequence i occupies rows
// [offsets[i], offsets[i+1]) of an activation matrix. No padding.
struct SeqLayout {
  std::vector<int> offsets{0};

  static SeqLayout from_lengths(std::span<const int> lengths) {
    SeqLayout l;
    for (int n : lengths) l.offsets.push_back(l.offsets.back() + n);
    return l;
  }
  int count() const { return static_cast<int>(offsets.size()) - 1; }
  int total() const { return offsets.back(); }
  int begin(int i) const { return offsets[static_cast<std::size_t>(i)]; }
  int length(int i) const {
    return offsets[static_cast<std::size_t>(i) + 1] - offsets[static_cast<std::size_t>(i)];
  }
  int max_length() const {
    int m = 0;
    for (int i = 0; i < count(); ++i) m = std::max(m, length(i));
    return m;
  }
};

}  // namespace mtseg
