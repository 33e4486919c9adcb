#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "rpk/errors.hpp"

namespace rpk {

// Minimal dense row-major tensor. The scalar type is a template parameter:
// the pipeline runs in float by default, the oracle and gradient suites run
// the same code in double.
template <class S>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> sh) : shape(std::move(sh)), data(numel(shape), S(0)) {}
  Tensor(std::initializer_list<std::size_t> sh) : Tensor(std::vector<std::size_t>(sh)) {}

  static std::size_t numel(const std::vector<std::size_t>& sh) {
    std::size_t n = 1;
    for (std::size_t d : sh) n *= d;
    return n;
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  S& operator()(std::size_t i) { return data[i]; }
  const S& operator()(std::size_t i) const { return data[i]; }
  S& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const S& operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  S& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  const S& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  S& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  const S& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

inline std::string shape_str(const std::vector<std::size_t>& sh) {
  std::string s = "(";
  for (std::size_t i = 0; i < sh.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(sh[i]);
  }
  return s + ")";
}

template <class S>
void require_shape(const Tensor<S>& t, const std::vector<std::size_t>& expect,
                   const std::string& what) {
  if (t.shape != expect) {
    throw ShapeError(what + ": expected " + shape_str(expect) + ", got " + shape_str(t.shape));
  }
}

}  // namespace rpk
