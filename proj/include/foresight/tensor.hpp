#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "foresight/errors.hpp"

namespace foresight {

// Dense row-major tensor of doubles. Rank 1 and rank 2 cover everything the
// model needs; 64-bit floats keep gradient checking and determinism cheap.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<std::size_t>(checked_numel(shape)), 0.0);
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, double value) {
    Tensor t(std::move(s));
    t.fill(value);
    return t;
  }

  static Tensor scalar(double x) {
    Tensor t({1});
    t.v[0] = x;
    return t;
  }

  static Tensor from(std::vector<double> values) {
    Tensor t;
    t.shape = {static_cast<int>(values.size())};
    t.v = std::move(values);
    if (t.v.empty()) throw ContractError("tensor must not be empty");
    return t;
  }

  static Tensor matrix(int rows, int cols, std::vector<double> values) {
    if (rows <= 0 || cols <= 0)
      throw ContractError("matrix dimensions must be positive");
    if (static_cast<int>(values.size()) != rows * cols)
      throw ContractError("matrix values do not match rows*cols");
    Tensor t;
    t.shape = {rows, cols};
    t.v = std::move(values);
    return t;
  }

  int numel() const { return static_cast<int>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int rows() const { return shape.at(0); }
  int cols() const { return rank() == 2 ? shape.at(1) : 1; }

  double& at(int i) { return v[static_cast<std::size_t>(i)]; }
  double at(int i) const { return v[static_cast<std::size_t>(i)]; }
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols() + c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << "x";
      os << shape[i];
    }
    os << "]";
    return os.str();
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  double norm() const {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }

  bool finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

 private:
  static int checked_numel(const std::vector<int>& s) {
    if (s.empty()) throw ContractError("tensor shape must not be empty");
    long long n = 1;
    for (int d : s) {
      if (d <= 0) throw ContractError("tensor dimensions must be positive");
      n *= d;
    }
    return static_cast<int>(n);
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

}  // namespace foresight
