#include "advdrop/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace advdrop {

void fail(const std::string& msg) { throw std::runtime_error(msg); }

static int64_t product(const std::vector<int>& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) fail("Tensor: non-positive extent in shape");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  values.assign(static_cast<size_t>(product(shape)), 0.0);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (product(shape) != static_cast<int64_t>(values.size()))
    fail("Tensor: shape " + shape_str() + " does not match value count " +
         std::to_string(values.size()));
}

Tensor Tensor::zeros(std::vector<int> s) { return Tensor(std::move(s)); }

Tensor Tensor::full(std::vector<int> s, double fill) {
  Tensor t(std::move(s));
  for (double& v : t.values) v = fill;
  return t;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v));
}

int64_t Tensor::numel() const { return static_cast<int64_t>(values.size()); }

int Tensor::rows() const {
  if (ndim() != 2) fail("Tensor::rows: tensor " + shape_str() + " is not rank 2");
  return shape[0];
}

int Tensor::cols() const {
  if (ndim() != 2) fail("Tensor::cols: tensor " + shape_str() + " is not rank 2");
  return shape[1];
}

double& Tensor::at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }

double Tensor::at(int r, int c) const {
  return values[static_cast<size_t>(r) * cols() + c];
}

bool Tensor::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace advdrop
