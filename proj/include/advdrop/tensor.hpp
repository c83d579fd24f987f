#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace advdrop {

// Dense row-major tensor of 64-bit reals. Rank 1 ({n}) and rank 2 ({r, c})
// cover everything the unrolled graphs need.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, std::vector<double> v);

  static Tensor zeros(std::vector<int> s);
  static Tensor full(std::vector<int> s, double fill);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);

  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t numel() const;
  bool is_scalar() const { return numel() == 1; }

  // Rank-2 accessors.
  int rows() const;
  int cols() const;
  double& at(int r, int c);
  double at(int r, int c) const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

[[noreturn]] void fail(const std::string& msg);

}  // namespace advdrop
