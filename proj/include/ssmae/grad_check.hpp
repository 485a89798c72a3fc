#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ssmae/tensor.hpp"

namespace ssmae {

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one entry per checked input
  std::size_t coordinates = 0;

  double worst() const;
};

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences (f(x+eps) - f(x-eps)) / 2eps, coordinate by coordinate, for
/// each tensor in `inputs`. `f` must rebuild its graph from the current
/// values of `inputs` on every call. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-12).
GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs, double epsilon);

}  // namespace ssmae

namespace ssmae {

struct GradCase {
  std::string name;
  double error = 0.0;      // worst relative error over all inputs
  double tolerance = 0.0;
  std::size_t coordinates = 0;

  bool passed() const { return error <= tolerance; }
};

/// Every differentiable op plus the micro-model paths (P=3, C=5, d=8, B=1,
/// H=2): ops at 1e-5, end-to-end losses at 1e-4.
std::vector<GradCase> run_grad_suite(std::uint64_t seed = 1);

}  // namespace ssmae
