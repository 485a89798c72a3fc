#include "ssmae/grad_check.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "ssmae/error.hpp"

namespace ssmae {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (double e : max_rel_error) w = std::max(w, e);
  return w;
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    fail(Errc::parameter, "grad_check: epsilon " + std::to_string(epsilon) + " outside [1e-7, 1e-3]");
  }

  auto evaluate = [&f] {
    NoGradGuard guard;
    Tensor y = f();
    if (y.numel() != 1) fail(Errc::contract, "grad_check: f must return a scalar, got " + shape_str(y.shape()));
    return y.item();
  };

  const double first = evaluate();
  const double second = evaluate();
  if (std::bit_cast<std::uint64_t>(first) != std::bit_cast<std::uint64_t>(second)) {
    fail(Errc::determinism, "grad_check: f is not deterministic (" + std::to_string(first) + " vs " +
                                std::to_string(second) + ")");
  }

  std::vector<bool> previous;
  for (auto& x : inputs) {
    previous.push_back(x.requires_grad());
    x.set_requires_grad(true);
    x.zero_grad();
  }
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& x : inputs) {
    analytic.emplace_back(x.grad().begin(), x.grad().end());
    x.zero_grad();
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = evaluate();
      values[i] = saved - epsilon;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      worst = std::max(worst, std::abs(a - numeric) / denom);
      ++report.coordinates;
    }
    report.max_rel_error.push_back(worst);
    inputs[k].set_requires_grad(previous[k]);
  }
  return report;
}

}  // namespace ssmae
