#pragma once

#include <string>
#include <vector>

#include "ssmae/rng.hpp"
#include "ssmae/tensor.hpp"

namespace ssmae {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

/// Trainable weight, uniform in ±sqrt(1/fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);
/// Trainable weight, normal with the given standard deviation.
Tensor init_normal(Shape shape, double stddev, Rng& rng);
/// Trainable zeros (biases).
Tensor init_zeros(Shape shape);

void zero_grads(const ParamList& params);

}  // namespace ssmae
