#pragma once

#include <map>
#include <string>
#include <vector>

#include "poselift/tensor.hpp"

namespace poselift::gradcore {

/// Running Adadelta accumulators, keyed by parameter name. rho is the decay
/// of both averages ("momentum" in the usual Adadelta phrasing); eps keeps
/// the RMS ratios defined at cold start.
struct AdadeltaState {
  double rho = 0.9;
  double eps = 1e-6;
  std::map<std::string, std::vector<double>> accum_grad;
  std::map<std::string, std::vector<double>> accum_update;

  void ensure(const std::string& name, std::size_t n);
};

/// One parameter participating in a step. grad == nullptr means a zero
/// gradient: the value stays put and the accumulators decay. lr_scale
/// implements per-parameter learning-rate discrepancy (1 = full rate).
struct ParamRef {
  std::string name;
  std::vector<double>* value = nullptr;
  const std::vector<double>* grad = nullptr;
  double lr_scale = 1.0;
};

/// Standard Adadelta recurrence per element:
///   Eg   <- rho Eg + (1-rho) g^2
///   d    <- -sqrt(Eu + eps) / sqrt(Eg + eps) * g
///   Eu   <- rho Eu + (1-rho) d^2
///   p    <- p + lr * lr_scale * d
/// The accumulators see the unscaled step, so two parameters with equal
/// (g, state) and lr_scales s1, s2 move in the exact ratio s1:s2.
void adadelta_step(std::vector<ParamRef>& params, AdadeltaState& state, double lr);

}  // namespace poselift::gradcore
