#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace poselift::gradcore {

struct SuiteResult {
  std::string op;
  double max_rel_err = 0.0;
};

/// Finite-difference verification of every differentiable operation and
/// every loss, including a composite forward through the full model.
/// Central differences with the given step on randomized inputs.
std::vector<SuiteResult> run_gradcheck_suite(std::uint64_t seed, double h = 1e-5);

double suite_worst(const std::vector<SuiteResult>& results);

}  // namespace poselift::gradcore
