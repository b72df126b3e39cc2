#pragma once

#include <functional>
#include <string>
#include <vector>

#include "poselift/tensor.hpp"

namespace poselift::gradcore {

struct GradCheckEntry {
  std::string input;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> inputs;
  double max_rel_err() const;
  bool passed(double tol) const { return max_rel_err() < tol; }
};

/// Central-difference check of the analytic gradients of a scalar-valued
/// graph builder. The builder receives fresh leaf variables each call; the
/// relative error denominator is max(|analytic|, |numeric|, 1e-8).
/// Throws NonFinite if any evaluation produces NaN or Inf.
GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& inputs, double h = 1e-5,
    const std::vector<std::string>& names = {});

}  // namespace poselift::gradcore
