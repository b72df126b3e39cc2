#include "poselift/adadelta.hpp"

#include <cmath>

namespace poselift::gradcore {

void AdadeltaState::ensure(const std::string& name, std::size_t n) {
  auto git = accum_grad.find(name);
  if (git == accum_grad.end()) {
    accum_grad.emplace(name, std::vector<double>(n, 0.0));
    accum_update.emplace(name, std::vector<double>(n, 0.0));
    return;
  }
  if (git->second.size() != n)
    throw ShapeMismatch("adadelta accumulator for '" + name + "' has " +
                        std::to_string(git->second.size()) + " elements, parameter has " +
                        std::to_string(n));
}

void adadelta_step(std::vector<ParamRef>& params, AdadeltaState& state, double lr) {
  if (lr <= 0) throw InvalidConfig("adadelta lr must be positive");
  const double rho = state.rho, eps = state.eps;
  for (ParamRef& p : params) {
    const std::size_t n = p.value->size();
    state.ensure(p.name, n);
    if (p.grad && p.grad->size() != n)
      throw ShapeMismatch("gradient for '" + p.name + "' has " +
                          std::to_string(p.grad->size()) + " elements, parameter has " +
                          std::to_string(n));
    std::vector<double>& eg = state.accum_grad[p.name];
    std::vector<double>& eu = state.accum_update[p.name];
    std::vector<double>& v = *p.value;
    const double step_scale = lr * p.lr_scale;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = p.grad ? (*p.grad)[i] : 0.0;
      eg[i] = rho * eg[i] + (1.0 - rho) * g * g;
      const double d = -std::sqrt(eu[i] + eps) / std::sqrt(eg[i] + eps) * g;
      eu[i] = rho * eu[i] + (1.0 - rho) * d * d;
      v[i] += step_scale * d;
    }
  }
}

}  // namespace poselift::gradcore
