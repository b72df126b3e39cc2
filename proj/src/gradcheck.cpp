#include "poselift/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace poselift::gradcore {

double GradCheckReport::max_rel_err() const {
  double m = 0;
  for (const auto& e : inputs) m = std::max(m, e.max_rel_err);
  return m;
}

namespace {

void check_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw NonFinite(std::string(what) + " produced a non-finite value");
}

std::vector<Tensor> bind_variables(const std::vector<Tensor>& inputs) {
  std::vector<Tensor> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs)
    vars.push_back(Tensor::variable(t.shape(), std::vector<double>(t.values())));
  return vars;
}

}  // namespace

GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& inputs, double h,
    const std::vector<std::string>& names) {
  std::vector<Tensor> vars = bind_variables(inputs);
  Tensor root = fn(vars);
  check_finite(root.scalar(), "grad_check function");
  GradientMap analytic = backward(root);

  GradCheckReport report;
  for (std::size_t vi = 0; vi < vars.size(); ++vi) {
    GradCheckEntry entry;
    entry.input = vi < names.size() ? names[vi] : "input" + std::to_string(vi);

    const std::vector<double>* ga = analytic.find(vars[vi].graph_id());
    const std::size_t n = vars[vi].size();
    for (std::size_t e = 0; e < n; ++e) {
      auto eval_at = [&](double delta) {
        std::vector<Tensor> probe = bind_variables(inputs);
        std::vector<double> vals(inputs[vi].values());
        vals[e] += delta;
        probe[vi] = Tensor::variable(inputs[vi].shape(), std::move(vals));
        double v = fn(probe).scalar();
        check_finite(v, "grad_check function");
        return v;
      };
      const double numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
      const double a = ga ? (*ga)[e] : 0.0;
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = e;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.inputs.push_back(std::move(entry));
  }
  return report;
}

}  // namespace poselift::gradcore
