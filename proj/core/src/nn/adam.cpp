#include "reem/nn/adam.hpp"

#include <cmath>

#include "reem/errors.hpp"

namespace reem::nn {

void Adam::step(const std::vector<ParamView>& params) {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));

  for (const ParamView& p : params) {
    std::vector<double>& value = *p.value;
    const std::vector<double>& grad = *p.grad;

    Moments& mom = moments_[p.name];
    if (mom.m.size() != value.size()) {
      mom.m.assign(value.size(), 0.0);
      mom.v.assign(value.size(), 0.0);
    }

    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g)) {
        throw ValidationError("non-finite gradient in parameter '" + p.name +
                              "'");
      }
      mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g;
      mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = mom.m[i] / bc1;
      const double v_hat = mom.v[i] / bc2;
      value[i] -= config_.lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                                config_.weight_decay * value[i]);
    }
  }
}

}  // namespace reem::nn
