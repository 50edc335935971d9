#include "gridcaps/optim.hpp"

#include <cmath>

#include "gridcaps/errors.hpp"

namespace gridcaps {

nlohmann::json to_json(const OptimConfig& c) {
  return {{"kind", c.kind}, {"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

OptimConfig optim_from_json(const nlohmann::json& j) {
  OptimConfig c;
  c.kind = j.value("kind", c.kind);
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  if (c.kind != "adam" && c.kind != "sgd") throw ConfigError("optimizer must be adam or sgd");
  if (!(c.lr > 0)) throw ConfigError("learning rate must be positive");
  return c;
}

template <class T>
Optimizer<T>::Optimizer(OptimConfig cfg, std::vector<Param<T>*> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  if (cfg_.kind != "adam" && cfg_.kind != "sgd") throw ConfigError("unknown optimizer " + cfg_.kind);
  if (cfg_.kind == "adam") {
    for (auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }
}

template <class T>
void Optimizer<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <class T>
void Optimizer<T>::step(std::size_t batch_index) {
  for (auto* p : params_) {
    if (!p->grad.all_finite()) {
      throw TrainingError("non-finite gradient in " + p->name + " at batch " + std::to_string(batch_index));
    }
  }
  ++t_;
  if (cfg_.kind == "sgd") {
    for (auto* p : params_) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        p->value.data[i] = static_cast<T>(p->value.data[i] - cfg_.lr * p->grad.data[i]);
      }
    }
    return;
  }
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto* p = params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = static_cast<double>(p->grad.data[i]);
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double step = cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      p->value.data[i] = static_cast<T>(static_cast<double>(p->value.data[i]) - step);
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace gridcaps
