// ADAM with bias correction and decoupled weight decay. Moment buffers are kept
// in double regardless of the parameter precision. A non-finite gradient aborts
// the step with the offending parameter named.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nio/tensor.hpp"

namespace nio {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <class T>
class Adam {
 public:
  using NamedParam = std::pair<std::string, Tensor<T>>;

  Adam(std::vector<NamedParam> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].second.size(), 0.0);
      v_[i].assign(params_[i].second.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].second;
      auto& g = p.grad();
      auto& val = p.data();
      for (std::size_t j = 0; j < val.size(); ++j) {
        double gj = static_cast<double>(g[j]);
        if (!std::isfinite(gj))
          throw NumericError(msg("non-finite gradient in parameter '", params_[i].first,
                                 "' at index ", j, " (step ", t_, ")"));
        m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * gj;
        v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * gj * gj;
        double mh = m_[i][j] / bc1;
        double vh = v_[i][j] / bc2;
        double upd = mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * val[j];
        val[j] = static_cast<T>(val[j] - cfg_.lr * upd);
      }
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long step_count() const { return t_; }
  const std::vector<double>& moment1(std::size_t i) const { return m_[i]; }
  const std::vector<double>& moment2(std::size_t i) const { return v_[i]; }

 private:
  std::vector<NamedParam> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace nio
