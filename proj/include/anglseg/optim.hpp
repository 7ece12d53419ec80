#pragma once

#include "anglseg/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace anglseg {

template <typename Scalar>
struct BasicNamedTensor {
  std::string name;
  BasicTensor<Scalar> tensor;
};

using NamedTensor = BasicNamedTensor<float>;
using ParameterSet = std::vector<NamedTensor>;

/// Raised when a gradient holds NaN or Inf; no parameter is modified.
class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Heavy-ball SGD: v <- mu*v + (g + wd*w); w <- w - lr*v.
template <typename Scalar>
class BasicSgd {
 public:
  using Array = typename BasicTensor<Scalar>::Array;

  BasicSgd(std::vector<BasicNamedTensor<Scalar>> params, SgdOptions options)
      : params_(std::move(params)), options_(options), velocity_(params_.size()) {}

  /// Applies one update with learning rate `lr` and clears all gradients.
  void step(double lr) {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      if (!p.tensor.grad().allFinite()) {
        std::ostringstream os;
        os << "non-finite gradient in parameter '" << p.name << "' (lr=" << lr << ", grad norm="
           << p.tensor.grad().matrix().norm() << ")";
        throw NonFiniteGradient(os.str());
      }
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& t = params_[i].tensor;
      if (!t.has_grad()) continue;
      Array g = t.grad();
      if (options_.weight_decay != 0.0) g += static_cast<Scalar>(options_.weight_decay) * t.values();
      if (velocity_[i].size() == 0) velocity_[i] = Array::Zero(g.size());
      velocity_[i] = static_cast<Scalar>(options_.momentum) * velocity_[i] + g;
      t.values() -= static_cast<Scalar>(lr) * velocity_[i];
    }
    zero_grad();
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  const std::vector<BasicNamedTensor<Scalar>>& parameters() const { return params_; }

 private:
  std::vector<BasicNamedTensor<Scalar>> params_;
  SgdOptions options_;
  std::vector<Array> velocity_;
};

using Sgd = BasicSgd<float>;

/// "poly" schedule: base_lr * (1 - iter/total)^power, 0 once iter >= total.
inline double poly_learning_rate(double base_lr, std::size_t iter, std::size_t total, double power) {
  if (total == 0 || iter >= total) return 0.0;
  return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(total), power);
}

}  // namespace anglseg
