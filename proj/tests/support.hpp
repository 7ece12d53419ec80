#pragma once

#include "anglseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace anglseg::testing {

using DTensor = BasicTensor<double>;

inline DTensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                             bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  DTensor::Array v(static_cast<Eigen::Index>(shape_numel(shape)));
  for (auto& x : v) x = u(rng);
  return DTensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Values bounded away from zero by `margin` (keeps relu off its kink).
inline DTensor random_nonzero(Shape shape, std::mt19937_64& rng, double margin) {
  auto t = random_tensor(std::move(shape), rng);
  for (auto& x : t.values()) x = (x < 0 ? -1.0 : 1.0) * (margin + std::abs(x));
  return t;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central finite differences of L = sum(w * f(inputs)) against the reverse
/// pass seeded with w. Relative error |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradients(const std::function<DTensor(const std::vector<DTensor>&)>& f,
                                 std::vector<DTensor> inputs, std::mt19937_64& rng, double step = 1e-3,
                                 double floor = 1e-3, std::size_t max_probes = 48) {
  auto y = f(inputs);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DTensor::Array w(y.values().size());
  for (auto& x : w) x = u(rng);
  for (auto& in : inputs) in.zero_grad();
  y.backward(w);

  auto objective = [&]() { return (f(inputs).values() * w).sum(); };
  GradCheck result;
  for (auto& in : inputs) {
    if (!in.requires_grad()) continue;
    const DTensor::Array analytic = in.has_grad() ? in.grad() : DTensor::Array::Zero(in.values().size());
    const auto n = in.values().size();
    std::vector<Eigen::Index> probes(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) probes[static_cast<std::size_t>(i)] = i;
    std::shuffle(probes.begin(), probes.end(), rng);
    if (probes.size() > max_probes) probes.resize(max_probes);
    for (auto i : probes) {
      const double saved = in.values()[i];
      in.values()[i] = saved + step;
      const double plus = objective();
      in.values()[i] = saved - step;
      const double minus = objective();
      in.values()[i] = saved;
      const double numeric = (plus - minus) / (2 * step);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.checked;
    }
  }
  return result;
}

/// Direct-loop convolution oracle (NCHW, OIHW weights).
inline std::vector<double> conv_oracle(const DTensor& x, const DTensor& w, const DTensor* bias, const ConvSpec& s) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto oh = s.output_height(h), ow = s.output_width(wd);
  std::vector<double> out(n * s.out_channels * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias ? bias->values()[static_cast<Eigen::Index>(o)] : 0.0;
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t ki = 0; ki < s.kernel_h; ++ki)
              for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                const long r = static_cast<long>(i * s.stride + ki * s.dilation) - static_cast<long>(s.padding);
                const long q = static_cast<long>(j * s.stride + kj * s.dilation) - static_cast<long>(s.padding);
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(wd)) continue;
                acc += x.values()[static_cast<Eigen::Index>(((b * c + ci) * h + static_cast<std::size_t>(r)) * wd +
                                                            static_cast<std::size_t>(q))] *
                       w.values()[static_cast<Eigen::Index>(((o * c + ci) * s.kernel_h + ki) * s.kernel_w + kj)];
              }
          out[((b * s.out_channels + o) * oh + i) * ow + j] = acc;
        }
  return out;
}

}  // namespace anglseg::testing
