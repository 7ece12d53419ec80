#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace anglseg {

/// Upper-hemisphere direction: polar angle theta in [0, pi/2] measured from
/// the surface normal (+z), azimuth phi wrapped into [0, 2pi).
template <typename Scalar>
struct BasicDirection {
  Scalar theta = 0;
  Scalar phi = 0;

  static BasicDirection make(Scalar theta, Scalar phi) {
    constexpr Scalar half_pi = std::numbers::pi_v<Scalar> / 2;
    constexpr Scalar two_pi = 2 * std::numbers::pi_v<Scalar>;
    if (!(theta >= 0 && theta <= half_pi)) {
      throw std::domain_error("direction: polar angle " + std::to_string(theta) + " outside [0, pi/2]");
    }
    Scalar wrapped = std::fmod(phi, two_pi);
    if (wrapped < 0) wrapped += two_pi;
    if (wrapped >= two_pi) wrapped = 0;
    return {theta, wrapped};
  }

  Eigen::Matrix<Scalar, 3, 1> vector() const {
    const Scalar s = std::sin(theta);
    return {s * std::cos(phi), s * std::sin(phi), std::cos(theta)};
  }
};

using Direction = BasicDirection<double>;

enum class BrdfKind { lambertian, phong_specular, two_lobe };

std::string to_string(BrdfKind kind);
BrdfKind brdf_kind_from_string(const std::string& s);

/// Diffuse term albedo/pi plus an optional normalized cosine lobe.
/// phong_specular: lobe around the mirror direction of l.
/// two_lobe: half the lobe weight at the mirror direction, half around l
/// itself (back-scatter). Both lobes are symmetric in (l, v).
struct BrdfModel {
  int class_id = 0;
  BrdfKind kind = BrdfKind::lambertian;
  double albedo = 0.5;
  double specular = 0.0;
  double shininess = 1.0;
  std::string name;

  void validate() const {
    if (albedo < 0.0 || albedo > 1.0) throw std::invalid_argument("brdf: albedo outside [0, 1] for " + name);
    if (specular < 0.0) throw std::invalid_argument("brdf: negative specular strength for " + name);
    if (shininess < 1.0) throw std::invalid_argument("brdf: shininess below 1 for " + name);
  }

  /// Maximum of f over the hemisphere pair (both lobes peak at 1).
  double peak() const {
    const double lobe = kind == BrdfKind::lambertian ? 0.0 : specular * (shininess + 2.0) / (2.0 * std::numbers::pi);
    return albedo / std::numbers::pi + lobe;
  }
};

template <typename Scalar>
Scalar eval_brdf(const BrdfModel& model, const BasicDirection<Scalar>& l, const BasicDirection<Scalar>& v) {
  const Scalar diffuse = static_cast<Scalar>(model.albedo / std::numbers::pi);
  if (model.kind == BrdfKind::lambertian || model.specular == 0.0) return diffuse;
  const auto lv = l.vector();
  const auto vv = v.vector();
  // mirror of l about the normal; r.v == l.mirror(v), hence reciprocal
  const Scalar mirror_cos = -lv.x() * vv.x() - lv.y() * vv.y() + lv.z() * vv.z();
  const Scalar n = static_cast<Scalar>(model.shininess);
  const Scalar norm = static_cast<Scalar>(model.specular) * (n + 2) / (2 * std::numbers::pi_v<Scalar>);
  const Scalar mirror_lobe = std::pow(std::max(mirror_cos, Scalar(0)), n);
  if (model.kind == BrdfKind::phong_specular) return diffuse + norm * mirror_lobe;
  const Scalar back_cos = lv.dot(vv);
  const Scalar back_lobe = std::pow(std::max(back_cos, Scalar(0)), n);
  return diffuse + norm * (mirror_lobe + back_lobe) / 2;
}

struct QuadratureGrid {
  std::size_t theta_steps = 16;
  std::size_t phi_steps = 32;
};

/// Midpoint-rule reflected radiance toward v:
///   sum f(l, v) L(l) cos(theta) sin(theta) dtheta dphi over the hemisphere.
template <typename Scalar, typename Illumination>
Scalar integrate_radiance(const BrdfModel& model, Illumination&& illumination, const BasicDirection<Scalar>& v,
                          QuadratureGrid grid = {}) {
  if (grid.theta_steps < 16 || grid.phi_steps < 32) {
    throw std::invalid_argument("integrate_radiance: quadrature grid must be at least 16x32");
  }
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar dtheta = pi / 2 / static_cast<Scalar>(grid.theta_steps);
  const Scalar dphi = 2 * pi / static_cast<Scalar>(grid.phi_steps);
  Scalar total = 0;
  for (std::size_t i = 0; i < grid.theta_steps; ++i) {
    const Scalar theta = (static_cast<Scalar>(i) + Scalar(0.5)) * dtheta;
    const Scalar weight = std::cos(theta) * std::sin(theta) * dtheta * dphi;
    Scalar ring = 0;
    for (std::size_t j = 0; j < grid.phi_steps; ++j) {
      const BasicDirection<Scalar> l{theta, (static_cast<Scalar>(j) + Scalar(0.5)) * dphi};
      ring += eval_brdf(model, l, v) * static_cast<Scalar>(illumination(l));
    }
    total += ring * weight;
  }
  return total;
}

/// Ten-class reflectance table; classes beyond the named set are Lambertian
/// with spread albedo. Specular strengths are capped so that the brightest
/// rendered value I*f_peak + ambient*(albedo + ks) stays <= `white_point`
/// and albedo + ks <= 1.
std::vector<BrdfModel> default_brdf_table(std::size_t num_classes, double light_intensity = 3.0,
                                          double ambient = 0.1, double white_point = 1.2);

/// Largest rendered value a model can produce under a sun of `light_intensity`.
double white_point(const BrdfModel& model, double light_intensity, double ambient);

}  // namespace anglseg
