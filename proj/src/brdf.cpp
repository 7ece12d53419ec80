#include "anglseg/brdf.hpp"

#include <algorithm>

namespace anglseg {

std::string to_string(BrdfKind kind) {
  switch (kind) {
    case BrdfKind::lambertian: return "lambertian";
    case BrdfKind::phong_specular: return "phong-specular";
    case BrdfKind::two_lobe: return "two-lobe";
  }
  return "unknown";
}

BrdfKind brdf_kind_from_string(const std::string& s) {
  if (s == "lambertian") return BrdfKind::lambertian;
  if (s == "phong-specular") return BrdfKind::phong_specular;
  if (s == "two-lobe") return BrdfKind::two_lobe;
  throw std::invalid_argument("unknown BRDF kind '" + s + "'");
}

double white_point(const BrdfModel& model, double light_intensity, double ambient) {
  const double ks = model.kind == BrdfKind::lambertian ? 0.0 : model.specular;
  return light_intensity * model.peak() + ambient * (model.albedo + ks);
}

std::vector<BrdfModel> default_brdf_table(std::size_t num_classes, double light_intensity, double ambient,
                                          double white_point_limit) {
  using K = BrdfKind;
  // name, kind, albedo, requested ks, shininess
  static const std::vector<BrdfModel> named = {
      {0, K::lambertian, 0.25, 0.0, 1.0, "Asphalt"},
      {1, K::lambertian, 0.60, 0.0, 1.0, "Concrete"},
      {2, K::phong_specular, 0.10, 0.60, 8.0, "Glass"},
      {3, K::two_lobe, 0.22, 0.30, 3.0, "Tree"},
      {4, K::lambertian, 0.40, 0.0, 1.0, "Grass"},
      {5, K::phong_specular, 0.30, 0.40, 4.0, "Metal"},
      {6, K::two_lobe, 0.45, 0.20, 6.0, "Ceramic"},
      {7, K::phong_specular, 0.06, 0.50, 12.0, "Solar Panel"},
      {8, K::phong_specular, 0.08, 0.40, 16.0, "Water"},
      {9, K::lambertian, 0.75, 0.0, 1.0, "Polymer"},
  };
  std::vector<BrdfModel> table;
  table.reserve(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    BrdfModel m;
    if (c < named.size()) {
      m = named[c];
    } else {
      m = {static_cast<int>(c), K::lambertian, 0.1 + 0.8 * static_cast<double>(c % 9) / 8.0, 0.0, 1.0,
           "Class " + std::to_string(c)};
    }
    m.class_id = static_cast<int>(c);
    if (m.kind != K::lambertian) {
      const double lobe = light_intensity * (m.shininess + 2.0) / (2.0 * std::numbers::pi) + ambient;
      const double room = white_point_limit - light_intensity * m.albedo / std::numbers::pi - ambient * m.albedo;
      m.specular = std::clamp(std::min(m.specular, room / lobe), 0.0, 1.0 - m.albedo);
    }
    m.validate();
    table.push_back(std::move(m));
  }
  return table;
}

}  // namespace anglseg
