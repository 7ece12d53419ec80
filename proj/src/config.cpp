#include "anglseg/config.hpp"

#include "anglseg/io.hpp"

#include <charconv>
#include <cstdio>
#include <functional>

namespace anglseg {
namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_value(const std::string& key, const std::string& s) {
  if constexpr (std::is_same_v<T, bool>) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + s + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return s;
  } else {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
      throw ConfigError(key + ": cannot parse '" + s + "'");
    }
    return v;
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename T, typename Access>
Field field(std::string key, Access access) {
  Field f;
  f.key = key;
  f.get = [access](const ExperimentConfig& c) { return format_value(access(const_cast<ExperimentConfig&>(c))); };
  f.set = [access, key](ExperimentConfig& c, const std::string& s) { access(c) = parse_value<T>(key, s); };
  return f;
}

#define ANGLSEG_FIELD(type, key, member) field<type>(key, [](ExperimentConfig& c) -> type& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      ANGLSEG_FIELD(std::uint64_t, "experiment.seed", seed),
      ANGLSEG_FIELD(std::size_t, "dataset.num_scenes", dataset.num_scenes),
      ANGLSEG_FIELD(std::size_t, "dataset.test_scenes", dataset.test_scenes),
      ANGLSEG_FIELD(std::size_t, "dataset.height", dataset.generation.height),
      ANGLSEG_FIELD(std::size_t, "dataset.width", dataset.generation.width),
      ANGLSEG_FIELD(std::size_t, "dataset.num_views", dataset.generation.num_views),
      ANGLSEG_FIELD(std::size_t, "dataset.num_classes", dataset.generation.num_classes),
      ANGLSEG_FIELD(std::size_t, "dataset.min_cells", dataset.generation.min_cells),
      ANGLSEG_FIELD(std::size_t, "dataset.max_cells", dataset.generation.max_cells),
      ANGLSEG_FIELD(double, "dataset.view_theta_max", dataset.generation.view_theta_max),
      ANGLSEG_FIELD(double, "dataset.sun_theta_min", dataset.generation.sun_theta_min),
      ANGLSEG_FIELD(double, "dataset.sun_theta_max", dataset.generation.sun_theta_max),
      ANGLSEG_FIELD(double, "dataset.light_intensity", dataset.generation.light_intensity),
      ANGLSEG_FIELD(double, "dataset.ambient", dataset.generation.ambient),
      ANGLSEG_FIELD(double, "dataset.noise_sigma", dataset.generation.noise_sigma),
      ANGLSEG_FIELD(double, "dataset.invalid_fraction", dataset.generation.invalid_fraction),
      ANGLSEG_FIELD(double, "dataset.albedo_jitter", dataset.generation.albedo_jitter),
      ANGLSEG_FIELD(std::size_t, "slic.num_superpixels", slic.num_superpixels),
      ANGLSEG_FIELD(double, "slic.compactness", slic.compactness),
      ANGLSEG_FIELD(std::size_t, "slic.max_iters", slic.max_iters),
      ANGLSEG_FIELD(double, "slic.min_region_frac", slic.min_region_frac),
      ANGLSEG_FIELD(double, "slic.intensity_scale", slic.intensity_scale),
      ANGLSEG_FIELD(std::size_t, "histogram.coarse_bins", histogram.coarse_bins),
      ANGLSEG_FIELD(double, "histogram.coarse_lo", histogram.coarse_lo),
      ANGLSEG_FIELD(double, "histogram.coarse_hi", histogram.coarse_hi),
      ANGLSEG_FIELD(std::size_t, "histogram.fine_bins", histogram.fine_bins),
      ANGLSEG_FIELD(double, "histogram.q_low", histogram.q_low),
      ANGLSEG_FIELD(double, "histogram.q_high", histogram.q_high),
      ANGLSEG_FIELD(std::size_t, "network.width0", network.backbone_widths[0]),
      ANGLSEG_FIELD(std::size_t, "network.width1", network.backbone_widths[1]),
      ANGLSEG_FIELD(std::size_t, "network.width2", network.backbone_widths[2]),
      ANGLSEG_FIELD(std::size_t, "network.width3", network.backbone_widths[3]),
      ANGLSEG_FIELD(std::size_t, "network.pah_channels", network.pah_channels),
      ANGLSEG_FIELD(std::size_t, "network.stack1_channels", network.stack1_channels),
      ANGLSEG_FIELD(std::size_t, "network.stack2_channels", network.stack2_channels),
      ANGLSEG_FIELD(bool, "network.use_histogram", network.use_histogram),
      ANGLSEG_FIELD(bool, "network.use_stack2", network.use_stack2),
      ANGLSEG_FIELD(double, "train.base_lr", train.base_lr),
      ANGLSEG_FIELD(double, "train.momentum", train.momentum),
      ANGLSEG_FIELD(double, "train.weight_decay", train.weight_decay),
      ANGLSEG_FIELD(std::size_t, "train.epochs", train.epochs),
      ANGLSEG_FIELD(std::size_t, "train.batch_size", train.batch_size),
      ANGLSEG_FIELD(double, "train.poly_power", train.poly_power),
      ANGLSEG_FIELD(double, "train.alpha", train.alpha),
      ANGLSEG_FIELD(std::size_t, "train.crop", train.crop),
      ANGLSEG_FIELD(bool, "train.flip_horizontal", train.flip_horizontal),
      ANGLSEG_FIELD(bool, "train.flip_vertical", train.flip_vertical),
      ANGLSEG_FIELD(std::uint64_t, "train.seed", train.seed),
      ANGLSEG_FIELD(std::string, "paths.scenes", paths.scenes),
      ANGLSEG_FIELD(std::string, "paths.features", paths.features),
      ANGLSEG_FIELD(std::string, "paths.output", paths.output),
  };
  return table;
}

#undef ANGLSEG_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

NetworkConfig ExperimentConfig::resolved_network() const {
  NetworkConfig n = network;
  n.num_classes = dataset.generation.num_classes;
  n.histogram_bins = histogram.total_bins();
  return n;
}

SlicConfig ExperimentConfig::resolved_slic(std::size_t height, std::size_t width) const {
  SlicConfig s = slic;
  if (s.num_superpixels == 0) s.num_superpixels = scaled_superpixel_count(height, width);
  return s;
}

std::uint64_t ExperimentConfig::feature_hash() const {
  std::string text;
  for (const auto& f : fields()) {
    if (f.key.starts_with("slic.") || f.key.starts_with("histogram.")) text += f.key + "=" + f.get(*this) + "\n";
  }
  return fnv1a(text);
}

void ExperimentConfig::validate() const {
  try {
    resolved_slic(dataset.generation.height, dataset.generation.width).validate();
    histogram.validate();
    resolved_network().validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (dataset.num_scenes == 0) throw ConfigError("dataset.num_scenes must be positive");
  if (dataset.test_scenes >= dataset.num_scenes) throw ConfigError("dataset.test_scenes must be < dataset.num_scenes");
  if (dataset.generation.num_views == 0) throw ConfigError("dataset.num_views must be positive");
  if (dataset.generation.min_cells == 0 || dataset.generation.min_cells > dataset.generation.max_cells) {
    throw ConfigError("dataset.min_cells must be in [1, max_cells]");
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& origin) {
  ExperimentConfig config;
  std::map<std::string, std::string> kv;
  try {
    kv = parse_key_values(text, origin);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  for (const auto& [key, value] : kv) {
    try {
      find_field(key).set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin.string() + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path), path); }

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto s = f.key.substr(0, f.key.find('.'));
    if (s != section) {
      if (!section.empty()) out += "\n";
      section = s;
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  auto trim = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    return s;
  };
  find_field(trim(assignment.substr(0, eq))).set(config, trim(assignment.substr(eq + 1)));
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  for (const auto& f : fields()) {
    if (f.get(a) != f.get(b)) return false;
  }
  return true;
}

}  // namespace anglseg
