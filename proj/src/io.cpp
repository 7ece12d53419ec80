#include "anglseg/io.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

namespace anglseg {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open for reading");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(path, "write failed");
}

// ---- PGM -------------------------------------------------------------------

std::uint16_t encode_luminance(float value) {
  const double x = std::clamp(static_cast<double>(value), 0.0, kPgmFullScale);
  return static_cast<std::uint16_t>(1 + std::lround(x / kPgmFullScale * 65534.0));
}

float decode_luminance(std::uint16_t code) {
  if (code == 0) return 0.0f;
  return static_cast<float>(static_cast<double>(code - 1) / 65534.0 * kPgmFullScale);
}

std::string encode_pgm16(const PgmImage& image) {
  if (image.pixels.size() != image.height * image.width) {
    throw std::invalid_argument("encode_pgm16: pixel count does not match image size");
  }
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n65535\n";
  out.reserve(out.size() + image.pixels.size() * 2);
  for (auto v : image.pixels) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

PgmImage decode_pgm16(const std::string& bytes, const std::filesystem::path& origin) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const auto start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  auto number = [&](const char* what) {
    const auto t = token();
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
      throw IoError(origin, std::string("malformed PGM header (") + what + ")");
    }
    return v;
  };
  if (token() != "P5") throw IoError(origin, "not a binary PGM (expected P5)");
  PgmImage img;
  img.width = number("width");
  img.height = number("height");
  const auto maxval = number("maxval");
  if (maxval != 65535) throw IoError(origin, "expected 16-bit PGM (maxval 65535), got " + std::to_string(maxval));
  ++pos;  // single whitespace before the raster
  const std::size_t n = img.width * img.height;
  if (bytes.size() < pos + 2 * n) throw IoError(origin, "truncated PGM raster");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto hi = static_cast<unsigned char>(bytes[pos + 2 * i]);
    const auto lo = static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    img.pixels[i] = static_cast<std::uint16_t>((hi << 8) | lo);
  }
  return img;
}

void write_pgm16(const std::filesystem::path& path, const PgmImage& image) { write_file(path, encode_pgm16(image)); }

PgmImage read_pgm16(const std::filesystem::path& path) { return decode_pgm16(read_file(path), path); }

// ---- legend ------------------------------------------------------------------

ColorLegend ColorLegend::make(const std::vector<std::string>& names, std::uint64_t seed) {
  static constexpr Rgb base[] = {
      {230, 25, 75},   {60, 180, 75},  {255, 225, 25}, {0, 130, 200},   {245, 130, 48},
      {145, 30, 180},  {70, 240, 240}, {240, 50, 230}, {210, 245, 60},  {250, 190, 212},
      {0, 128, 128},   {220, 190, 255}, {170, 110, 40}, {255, 250, 200}, {128, 0, 0},
      {170, 255, 195}, {128, 128, 0},  {255, 215, 180}, {0, 0, 128},    {128, 128, 128},
  };
  constexpr std::size_t base_size = std::size(base);
  if (names.size() > 256) throw std::invalid_argument("legend: at most 256 classes");
  std::vector<Rgb> palette(std::begin(base), std::end(base));
  std::set<Rgb> used(palette.begin(), palette.end());
  // extra colors walk the hue circle by the golden angle
  for (std::size_t i = base_size; palette.size() < names.size(); ++i) {
    const double h = std::fmod(static_cast<double>(i) * 137.50776, 360.0) / 60.0;
    const double v = 0.55 + 0.4 * static_cast<double>(i % 3) / 2.0;
    const double x = v * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h)) {
      case 0: r = v, g = x; break;
      case 1: r = x, g = v; break;
      case 2: g = v, b = x; break;
      case 3: g = x, b = v; break;
      case 4: r = x, b = v; break;
      default: r = v, b = x; break;
    }
    Rgb c{static_cast<std::uint8_t>(r * 255), static_cast<std::uint8_t>(g * 255), static_cast<std::uint8_t>(b * 255)};
    if (used.insert(c).second) palette.push_back(c);
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = palette.size() - 1; i > 0; --i) std::swap(palette[i], palette[rng() % (i + 1)]);
  ColorLegend legend;
  legend.names = names;
  legend.colors.assign(palette.begin(), palette.begin() + static_cast<std::ptrdiff_t>(names.size()));
  return legend;
}

std::vector<std::uint8_t> legend_strip(const ColorLegend& legend, std::size_t swatch, std::size_t& height,
                                       std::size_t& width) {
  height = swatch;
  width = swatch * legend.size();
  std::vector<std::uint8_t> rgb(height * width * 3);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const auto& c = legend.colors[x / swatch];
      const bool border = x % swatch == 0 || y == 0 || y + 1 == height;
      for (int ch = 0; ch < 3; ++ch) rgb[(y * width + x) * 3 + ch] = border ? 0 : c[ch];
    }
  }
  return rgb;
}

std::vector<std::uint8_t> colorize(const std::vector<std::int32_t>& labels, const ColorLegend& legend) {
  std::vector<std::uint8_t> rgb(labels.size() * 3);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto id = labels[i];
    if (id < 0 || static_cast<std::size_t>(id) >= legend.size()) {
      throw std::out_of_range("colorize: class id " + std::to_string(id) + " outside legend");
    }
    const auto& c = legend.colors[static_cast<std::size_t>(id)];
    std::copy(c.begin(), c.end(), rgb.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return rgb;
}

std::vector<std::uint8_t> gray_to_rgb(const Image& image) {
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(image.size()) * 3);
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(image.data()[i] / 1.2f, 0.0f, 1.0f) * 255.0f));
    std::fill_n(rgb.begin() + 3 * i, 3, v);
  }
  return rgb;
}

// ---- key = value ----------------------------------------------------------------

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::filesystem::path& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError(origin, "line " + std::to_string(lineno) + ": expected 'key = value'");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw IoError(origin, "line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw IoError(origin, "line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

// ---- scene directories ----------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string view_file(std::size_t j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%03zu.pgm", j);
  return buf;
}

template <typename T>
T parse_number(const std::string& s, const std::filesystem::path& origin, const std::string& what) {
  T v{};
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last || s.empty()) throw IoError(origin, "malformed " + what + " '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    cell.erase(std::remove_if(cell.begin(), cell.end(), [](char c) { return c == ' ' || c == '\r'; }), cell.end());
    out.push_back(cell);
  }
  return out;
}

}  // namespace

void write_scene(const std::filesystem::path& dir, const SceneSpec& spec, const IntensityStack& stack,
                 const ColorLegend& legend) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir, "cannot create directory: " + ec.message());
  if (stack.num_views() != spec.num_views()) throw IoError(dir, "stack and spec disagree on view count");

  for (std::size_t j = 0; j < stack.num_views(); ++j) {
    PgmImage img{stack.height, stack.width, std::vector<std::uint16_t>(stack.num_pixels())};
    for (std::size_t p = 0; p < stack.num_pixels(); ++p) {
      const auto jj = static_cast<Eigen::Index>(j);
      const auto pp = static_cast<Eigen::Index>(p);
      img.pixels[p] = stack.valid(jj, pp) ? encode_luminance(stack.data(jj, pp)) : std::uint16_t{0};
    }
    write_pgm16(dir / view_file(j), img);
  }
  write_label_png(dir / "labels.png", stack.labels, legend.colors);

  std::string angles = "sun," + fmt(spec.sun.theta) + "," + fmt(spec.sun.phi) + "," + fmt(spec.light_intensity) + "\n";
  for (std::size_t j = 0; j < spec.num_views(); ++j) {
    angles += std::to_string(j) + "," + fmt(spec.view_angles[j].theta) + "," + fmt(spec.view_angles[j].phi) + "\n";
  }
  write_file(dir / "angles.csv", angles);

  std::string toml;
  toml += "name = " + dir.filename().string() + "\n";
  toml += "seed = " + std::to_string(spec.seed) + "\n";
  toml += "noise_sigma = " + fmt(spec.noise_sigma) + "\n";
  toml += "num_classes = " + std::to_string(spec.num_classes) + "\n";
  toml += "num_views = " + std::to_string(spec.num_views()) + "\n";
  toml += "height = " + std::to_string(spec.height) + "\n";
  toml += "width = " + std::to_string(spec.width) + "\n";
  toml += "light_intensity = " + fmt(spec.light_intensity) + "\n";
  toml += "ambient = " + fmt(spec.ambient) + "\n";
  toml += "invalid_fraction = " + fmt(spec.invalid_fraction) + "\n";
  write_file(dir / "scene.toml", toml);
}

SceneRecord read_scene(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir, "not a scene directory");
  const auto toml_path = dir / "scene.toml";
  const auto kv = parse_key_values(read_file(toml_path), toml_path);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError(toml_path, "missing key '" + key + "'");
    return it->second;
  };

  SceneRecord rec;
  rec.name = kv.contains("name") ? kv.at("name") : dir.filename().string();
  auto& spec = rec.spec;
  spec.seed = parse_number<std::uint64_t>(get("seed"), toml_path, "seed");
  spec.noise_sigma = parse_number<double>(get("noise_sigma"), toml_path, "noise_sigma");
  spec.num_classes = parse_number<std::size_t>(get("num_classes"), toml_path, "num_classes");
  const auto num_views = parse_number<std::size_t>(get("num_views"), toml_path, "num_views");
  spec.height = parse_number<std::size_t>(get("height"), toml_path, "height");
  spec.width = parse_number<std::size_t>(get("width"), toml_path, "width");
  if (kv.contains("ambient")) spec.ambient = parse_number<double>(kv.at("ambient"), toml_path, "ambient");
  if (kv.contains("invalid_fraction")) {
    spec.invalid_fraction = parse_number<double>(kv.at("invalid_fraction"), toml_path, "invalid_fraction");
  }

  const auto angles_path = dir / "angles.csv";
  std::istringstream angles(read_file(angles_path));
  std::string line;
  if (!std::getline(angles, line)) throw IoError(angles_path, "empty file");
  auto head = split_csv(line);
  if (head.size() != 4 || head[0] != "sun") throw IoError(angles_path, "first row must be 'sun,theta,phi,intensity'");
  try {
    spec.sun = Direction::make(parse_number<double>(head[1], angles_path, "sun theta"),
                               parse_number<double>(head[2], angles_path, "sun phi"));
    spec.light_intensity = parse_number<double>(head[3], angles_path, "light intensity");
    while (std::getline(angles, line)) {
      if (line.empty() || line == "\r") continue;
      auto row = split_csv(line);
      if (row.size() != 3) throw IoError(angles_path, "view rows must be 'index,theta,phi'");
      const auto j = parse_number<std::size_t>(row[0], angles_path, "view index");
      if (j != spec.view_angles.size()) throw IoError(angles_path, "view indices must be consecutive from 0");
      spec.view_angles.push_back(Direction::make(parse_number<double>(row[1], angles_path, "view theta"),
                                                 parse_number<double>(row[2], angles_path, "view phi")));
    }
  } catch (const std::domain_error& e) {
    throw IoError(angles_path, e.what());
  }
  if (spec.view_angles.size() != num_views) {
    throw IoError(angles_path, "lists " + std::to_string(spec.view_angles.size()) + " views, scene.toml says " +
                                   std::to_string(num_views));
  }

  auto& stack = rec.stack;
  stack.height = spec.height;
  stack.width = spec.width;
  const auto pixels = static_cast<Eigen::Index>(stack.num_pixels());
  stack.data.setZero(static_cast<Eigen::Index>(num_views), pixels);
  stack.valid.setConstant(static_cast<Eigen::Index>(num_views), pixels, false);
  for (std::size_t j = 0; j < num_views; ++j) {
    const auto path = dir / view_file(j);
    auto img = read_pgm16(path);
    if (img.height != spec.height || img.width != spec.width) {
      throw IoError(path, "size " + std::to_string(img.width) + "x" + std::to_string(img.height) + " differs from scene " +
                              std::to_string(spec.width) + "x" + std::to_string(spec.height));
    }
    for (Eigen::Index p = 0; p < pixels; ++p) {
      const auto code = img.pixels[static_cast<std::size_t>(p)];
      stack.valid(static_cast<Eigen::Index>(j), p) = code != 0;
      stack.data(static_cast<Eigen::Index>(j), p) = decode_luminance(code);
    }
  }
  if (std::filesystem::exists(dir / view_file(num_views))) {
    throw IoError(dir / view_file(num_views), "more view files than angles.csv rows");
  }
  const auto labels_path = dir / "labels.png";
  stack.labels = read_label_png(labels_path);
  if (static_cast<std::size_t>(stack.labels.rows()) != spec.height ||
      static_cast<std::size_t>(stack.labels.cols()) != spec.width) {
    throw IoError(labels_path, "label map size differs from scene");
  }
  if (stack.labels.size() > 0 && static_cast<std::size_t>(stack.labels.maxCoeff()) >= spec.num_classes) {
    throw IoError(labels_path, "class id " + std::to_string(stack.labels.maxCoeff()) + " >= num_classes");
  }
  stack.recount_valid();
  spec.material_map = stack.labels;
  return rec;
}

// ---- feature cache -------------------------------------------------------------

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string encode_feature_cache(const AngularHistogramFeature& feature) {
  std::string out = "AHIS";
  binary::put_u32(out, kFeatureCacheVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(feature.num_superpixels()));
  binary::put_u32(out, static_cast<std::uint32_t>(feature.bins()));
  binary::put_u32(out, static_cast<std::uint32_t>(feature.height()));
  binary::put_u32(out, static_cast<std::uint32_t>(feature.width()));
  for (Eigen::Index i = 0; i < feature.per_superpixel.size(); ++i) binary::put_f32(out, feature.per_superpixel.data()[i]);
  for (Eigen::Index i = 0; i < feature.ids.size(); ++i) binary::put_u32(out, static_cast<std::uint32_t>(feature.ids.data()[i]));
  return out;
}

AngularHistogramFeature decode_feature_cache(const std::string& bytes, const std::filesystem::path& origin) {
  AngularHistogramFeature f;
  try {
    binary::Reader in(bytes, "feature cache");
    if (in.take(4) != "AHIS") throw IoError(origin, "bad magic (expected AHIS)");
    const auto version = in.u32();
    if (version != kFeatureCacheVersion) throw IoError(origin, "unsupported cache version " + std::to_string(version));
    const auto s = in.u32();
    const auto b = in.u32();
    const auto h = in.u32();
    const auto w = in.u32();
    f.per_superpixel.resize(s, b);
    for (Eigen::Index i = 0; i < f.per_superpixel.size(); ++i) f.per_superpixel.data()[i] = in.f32();
    f.ids.resize(h, w);
    for (Eigen::Index i = 0; i < f.ids.size(); ++i) {
      const auto id = in.u32();
      if (id >= s) throw IoError(origin, "superpixel id " + std::to_string(id) + " >= S=" + std::to_string(s));
      f.ids.data()[i] = static_cast<std::int32_t>(id);
    }
    if (!in.done()) throw IoError(origin, "trailing bytes after id map");
    f.coverage.assign(s, 0);
    f.empty.assign(s, false);
  } catch (const IoError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw IoError(origin, e.what());
  }
  return f;
}

namespace {
std::filesystem::path meta_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".meta";
  return p;
}
}  // namespace

void write_feature_cache(const std::filesystem::path& path, const AngularHistogramFeature& feature,
                         std::uint64_t config_hash) {
  write_file(path, encode_feature_cache(feature));
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  std::string meta = "config_hash = " + std::string(hash) + "\n";
  meta += "fine_lo = " + fmt(feature.fine_range.lo) + "\n";
  meta += "fine_hi = " + fmt(feature.fine_range.hi) + "\n";
  write_file(meta_path(path), meta);
}

std::uint64_t read_feature_cache_hash(const std::filesystem::path& path) {
  const auto meta = meta_path(path);
  if (!std::filesystem::exists(meta)) throw IoError(meta, "missing feature-cache metadata");
  const auto kv = parse_key_values(read_file(meta), meta);
  auto it = kv.find("config_hash");
  if (it == kv.end()) throw IoError(meta, "missing config_hash");
  std::uint64_t h = 0;
  auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), h, 16);
  if (ec != std::errc() || p != it->second.data() + it->second.size()) throw IoError(meta, "malformed config_hash");
  return h;
}

AngularHistogramFeature read_feature_cache(const std::filesystem::path& path, std::uint64_t expected_hash) {
  if (!std::filesystem::exists(path)) throw IoError(path, "feature cache not found");
  const auto stored = read_feature_cache_hash(path);
  if (stored != expected_hash) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "config hash mismatch (cache %016llx, current %016llx); rerun 'features'",
                  static_cast<unsigned long long>(stored), static_cast<unsigned long long>(expected_hash));
    throw IoError(path, buf);
  }
  auto f = decode_feature_cache(read_file(path), path);
  const auto meta = meta_path(path);
  const auto kv = parse_key_values(read_file(meta), meta);
  if (kv.contains("fine_lo")) f.fine_range.lo = parse_number<double>(kv.at("fine_lo"), meta, "fine_lo");
  if (kv.contains("fine_hi")) f.fine_range.hi = parse_number<double>(kv.at("fine_hi"), meta, "fine_hi");
  return f;
}

}  // namespace anglseg
