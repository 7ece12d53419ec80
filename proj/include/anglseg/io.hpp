#pragma once

#include "anglseg/histogram.hpp"
#include "anglseg/scene.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace anglseg {

/// File-format or filesystem failure; the message always names the file.
class IoError : public std::runtime_error {
 public:
  IoError(const std::filesystem::path& path, const std::string& what)
      : std::runtime_error(path.string() + ": " + what), path_(path) {}
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// ---- 16-bit PGM ------------------------------------------------------------

/// Luminance range stored losslessly up to the 16-bit step (1.5 / 65534).
inline constexpr double kPgmFullScale = 1.5;

/// Code 0 marks an invalid sample; valid values map to 1 + round(x / 1.5 * 65534).
std::uint16_t encode_luminance(float value);
float decode_luminance(std::uint16_t code);

struct PgmImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> pixels;  // row-major
};

std::string encode_pgm16(const PgmImage& image);
PgmImage decode_pgm16(const std::string& bytes, const std::filesystem::path& origin);
void write_pgm16(const std::filesystem::path& path, const PgmImage& image);
PgmImage read_pgm16(const std::filesystem::path& path);

// ---- PNG -------------------------------------------------------------------

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit paletted image whose indices are the class ids.
void write_label_png(const std::filesystem::path& path, const LabelMap& labels, const std::vector<Rgb>& palette);
LabelMap read_label_png(const std::filesystem::path& path);

/// Interleaved 8-bit RGB, row-major.
void write_rgb_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
                   const std::vector<std::uint8_t>& rgb);
std::vector<std::uint8_t> read_rgb_png(const std::filesystem::path& path, std::size_t& height, std::size_t& width);

// ---- color legend ------------------------------------------------------------

struct ColorLegend {
  std::vector<Rgb> colors;
  std::vector<std::string> names;

  std::size_t size() const { return colors.size(); }
  /// K distinct colors: a fixed base palette permuted by `seed`.
  static ColorLegend make(const std::vector<std::string>& names, std::uint64_t seed = 0x5EED);
};

/// One swatch per class, `swatch` pixels square, left to right.
std::vector<std::uint8_t> legend_strip(const ColorLegend& legend, std::size_t swatch, std::size_t& height,
                                       std::size_t& width);

std::vector<std::uint8_t> colorize(const std::vector<std::int32_t>& labels, const ColorLegend& legend);
/// Grayscale rendering of a luminance image scaled so that 1.2 maps to 255.
std::vector<std::uint8_t> gray_to_rgb(const Image& image);

// ---- key = value text ----------------------------------------------------------

/// Ordered key/value pairs from "key = value" lines; '#' starts a comment.
/// Duplicate keys and malformed lines raise IoError naming the line.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::filesystem::path& origin);

// ---- scene directories ---------------------------------------------------------

struct SceneRecord {
  std::string name;
  SceneSpec spec;         // material_map/cell_map empty unless freshly generated
  IntensityStack stack;
};

/// view_###.pgm, labels.png, angles.csv, scene.toml.
void write_scene(const std::filesystem::path& dir, const SceneSpec& spec, const IntensityStack& stack,
                 const ColorLegend& legend);
SceneRecord read_scene(const std::filesystem::path& dir);

// ---- feature cache -------------------------------------------------------------

inline constexpr std::uint32_t kFeatureCacheVersion = 1;

std::string encode_feature_cache(const AngularHistogramFeature& feature);
/// Restores rows and ids; coverage/empty/fine_range are not part of the format.
AngularHistogramFeature decode_feature_cache(const std::string& bytes, const std::filesystem::path& origin);

/// Writes the cache and a "<path>.meta" sidecar recording `config_hash`.
void write_feature_cache(const std::filesystem::path& path, const AngularHistogramFeature& feature,
                         std::uint64_t config_hash);
/// Throws IoError when the sidecar hash differs from `expected_hash`.
AngularHistogramFeature read_feature_cache(const std::filesystem::path& path, std::uint64_t expected_hash);
std::uint64_t read_feature_cache_hash(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace anglseg
