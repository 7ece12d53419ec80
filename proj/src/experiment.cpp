#include "anglseg/experiment.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace anglseg {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string scene_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%03zu", index);
  return buf;
}

std::vector<BrdfModel> brdf_table_for(const ExperimentConfig& config) {
  const auto& g = config.dataset.generation;
  return default_brdf_table(g.num_classes, g.light_intensity, g.ambient);
}

ColorLegend legend_for(const ExperimentConfig& config) {
  std::vector<std::string> names;
  for (const auto& m : brdf_table_for(config)) names.push_back(m.name);
  return ColorLegend::make(names);
}

GeneratedScene generate_scene(const ExperimentConfig& config, std::size_t index) {
  GeneratedScene s;
  s.name = scene_name(index);
  s.spec = random_scene_spec(config.dataset.generation, derive_seed(config.seed, index));
  s.stack = render_stack(s.spec, brdf_table_for(config));
  return s;
}

std::vector<GeneratedScene> generate_dataset(const ExperimentConfig& config) {
  std::vector<GeneratedScene> out;
  for (std::size_t i = 0; i < config.dataset.num_scenes; ++i) out.push_back(generate_scene(config, i));
  return out;
}

AngularHistogramFeature compute_features(const IntensityStack& stack, const ExperimentConfig& config) {
  return extract_features(stack, config.resolved_slic(stack.height, stack.width), config.histogram);
}

SceneData prepare_scene(const std::string& name, const IntensityStack& stack, const ExperimentConfig& config) {
  return make_scene_data(name, stack, compute_features(stack, config));
}

std::vector<std::filesystem::path> expand_scene_glob(const std::string& pattern) {
  namespace fs = std::filesystem;
  const fs::path p(pattern);
  std::vector<fs::path> out;
  auto is_scene = [](const fs::path& d) { return fs::is_directory(d) && fs::exists(d / "scene.toml"); };
  const auto leaf = p.filename().string();
  if (leaf.find_first_of("*?[") == std::string::npos) {
    if (is_scene(p)) return {p};
    if (!fs::is_directory(p)) throw IoError(p, "no such scene directory");
    for (const auto& e : fs::directory_iterator(p)) {
      if (is_scene(e.path())) out.push_back(e.path());
    }
  } else {
    const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
    if (!fs::is_directory(parent)) throw IoError(parent, "no such directory");
    for (const auto& e : fs::directory_iterator(parent)) {
      if (fnmatch(leaf.c_str(), e.path().filename().c_str(), 0) == 0 && is_scene(e.path())) out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError(p, "matched no scene directories");
  return out;
}

std::vector<SceneData> load_scene_data(const std::vector<std::filesystem::path>& dirs, const ExperimentConfig& config,
                                       const std::filesystem::path& features_dir) {
  std::vector<SceneData> out;
  for (const auto& dir : dirs) {
    auto rec = read_scene(dir);
    if (rec.spec.num_classes != config.dataset.generation.num_classes) {
      throw IoError(dir / "scene.toml", "num_classes " + std::to_string(rec.spec.num_classes) +
                                            " differs from config dataset.num_classes " +
                                            std::to_string(config.dataset.generation.num_classes));
    }
    if (features_dir.empty()) {
      out.push_back(prepare_scene(rec.name, rec.stack, config));
    } else {
      auto feature = read_feature_cache(features_dir / (rec.name + ".ahis"), config.feature_hash());
      if (feature.height() != rec.stack.height || feature.width() != rec.stack.width) {
        throw IoError(features_dir / (rec.name + ".ahis"), "id map size differs from scene");
      }
      out.push_back(make_scene_data(rec.name, rec.stack, feature));
    }
  }
  return out;
}

// ---- ablation ---------------------------------------------------------------

std::vector<AblationVariant> ablation_variants() {
  return {{"baseline", false, false}, {"+histogram", true, false}, {"+stacking", true, true}};
}

namespace {

template <typename Fn>
double mean_over(const std::vector<AblationRun>& runs, Fn&& fn) {
  if (runs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : runs) total += fn(r);
  return total / static_cast<double>(runs.size());
}

std::string pct(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

}  // namespace

double AblationRow::mean_pix_acc() const {
  return mean_over(runs, [](const AblationRun& r) { return r.report.overall.pix_acc; });
}
double AblationRow::mean_miou() const {
  return mean_over(runs, [](const AblationRun& r) { return r.report.overall.mean_iou; });
}
double AblationRow::mean_fused_pix_acc() const {
  return mean_over(runs, [](const AblationRun& r) { return r.report.fused ? r.report.fused->pix_acc : 0.0; });
}
double AblationRow::mean_fused_miou() const {
  return mean_over(runs, [](const AblationRun& r) { return r.report.fused ? r.report.fused->mean_iou : 0.0; });
}
double AblationRow::mean_best_view_miou() const {
  return mean_over(runs, [](const AblationRun& r) {
    double best = 0.0;
    for (const auto& m : r.report.per_view) best = std::max(best, m.mean_iou);
    return best;
  });
}
double AblationRow::mean_view_miou() const {
  return mean_over(runs, [](const AblationRun& r) {
    if (r.report.per_view.empty()) return 0.0;
    double total = 0.0;
    for (const auto& m : r.report.per_view) total += m.mean_iou;
    return total / static_cast<double>(r.report.per_view.size());
  });
}

AblationTable run_ablation(const std::vector<SceneData>& train_scenes, const std::vector<SceneData>& test_scenes,
                           const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                           const AblationProgress& progress) {
  if (seeds.empty()) throw std::invalid_argument("ablation: no seeds");
  AblationTable table;
  for (const auto& variant : ablation_variants()) {
    AblationRow row{variant, {}};
    for (auto seed : seeds) {
      const auto start = std::chrono::steady_clock::now();
      auto net = config.resolved_network();
      net.use_histogram = variant.use_histogram;
      net.use_stack2 = variant.use_stack2;
      AngLNet model(net, seed);
      auto train_config = config.train;
      train_config.seed = seed;
      train(model, train_scenes, train_config);
      AblationRun run;
      run.seed = seed;
      run.report = evaluate(model, test_scenes, true, true);
      run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (progress) progress(variant, run);
      row.runs.push_back(std::move(run));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string format_ablation_table(const AblationTable& table) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Method", "Angular Histogram", "Stacking Network"};
  const std::size_t nseeds = table.rows.empty() ? 0 : table.rows.front().runs.size();
  for (std::size_t s = 0; s < nseeds; ++s) {
    header.push_back("seed " + std::to_string(table.rows.front().runs[s].seed));
  }
  header.push_back("mean pixAcc / mIoU");
  header.push_back("fused pixAcc / mIoU");
  cells.push_back(header);
  for (const auto& row : table.rows) {
    std::vector<std::string> line{row.variant.name, row.variant.use_histogram ? "yes" : "-",
                                  row.variant.use_stack2 ? "yes" : "-"};
    for (const auto& run : row.runs) line.push_back(format_percent_pair(run.report.overall));
    line.push_back(pct(row.mean_pix_acc()) + " / " + pct(row.mean_miou()));
    line.push_back(pct(row.mean_fused_pix_acc()) + " / " + pct(row.mean_fused_miou()));
    cells.push_back(line);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream os;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      os << (c ? "  " : "") << cells[r][c] << std::string(width[c] - cells[r][c].size(), ' ');
    }
    os << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
  return os.str();
}

std::string ablation_csv(const AblationTable& table) {
  std::ostringstream os;
  os << "variant,seed,pix_acc,mean_iou,fused_pix_acc,fused_mean_iou,seconds\n";
  for (const auto& row : table.rows) {
    for (const auto& run : row.runs) {
      os << row.variant.name << ',' << run.seed << ',' << run.report.overall.pix_acc << ','
         << run.report.overall.mean_iou << ',' << (run.report.fused ? run.report.fused->pix_acc : 0.0) << ','
         << (run.report.fused ? run.report.fused->mean_iou : 0.0) << ',' << run.seconds << '\n';
    }
  }
  return os.str();
}

}  // namespace anglseg
