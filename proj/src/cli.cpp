#include "anglseg/cli.hpp"

#include "anglseg/checkpoint.hpp"
#include "anglseg/experiment.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <optional>

namespace anglseg {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
  std::string scenes;
  std::string features;
  std::string checkpoint;
  std::string views = "all";
  bool no_histogram = false;
  bool no_stack2 = false;
  bool fuse = false;
  bool panel = false;
  std::size_t seeds = 3;
};

ExperimentConfig resolve_config(const Options& o, const fs::path& fallback = {}) {
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    c = load_config(o.config_path);
  } else if (!fallback.empty() && fs::exists(fallback)) {
    c = load_config(fallback);
  }
  for (const auto& s : o.overrides) apply_override(c, s);
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = *o.seed;
  }
  if (o.no_histogram) c.network.use_histogram = false;
  if (o.no_stack2) c.network.use_stack2 = false;
  c.validate();
  return c;
}

std::string file_name(const char* pattern, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, index);
  return buf;
}

/// Explicit --scenes wins; otherwise the configured scene root split into
/// training (leading scenes) and test (last dataset.test_scenes).
std::vector<fs::path> select_scenes(const Options& o, const ExperimentConfig& c, bool training_split) {
  if (!o.scenes.empty()) return expand_scene_glob(o.scenes);
  auto all = expand_scene_glob(c.paths.scenes);
  const std::size_t test = std::min(c.dataset.test_scenes, all.size() - 1);
  if (training_split) return {all.begin(), all.end() - static_cast<std::ptrdiff_t>(test)};
  return {all.end() - static_cast<std::ptrdiff_t>(test), all.end()};
}

std::optional<std::size_t> parse_view(const std::string& views) {
  if (views == "all") return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoul(views, &used);
    if (used == views.size()) return v;
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError("--views", "expected 'all' or a view index, got '" + views + "'");
}

AngLNet load_model(const ExperimentConfig& c, const fs::path& checkpoint) {
  if (checkpoint.empty()) throw CheckpointError("--checkpoint is required");
  if (!fs::exists(checkpoint)) throw CheckpointError("checkpoint not found: " + checkpoint.string());
  AngLNet model(c.resolved_network(), c.seed);
  model.load_state(read_checkpoint(checkpoint));
  return model;
}

void restrict_view(std::vector<SceneData>& scenes, std::optional<std::size_t> view) {
  if (!view) return;
  for (auto& s : scenes) {
    if (*view >= s.num_views()) {
      throw std::out_of_range("view " + std::to_string(*view) + " out of range for scene '" + s.name + "'");
    }
    s.views = {s.views[*view]};
  }
}

// ---- commands ----------------------------------------------------------------

void cmd_generate(const Options& o, std::ostream& out) {
  const auto c = resolve_config(o);
  const fs::path root = o.out.empty() ? fs::path(c.paths.scenes) : fs::path(o.out);
  const auto legend = legend_for(c);
  for (std::size_t i = 0; i < c.dataset.num_scenes; ++i) {
    const auto scene = generate_scene(c, i);
    write_scene(root / scene.name, scene.spec, scene.stack, legend);
    std::vector<std::size_t> counts(c.dataset.generation.num_classes, 0);
    for (Eigen::Index p = 0; p < scene.stack.labels.size(); ++p) ++counts[static_cast<std::size_t>(scene.stack.labels.data()[p])];
    out << scene.name << ':';
    for (std::size_t k = 0; k < counts.size(); ++k) out << ' ' << k << '=' << counts[k];
    out << " total=" << scene.stack.labels.size() << '\n';
  }
  std::string legend_csv = "class_id,name,r,g,b\n";
  for (std::size_t k = 0; k < legend.size(); ++k) {
    legend_csv += std::to_string(k) + "," + legend.names[k] + "," + std::to_string(legend.colors[k][0]) + "," +
                  std::to_string(legend.colors[k][1]) + "," + std::to_string(legend.colors[k][2]) + "\n";
  }
  write_file(root / "legend.csv", legend_csv);
}

void cmd_features(const Options& o, std::ostream& out) {
  const auto c = resolve_config(o);
  const fs::path root = o.out.empty() ? fs::path(c.paths.features) : fs::path(o.out);
  fs::create_directories(root);
  const auto dirs = o.scenes.empty() ? expand_scene_glob(c.paths.scenes) : expand_scene_glob(o.scenes);
  const auto hash = c.feature_hash();
  for (const auto& dir : dirs) {
    const auto rec = read_scene(dir);
    const auto feature = compute_features(rec.stack, c);
    write_feature_cache(root / (rec.name + ".ahis"), feature, hash);
    const auto empty = std::count(feature.empty.begin(), feature.empty.end(), true);
    out << rec.name << ": superpixels=" << feature.num_superpixels() << " bins=" << feature.bins()
        << " empty=" << empty << '\n';
  }
}

void cmd_train(const Options& o, std::ostream& out) {
  const auto c = resolve_config(o);
  const fs::path root = o.out.empty() ? fs::path(c.paths.output) : fs::path(o.out);
  const auto scenes = load_scene_data(select_scenes(o, c, true), c, o.features);
  fs::create_directories(root);
  write_file(root / "config.txt", serialize_config(c));
  AngLNet model(c.resolved_network(), c.seed);
  TrainOutput output;
  output.directory = root;
  output.on_epoch = [&out](const EpochStats& s) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "epoch %zu: loss %.5f lr %.6f", s.epoch, s.mean_loss, s.final_lr);
    out << buf << std::endl;
  };
  train(model, scenes, c.train, output);
  write_checkpoint(root / "model.angw", model.state());
  out << "checkpoint: " << (root / "model.angw").string() << '\n';
}

void cmd_eval(const Options& o, std::ostream& out) {
  const fs::path checkpoint = o.checkpoint;
  const auto c = resolve_config(o, checkpoint.empty() ? fs::path() : checkpoint.parent_path() / "config.txt");
  auto model = load_model(c, checkpoint);
  auto scenes = load_scene_data(select_scenes(o, c, false), c, o.features);
  const auto view = parse_view(o.views);
  restrict_view(scenes, view);
  const auto report = evaluate(model, scenes, !view.has_value(), o.fuse);
  out << "pixAcc / mIoU: " << format_percent_pair(report.overall) << '\n';
  for (std::size_t j = 0; j < report.per_view.size(); ++j) {
    out << "view " << j << ": " << format_percent_pair(report.per_view[j]) << '\n';
  }
  if (report.fused) out << "fused: " << format_percent_pair(*report.fused) << '\n';
}

void cmd_ablate(const Options& o, std::ostream& out) {
  const auto c = resolve_config(o);
  std::vector<SceneData> train_scenes, test_scenes;
  if (o.scenes.empty() && !fs::exists(c.paths.scenes)) {
    const auto scenes = generate_dataset(c);
    const std::size_t ntrain = scenes.size() - c.dataset.test_scenes;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      (i < ntrain ? train_scenes : test_scenes).push_back(prepare_scene(scenes[i].name, scenes[i].stack, c));
    }
  } else {
    train_scenes = load_scene_data(select_scenes(o, c, true), c, o.features);
    test_scenes = load_scene_data(select_scenes(o, c, false), c, o.features);
  }
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < o.seeds; ++s) seeds.push_back(c.seed + s);
  const auto table = run_ablation(train_scenes, test_scenes, c, seeds, [&out](const AblationVariant& v, const AblationRun& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s seed %llu: %s (%.1fs)", v.name.c_str(), static_cast<unsigned long long>(r.seed),
                  format_percent_pair(r.report.overall).c_str(), r.seconds);
    out << buf << std::endl;
  });
  const auto text = format_ablation_table(table);
  out << text;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "ablation.txt", text);
    write_file(fs::path(o.out) / "ablation.csv", ablation_csv(table));
  }
}

void cmd_segment(const Options& o, std::ostream& out) {
  const fs::path checkpoint = o.checkpoint;
  const auto c = resolve_config(o, checkpoint.empty() ? fs::path() : checkpoint.parent_path() / "config.txt");
  auto model = load_model(c, checkpoint);
  if (o.scenes.empty()) throw CLI::RequiredError("--scenes");
  const auto scenes = load_scene_data(expand_scene_glob(o.scenes), c, o.features);
  const fs::path root = o.out.empty() ? fs::path(c.paths.output) / "segment" : fs::path(o.out);
  fs::create_directories(root);
  const auto legend = legend_for(c);
  const auto view = parse_view(o.views);

  std::size_t lh = 0, lw = 0;
  const auto strip = legend_strip(legend, 16, lh, lw);
  write_rgb_png(root / "legend.png", lh, lw, strip);

  std::size_t written = 0;
  for (const auto& scene : scenes) {
    std::vector<Eigen::ArrayXXf> probs;
    std::vector<std::int32_t> first_pred;
    for (std::size_t j = 0; j < scene.num_views(); ++j) {
      if (view && j != *view) continue;
      const auto logits = predict_logits(model, scene, j);
      const auto pred = argmax_columns(logits);
      write_rgb_png(root / (scene.name + file_name("_view_%03zu.png", j)), scene.height, scene.width, colorize(pred, legend));
      ++written;
      probs.push_back(softmax_columns(logits));
      if (first_pred.empty()) first_pred = pred;
    }
    if (view && probs.empty()) throw std::out_of_range("view " + o.views + " out of range for scene '" + scene.name + "'");
    const auto fused = fuse_views(probs);
    write_rgb_png(root / (scene.name + "_fused.png"), scene.height, scene.width, colorize(fused, legend));
    ++written;
    if (o.panel) {
      // image | ground truth | fused prediction, separated by 2 white columns
      const std::size_t gap = 2, w = scene.width, h = scene.height, pw = 3 * w + 2 * gap;
      std::vector<std::uint8_t> panel(h * pw * 3, 255);
      const auto img = gray_to_rgb(scene.views[view.value_or(0)]);
      const auto gt = colorize(scene.labels, legend);
      const auto pr = colorize(fused, legend);
      const std::vector<const std::vector<std::uint8_t>*> tiles{&img, &gt, &pr};
      for (std::size_t t = 0; t < tiles.size(); ++t) {
        for (std::size_t r = 0; r < h; ++r) {
          std::copy_n(tiles[t]->begin() + static_cast<std::ptrdiff_t>(r * w * 3), w * 3,
                      panel.begin() + static_cast<std::ptrdiff_t>((r * pw + t * (w + gap)) * 3));
        }
      }
      write_rgb_png(root / (scene.name + "_panel.png"), h, pw, panel);
    }
  }
  out << "wrote " << written << " segmentation maps to " << root.string() << '\n';
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view material segmentation with angular luminance histograms", "anglseg"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "Experiment config (section.key = value)");
  app.add_option("--seed", o.seed, "Global seed");
  app.add_option("--set", o.overrides, "Config override section.key=value (repeatable)");

  auto* generate = app.add_subcommand("generate", "Render synthetic scene directories");
  auto* features = app.add_subcommand("features", "Extract angular-histogram feature caches");
  auto* train_cmd = app.add_subcommand("train", "Train a segmentation network");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* ablate = app.add_subcommand("ablate", "Train and compare baseline, +histogram, +stacking");
  auto* segment = app.add_subcommand("segment", "Write color-mapped segmentation PNGs");

  for (auto* sub : {generate, features, train_cmd, eval_cmd, ablate, segment}) {
    sub->add_option("--out", o.out, "Output directory");
  }
  for (auto* sub : {features, train_cmd, eval_cmd, ablate, segment}) {
    sub->add_option("--scenes", o.scenes, "Scene directory glob");
  }
  for (auto* sub : {train_cmd, eval_cmd, ablate, segment}) {
    sub->add_option("--features", o.features, "Feature-cache directory (default: extract on the fly)");
    sub->add_flag("--no-histogram", o.no_histogram, "Drop the angular-histogram branch");
    sub->add_flag("--no-stack2", o.no_stack2, "Drop the refinement stack");
  }
  for (auto* sub : {eval_cmd, segment}) {
    sub->add_option("--checkpoint", o.checkpoint, "Model checkpoint (.angw)");
    sub->add_option("--views", o.views, "'all' or a single view index");
    sub->add_flag("--fuse", o.fuse, "Multi-view voting");
  }
  segment->add_flag("--panel", o.panel, "Also write image | ground truth | prediction panels");
  ablate->add_option("--seeds", o.seeds, "Number of seeds")->check(CLI::PositiveNumber);

  std::vector<std::string> argv_store{"anglseg"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (generate->parsed()) cmd_generate(o, out);
    if (features->parsed()) cmd_features(o, out);
    if (train_cmd->parsed()) cmd_train(o, out);
    if (eval_cmd->parsed()) cmd_eval(o, out);
    if (ablate->parsed()) cmd_ablate(o, out);
    if (segment->parsed()) cmd_segment(o, out);
  } catch (const CLI::Error& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << "error: config: " << one_line(e.what()) << '\n';
    return 1;
  } catch (const IoError& e) {
    err << "error: io: " << one_line(e.what()) << '\n';
    return 1;
  } catch (const CheckpointError& e) {
    err << "error: checkpoint: " << one_line(e.what()) << '\n';
    return 1;
  } catch (const TrainingDiverged& e) {
    err << "error: diverged: " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: runtime: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}

}  // namespace anglseg
