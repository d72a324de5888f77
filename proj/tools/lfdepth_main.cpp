#include <CLI11.hpp>
#include <fmt/format.h>

#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "lfdepth/error.hpp"
#include "lfdepth/pfm.hpp"
#include "lfdepth/pipeline.hpp"
#include "lfdepth/plot.hpp"
#include "lfdepth/png_io.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// Command-line options that map onto config keys; applied after --config.
class Overrides {
 public:
  void value(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = storage_.emplace_back();
    entries_.push_back({app->add_option(flag, slot, help), key, &slot, ""});
  }
  void flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& value,
            const std::string& help) {
    entries_.push_back({app->add_flag(flag, help), key, nullptr, value});
  }
  void apply(lfd::PipelineConfig& cfg, const std::vector<std::string>& sets) const {
    for (const auto& e : entries_) {
      if (e.option->count() == 0) continue;
      lfd::apply_setting(cfg, e.key, e.slot ? *e.slot : e.fixed, "command line");
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw lfd::ValidationError(fmt::format("--set expects key=value, got '{}'", s));
      lfd::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1), "--set");
    }
  }

 private:
  struct Entry {
    CLI::Option* option;
    std::string key;
    std::string* slot;
    std::string fixed;
  };
  std::deque<std::string> storage_;
  std::vector<Entry> entries_;
};

void add_scene_options(Overrides& o, CLI::App* app) {
  o.value(app, "--scene", "scene_dir", "Scene directory with the view PNGs and parameters.cfg");
  o.value(app, "--out", "output_dir", "Output directory");
  o.value(app, "--view-pattern", "view_pattern", "View file name pattern, fmt syntax on index v*U+u");
  o.value(app, "--camera-config", "camera_config", "Camera config file (default: scene parameters.cfg)");
}

void add_align_options(Overrides& o, CLI::App* app) {
  o.value(app, "--threshold", "align.threshold", "Mean reprojection error to stop at, px");
  o.value(app, "--align-max-iter", "align.max_iter", "Outer iterations of the alignment solver");
  o.flag(app, "--identity", "align.identity", "true", "Keep identity homographies");
  o.value(app, "--corr-pattern", "align.corr_pattern", "Correspondence file pattern in the scene directory");
}

void add_epi_options(Overrides& o, CLI::App* app) {
  o.value(app, "--sigma-inner", "epi.sigma_inner", "Derivative smoothing sigma");
  o.value(app, "--sigma-outer", "epi.sigma_outer", "Tensor integration sigma");
  o.value(app, "--coherence-min", "epi.coherence_min", "Coherence needed for a valid estimate");
  o.value(app, "--orientation", "epi.orientation", "both, horizontal or vertical");
}

void add_tv_options(Overrides& o, CLI::App* app) {
  o.value(app, "--lambda", "tv.lambda", "PPXA step");
  o.value(app, "--max-iter", "tv.max_iter", "PPXA iterations");
  o.value(app, "--relax", "tv.relax", "Relaxation factor in (0, 2)");
  o.value(app, "--stop-tol", "tv.stop_tol", "Relative residual for early stopping (0 disables)");
  o.value(app, "--nu", "tv.nu", "Fidelity variance scale");
  o.value(app, "--g0", "tv.g0", "Constraint bound where the guide is flat");
  o.value(app, "--beta", "tv.beta", "Edge weight contrast sensitivity");
  o.value(app, "--alpha", "tv.alpha", "Constraint norm: 2 or inf");
}

void add_eval_options(Overrides& o, CLI::App* app) {
  o.value(app, "--gt", "eval.gt", "Ground-truth disparity PFM");
  o.value(app, "--mask", "eval.mask", "Evaluation mask PNG (nonzero = evaluated)");
  o.value(app, "--tau", "eval.tau", "BadPix threshold");
}

void print_artifacts(const lfd::ArtifactList& files, bool json) {
  if (json) {
    Json j = Json::object();
    for (const auto& [name, path] : files) j[name] = path.string();
    std::cout << Json{{"artifacts", j}}.dump(2) << "\n";
  } else {
    for (const auto& [name, path] : files) std::cout << name << ": " << path.string() << "\n";
  }
}

fs::path require_out(const lfd::PipelineConfig& cfg) {
  if (cfg.output_dir.empty()) throw lfd::ValidationError("--out is required");
  fs::create_directories(cfg.output_dir);
  return cfg.output_dir;
}

void require_scene(const lfd::PipelineConfig& cfg) {
  if (cfg.scene_dir.empty()) throw lfd::ValidationError("--scene is required");
}

int run(int argc, char** argv) {
  CLI::App app{"Light-field depth estimation with EPI structure tensors and TV refinement"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = -1;
  bool json = false;
  std::string config_file;
  std::vector<std::string> sets;
  app.add_option("--threads", threads, "Worker threads (0: all cores); results do not depend on it");
  app.add_flag("--json", json, "Machine-readable output on stdout");
  app.add_option("--config", config_file, "Flat key = value config file; flags override it");
  app.add_option("--set", sets, "Extra key=value settings, applied last");

  Overrides o;
  auto* pipeline = app.add_subcommand("pipeline", "Align, estimate, refine and evaluate a scene");
  add_scene_options(o, pipeline);
  o.flag(pipeline, "--align", "align", "true", "Enable camera-array alignment");
  add_align_options(o, pipeline);
  add_epi_options(o, pipeline);
  add_tv_options(o, pipeline);
  add_eval_options(o, pipeline);

  auto* align = app.add_subcommand("align", "Estimate per-view homographies and write the aligned views");
  add_scene_options(o, align);
  add_align_options(o, align);

  auto* depth = app.add_subcommand("depth", "Initial structure-tensor disparity");
  add_scene_options(o, depth);
  add_epi_options(o, depth);

  std::string initial_path, confidence_path;
  auto* refine = app.add_subcommand("refine", "TV refinement of a saved initial disparity");
  add_scene_options(o, refine);
  add_tv_options(o, refine);
  refine->add_option("--initial", initial_path, "Initial disparity PFM (default: <out>/disparity_initial.pfm)");
  refine->add_option("--confidence", confidence_path, "Confidence PFM (default: <out>/confidence.pfm)");

  std::vector<std::string> inputs, labels;
  auto* eval = app.add_subcommand("eval", "Benchmark metrics of one or more disparity maps");
  eval->add_option("inputs", inputs, "Disparity PFMs")->required();
  eval->add_option("--label", labels, "Row label per input");
  o.value(eval, "--out", "output_dir", "Directory for metric CSVs and visualizations");
  add_eval_options(o, eval);

  std::string trace_path, plot_out;
  int x_range = 300;
  auto* plot = app.add_subcommand("plot", "Convergence plot of a trace CSV");
  plot->add_option("--trace", trace_path, "trace.csv written by refine or pipeline")->required();
  plot->add_option("--out", plot_out, "Output PNG")->required();
  plot->add_option("--x-range", x_range, "Iterations on the x axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(lfd::ExitCode::kValidation);
  }

  lfd::PipelineConfig cfg;
  if (!config_file.empty()) lfd::apply_settings(cfg, lfd::KeyValueFile::load(config_file));
  if (threads >= 0) cfg.threads = threads;
  o.apply(cfg, sets);
  cfg.validate();

  if (pipeline->parsed()) {
    require_scene(cfg);
    require_out(cfg);
    const lfd::RunReport report = lfd::run_pipeline(cfg);
    if (json) {
      std::cout << lfd::report_json(report);
    } else {
      for (const auto& s : report.stages) std::cout << fmt::format("{:<9} {:8.3f} s\n", s.name, s.seconds);
      std::cout << fmt::format("{:<9} {:8.3f} s\n", "total", report.total_seconds);
      if (report.metrics_refined) {
        std::cout << lfd::metrics_table({{"initial", *report.metrics_initial}, {"refined", *report.metrics_refined}});
      }
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    }
    return 0;
  }

  if (align->parsed()) {
    require_scene(cfg);
    const fs::path out = require_out(cfg);
    std::vector<std::string> warnings;
    const lfd::LoadedLightField scene = lfd::load_scene(cfg);
    const lfd::ArrayAlignment a = lfd::run_alignment(scene.lightfield, cfg, &warnings);
    lfd::ArtifactList files = lfd::write_alignment_artifacts(a, out);
    const fs::path views = out / "aligned";
    fs::create_directories(views);
    for (int v = 0; v < a.aligned.views_v(); ++v) {
      for (int u = 0; u < a.aligned.views_u(); ++u) {
        const int index = v * a.aligned.views_u() + u;
        const fs::path path = views / fmt::format(fmt::runtime(cfg.layout.pattern), index);
        lfd::write_png(path, lfd::to_gray8(a.aligned.view(u, v)));
      }
    }
    const fs::path cfg_src = cfg.layout.config_override.value_or(cfg.scene_dir / cfg.layout.config_name);
    if (fs::exists(cfg_src)) fs::copy_file(cfg_src, views / cfg.layout.config_name, fs::copy_options::overwrite_existing);
    files.emplace_back("aligned_views", views);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    if (!a.converged) std::cerr << "warning: some views stopped at the iteration limit; best states kept\n";
    if (!json) std::cout << fmt::format("mean reprojection error {:.4f} px\n", a.mean_error);
    print_artifacts(files, json);
    return 0;
  }

  if (depth->parsed()) {
    require_scene(cfg);
    const fs::path out = require_out(cfg);
    const lfd::LoadedLightField scene = lfd::load_scene(cfg);
    const lfd::DisparityField initial = lfd::run_depth(scene.lightfield, scene.config, cfg);
    print_artifacts(lfd::write_depth_artifacts(initial, scene.config, out), json);
    return 0;
  }

  if (refine->parsed()) {
    require_scene(cfg);
    const fs::path out = require_out(cfg);
    const lfd::LoadedLightField scene = lfd::load_scene(cfg);
    lfd::DisparityField initial =
        lfd::read_pfm(initial_path.empty() ? out / "disparity_initial.pfm" : fs::path(initial_path));
    const lfd::Grid2D<float> confidence =
        lfd::read_pfm_grid(confidence_path.empty() ? out / "confidence.pfm" : fs::path(confidence_path));
    if (!confidence.same_shape(initial.confidence)) throw lfd::ValidationError("confidence and disparity differ in size");
    initial.confidence = confidence;
    const lfd::RefineResult refined = lfd::run_refine(initial, lfd::center_guide(scene.lightfield, scene.config), cfg);
    if (!json) {
      std::cout << fmt::format("{} iterations, final residual {:.3e}\n", refined.trace.iterations_run,
                               refined.trace.residual_norms.empty() ? 0.0 : refined.trace.residual_norms.back());
    }
    print_artifacts(lfd::write_refine_artifacts(refined, scene.config, out), json);
    return 0;
  }

  if (eval->parsed()) {
    if (!cfg.gt_path) throw lfd::ValidationError("--gt is required");
    if (!labels.empty() && labels.size() != inputs.size()) {
      throw lfd::ValidationError(fmt::format("{} labels for {} inputs", labels.size(), inputs.size()));
    }
    const lfd::Grid2D<double> gt = lfd::to_double(lfd::read_pfm_grid(*cfg.gt_path));
    const lfd::EvalMask mask = lfd::load_mask(cfg.mask_path, gt.width(), gt.height());
    std::vector<std::pair<std::string, lfd::Grid2D<double>>> runs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const std::string label = labels.empty() ? fs::path(inputs[i]).stem().string() : labels[i];
      runs.emplace_back(label, lfd::to_double(lfd::read_pfm_grid(inputs[i])));
    }
    const lfd::ComparisonReport cmp = lfd::compare_runs(runs, gt, mask, cfg.tau);
    lfd::ArtifactList files;
    if (!cfg.output_dir.empty()) {
      const fs::path out = require_out(cfg);
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto more = lfd::write_eval_artifacts(fmt::format("{}", i), runs[i].second, gt, mask, cmp.rows[i].second,
                                                    cfg.tau, out);
        files.insert(files.end(), more.begin(), more.end());
        if (!cmp.median_maps.empty()) {
          const fs::path p = out / fmt::format("median_error_{}.png", i);
          lfd::write_png(p, cmp.median_maps[i].image);
          files.emplace_back(fmt::format("median_error_{}", i), p);
        }
      }
      lfd::write_png(out / "difficulty.png", cmp.heatmap.image);
      files.emplace_back("difficulty", out / "difficulty.png");
      std::ofstream(out / "comparison.txt") << cmp.table;
      files.emplace_back("comparison", out / "comparison.txt");
    }
    if (json) {
      Json rows = Json::array();
      for (const auto& [label, m] : cmp.rows) {
        rows.push_back({{"label", label},
                        {"badpix", m.badpix},
                        {"badpix_0.03", m.badpix_003},
                        {"mse100", m.mse100},
                        {"q25", m.q25},
                        {"mask_pixels", m.mask_pixels}});
      }
      Json artifacts = Json::object();
      for (const auto& [name, path] : files) artifacts[name] = path.string();
      std::cout << Json{{"tau", cfg.tau}, {"rows", rows}, {"artifacts", artifacts}}.dump(2) << "\n";
    } else {
      std::cout << cmp.table;
      for (const auto& [name, path] : files) std::cout << name << ": " << path.string() << "\n";
    }
    return 0;
  }

  if (plot->parsed()) {
    lfd::PlotOptions options;
    options.x_range = x_range;
    const auto residuals = lfd::read_trace_residuals(trace_path);
    lfd::write_png(plot_out, lfd::convergence_plot(residuals, options).image);
    print_artifacts({{"convergence_png", plot_out}}, json);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const lfd::Error& e) {
    std::cerr << "lfdepth: error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "lfdepth: error: " << e.what() << "\n";
    return static_cast<int>(lfd::ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "lfdepth: error: " << e.what() << "\n";
    return static_cast<int>(lfd::ExitCode::kNumerical);
  }
}
