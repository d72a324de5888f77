#include "lfdepth/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>

#include "lfdepth/error.hpp"
#include "lfdepth/parallel.hpp"
#include "lfdepth/pfm.hpp"
#include "lfdepth/plot.hpp"
#include "lfdepth/png_io.hpp"

namespace lfd {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string num(double v) { return fmt::format("{}", v); }

std::string orientation_name(EpiOrientations o) {
  switch (o) {
    case EpiOrientations::kHorizontal: return "horizontal";
    case EpiOrientations::kVertical: return "vertical";
    case EpiOrientations::kBoth: break;
  }
  return "both";
}

int positive_int(const std::string& value, const std::string& key, const std::string& origin, long lo = 1) {
  const long v = parse_int(value, key, origin);
  if (v < lo || v > 1000000000L) throw ValidationError(fmt::format("{}: {} = {} is out of range", origin, key, value));
  return static_cast<int>(v);
}

// Re-throws e as the same error kind with the stage name in front.
[[noreturn]] void rethrow_in_stage(const Error& e, const std::string& stage) {
  const std::string msg = fmt::format("stage '{}': {}", stage, e.what());
  switch (e.code()) {
    case ExitCode::kIo: throw IoError(msg);
    case ExitCode::kNumerical: throw NumericalError(msg);
    default: throw ValidationError(msg);
  }
}

Grid2D<std::uint8_t> disparity_image(const Grid2D<float>& d, const CameraConfig& camera) {
  Grid2D<float> scaled(d.width(), d.height());
  const double span = camera.disp_max - camera.disp_min;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = d.values()[i];
    scaled.values()[i] = std::isfinite(v) && span > 0.0 ? static_cast<float>((v - camera.disp_min) / span) : 0.0f;
  }
  return to_gray8(scaled);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("write failed: {}", path.string()));
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json metrics_json(const MetricsReport& m) {
  Json j;
  j["badpix"] = m.badpix;
  j["badpix_0.03"] = m.badpix_003;
  j["mse100"] = m.mse100;
  j["q25"] = m.q25;
  j["mask_pixels"] = m.mask_pixels;
  return j;
}

}  // namespace

void PipelineConfig::validate() const {
  align_params.validate();
  epi.validate();
  tv.validate();
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError(fmt::format("eval.tau must be positive, got {}", tau));
  for (std::size_t i = 0; i < curve_taus.size(); ++i) {
    if (!(curve_taus[i] > 0.0) || (i > 0 && curve_taus[i] <= curve_taus[i - 1])) {
      throw ValidationError("eval.curve_taus must be positive and strictly ascending");
    }
  }
  if (threads < 0) throw ValidationError("threads must be >= 0");
  if (match_params.window_radius < 1 || match_params.search_radius < 0 || match_params.max_corners < 1 ||
      !(match_params.min_ncc <= 1.0)) {
    throw ValidationError("match parameters out of range");
  }
}

void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value, const std::string& origin) {
  auto dbl = [&] { return parse_double(value, key, origin); };
  auto boolean = [&] { return parse_bool(value, key, origin); };
  if (key == "scene_dir") cfg.scene_dir = value;
  else if (key == "output_dir") cfg.output_dir = value;
  else if (key == "view_pattern") cfg.layout.pattern = value;
  else if (key == "views_u") cfg.layout.views_u = positive_int(value, key, origin, 0);
  else if (key == "views_v") cfg.layout.views_v = positive_int(value, key, origin, 0);
  else if (key == "camera_config") cfg.layout.config_override = fs::path(value);
  else if (key == "align") cfg.align = boolean();
  else if (key == "align.threshold") cfg.align_params.threshold = dbl();
  else if (key == "align.max_iter") cfg.align_params.max_iter = positive_int(value, key, origin);
  else if (key == "align.identity") cfg.align_params.identity = boolean();
  else if (key == "align.corr_pattern") cfg.corr_pattern = value;
  else if (key == "match.max_corners") cfg.match_params.max_corners = positive_int(value, key, origin);
  else if (key == "match.window_radius") cfg.match_params.window_radius = positive_int(value, key, origin);
  else if (key == "match.search_radius") cfg.match_params.search_radius = positive_int(value, key, origin, 0);
  else if (key == "match.min_ncc") cfg.match_params.min_ncc = dbl();
  else if (key == "epi.sigma_inner") cfg.epi.sigma_inner = dbl();
  else if (key == "epi.sigma_outer") cfg.epi.sigma_outer = dbl();
  else if (key == "epi.coherence_min") cfg.epi.coherence_min = dbl();
  else if (key == "epi.orientation") {
    if (value == "both") cfg.epi.orientation = EpiOrientations::kBoth;
    else if (value == "horizontal") cfg.epi.orientation = EpiOrientations::kHorizontal;
    else if (value == "vertical") cfg.epi.orientation = EpiOrientations::kVertical;
    else throw ValidationError(fmt::format("{}: {} must be both, horizontal or vertical", origin, key));
  } else if (key == "tv.lambda") cfg.tv.lambda = dbl();
  else if (key == "tv.max_iter") cfg.tv.max_iter = positive_int(value, key, origin);
  else if (key == "tv.relax") cfg.tv.relax = dbl();
  else if (key == "tv.stop_tol") cfg.tv.stop_tol = dbl();
  else if (key == "tv.nu") cfg.tv.nu = dbl();
  else if (key == "tv.g0") cfg.tv.g0 = dbl();
  else if (key == "tv.beta") cfg.tv.beta = dbl();
  else if (key == "tv.min_confidence") cfg.tv.min_confidence = dbl();
  else if (key == "tv.record_objective") cfg.tv.record_objective = boolean();
  else if (key == "tv.alpha") {
    if (value == "2") cfg.tv.alpha = NormOrder::kTwo;
    else if (value == "inf") cfg.tv.alpha = NormOrder::kInfinity;
    else throw ValidationError(fmt::format("{}: {} must be 2 or inf", origin, key));
  } else if (key == "eval.tau") cfg.tau = dbl();
  else if (key == "eval.curve_taus") cfg.curve_taus = parse_double_list(value, key, origin);
  else if (key == "eval.gt") cfg.gt_path = value.empty() ? std::nullopt : std::optional<fs::path>(value);
  else if (key == "eval.mask") cfg.mask_path = value.empty() ? std::nullopt : std::optional<fs::path>(value);
  else if (key == "seed") cfg.seed = static_cast<unsigned>(positive_int(value, key, origin, 0));
  else if (key == "threads") cfg.threads = positive_int(value, key, origin, 0);
  else throw ValidationError(fmt::format("{}: unknown key '{}'", origin, key));
}

void apply_settings(PipelineConfig& cfg, const KeyValueFile& kv) {
  for (const auto& [key, value] : kv.entries()) apply_setting(cfg, key, value, kv.origin());
}

std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> e{
      {"scene_dir", cfg.scene_dir.string()},
      {"output_dir", cfg.output_dir.string()},
      {"view_pattern", cfg.layout.pattern},
      {"views_u", std::to_string(cfg.layout.views_u)},
      {"views_v", std::to_string(cfg.layout.views_v)},
      {"camera_config", cfg.layout.config_override ? cfg.layout.config_override->string() : ""},
      {"align", cfg.align ? "true" : "false"},
      {"align.threshold", num(cfg.align_params.threshold)},
      {"align.max_iter", std::to_string(cfg.align_params.max_iter)},
      {"align.identity", cfg.align_params.identity ? "true" : "false"},
      {"align.corr_pattern", cfg.corr_pattern},
      {"match.max_corners", std::to_string(cfg.match_params.max_corners)},
      {"match.window_radius", std::to_string(cfg.match_params.window_radius)},
      {"match.search_radius", std::to_string(cfg.match_params.search_radius)},
      {"match.min_ncc", num(cfg.match_params.min_ncc)},
      {"epi.sigma_inner", num(cfg.epi.sigma_inner)},
      {"epi.sigma_outer", num(cfg.epi.sigma_outer)},
      {"epi.coherence_min", num(cfg.epi.coherence_min)},
      {"epi.orientation", orientation_name(cfg.epi.orientation)},
      {"tv.lambda", num(cfg.tv.lambda)},
      {"tv.max_iter", std::to_string(cfg.tv.max_iter)},
      {"tv.relax", num(cfg.tv.relax)},
      {"tv.stop_tol", num(cfg.tv.stop_tol)},
      {"tv.nu", num(cfg.tv.nu)},
      {"tv.g0", num(cfg.tv.g0)},
      {"tv.beta", num(cfg.tv.beta)},
      {"tv.min_confidence", num(cfg.tv.min_confidence)},
      {"tv.record_objective", cfg.tv.record_objective ? "true" : "false"},
      {"tv.alpha", cfg.tv.alpha == NormOrder::kTwo ? "2" : "inf"},
      {"eval.tau", num(cfg.tau)},
      {"eval.gt", cfg.gt_path ? cfg.gt_path->string() : ""},
      {"eval.mask", cfg.mask_path ? cfg.mask_path->string() : ""},
      {"seed", std::to_string(cfg.seed)},
      {"threads", std::to_string(cfg.threads)},
  };
  std::string taus;
  for (double t : cfg.curve_taus) taus += (taus.empty() ? "" : ",") + num(t);
  e.emplace_back("eval.curve_taus", taus);
  std::sort(e.begin(), e.end());
  return e;
}

LoadedLightField load_scene(const PipelineConfig& cfg) {
  LoadedLightField loaded = load_lightfield(cfg.scene_dir, cfg.layout);
  loaded.lightfield = to_grayscale(loaded.lightfield);
  return loaded;
}

ArrayAlignment run_alignment(const LightField4D& gray, const PipelineConfig& cfg, std::vector<std::string>* warnings) {
  AlignParams params = cfg.align_params;
  params.threads = cfg.threads;
  if (params.identity) return align_array(gray, {}, params);
  const int cu = gray.center_u(), cv = gray.center_v();
  const Grid2D<float> reference = gray.view(cu, cv);
  std::vector<std::vector<Correspondence>> corrs(static_cast<std::size_t>(gray.views_u()) * gray.views_v());
  int matched = 0;
  std::size_t fewest = 0;
  for (int v = 0; v < gray.views_v(); ++v) {
    for (int u = 0; u < gray.views_u(); ++u) {
      if (u == cu && v == cv) continue;
      const int index = v * gray.views_u() + u;
      std::string name;
      try {
        name = fmt::format(fmt::runtime(cfg.corr_pattern), index);
      } catch (const fmt::format_error& e) {
        throw ValidationError(fmt::format("align.corr_pattern '{}': {}", cfg.corr_pattern, e.what()));
      }
      const fs::path path = cfg.scene_dir / name;
      if (fs::exists(path)) {
        corrs[index] = read_correspondences(path);
      } else {
        corrs[index] = match_features(reference, gray.view(u, v), cfg.match_params);
        fewest = matched++ == 0 ? corrs[index].size() : std::min(fewest, corrs[index].size());
      }
    }
  }
  if (matched > 0 && warnings) {
    warnings->push_back(fmt::format("{} views without correspondence files used the feature matcher (fewest matches: {})",
                                    matched, fewest));
  }
  return align_array(gray, corrs, params);
}

DisparityField run_depth(const LightField4D& gray, const CameraConfig& camera, const PipelineConfig& cfg) {
  EpiDepthParams params = cfg.epi;
  params.threads = cfg.threads;
  return estimate_initial_disparity(gray, camera, params);
}

Grid2D<double> center_guide(const LightField4D& gray, const CameraConfig& camera) {
  const int cu = camera.center_u >= 0 ? camera.center_u : gray.center_u();
  const int cv = camera.center_v >= 0 ? camera.center_v : gray.center_v();
  return to_double(gray.view(cu, cv));
}

RefineResult run_refine(const DisparityField& initial, const Grid2D<double>& guide, const PipelineConfig& cfg) {
  RefineParams params = cfg.tv;
  params.threads = cfg.threads == 0 ? default_thread_count() : cfg.threads;
  return refine_disparity(initial, guide, params);
}

std::optional<fs::path> find_ground_truth(const PipelineConfig& cfg) {
  if (cfg.gt_path) {
    if (!fs::exists(*cfg.gt_path)) throw IoError(fmt::format("ground truth not found: {}", cfg.gt_path->string()));
    return cfg.gt_path;
  }
  const fs::path fallback = cfg.scene_dir / "gt_disp_lowres.pfm";
  if (fs::exists(fallback)) return fallback;
  return std::nullopt;
}

EvalMask load_mask(const std::optional<fs::path>& path, int width, int height) {
  if (!path) return full_mask(width, height);
  const PngImage img = read_png(*path);
  if (img.width != width || img.height != height) {
    throw ValidationError(fmt::format("mask {} is {}x{}, expected {}x{}", path->string(), img.width, img.height,
                                      width, height));
  }
  EvalMask mask(width, height, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask.values()[i] = img.samples[i * img.channels] > 0.5f ? 1 : 0;
  return mask;
}

ArtifactList write_depth_artifacts(const DisparityField& initial, const CameraConfig& camera, const fs::path& dir) {
  fs::create_directories(dir);
  ArtifactList out{{"disparity_initial", dir / "disparity_initial.pfm"},
                   {"confidence", dir / "confidence.pfm"},
                   {"disparity_initial_png", dir / "disparity_initial.png"}};
  write_pfm(initial, out[0].second);
  write_pfm_grid(initial.confidence, out[1].second);
  write_png(out[2].second, disparity_image(initial.disparity, camera));
  return out;
}

ArtifactList write_refine_artifacts(const RefineResult& refined, const CameraConfig& camera, const fs::path& dir) {
  fs::create_directories(dir);
  ArtifactList out{{"disparity_refined", dir / "disparity_refined.pfm"},
                   {"trace", dir / "trace.csv"},
                   {"convergence_png", dir / "convergence.png"},
                   {"disparity_refined_png", dir / "disparity_refined.png"}};
  write_pfm(refined.field, out[0].second);
  write_trace_csv(out[1].second, refined.trace.residual_norms, refined.trace.primal_objective);
  write_png(out[2].second, convergence_plot(refined.trace.residual_norms).image);
  write_png(out[3].second, disparity_image(refined.field.disparity, camera));
  return out;
}

ArtifactList write_alignment_artifacts(const ArrayAlignment& alignment, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path path = dir / "alignment.csv";
  std::string text = "view,h11,h12,h13,h21,h22,h23,h31,h32,h33,k1,k2,k3,planes,iterations,converged,best_error\n";
  for (std::size_t i = 0; i < alignment.views.size(); ++i) {
    const auto& v = alignment.views[i];
    const auto& h = v.state.h1.matrix();
    text += std::to_string(i);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) text += "," + num(h(r, c));
    }
    for (int c = 0; c < 3; ++c) text += "," + num(v.state.k(c));
    const double best = v.error_trace.empty() ? 0.0 : *std::min_element(v.error_trace.begin(), v.error_trace.end());
    text += fmt::format(",{},{},{},{}\n", v.state.plane_count(), v.iterations, v.converged ? 1 : 0, num(best));
  }
  write_text(path, text);
  return {{"alignment", path}};
}

ArtifactList write_eval_artifacts(const std::string& prefix, const Grid2D<double>& d, const Grid2D<double>& gt,
                                  const EvalMask& mask, const MetricsReport& report, double tau, const fs::path& dir) {
  fs::create_directories(dir);
  ArtifactList out{{"metrics_" + prefix, dir / fmt::format("metrics_{}.csv", prefix)},
                   {"badpix_" + prefix, dir / fmt::format("badpix_{}.png", prefix)},
                   {"signed_error_" + prefix, dir / fmt::format("signed_error_{}.png", prefix)}};
  write_text(out[0].second, metrics_csv(report));
  write_png(out[1].second, badpix_visualization(d, gt, mask, tau));
  write_png(out[2].second, signed_error_visualization(d, gt));
  return out;
}

RunReport run_pipeline(const PipelineConfig& input) {
  input.validate();
  PipelineConfig cfg = input;
  if (cfg.threads == 0) cfg.threads = default_thread_count();
  if (cfg.output_dir.empty()) throw ValidationError("output_dir is not set");

  RunReport report;
  report.config = config_entries(input);
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto mark = start;
  auto stage = [&](const std::string& name, const std::function<void()>& body) {
    try {
      body();
    } catch (const Error& e) {
      rethrow_in_stage(e, name);
    }
    const auto now = Clock::now();
    report.stages.push_back({name, std::chrono::duration<double>(now - mark).count()});
    mark = now;
  };

  LoadedLightField scene;
  stage("load", [&] {
    fs::create_directories(cfg.output_dir);
    scene = load_scene(cfg);
    report.warnings = scene.warnings;
    report.views_u = scene.lightfield.views_u();
    report.views_v = scene.lightfield.views_v();
    report.width = scene.lightfield.width();
    report.height = scene.lightfield.height();
  });

  stage("align", [&] {
    if (!cfg.align) return;
    ArrayAlignment a = run_alignment(scene.lightfield, cfg, &report.warnings);
    scene.lightfield = std::move(a.aligned);
    a.aligned = LightField4D();
    if (!a.converged) report.warnings.push_back("alignment: some views stopped at max_iter; best states kept");
    const auto files = write_alignment_artifacts(a, cfg.output_dir);
    report.artifacts.insert(report.artifacts.end(), files.begin(), files.end());
    report.alignment = std::move(a);
  });

  DisparityField initial;
  stage("depth", [&] {
    initial = run_depth(scene.lightfield, scene.config, cfg);
    const auto files = write_depth_artifacts(initial, scene.config, cfg.output_dir);
    report.artifacts.insert(report.artifacts.end(), files.begin(), files.end());
  });

  RefineResult refined;
  stage("refine", [&] {
    refined = run_refine(initial, center_guide(scene.lightfield, scene.config), cfg);
    report.solver = refined.trace;
    const auto files = write_refine_artifacts(refined, scene.config, cfg.output_dir);
    report.artifacts.insert(report.artifacts.end(), files.begin(), files.end());
  });

  stage("evaluate", [&] {
    report.ground_truth = find_ground_truth(cfg);
    if (!report.ground_truth) return;
    const Grid2D<double> gt = to_double(read_pfm_grid(*report.ground_truth));
    if (gt.width() != initial.width() || gt.height() != initial.height()) {
      throw ValidationError(fmt::format("ground truth is {}x{}, disparity is {}x{}", gt.width(), gt.height(),
                                        initial.width(), initial.height()));
    }
    const EvalMask mask = load_mask(cfg.mask_path, gt.width(), gt.height());
    const Grid2D<double> d0 = to_double(initial.disparity), d1 = to_double(refined.field.disparity);
    report.metrics_initial = evaluate(d0, gt, mask, cfg.tau);
    report.metrics_refined = evaluate(d1, gt, mask, cfg.tau);
    for (const auto& [prefix, d, m] : {std::tuple{"initial", &d0, &*report.metrics_initial},
                                       std::tuple{"refined", &d1, &*report.metrics_refined}}) {
      const auto files = write_eval_artifacts(prefix, *d, gt, mask, *m, cfg.tau, cfg.output_dir);
      report.artifacts.insert(report.artifacts.end(), files.begin(), files.end());
    }
    if (!cfg.curve_taus.empty()) {
      report.curve_initial = threshold_curve(d0, gt, mask, cfg.curve_taus);
      report.curve_refined = threshold_curve(d1, gt, mask, cfg.curve_taus);
      std::string text = "tau,initial,refined\n";
      for (std::size_t i = 0; i < cfg.curve_taus.size(); ++i) {
        text += fmt::format("{},{},{}\n", num(cfg.curve_taus[i]), num(report.curve_initial[i].second),
                            num(report.curve_refined[i].second));
      }
      write_text(cfg.output_dir / "curve.csv", text);
      report.artifacts.emplace_back("curve", cfg.output_dir / "curve.csv");
    }
  });

  report.total_seconds = std::chrono::duration<double>(mark - start).count();
  report.artifacts.emplace_back("report", cfg.output_dir / "report.json");
  try {
    write_text(cfg.output_dir / "report.json", report_json(report));
  } catch (const Error& e) {
    rethrow_in_stage(e, "report");
  }
  return report;
}

std::string report_json(const RunReport& report, int indent) {
  auto ms = [](double s) { return std::round(s * 1000.0) / 1000.0; };
  Json j;
  j["schema"] = "lfdepth.run_report/1";
  j["lightfield"] = {{"views_u", report.views_u}, {"views_v", report.views_v}, {"width", report.width},
                     {"height", report.height}};
  Json stages = Json::array();
  for (const auto& s : report.stages) stages.push_back({{"name", s.name}, {"seconds", ms(s.seconds)}});
  j["timing"] = {{"stages", stages}, {"total_seconds", ms(report.total_seconds)}};

  if (report.alignment) {
    Json views = Json::array();
    for (std::size_t i = 0; i < report.alignment->views.size(); ++i) {
      const auto& v = report.alignment->views[i];
      Json h = Json::array(), k = Json::array();
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) h.push_back(v.state.h1.matrix()(r, c));
        k.push_back(v.state.k(r));
      }
      views.push_back({{"index", i},
                       {"iterations", v.iterations},
                       {"converged", v.converged},
                       {"degenerate_translation", v.degenerate_translation},
                       {"rank_deficient_solves", v.rank_deficient_solves},
                       {"condition", finite_or_null(v.condition)},
                       {"h1", h},
                       {"k", k},
                       {"error_trace", v.error_trace}});
    }
    j["alignment"] = {{"mean_error", report.alignment->mean_error},
                      {"converged", report.alignment->converged},
                      {"views", views}};
  } else {
    j["alignment"] = nullptr;
  }

  const auto& t = report.solver;
  auto residual_at = [&](std::size_t it) {
    return it <= t.residual_norms.size() && it > 0 ? finite_or_null(t.residual_norms[it - 1]) : Json(nullptr);
  };
  j["solver"] = {{"iterations", t.iterations_run},
                 {"converged", t.converged},
                 {"final_residual", residual_at(t.residual_norms.size())},
                 {"residual_at_50", residual_at(50)},
                 {"cg_iterations", t.cg_iterations},
                 {"blocks", t.blocks},
                 {"final_objective", t.primal_objective.empty() ? Json(nullptr)
                                                                : finite_or_null(t.primal_objective.back())}};

  if (report.metrics_refined) {
    Json m;
    m["ground_truth"] = report.ground_truth->string();
    m["tau"] = report.metrics_refined->tau;
    m["initial"] = metrics_json(*report.metrics_initial);
    m["refined"] = metrics_json(*report.metrics_refined);
    Json curve = Json::array();
    for (std::size_t i = 0; i < report.curve_refined.size(); ++i) {
      curve.push_back({{"tau", report.curve_refined[i].first},
                       {"initial", report.curve_initial[i].second},
                       {"refined", report.curve_refined[i].second}});
    }
    m["curve"] = curve;
    j["metrics"] = m;
  }

  Json artifacts = Json::object();
  for (const auto& [name, path] : report.artifacts) artifacts[name] = path.string();
  j["artifacts"] = artifacts;
  j["warnings"] = report.warnings;
  Json config = Json::object();
  for (const auto& [k, v] : report.config) config[k] = v;
  j["config"] = config;
  return j.dump(indent) + "\n";
}

ComparisonReport compare_runs(const std::vector<std::pair<std::string, Grid2D<double>>>& runs,
                              const Grid2D<double>& gt, const EvalMask& mask, double tau) {
  if (runs.empty()) throw ValidationError("compare_runs: no inputs");
  ComparisonReport out;
  std::vector<Grid2D<std::uint8_t>> bad;
  std::vector<Grid2D<double>> errors;
  for (const auto& [label, d] : runs) {
    MetricsReport m = evaluate(d, gt, mask, tau);
    bad.push_back(bad_pixel_mask(d, gt, mask, tau));
    errors.push_back(m.pixel_abs_error);
    out.rows.emplace_back(label, std::move(m));
  }
  out.table = metrics_table(out.rows);
  out.heatmap = difficulty_heatmap(bad);
  if (runs.size() > 1) {
    for (std::size_t i = 0; i < runs.size(); ++i) out.median_maps.push_back(median_error_map(errors, i));
  }
  return out;
}

}  // namespace lfd
