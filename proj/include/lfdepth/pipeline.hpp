#pragma once

// End-to-end run: load -> align -> initial depth -> TV refine -> evaluate,
// plus the per-stage entry points the command-line subcommands share with it.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lfdepth/alignment.hpp"
#include "lfdepth/config.hpp"
#include "lfdepth/epi_depth.hpp"
#include "lfdepth/lightfield.hpp"
#include "lfdepth/metrics.hpp"
#include "lfdepth/tv.hpp"

namespace lfd {

struct PipelineConfig {
  std::filesystem::path scene_dir;
  std::filesystem::path output_dir;
  ViewLayout layout;

  bool align = false;
  AlignParams align_params;
  std::string corr_pattern = "corr_{:03d}.txt";  // per-view files in scene_dir, index v * U + u
  MatchParams match_params;

  EpiDepthParams epi;
  RefineParams tv;

  double tau = 0.07;
  std::vector<double> curve_taus{0.01, 0.03, 0.05, 0.07, 0.1, 0.2, 0.5, 1.0};
  std::optional<std::filesystem::path> gt_path;  // unset: scene_dir/gt_disp_lowres.pfm if present
  std::optional<std::filesystem::path> mask_path;

  unsigned seed = 0;
  int threads = 0;  // 0: hardware concurrency

  void validate() const;
};

/// Keys accepted in config files and by --set: see README. Unknown keys and
/// out-of-range values throw ValidationError naming the key.
void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value, const std::string& origin);
void apply_settings(PipelineConfig& cfg, const KeyValueFile& kv);
/// Every key with its current value, sorted by key.
std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg);

/// Grayscale light field and camera config of the scene.
LoadedLightField load_scene(const PipelineConfig& cfg);
/// Correspondences from scene_dir files where present, else from the matcher.
ArrayAlignment run_alignment(const LightField4D& gray, const PipelineConfig& cfg, std::vector<std::string>* warnings);
DisparityField run_depth(const LightField4D& gray, const CameraConfig& camera, const PipelineConfig& cfg);
/// Center view of the grayscale light field as the refinement guide.
Grid2D<double> center_guide(const LightField4D& gray, const CameraConfig& camera);
RefineResult run_refine(const DisparityField& initial, const Grid2D<double>& guide, const PipelineConfig& cfg);

/// Ground truth from the explicit path or the scene default; nullopt if neither exists.
std::optional<std::filesystem::path> find_ground_truth(const PipelineConfig& cfg);
EvalMask load_mask(const std::optional<std::filesystem::path>& path, int width, int height);

/// Artifact writers; each returns name -> path of the files written.
using ArtifactList = std::vector<std::pair<std::string, std::filesystem::path>>;
ArtifactList write_depth_artifacts(const DisparityField& initial, const CameraConfig& camera,
                                   const std::filesystem::path& dir);
ArtifactList write_refine_artifacts(const RefineResult& refined, const CameraConfig& camera,
                                    const std::filesystem::path& dir);
ArtifactList write_alignment_artifacts(const ArrayAlignment& alignment, const std::filesystem::path& dir);
ArtifactList write_eval_artifacts(const std::string& prefix, const Grid2D<double>& d, const Grid2D<double>& gt,
                                  const EvalMask& mask, const MetricsReport& report, double tau,
                                  const std::filesystem::path& dir);

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

struct RunReport {
  std::vector<StageTiming> stages;
  double total_seconds = 0.0;
  int views_u = 0, views_v = 0, width = 0, height = 0;
  std::optional<ArrayAlignment> alignment;  // without the aligned light field
  SolverTrace solver;
  std::optional<MetricsReport> metrics_initial;
  std::optional<MetricsReport> metrics_refined;
  std::vector<std::pair<double, double>> curve_initial, curve_refined;
  std::optional<std::filesystem::path> ground_truth;
  ArtifactList artifacts;
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, std::string>> config;
};

/// Runs every stage in order and writes all artifacts plus report.json.
/// Errors propagate with the failing stage's name prefixed.
RunReport run_pipeline(const PipelineConfig& cfg);

/// JSON text of the report; the key schema is documented in the README.
/// Timing fields are the only run-to-run differences.
std::string report_json(const RunReport& report, int indent = 2);

struct ComparisonReport {
  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::string table;
  DifficultyHeatmap heatmap;
  std::vector<MedianErrorMap> median_maps;  // one per input, empty for a single input
};

/// Metrics of several labelled estimates against one ground truth.
ComparisonReport compare_runs(const std::vector<std::pair<std::string, Grid2D<double>>>& runs,
                              const Grid2D<double>& gt, const EvalMask& mask, double tau = 0.07);

}  // namespace lfd
