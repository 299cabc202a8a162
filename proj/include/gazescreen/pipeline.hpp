#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "gazescreen/classify.hpp"
#include "gazescreen/config.hpp"
#include "gazescreen/error.hpp"
#include "gazescreen/eval.hpp"
#include "gazescreen/gaze_data.hpp"
#include "gazescreen/novelty.hpp"
#include "gazescreen/stimulus.hpp"

namespace gazescreen {

enum class WeightingMode { ClassWeights, BalancedSubset };

std::string_view to_string(WeightingMode mode);
WeightingMode parse_weighting_mode(std::string_view text);

/// NB, AdaBoost and GPC are trained on a balanced subset unless the config
/// explicitly allows otherwise.
bool requires_balanced_subset(ModelKind kind);

struct DataConfig {
  enum class Source { Simulate, Csv };
  Source source = Source::Simulate;
  std::filesystem::path path;  // CSV input when source == Csv
  CohortSpec cohort;           // simulation settings; test_kind and base_seed are filled in
};

struct ModelRunConfig {
  ModelKind kind = ModelKind::RF;
  std::size_t max_train = 0;  // 0 = every training frame
  WeightingMode weighting = WeightingMode::ClassWeights;
};

struct NoveltyConfig {
  std::size_t train_samples = 10000;
  std::size_t test_control = 5000;
  std::size_t test_concussed = 5000;
  std::size_t resolution = 100;
  bool control_only = true;  // false trains on both classes
  IsoForestParams iforest;
  OcSvmParams ocsvm;
};

struct RunConfig {
  TestKind test_kind = TestKind::SP;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  DataConfig data;
  SplitConfig split;
  WeightingMode weighting = WeightingMode::ClassWeights;
  std::size_t balanced_per_class = 8000;
  bool allow_weighting_override = false;
  bool require_convergence = false;  // unconverged fits become NonConvergence errors
  std::vector<ModelRunConfig> models;
  ModelParams params;
  NoveltyConfig novelty;
  KeyValueConfig source;  // the merged key/value text this was built from

  /// Validates every key; unknown keys and bad values are config errors.
  static RunConfig from_config(const KeyValueConfig& kv);
  static RunConfig defaults(TestKind kind);

  const ModelRunConfig& model(ModelKind kind) const;
};

/// Key/value text with every key at its effective value.
std::string config_text(const RunConfig& cfg);
std::string default_config_text(TestKind kind);

/// Output directory precedence: config < GAZESCREEN_OUT < explicit flag.
inline constexpr const char* kOutputEnvVar = "GAZESCREEN_OUT";
void apply_environment(KeyValueConfig& kv);

/// `section.key=value`, the form taken by --set.
void apply_assignment(KeyValueConfig& kv, std::string_view assignment);

// ------------------------------------------------------------------- stages

/// Runs `fn`, tagging any library error with `stage` unless an inner stage
/// already did.
template <class Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn());

/// Wall-clock seconds per stage in execution order.
class StageTimer {
 public:
  template <class Fn>
  auto run(const std::string& stage, Fn&& fn) -> decltype(fn());

  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
  double total() const;

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

// --------------------------------------------------------------------- data

struct PreparedData {
  GazeDataset full;
  Split split;
  std::string input_name;  // CSV path or "simulated"
  std::string input_hash;  // git blob id of the input CSV text
};

/// Acquires the dataset (simulate or CSV) and splits it.
PreparedData prepare_data(const RunConfig& cfg, StageTimer& timer);

/// Seeds derived from the master seed, by purpose.
struct RunSeeds {
  std::uint64_t master;
  std::uint64_t cohort;
  std::uint64_t split;
  std::uint64_t novelty;
  std::uint64_t model(ModelKind kind) const;
  std::uint64_t subset(ModelKind kind) const;
};
RunSeeds run_seeds(std::uint64_t master);

// ------------------------------------------------------------------ models

/// A fitted classifier plus the scaler applied to its inputs.
struct PipelineModel {
  Standardizer scaler;
  std::unique_ptr<Classifier> model;

  Vector decision_scores(const Matrix& raw) const;
  std::vector<int> predict(const Matrix& raw) const;
};

void save_pipeline_model(std::ostream& out, const PipelineModel& m);
PipelineModel load_pipeline_model(std::istream& in, const std::string& source = "<model>");

struct TrainedModel {
  ModelKind kind;
  PipelineModel model;
  std::string weighting;  // "class-weights" or "balanced-subset"
  std::size_t train_rows = 0;
  double validation_accuracy = 0.0;  // NaN without validation frames
  double fit_seconds = 0.0;
};

/// Training rows actually used for `kind` after the cap and weighting mode,
/// with the class weights to apply (none for a balanced subset).
struct TrainingSet {
  GazeDataset data;
  std::optional<ClassWeights> weights;
  WeightingMode mode;
};
TrainingSet training_set(const RunConfig& cfg, const GazeDataset& train, ModelKind kind);

std::vector<TrainedModel> train_models(const RunConfig& cfg, const PreparedData& data, StageTimer& timer);

struct EvaluatedModel {
  ModelKind kind;
  ConfusionMatrix confusion;
  MetricSet metrics;
};

std::vector<EvaluatedModel> evaluate_models(const std::vector<std::pair<ModelKind, const PipelineModel*>>& models,
                                            const GazeDataset& test, StageTimer& timer);

// ------------------------------------------------------------- experiments

struct ExperimentResult {
  Report report;
  std::vector<EvaluatedModel> evaluated;
  std::vector<std::pair<std::string, std::string>> outputs;  // relative path, git blob id
  std::string outputs_digest;
  double wall_seconds = 0.0;
  std::filesystem::path manifest_path;
};

/// Data -> split -> fit -> evaluate -> report. Writes models/<code>.model,
/// report.csv, report.txt and manifest.json under cfg.output_dir.
ExperimentResult run_experiment(const RunConfig& cfg);

/// Data -> split -> fit; writes models and a manifest.
ExperimentResult run_training(const RunConfig& cfg);

/// Reloads models from `models_dir` (default output_dir/models), rebuilds the
/// same test split and writes the report files.
ExperimentResult run_evaluation(const RunConfig& cfg, const std::optional<std::filesystem::path>& models_dir = {});

/// One file per (method, eye, plane) under output_dir/novelty plus summary.csv.
struct NoveltyGridResult {
  std::string method;
  std::string eye;
  std::string plane;
  std::filesystem::path file;
  double negative_train;
  double negative_regular;
  double negative_abnormal;
};

struct NoveltyResult {
  std::vector<NoveltyGridResult> grids;
  std::size_t train_rows = 0;
  std::size_t regular_rows = 0;
  std::size_t abnormal_rows = 0;
  std::vector<std::pair<std::string, std::string>> outputs;
  std::string outputs_digest;
  double wall_seconds = 0.0;
};

struct EyePlane {
  std::string eye;
  std::string plane;
  std::array<int, 2> dims;  // feature columns
};
/// left, right, cyclopean eye, each in the (x, y) and (x, z) direction planes.
const std::vector<EyePlane>& novelty_projections();

NoveltyResult run_novelty(const RunConfig& cfg);

struct ReproduceResult {
  ExperimentResult sp;
  ExperimentResult vms;
  NoveltyResult novelty_sp;
  NoveltyResult novelty_vms;
};

/// The SP and VMS experiments plus both novelty runs, under out/sp and
/// out/vms. `base` supplies every key except test_kind and output_dir.
ReproduceResult reproduce(const KeyValueConfig& base, const std::filesystem::path& out);

/// Renders report CSV files as text tables.
std::string render_report_files(const std::vector<std::filesystem::path>& csv_paths);

/// Process exit code for an error: 2 config, 3 data, 4 numeric.
int exit_code(const Error& e);

// ------------------------------------------------------------------ inline

template <class Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw e.with_stage(stage);
  }
}

template <class Fn>
auto StageTimer::run(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  const auto t0 = std::chrono::steady_clock::now();
  auto record = [&] {
    entries_.emplace_back(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };
  if constexpr (std::is_void_v<decltype(fn())>) {
    in_stage(stage, std::forward<Fn>(fn));
    record();
  } else {
    auto out = in_stage(stage, std::forward<Fn>(fn));
    record();
    return out;
  }
}

}  // namespace gazescreen
