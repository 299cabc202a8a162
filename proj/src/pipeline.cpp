#include "gazescreen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "gazescreen/io.hpp"
#include "gazescreen/rng.hpp"
#include "gazescreen/serialize.hpp"
#include "json.hpp"

namespace gazescreen {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kModelMagic = "gazescreen_pipeline_model";
constexpr std::int64_t kModelVersion = 1;

constexpr std::array<ModelKind, 8> kAllKinds{ModelKind::NB, ModelKind::DT,  ModelKind::RF, ModelKind::SVC,
                                             ModelKind::ADA, ModelKind::GPC, ModelKind::LR, ModelKind::PERC};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string model_section(ModelKind kind) { return "model." + lower(to_string(kind)); }

std::size_t default_max_train(ModelKind kind) {
  switch (kind) {
    case ModelKind::RF: return 100000;
    case ModelKind::SVC: return 20000;
    case ModelKind::GPC: return 1000;
    default: return 0;
  }
}

std::size_t get_size(const KeyValueConfig& kv, std::string_view section, std::string_view key, std::size_t fallback) {
  return static_cast<std::size_t>(kv.get_uint(section, key, fallback));
}

void positive(const KeyValueConfig& kv, std::string_view section, std::string_view key, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    fail(ErrorCode::InvalidConfig, fmt::format("{}: [{}] {} must be positive, got {}", kv.source(), section, key, v));
  }
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

ImpairmentParams read_impairment(const KeyValueConfig& kv, const std::string& section, ImpairmentParams p) {
  static constexpr std::array<std::string_view, 5> keys{"pursuit_gain", "latency_s", "noise_deg", "intrusion_rate_hz",
                                                        "intrusion_amp_deg"};
  kv.require_known_keys(section, keys);
  p.pursuit_gain = kv.get_double(section, "pursuit_gain", p.pursuit_gain);
  p.latency_s = kv.get_double(section, "latency_s", p.latency_s);
  p.noise_deg = kv.get_double(section, "noise_deg", p.noise_deg);
  p.intrusion_rate_hz = kv.get_double(section, "intrusion_rate_hz", p.intrusion_rate_hz);
  p.intrusion_amp_deg = kv.get_double(section, "intrusion_amp_deg", p.intrusion_amp_deg);
  try {
    p.validate();
  } catch (const Error& e) {
    fail(ErrorCode::InvalidConfig, fmt::format("{}: [{}] {}", kv.source(), section, e.detail()));
  }
  return p;
}

TreeParams read_tree(const KeyValueConfig& kv, const std::string& s, TreeParams p) {
  p.min_samples_split = get_size(kv, s, "min_samples_split", p.min_samples_split);
  p.min_samples_leaf = get_size(kv, s, "min_samples_leaf", p.min_samples_leaf);
  p.max_depth = get_size(kv, s, "max_depth", p.max_depth);
  p.max_features = get_size(kv, s, "max_features", p.max_features);
  return p;
}

void read_model_params(const KeyValueConfig& kv, ModelKind kind, ModelParams& mp) {
  const std::string s = model_section(kind);
  std::vector<std::string_view> allowed{"max_train", "weighting"};
  auto allow = [&](std::initializer_list<std::string_view> keys) { allowed.insert(allowed.end(), keys); };
  switch (kind) {
    case ModelKind::NB:
      allow({"var_smoothing"});
      mp.nb.var_smoothing = kv.get_double(s, "var_smoothing", mp.nb.var_smoothing);
      break;
    case ModelKind::DT:
      allow({"min_samples_split", "min_samples_leaf", "max_depth", "max_features"});
      mp.dt = read_tree(kv, s, mp.dt);
      break;
    case ModelKind::RF:
      allow({"n_estimators", "max_features", "bootstrap", "min_samples_split", "min_samples_leaf", "max_depth",
             "threads"});
      mp.rf.n_estimators = get_size(kv, s, "n_estimators", mp.rf.n_estimators);
      mp.rf.max_features = get_size(kv, s, "max_features", mp.rf.max_features);
      mp.rf.bootstrap = kv.get_bool(s, "bootstrap", mp.rf.bootstrap);
      mp.rf.tree = read_tree(kv, s, mp.rf.tree);
      mp.rf.tree.max_features = 0;
      mp.rf.threads = static_cast<unsigned>(kv.get_uint(s, "threads", mp.rf.threads));
      break;
    case ModelKind::SVC:
      allow({"C", "gamma", "tol", "max_iter", "cache_mb"});
      mp.svc.C = kv.get_double(s, "C", mp.svc.C);
      mp.svc.gamma = kv.get_double(s, "gamma", mp.svc.gamma);
      mp.svc.tol = kv.get_double(s, "tol", mp.svc.tol);
      mp.svc.max_iter = get_size(kv, s, "max_iter", mp.svc.max_iter);
      mp.svc.cache_mb = kv.get_double(s, "cache_mb", mp.svc.cache_mb);
      break;
    case ModelKind::ADA:
      allow({"n_estimators", "learning_rate", "base_depth"});
      mp.ada.n_estimators = get_size(kv, s, "n_estimators", mp.ada.n_estimators);
      mp.ada.learning_rate = kv.get_double(s, "learning_rate", mp.ada.learning_rate);
      mp.ada.base_depth = get_size(kv, s, "base_depth", mp.ada.base_depth);
      break;
    case ModelKind::GPC:
      allow({"length_scale", "amplitude", "optimize", "optimizer_max_iter", "max_iter_predict", "newton_tol"});
      mp.gpc.length_scale = kv.get_double(s, "length_scale", mp.gpc.length_scale);
      mp.gpc.amplitude = kv.get_double(s, "amplitude", mp.gpc.amplitude);
      mp.gpc.optimize = kv.get_bool(s, "optimize", mp.gpc.optimize);
      mp.gpc.optimizer_max_iter = static_cast<int>(kv.get_int(s, "optimizer_max_iter", mp.gpc.optimizer_max_iter));
      mp.gpc.max_iter_predict = static_cast<int>(kv.get_int(s, "max_iter_predict", mp.gpc.max_iter_predict));
      mp.gpc.newton_tol = kv.get_double(s, "newton_tol", mp.gpc.newton_tol);
      break;
    case ModelKind::LR:
      allow({"C", "tol", "max_iter"});
      mp.lr.C = kv.get_double(s, "C", mp.lr.C);
      mp.lr.tol = kv.get_double(s, "tol", mp.lr.tol);
      mp.lr.max_iter = static_cast<int>(kv.get_int(s, "max_iter", mp.lr.max_iter));
      break;
    case ModelKind::PERC:
      allow({"alpha", "max_iter", "eta0", "tol", "early_stopping", "validation_fraction", "n_iter_no_change",
             "shuffle"});
      mp.perc.alpha = kv.get_double(s, "alpha", mp.perc.alpha);
      mp.perc.max_iter = get_size(kv, s, "max_iter", mp.perc.max_iter);
      mp.perc.eta0 = kv.get_double(s, "eta0", mp.perc.eta0);
      mp.perc.tol = kv.get_double(s, "tol", mp.perc.tol);
      mp.perc.early_stopping = kv.get_bool(s, "early_stopping", mp.perc.early_stopping);
      mp.perc.validation_fraction = kv.get_double(s, "validation_fraction", mp.perc.validation_fraction);
      mp.perc.n_iter_no_change = get_size(kv, s, "n_iter_no_change", mp.perc.n_iter_no_change);
      mp.perc.shuffle = kv.get_bool(s, "shuffle", mp.perc.shuffle);
      break;
  }
  kv.require_known_keys(s, allowed);
}

std::string fmt_double(double v) { return shortest(v); }

// Every key with its effective value, in a stable layout.
KeyValueConfig to_config(const RunConfig& c) {
  KeyValueConfig kv;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  kv.set("experiment", "test_kind", to_string(c.test_kind));
  kv.set("experiment", "seed", std::to_string(c.seed));
  kv.set("experiment", "output_dir", c.output_dir.string());
  std::string models;
  for (const auto& m : c.models) models += (models.empty() ? "" : ",") + lower(to_string(m.kind));
  kv.set("experiment", "models", models);
  kv.set("experiment", "weighting", to_string(c.weighting));
  kv.set("experiment", "balanced_per_class", std::to_string(c.balanced_per_class));
  kv.set("experiment", "allow_weighting_override", b(c.allow_weighting_override));
  kv.set("experiment", "require_convergence", b(c.require_convergence));

  kv.set("data", "source", c.data.source == DataConfig::Source::Simulate ? "simulate" : "csv");
  kv.set("data", "path", c.data.path.string());
  kv.set("data", "n_control", std::to_string(c.data.cohort.n_control));
  kv.set("data", "n_concussed", std::to_string(c.data.cohort.n_concussed));
  kv.set("data", "sample_rate_hz", fmt_double(c.data.cohort.sample_rate_hz));
  kv.set("data", "sp_axis_duration_s", fmt_double(c.data.cohort.sp_axis_duration_s));
  kv.set("data", "pupil_label_effect_mm", fmt_double(c.data.cohort.pupil_label_effect_mm));
  for (const auto& [name, p] : {std::pair{"impairment.control", c.data.cohort.control_impairment},
                                std::pair{"impairment.concussed", c.data.cohort.concussed_impairment}}) {
    kv.set(name, "pursuit_gain", fmt_double(p.pursuit_gain));
    kv.set(name, "latency_s", fmt_double(p.latency_s));
    kv.set(name, "noise_deg", fmt_double(p.noise_deg));
    kv.set(name, "intrusion_rate_hz", fmt_double(p.intrusion_rate_hz));
    kv.set(name, "intrusion_amp_deg", fmt_double(p.intrusion_amp_deg));
  }

  kv.set("split", "test_fraction", fmt_double(c.split.test_fraction));
  kv.set("split", "validation_fraction", fmt_double(c.split.validation_fraction));
  kv.set("split", "stratified", b(c.split.stratified));
  kv.set("split", "session_level", b(c.split.session_level));

  const ModelParams& p = c.params;
  auto tree = [&](const std::string& s, const TreeParams& t, bool with_features) {
    kv.set(s, "min_samples_split", std::to_string(t.min_samples_split));
    kv.set(s, "min_samples_leaf", std::to_string(t.min_samples_leaf));
    kv.set(s, "max_depth", std::to_string(t.max_depth));
    if (with_features) kv.set(s, "max_features", std::to_string(t.max_features));
  };
  for (ModelKind kind : kAllKinds) {
    const std::string s = model_section(kind);
    const ModelRunConfig* mc = nullptr;
    for (const auto& m : c.models) {
      if (m.kind == kind) mc = &m;
    }
    kv.set(s, "max_train", std::to_string(mc ? mc->max_train : default_max_train(kind)));
    if (mc) kv.set(s, "weighting", to_string(mc->weighting));
    switch (kind) {
      case ModelKind::NB: kv.set(s, "var_smoothing", fmt_double(p.nb.var_smoothing)); break;
      case ModelKind::DT: tree(s, p.dt, true); break;
      case ModelKind::RF:
        kv.set(s, "n_estimators", std::to_string(p.rf.n_estimators));
        kv.set(s, "max_features", std::to_string(p.rf.max_features));
        kv.set(s, "bootstrap", b(p.rf.bootstrap));
        tree(s, p.rf.tree, false);
        kv.set(s, "threads", std::to_string(p.rf.threads));
        break;
      case ModelKind::SVC:
        kv.set(s, "C", fmt_double(p.svc.C));
        kv.set(s, "gamma", fmt_double(p.svc.gamma));
        kv.set(s, "tol", fmt_double(p.svc.tol));
        kv.set(s, "max_iter", std::to_string(p.svc.max_iter));
        kv.set(s, "cache_mb", fmt_double(p.svc.cache_mb));
        break;
      case ModelKind::ADA:
        kv.set(s, "n_estimators", std::to_string(p.ada.n_estimators));
        kv.set(s, "learning_rate", fmt_double(p.ada.learning_rate));
        kv.set(s, "base_depth", std::to_string(p.ada.base_depth));
        break;
      case ModelKind::GPC:
        kv.set(s, "length_scale", fmt_double(p.gpc.length_scale));
        kv.set(s, "amplitude", fmt_double(p.gpc.amplitude));
        kv.set(s, "optimize", b(p.gpc.optimize));
        kv.set(s, "optimizer_max_iter", std::to_string(p.gpc.optimizer_max_iter));
        kv.set(s, "max_iter_predict", std::to_string(p.gpc.max_iter_predict));
        kv.set(s, "newton_tol", fmt_double(p.gpc.newton_tol));
        break;
      case ModelKind::LR:
        kv.set(s, "C", fmt_double(p.lr.C));
        kv.set(s, "tol", fmt_double(p.lr.tol));
        kv.set(s, "max_iter", std::to_string(p.lr.max_iter));
        break;
      case ModelKind::PERC:
        kv.set(s, "alpha", fmt_double(p.perc.alpha));
        kv.set(s, "max_iter", std::to_string(p.perc.max_iter));
        kv.set(s, "eta0", fmt_double(p.perc.eta0));
        kv.set(s, "tol", fmt_double(p.perc.tol));
        kv.set(s, "early_stopping", b(p.perc.early_stopping));
        kv.set(s, "validation_fraction", fmt_double(p.perc.validation_fraction));
        kv.set(s, "n_iter_no_change", std::to_string(p.perc.n_iter_no_change));
        kv.set(s, "shuffle", b(p.perc.shuffle));
        break;
    }
  }

  const NoveltyConfig& n = c.novelty;
  kv.set("novelty", "train_samples", std::to_string(n.train_samples));
  kv.set("novelty", "test_control", std::to_string(n.test_control));
  kv.set("novelty", "test_concussed", std::to_string(n.test_concussed));
  kv.set("novelty", "resolution", std::to_string(n.resolution));
  kv.set("novelty", "train_pool", n.control_only ? "control" : "all");
  kv.set("novelty", "n_trees", std::to_string(n.iforest.n_trees));
  kv.set("novelty", "subsample", std::to_string(n.iforest.subsample));
  kv.set("novelty", "nu", fmt_double(n.ocsvm.nu));
  kv.set("novelty", "gamma", fmt_double(n.ocsvm.gamma));
  kv.set("novelty", "tol", fmt_double(n.ocsvm.tol));
  return kv;
}

std::string digest_of(const std::vector<std::pair<std::string, std::string>>& outputs) {
  auto sorted = outputs;
  std::sort(sorted.begin(), sorted.end());
  std::string text;
  for (const auto& [path, hash] : sorted) text += hash + "  " + path + "\n";
  return git_blob_hash(text);
}

// Writes `contents` under `root` and records its hash.
void emit(const fs::path& root, const std::string& rel, const std::string& contents,
          std::vector<std::pair<std::string, std::string>>& outputs) {
  const fs::path path = root / rel;
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorCode::IoError, fmt::format("cannot create directory '{}': {}", path.parent_path().string(), ec.message()));
  write_file_atomic(path, contents);
  outputs.emplace_back(rel, git_blob_hash(contents));
}

Json nullable(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json timings_json(const StageTimer& timer) {
  Json t = Json::object();
  for (const auto& [stage, secs] : timer.entries()) t[stage] = secs;
  return t;
}

Json seeds_json(const RunConfig& cfg) {
  const RunSeeds s = run_seeds(cfg.seed);
  Json j{{"master", cfg.seed}, {"cohort", s.cohort}, {"split", s.split}, {"novelty", s.novelty}};
  Json models = Json::object();
  for (const auto& m : cfg.models) {
    models[std::string(to_string(m.kind))] = {{"fit", s.model(m.kind)}, {"subset", s.subset(m.kind)}};
  }
  j["models"] = models;
  return j;
}

Json class_counts_json(const GazeDataset& ds) {
  const ClassCounts c = ds.class_counts();
  return {{"frames", ds.size()}, {"control", c.control}, {"concussed", c.concussed}};
}

Json base_manifest(const RunConfig& cfg, const PreparedData& data, std::string_view command) {
  Json m;
  m["tool"] = "gazescreen";
  m["manifest_version"] = 1;
  m["command"] = command;
  m["test_kind"] = to_string(cfg.test_kind);
  m["config"] = to_config(cfg).to_text();
  m["seeds"] = seeds_json(cfg);
  m["inputs"] = Json::array({{{"name", data.input_name}, {"git_blob", data.input_hash}, {"frames", data.full.size()}}});
  m["split"] = {{"train", class_counts_json(data.split.train)},
                {"validation", class_counts_json(data.split.validation)},
                {"test", class_counts_json(data.split.test)}};
  return m;
}

void finish_manifest(Json& m, const std::vector<std::pair<std::string, std::string>>& outputs,
                     const std::string& digest, const StageTimer& timer) {
  Json out = Json::object();
  auto sorted = outputs;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& [path, hash] : sorted) out[path] = hash;
  m["outputs"] = out;
  m["outputs_digest"] = digest;
  m["timings_s"] = timings_json(timer);
  m["wall_seconds"] = timer.total();
}

std::string model_file(ModelKind kind) { return "models/" + lower(to_string(kind)) + ".model"; }

// `k` rows of `pool` without replacement, returned ascending.
std::vector<std::size_t> sample_rows(std::vector<std::size_t> pool, std::size_t k, std::uint64_t seed) {
  if (k >= pool.size()) return pool;
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Matrix columns(const Matrix& X, std::array<int, 2> dims) {
  Matrix out(X.rows(), 2);
  out.col(0) = X.col(dims[0]);
  out.col(1) = X.col(dims[1]);
  return out;
}

std::string fraction_text(double v) { return std::isnan(v) ? "n/a" : fmt::format("{:.6f}", v); }

}  // namespace

// ------------------------------------------------------------------- config

std::string_view to_string(WeightingMode mode) {
  return mode == WeightingMode::ClassWeights ? "class-weights" : "balanced-subset";
}

WeightingMode parse_weighting_mode(std::string_view text) {
  const std::string t = lower(text);
  if (t == "class-weights" || t == "class_weights") return WeightingMode::ClassWeights;
  if (t == "balanced-subset" || t == "balanced_subset") return WeightingMode::BalancedSubset;
  fail(ErrorCode::InvalidConfig, fmt::format("weighting '{}' is not class-weights or balanced-subset", text));
}

bool requires_balanced_subset(ModelKind kind) {
  return kind == ModelKind::NB || kind == ModelKind::ADA || kind == ModelKind::GPC;
}

RunConfig RunConfig::from_config(const KeyValueConfig& kv) {
  static constexpr std::string_view kSections[] = {"experiment", "data", "split", "novelty", "impairment.control",
                                                   "impairment.concussed"};
  for (const auto& section : kv.sections()) {
    bool known = std::find(std::begin(kSections), std::end(kSections), section) != std::end(kSections);
    for (ModelKind k : kAllKinds) known = known || section == model_section(k);
    if (!known) fail(ErrorCode::InvalidConfig, fmt::format("{}: unknown section [{}]", kv.source(), section));
  }
  if (!kv.keys("").empty()) {
    fail(ErrorCode::InvalidConfig, fmt::format("{}: key '{}' outside any section", kv.source(), kv.keys("").front()));
  }

  RunConfig c;
  c.source = kv;

  static constexpr std::array<std::string_view, 8> kExperiment{
      "test_kind",          "seed", "output_dir", "models", "weighting", "balanced_per_class",
      "allow_weighting_override", "require_convergence"};
  kv.require_known_keys("experiment", kExperiment);
  try {
    c.test_kind = parse_test_kind(kv.get_string("experiment", "test_kind", "SP"));
  } catch (const Error& e) {
    fail(ErrorCode::InvalidConfig, fmt::format("{}: [experiment] {}", kv.source(), e.detail()));
  }
  c.seed = kv.get_uint("experiment", "seed", 0);
  c.output_dir = kv.get_string("experiment", "output_dir", "out");
  c.weighting = parse_weighting_mode(kv.get_string("experiment", "weighting", "class-weights"));
  c.balanced_per_class = get_size(kv, "experiment", "balanced_per_class", 8000);
  if (c.balanced_per_class == 0) {
    fail(ErrorCode::InvalidConfig, fmt::format("{}: [experiment] balanced_per_class must be positive", kv.source()));
  }
  c.allow_weighting_override = kv.get_bool("experiment", "allow_weighting_override", false);
  c.require_convergence = kv.get_bool("experiment", "require_convergence", false);

  std::vector<ModelKind> kinds;
  const std::string model_list = kv.get_string("experiment", "models", "all");
  if (lower(model_list) == "all") {
    kinds.assign(kReportOrder.begin(), kReportOrder.end());
  } else {
    for (const auto& name : split_list(model_list)) {
      ModelKind k;
      try {
        k = parse_model_kind(name);
      } catch (const Error&) {
        fail(ErrorCode::InvalidConfig, fmt::format("{}: [experiment] models: unknown model '{}'", kv.source(), name));
      }
      if (std::find(kinds.begin(), kinds.end(), k) != kinds.end()) {
        fail(ErrorCode::InvalidConfig, fmt::format("{}: [experiment] models lists '{}' twice", kv.source(), name));
      }
      kinds.push_back(k);
    }
    if (kinds.empty()) fail(ErrorCode::InvalidConfig, fmt::format("{}: [experiment] models is empty", kv.source()));
  }

  for (ModelKind k : kAllKinds) read_model_params(kv, k, c.params);
  for (ModelKind k : kinds) {
    const std::string s = model_section(k);
    ModelRunConfig m;
    m.kind = k;
    m.max_train = get_size(kv, s, "max_train", default_max_train(k));
    const auto per_model = kv.get(s, "weighting");
    if (requires_balanced_subset(k) && !c.allow_weighting_override) {
      if (per_model && parse_weighting_mode(*per_model) != WeightingMode::BalancedSubset) {
        fail(ErrorCode::InvalidConfig,
             fmt::format("{}: [{}] weighting = {}: {} is trained on a balanced subset; set "
                         "[experiment] allow_weighting_override = true to change it",
                         kv.source(), s, *per_model, display_name(k)));
      }
      m.weighting = WeightingMode::BalancedSubset;
    } else {
      m.weighting = per_model ? parse_weighting_mode(*per_model) : c.weighting;
    }
    c.models.push_back(m);
  }

  static constexpr std::array<std::string_view, 7> kData{"source",         "path",
                                                         "n_control",      "n_concussed",
                                                         "sample_rate_hz", "sp_axis_duration_s",
                                                         "pupil_label_effect_mm"};
  kv.require_known_keys("data", kData);
  const std::string source = lower(kv.get_string("data", "source", "simulate"));
  if (source == "simulate") {
    c.data.source = DataConfig::Source::Simulate;
  } else if (source == "csv") {
    c.data.source = DataConfig::Source::Csv;
    c.data.path = kv.get_string("data", "path", "");
    if (c.data.path.empty()) fail(ErrorCode::InvalidConfig, fmt::format("{}: [data] source = csv needs a path", kv.source()));
  } else {
    fail(ErrorCode::InvalidConfig, fmt::format("{}: [data] source '{}' is not simulate or csv", kv.source(), source));
  }
  if (c.data.source == DataConfig::Source::Simulate) c.data.path = kv.get_string("data", "path", "");
  CohortSpec& cohort = c.data.cohort;
  cohort.test_kind = c.test_kind;
  cohort.n_control = get_size(kv, "data", "n_control", 100);
  cohort.n_concussed = get_size(kv, "data", "n_concussed", 100);
  cohort.sample_rate_hz = kv.get_double("data", "sample_rate_hz", cohort.sample_rate_hz);
  positive(kv, "data", "sample_rate_hz", cohort.sample_rate_hz);
  cohort.sp_axis_duration_s = kv.get_double("data", "sp_axis_duration_s", cohort.sp_axis_duration_s);
  positive(kv, "data", "sp_axis_duration_s", cohort.sp_axis_duration_s);
  cohort.pupil_label_effect_mm = kv.get_double("data", "pupil_label_effect_mm", cohort.pupil_label_effect_mm);
  cohort.control_impairment = read_impairment(kv, "impairment.control", ImpairmentParams::control());
  cohort.concussed_impairment = read_impairment(kv, "impairment.concussed", ImpairmentParams::concussed());
  if (c.data.source == DataConfig::Source::Simulate && cohort.n_control + cohort.n_concussed == 0) {
    fail(ErrorCode::InvalidConfig, fmt::format("{}: [data] n_control + n_concussed is zero", kv.source()));
  }

  static constexpr std::array<std::string_view, 4> kSplit{"test_fraction", "validation_fraction", "stratified",
                                                          "session_level"};
  kv.require_known_keys("split", kSplit);
  c.split.test_fraction = kv.get_double("split", "test_fraction", c.split.test_fraction);
  c.split.validation_fraction = kv.get_double("split", "validation_fraction", c.split.validation_fraction);
  c.split.stratified = kv.get_bool("split", "stratified", c.split.stratified);
  c.split.session_level = kv.get_bool("split", "session_level", c.split.session_level);
  try {
    c.split.validate();
  } catch (const Error& e) {
    fail(ErrorCode::InvalidConfig, fmt::format("{}: [split] {}", kv.source(), e.detail()));
  }

  static constexpr std::array<std::string_view, 10> kNovelty{
      "train_samples", "test_control", "test_concussed", "resolution", "train_pool",
      "n_trees",       "subsample",    "nu",             "gamma",      "tol"};
  kv.require_known_keys("novelty", kNovelty);
  NoveltyConfig& n = c.novelty;
  n.train_samples = get_size(kv, "novelty", "train_samples", n.train_samples);
  n.test_control = get_size(kv, "novelty", "test_control", n.test_control);
  n.test_concussed = get_size(kv, "novelty", "test_concussed", n.test_concussed);
  n.resolution = get_size(kv, "novelty", "resolution", n.resolution);
  const std::string pool = lower(kv.get_string("novelty", "train_pool", "control"));
  if (pool != "control" && pool != "all") {
    fail(ErrorCode::InvalidConfig, fmt::format("{}: [novelty] train_pool '{}' is not control or all", kv.source(), pool));
  }
  n.control_only = pool == "control";
  n.iforest.n_trees = get_size(kv, "novelty", "n_trees", n.iforest.n_trees);
  n.iforest.subsample = get_size(kv, "novelty", "subsample", n.iforest.subsample);
  n.ocsvm.nu = kv.get_double("novelty", "nu", n.ocsvm.nu);
  n.ocsvm.gamma = kv.get_double("novelty", "gamma", n.ocsvm.gamma);
  n.ocsvm.tol = kv.get_double("novelty", "tol", n.ocsvm.tol);
  if (n.resolution == 0 || n.train_samples < 2) {
    fail(ErrorCode::InvalidConfig,
         fmt::format("{}: [novelty] needs resolution >= 1 and train_samples >= 2", kv.source()));
  }
  return c;
}

RunConfig RunConfig::defaults(TestKind kind) {
  KeyValueConfig kv;
  kv.set("experiment", "test_kind", to_string(kind));
  return from_config(kv);
}

const ModelRunConfig& RunConfig::model(ModelKind kind) const {
  for (const auto& m : models) {
    if (m.kind == kind) return m;
  }
  fail(ErrorCode::InvalidConfig, fmt::format("model {} is not part of this run", to_string(kind)));
}

std::string config_text(const RunConfig& cfg) { return to_config(cfg).to_text(); }

std::string default_config_text(TestKind kind) { return config_text(RunConfig::defaults(kind)); }

void apply_environment(KeyValueConfig& kv) {
  if (const char* out = std::getenv(kOutputEnvVar); out != nullptr && *out != '\0') {
    kv.set("experiment", "output_dir", out);
  }
}

void apply_assignment(KeyValueConfig& kv, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const std::string_view lhs = assignment.substr(0, eq);
  const auto dot = lhs.rfind('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot == 0 || dot + 1 == lhs.size()) {
    fail(ErrorCode::InvalidConfig, fmt::format("override '{}' is not section.key=value", assignment));
  }
  kv.set(lhs.substr(0, dot), lhs.substr(dot + 1), assignment.substr(eq + 1));
}

double StageTimer::total() const {
  double t = 0.0;
  for (const auto& e : entries_) t += e.second;
  return t;
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::Config: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Numeric: return 4;
  }
  return 1;
}

// --------------------------------------------------------------------- data

RunSeeds run_seeds(std::uint64_t master) {
  return {master, derive_seed(master, 1), derive_seed(master, 2), derive_seed(master, 3)};
}

std::uint64_t RunSeeds::model(ModelKind kind) const { return derive_seed(master, 100 + static_cast<std::uint64_t>(kind)); }
std::uint64_t RunSeeds::subset(ModelKind kind) const { return derive_seed(master, 200 + static_cast<std::uint64_t>(kind)); }

PreparedData prepare_data(const RunConfig& cfg, StageTimer& timer) {
  const RunSeeds seeds = run_seeds(cfg.seed);
  PreparedData d;
  timer.run("data", [&] {
    if (cfg.data.source == DataConfig::Source::Simulate) {
      CohortSpec spec = cfg.data.cohort;
      spec.test_kind = cfg.test_kind;
      spec.base_seed = seeds.cohort;
      d.full = generate_cohort(spec);
      std::ostringstream text;
      write_csv(text, d.full);
      d.input_name = "simulated";
      d.input_hash = git_blob_hash(text.str());
    } else {
      const std::string text = read_file(cfg.data.path);
      std::istringstream in(text);
      d.full = read_csv(in, cfg.test_kind, cfg.data.path.string());
      d.input_name = cfg.data.path.string();
      d.input_hash = git_blob_hash(text);
    }
  });
  timer.run("split", [&] {
    SplitConfig sc = cfg.split;
    sc.seed = seeds.split;
    d.split = split(d.full, sc);
  });
  return d;
}

// ------------------------------------------------------------------ models

Vector PipelineModel::decision_scores(const Matrix& raw) const { return model->decision_scores(scaler.transform(raw)); }

std::vector<int> PipelineModel::predict(const Matrix& raw) const { return model->predict(scaler.transform(raw)); }

void save_pipeline_model(std::ostream& out, const PipelineModel& m) {
  TextWriter w(out);
  w.integer(kModelMagic, kModelVersion);
  m.scaler.save(w);
  m.model->save(out);
}

PipelineModel load_pipeline_model(std::istream& in, const std::string& source) {
  TextReader r(in, source);
  const auto version = r.integer(kModelMagic);
  if (version != kModelVersion) r.malformed(fmt::format("unsupported pipeline model version {}", version));
  PipelineModel m;
  m.scaler = Standardizer::load(r);
  m.model = load_classifier(in, source);
  if (static_cast<std::size_t>(m.scaler.mean.size()) != m.model->n_features()) {
    r.malformed("scaler and model disagree on the feature count");
  }
  return m;
}

TrainingSet training_set(const RunConfig& cfg, const GazeDataset& train, ModelKind kind) {
  const ModelRunConfig& mc = cfg.model(kind);
  const RunSeeds seeds = run_seeds(cfg.seed);
  TrainingSet ts;
  ts.mode = mc.weighting;
  if (mc.weighting == WeightingMode::BalancedSubset) {
    std::size_t per_class = cfg.balanced_per_class;
    if (mc.max_train != 0) per_class = std::min(per_class, std::max<std::size_t>(mc.max_train / 2, 1));
    ts.data = in_stage("subset", [&] { return balanced_subset(train, per_class, seeds.subset(kind)); });
  } else {
    ts.data = in_stage("subsample", [&] { return stratified_subsample(train, mc.max_train, seeds.subset(kind)); });
    ts.weights = in_stage("class-weights", [&] { return class_weights(ts.data); });
  }
  return ts;
}

std::vector<TrainedModel> train_models(const RunConfig& cfg, const PreparedData& data, StageTimer& timer) {
  const RunSeeds seeds = run_seeds(cfg.seed);
  const Standardizer scaler =
      timer.run("standardize", [&] { return Standardizer::fit(data.split.train.feature_matrix()); });
  const Matrix X_val = data.split.validation.feature_matrix();
  const std::vector<int> y_val = data.split.validation.labels();

  std::vector<TrainedModel> out;
  for (const auto& mc : cfg.models) {
    const std::string code = lower(to_string(mc.kind));
    TrainedModel tm{mc.kind, {}, std::string(to_string(mc.weighting)), 0, std::nan(""), 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    timer.run("fit:" + code, [&] {
      const TrainingSet ts = training_set(cfg, data.split.train, mc.kind);
      const Matrix X = scaler.transform(ts.data.feature_matrix());
      const std::vector<int> y = ts.data.labels();
      ModelParams params = cfg.params;
      params.gpc.max_train = mc.max_train;
      SampleWeighting sw;
      sw.classes = ts.weights;
      tm.model.scaler = scaler;
      tm.model.model = fit_model(mc.kind, X, y, sw, params, seeds.model(mc.kind));
      tm.train_rows = ts.data.size();
      const FitInfo& info = tm.model.model->info();
      if (cfg.require_convergence && !info.converged) {
        fail(ErrorCode::NonConvergence, fmt::format("{} stopped after {} iterations without converging",
                                                    display_name(mc.kind), info.iterations));
      }
    });
    tm.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!y_val.empty()) {
      timer.run("validate:" + code, [&] {
        const std::vector<int> pred = tm.model.predict(X_val);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == y_val[i];
        tm.validation_accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
      });
    }
    out.push_back(std::move(tm));
  }
  return out;
}

std::vector<EvaluatedModel> evaluate_models(const std::vector<std::pair<ModelKind, const PipelineModel*>>& models,
                                            const GazeDataset& test, StageTimer& timer) {
  const Matrix X = test.feature_matrix();
  const std::vector<int> y = test.labels();
  std::vector<EvaluatedModel> out;
  for (const auto& [kind, pm] : models) {
    out.push_back(timer.run("evaluate:" + lower(to_string(kind)), [&, kind = kind, pm = pm] {
      const Vector scores = pm->decision_scores(X);
      const double thr = pm->model->threshold();
      std::vector<int> pred(y.size());
      for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = scores[static_cast<Eigen::Index>(i)] > thr ? 1 : 0;
      const ConfusionMatrix cm = confusion(y, pred);
      const std::span<const double> s(scores.data(), static_cast<std::size_t>(scores.size()));
      return EvaluatedModel{kind, cm, metrics(cm, s, y)};
    }));
  }
  return out;
}

// ------------------------------------------------------------- experiments

namespace {

Json models_json(const std::vector<TrainedModel>& trained) {
  Json arr = Json::array();
  for (const auto& t : trained) {
    const FitInfo& info = t.model.model->info();
    arr.push_back({{"model", to_string(t.kind)},
                   {"name", display_name(t.kind)},
                   {"file", model_file(t.kind)},
                   {"weighting", t.weighting},
                   {"train_rows", t.train_rows},
                   {"converged", info.converged},
                   {"iterations", info.iterations},
                   {"validation_accuracy", nullable(t.validation_accuracy)},
                   {"fit_seconds", t.fit_seconds}});
  }
  return arr;
}

Json metrics_json(const std::vector<EvaluatedModel>& evaluated) {
  Json arr = Json::array();
  for (const auto& e : evaluated) {
    arr.push_back({{"model", to_string(e.kind)},
                   {"confusion", {{"tp", e.confusion.tp}, {"fp", e.confusion.fp}, {"tn", e.confusion.tn}, {"fn", e.confusion.fn}}},
                   {"accuracy", nullable(e.metrics.accuracy.value)},
                   {"sensitivity", nullable(e.metrics.sensitivity.value)},
                   {"specificity", nullable(e.metrics.specificity.value)},
                   {"precision", nullable(e.metrics.precision.value)},
                   {"f1", nullable(e.metrics.f1.value)},
                   {"auc", nullable(e.metrics.auc.value)},
                   {"auc_from_labels", e.metrics.auc_from_labels}});
  }
  return arr;
}

Report report_for(const RunConfig& cfg, const std::vector<EvaluatedModel>& evaluated) {
  std::vector<ModelMetrics> mm;
  for (const auto& e : evaluated) mm.push_back({std::string(display_name(e.kind)), e.metrics});
  return render_report(std::move(mm), cfg.test_kind);
}

void write_models(const RunConfig& cfg, const std::vector<TrainedModel>& trained,
                  std::vector<std::pair<std::string, std::string>>& outputs) {
  for (const auto& t : trained) {
    std::ostringstream text;
    save_pipeline_model(text, t.model);
    emit(cfg.output_dir, model_file(t.kind), text.str(), outputs);
  }
}

void write_report(const RunConfig& cfg, ExperimentResult& r) {
  emit(cfg.output_dir, "report.csv", r.report.csv, r.outputs);
  emit(cfg.output_dir, "report.txt", r.report.text, r.outputs);
}

void write_manifest(ExperimentResult& r, Json& manifest, const fs::path& path, const StageTimer& timer) {
  r.outputs_digest = digest_of(r.outputs);
  finish_manifest(manifest, r.outputs, r.outputs_digest, timer);
  r.wall_seconds = timer.total();
  r.manifest_path = path;
  write_file_atomic(path, manifest.dump(2) + "\n");
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg) {
  StageTimer timer;
  const PreparedData data = prepare_data(cfg, timer);
  const auto trained = train_models(cfg, data, timer);
  std::vector<std::pair<ModelKind, const PipelineModel*>> refs;
  for (const auto& t : trained) refs.emplace_back(t.kind, &t.model);

  ExperimentResult r;
  r.evaluated = evaluate_models(refs, data.split.test, timer);
  r.report = timer.run("report", [&] { return report_for(cfg, r.evaluated); });
  Json manifest = base_manifest(cfg, data, "experiment");
  manifest["models"] = models_json(trained);
  manifest["metrics"] = metrics_json(r.evaluated);
  timer.run("write", [&] {
    write_models(cfg, trained, r.outputs);
    write_report(cfg, r);
  });
  in_stage("write", [&] { write_manifest(r, manifest, cfg.output_dir / "manifest.json", timer); });
  return r;
}

ExperimentResult run_training(const RunConfig& cfg) {
  StageTimer timer;
  const PreparedData data = prepare_data(cfg, timer);
  const auto trained = train_models(cfg, data, timer);
  ExperimentResult r;
  Json manifest = base_manifest(cfg, data, "train");
  manifest["models"] = models_json(trained);
  timer.run("write", [&] { write_models(cfg, trained, r.outputs); });
  in_stage("write", [&] { write_manifest(r, manifest, cfg.output_dir / "train_manifest.json", timer); });
  return r;
}

ExperimentResult run_evaluation(const RunConfig& cfg, const std::optional<fs::path>& models_dir) {
  StageTimer timer;
  const PreparedData data = prepare_data(cfg, timer);
  const fs::path dir = models_dir.value_or(cfg.output_dir / "models");
  std::vector<std::pair<ModelKind, PipelineModel>> loaded;
  timer.run("load", [&] {
    for (const auto& mc : cfg.models) {
      const fs::path path = dir / (lower(to_string(mc.kind)) + ".model");
      const std::string text = read_file(path);
      std::istringstream in(text);
      PipelineModel pm = load_pipeline_model(in, path.string());
      if (pm.model->kind() != mc.kind) {
        fail(ErrorCode::MalformedRow, fmt::format("{}: holds a {} model, expected {}", path.string(),
                                                  to_string(pm.model->kind()), to_string(mc.kind)));
      }
      if (pm.model->n_features() != kFeatureCount) {
        fail(ErrorCode::DimensionMismatch, fmt::format("{}: model takes {} features, data has {}", path.string(),
                                                       pm.model->n_features(), kFeatureCount));
      }
      loaded.emplace_back(mc.kind, std::move(pm));
    }
  });
  std::vector<std::pair<ModelKind, const PipelineModel*>> refs;
  for (const auto& [k, pm] : loaded) refs.emplace_back(k, &pm);

  ExperimentResult r;
  r.evaluated = evaluate_models(refs, data.split.test, timer);
  r.report = timer.run("report", [&] { return report_for(cfg, r.evaluated); });
  Json manifest = base_manifest(cfg, data, "evaluate");
  manifest["models_dir"] = dir.string();
  manifest["metrics"] = metrics_json(r.evaluated);
  timer.run("write", [&] { write_report(cfg, r); });
  in_stage("write", [&] { write_manifest(r, manifest, cfg.output_dir / "manifest.json", timer); });
  return r;
}

// ----------------------------------------------------------------- novelty

const std::vector<EyePlane>& novelty_projections() {
  static const std::vector<EyePlane> planes = [] {
    std::vector<EyePlane> p;
    const std::pair<const char*, int> eyes[] = {{"left", 1}, {"right", 4}, {"cyclopean", 7}};
    for (const auto& [eye, base] : eyes) {
      p.push_back({eye, "xy", {base, base + 1}});
      p.push_back({eye, "xz", {base, base + 2}});
    }
    return p;
  }();
  return planes;
}

NoveltyResult run_novelty(const RunConfig& cfg) {
  StageTimer timer;
  const PreparedData data = prepare_data(cfg, timer);
  const RunSeeds seeds = run_seeds(cfg.seed);
  const NoveltyConfig& nc = cfg.novelty;

  Matrix train, regular, abnormal;
  timer.run("novelty-sample", [&] {
    std::vector<std::size_t> pool, controls, concussed;
    const GazeDataset& tr = data.split.train;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      if (!nc.control_only || tr.frame(i).label == Label::Control) pool.push_back(i);
    }
    const GazeDataset& te = data.split.test;
    for (std::size_t i = 0; i < te.size(); ++i) {
      (te.frame(i).label == Label::Control ? controls : concussed).push_back(i);
    }
    if (pool.size() < 2) {
      fail(ErrorCode::InsufficientClassSamples,
           fmt::format("novelty training needs at least 2 {} frames, the training split has {}",
                       nc.control_only ? "control" : "training", pool.size()));
    }
    const auto tr_rows = sample_rows(pool, nc.train_samples, derive_seed(seeds.novelty, 0));
    const auto reg_rows = sample_rows(controls, nc.test_control, derive_seed(seeds.novelty, 1));
    const auto ab_rows = sample_rows(concussed, nc.test_concussed, derive_seed(seeds.novelty, 2));
    train = tr.select(tr_rows).feature_matrix();
    regular = te.select(reg_rows).feature_matrix();
    abnormal = te.select(ab_rows).feature_matrix();
  });

  NoveltyResult r;
  r.train_rows = static_cast<std::size_t>(train.rows());
  r.regular_rows = static_cast<std::size_t>(regular.rows());
  r.abnormal_rows = static_cast<std::size_t>(abnormal.rows());
  const fs::path root = cfg.output_dir;
  Json fits = Json::array();
  const auto& planes = novelty_projections();
  for (std::size_t p = 0; p < planes.size(); ++p) {
    const EyePlane& ep = planes[p];
    const std::string tag = ep.eye + "_" + ep.plane;
    const Matrix t2 = columns(train, ep.dims);
    const GridBounds bounds = padded_bounds({&train, &regular, &abnormal}, ep.dims);

    const std::uint64_t forest_seed = derive_seed(seeds.novelty, 10 + p);
    const auto forest = timer.run("iforest:" + tag, [&] { return fit_isolation_forest(t2, nc.iforest, forest_seed); });
    const auto svm = timer.run("ocsvm:" + tag, [&] { return fit_ocsvm(t2, nc.ocsvm); });
    if (!svm.converged()) {
      fits.push_back({{"grid", "ocsvm_" + tag}, {"converged", false}, {"iterations", svm.iterations()}});
    }

    const std::pair<std::string, const NoveltyModel*> methods[] = {{"iforest", &forest}, {"ocsvm", &svm}};
    for (const auto& [method, model] : methods) {
      timer.run("grid:" + method + "_" + tag, [&, &method = method, model = model] {
        const BoundaryGrid g = export_boundary_grid(*model, train, regular, abnormal, ep.dims, nc.resolution, bounds);
        const std::string rel = "novelty/" + method + "_" + tag + ".csv";
        emit(root, rel, grid_csv(g), r.outputs);
        r.grids.push_back({method, ep.eye, ep.plane, root / rel, g.negative_fraction(PointTag::Train),
                           g.negative_fraction(PointTag::Regular), g.negative_fraction(PointTag::Abnormal)});
      });
    }
  }

  std::sort(r.grids.begin(), r.grids.end(), [](const NoveltyGridResult& a, const NoveltyGridResult& b) {
    return std::tie(a.method, a.eye, a.plane) < std::tie(b.method, b.eye, b.plane);
  });
  std::string summary = "method,eye,plane,negative_train,negative_regular,negative_abnormal\n";
  for (const auto& g : r.grids) {
    summary += fmt::format("{},{},{},{},{},{}\n", g.method, g.eye, g.plane, fraction_text(g.negative_train),
                           fraction_text(g.negative_regular), fraction_text(g.negative_abnormal));
  }
  in_stage("write", [&] { emit(root, "novelty/summary.csv", summary, r.outputs); });

  Json manifest = base_manifest(cfg, data, "novelty");
  manifest["novelty"] = {{"train_pool", nc.control_only ? "control" : "all"},
                         {"train_rows", r.train_rows},
                         {"regular_rows", r.regular_rows},
                         {"abnormal_rows", r.abnormal_rows},
                         {"requested", {{"train", nc.train_samples}, {"regular", nc.test_control}, {"abnormal", nc.test_concussed}}},
                         {"resolution", nc.resolution},
                         {"iforest_seeds", [&] {
                            Json s = Json::array();
                            for (std::size_t p = 0; p < planes.size(); ++p) s.push_back(derive_seed(seeds.novelty, 10 + p));
                            return s;
                          }()},
                         {"unconverged", fits}};
  r.outputs_digest = digest_of(r.outputs);
  finish_manifest(manifest, r.outputs, r.outputs_digest, timer);
  r.wall_seconds = timer.total();
  in_stage("write", [&] { write_file_atomic(root / "novelty" / "manifest.json", manifest.dump(2) + "\n"); });
  return r;
}

// ---------------------------------------------------------------- reproduce

ReproduceResult reproduce(const KeyValueConfig& base, const fs::path& out) {
  ReproduceResult r;
  for (TestKind kind : {TestKind::SP, TestKind::VMS}) {
    KeyValueConfig kv = base;
    const std::string sub = kind == TestKind::SP ? "sp" : "vms";
    kv.set("experiment", "test_kind", to_string(kind));
    kv.set("experiment", "output_dir", (out / sub).string());
    const RunConfig cfg = in_stage("config", [&] { return RunConfig::from_config(kv); });
    (kind == TestKind::SP ? r.sp : r.vms) = run_experiment(cfg);
    (kind == TestKind::SP ? r.novelty_sp : r.novelty_vms) = run_novelty(cfg);
  }
  Json summary;
  summary["tool"] = "gazescreen";
  summary["command"] = "reproduce";
  summary["runs"] = {
      {{"name", "sp"}, {"outputs_digest", r.sp.outputs_digest}, {"wall_seconds", r.sp.wall_seconds}},
      {{"name", "vms"}, {"outputs_digest", r.vms.outputs_digest}, {"wall_seconds", r.vms.wall_seconds}},
      {{"name", "sp/novelty"}, {"outputs_digest", r.novelty_sp.outputs_digest}, {"wall_seconds", r.novelty_sp.wall_seconds}},
      {{"name", "vms/novelty"}, {"outputs_digest", r.novelty_vms.outputs_digest}, {"wall_seconds", r.novelty_vms.wall_seconds}}};
  in_stage("write", [&] { write_file_atomic(out / "reproduce.json", summary.dump(2) + "\n"); });
  return r;
}

std::string render_report_files(const std::vector<fs::path>& csv_paths) {
  std::string text;
  for (const auto& path : csv_paths) {
    const std::string contents = in_stage("report", [&] { return read_file(path); });
    std::istringstream in(contents);
    const auto cells = in_stage("report", [&] { return parse_report_csv(in, path.string()); });
    std::vector<ModelMetrics> models;
    for (const auto& cell : cells) {
      auto it = std::find_if(models.begin(), models.end(), [&](const ModelMetrics& m) { return m.model == cell.model; });
      if (it == models.end()) {
        models.push_back({cell.model, {}});
        it = std::prev(models.end());
      }
      const std::size_t k = static_cast<std::size_t>(
          std::find(kMetricNames.begin(), kMetricNames.end(), cell.metric) - kMetricNames.begin());
      Metric* slots[] = {&it->metrics.accuracy, &it->metrics.sensitivity, &it->metrics.specificity,
                         &it->metrics.precision, &it->metrics.f1, &it->metrics.auc};
      if (k == kMetricNames.size()) {
        fail(ErrorCode::MalformedRow, fmt::format("{}: unknown metric '{}'", path.string(), cell.metric));
      }
      *slots[k] = std::isnan(cell.value_percent) ? Metric::undefined("n/a in " + path.string())
                                                 : Metric::of(cell.value_percent / 100.0);
    }
    if (!text.empty()) text += "\n";
    text += render_report(std::move(models), path.string()).text;
  }
  return text;
}

}  // namespace gazescreen
