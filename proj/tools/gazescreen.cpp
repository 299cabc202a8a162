// gazescreen command-line front end.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "gazescreen/error.hpp"
#include "gazescreen/io.hpp"
#include "gazescreen/pipeline.hpp"
#include "gazescreen/stimulus.hpp"

namespace fs = std::filesystem;
using namespace gazescreen;

namespace {

// Flag name -> (section, key). Flags are the kebab-case key names.
struct KeyFlag {
  const char* section;
  const char* key;
  const char* help;
};

const std::vector<KeyFlag>& key_flags() {
  static const std::vector<KeyFlag> flags{
      {"experiment", "test_kind", "SP or VMS"},
      {"experiment", "seed", "master seed"},
      {"experiment", "output_dir", "output directory"},
      {"experiment", "models", "comma-separated model codes or 'all'"},
      {"experiment", "weighting", "class-weights or balanced-subset"},
      {"experiment", "balanced_per_class", "frames per class in balanced subsets"},
      {"experiment", "allow_weighting_override", "let NB/ADA/GPC use class weights (true/false)"},
      {"experiment", "require_convergence", "fail with exit code 4 when a fit does not converge (true/false)"},
      {"data", "source", "simulate or csv"},
      {"data", "path", "input CSV when source = csv"},
      {"data", "n_control", "simulated control sessions"},
      {"data", "n_concussed", "simulated concussed sessions"},
      {"data", "sample_rate_hz", "simulation sample rate"},
      {"data", "sp_axis_duration_s", "SP sweep time per axis"},
      {"data", "pupil_label_effect_mm", "pupil offset of concussed sessions"},
      {"split", "test_fraction", "held-out test fraction"},
      {"split", "validation_fraction", "validation fraction of the remainder"},
      {"split", "stratified", "stratify the split by label (true/false)"},
      {"split", "session_level", "keep sessions whole (true/false)"},
      {"novelty", "train_samples", "novelty training frames"},
      {"novelty", "test_control", "regular test frames"},
      {"novelty", "test_concussed", "abnormal test frames"},
      {"novelty", "resolution", "grid nodes per axis"},
      {"novelty", "train_pool", "control or all"},
      {"novelty", "nu", "one-class SVM nu"},
      {"novelty", "n_trees", "isolation trees"},
      {"novelty", "subsample", "isolation tree subsample size"},
  };
  return flags;
}

std::string kebab(std::string s) {
  for (char& c : s) {
    if (c == '_') c = '-';
  }
  return s;
}

struct Options {
  std::string config_path;
  std::map<std::string, std::string> flag_values;  // "section.key" -> value
  std::vector<std::string> assignments;
};

KeyValueConfig merged_config(const Options& opt) {
  KeyValueConfig kv = opt.config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(opt.config_path);
  apply_environment(kv);
  for (const auto& [path, value] : opt.flag_values) apply_assignment(kv, path + "=" + value);
  for (const auto& a : opt.assignments) apply_assignment(kv, a);
  return kv;
}

RunConfig run_config(const Options& opt) {
  return in_stage("config", [&] { return RunConfig::from_config(merged_config(opt)); });
}

void print_outputs(const fs::path& root, const std::vector<std::pair<std::string, std::string>>& outputs,
                   const std::string& digest) {
  for (const auto& [rel, hash] : outputs) std::cerr << "  wrote " << (root / rel).string() << "\n";
  std::cerr << "  outputs digest " << digest << "\n";
}

int cmd_simulate(const Options& opt, const std::string& out_path, const std::string& spec_path) {
  const RunConfig cfg = run_config(opt);
  const fs::path out = out_path.empty() ? cfg.output_dir / "dataset.csv" : fs::path(out_path);
  GazeDataset ds = in_stage("simulate", [&] {
    if (spec_path.empty()) {
      CohortSpec spec = cfg.data.cohort;
      spec.test_kind = cfg.test_kind;
      spec.base_seed = run_seeds(cfg.seed).cohort;
      return generate_cohort(spec);
    }
    const auto specs = load_session_specs(spec_path);
    if (specs.empty()) fail(ErrorCode::InvalidSpec, fmt::format("{}: no sessions", spec_path));
    GazeDataset all(specs.front().spec.test_kind);
    for (const auto& s : specs) {
      if (s.spec.test_kind != all.test_kind()) {
        fail(ErrorCode::InvalidSpec, fmt::format("{}: session '{}' mixes test kinds", spec_path, s.session_id));
      }
      all.append(simulate_session(s.spec, s.session_id));
    }
    return all;
  });
  in_stage("write", [&] {
    std::ostringstream text;
    write_csv(text, ds);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file_atomic(out, text.str());
    const ClassCounts c = ds.class_counts();
    std::cerr << fmt::format("wrote {} ({} frames: {} control, {} concussed), git blob {}\n", out.string(), ds.size(),
                             c.control, c.concussed, git_blob_hash(text.str()));
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concussion-screening gaze classifier: simulate sessions, train, evaluate, export novelty grids."};
  app.require_subcommand(1);
  app.fallthrough();

  Options opt;
  app.add_option("-c,--config", opt.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", opt.assignments, "override any key: section.key=value (repeatable)");
  for (const auto& f : key_flags()) {
    const std::string path = std::string(f.section) + "." + f.key;
    app.add_option_function<std::string>(
        "--" + kebab(f.key), [&opt, path](const std::string& v) { opt.flag_values[path] = v; },
        fmt::format("[{}] {}: {}", f.section, f.key, f.help));
  }

  auto* simulate = app.add_subcommand("simulate", "write a simulated cohort as gaze CSV");
  std::string sim_out, sim_spec;
  simulate->add_option("-o,--out", sim_out, "CSV path (default <output_dir>/dataset.csv)");
  simulate->add_option("--spec", sim_spec, "session spec file instead of the cohort settings")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "fit the configured models and save them");
  auto* evaluate = app.add_subcommand("evaluate", "score saved models on the test split and write the report");
  std::string models_dir;
  evaluate->add_option("--models-dir", models_dir, "model directory (default <output_dir>/models)");
  auto* experiment = app.add_subcommand("experiment", "train and evaluate in one run");
  auto* novelty = app.add_subcommand("novelty", "fit isolation forest and one-class SVM, export boundary grids");
  auto* report = app.add_subcommand("report", "print report CSV files as tables");
  std::vector<std::string> report_files;
  report->add_option("files", report_files, "report.csv files (default <output_dir>/report.csv)");
  auto* reproduce_cmd = app.add_subcommand("reproduce", "SP and VMS experiments plus novelty grids");
  auto* config_cmd = app.add_subcommand("config", "print the effective configuration");
  bool defaults_only = false;
  config_cmd->add_flag("--defaults", defaults_only, "print the built-in defaults instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(opt, sim_out, sim_spec);
    if (*config_cmd) {
      std::cout << (defaults_only ? default_config_text(TestKind::SP) : config_text(run_config(opt)));
      return 0;
    }
    if (*train) {
      const RunConfig cfg = run_config(opt);
      const auto r = run_training(cfg);
      print_outputs(cfg.output_dir, r.outputs, r.outputs_digest);
      return 0;
    }
    if (*evaluate || *experiment) {
      const RunConfig cfg = run_config(opt);
      const auto r = *evaluate ? run_evaluation(cfg, models_dir.empty() ? std::nullopt
                                                                        : std::optional<fs::path>(models_dir))
                               : run_experiment(cfg);
      std::cout << r.report.text;
      print_outputs(cfg.output_dir, r.outputs, r.outputs_digest);
      return 0;
    }
    if (*novelty) {
      const RunConfig cfg = run_config(opt);
      const auto r = run_novelty(cfg);
      std::cout << read_file(cfg.output_dir / "novelty" / "summary.csv");
      print_outputs(cfg.output_dir, r.outputs, r.outputs_digest);
      return 0;
    }
    if (*report) {
      std::vector<fs::path> files(report_files.begin(), report_files.end());
      if (files.empty()) files.push_back(run_config(opt).output_dir / "report.csv");
      std::cout << render_report_files(files);
      return 0;
    }
    if (*reproduce_cmd) {
      const KeyValueConfig kv = merged_config(opt);
      const RunConfig cfg = in_stage("config", [&] { return RunConfig::from_config(kv); });
      const auto r = reproduce(kv, cfg.output_dir);
      std::cout << r.sp.report.text << "\n" << r.vms.report.text << "\n";
      std::cout << read_file(cfg.output_dir / "sp" / "novelty" / "summary.csv") << "\n";
      std::cout << read_file(cfg.output_dir / "vms" / "novelty" / "summary.csv");
      std::cerr << fmt::format("SP {:.1f} s, VMS {:.1f} s, novelty {:.1f} s + {:.1f} s; summary in {}\n",
                               r.sp.wall_seconds, r.vms.wall_seconds, r.novelty_sp.wall_seconds,
                               r.novelty_vms.wall_seconds, (cfg.output_dir / "reproduce.json").string());
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
