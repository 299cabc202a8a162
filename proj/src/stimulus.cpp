#include "gazescreen/stimulus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "gazescreen/config.hpp"
#include "gazescreen/error.hpp"
#include "gazescreen/rng.hpp"

namespace gazescreen {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kPupilMeanMm = 3.5;
constexpr double kPupilSdMm = 0.1;
constexpr double kOpennessSd = 0.02;

}  // namespace

ImpairmentParams ImpairmentParams::control() { return {0.95, 0.01, 0.3, 0.1, 0.5}; }
ImpairmentParams ImpairmentParams::concussed() { return {0.75, 0.08, 1.2, 1.0, 3.0}; }
ImpairmentParams ImpairmentParams::defaults(Label label) {
  return label == Label::Control ? control() : concussed();
}

void ImpairmentParams::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidSpec, what); };
  if (!(pursuit_gain > 0.0 && pursuit_gain <= 1.2)) bad(fmt::format("pursuit_gain {} outside (0, 1.2]", pursuit_gain));
  if (!(latency_s >= 0.0)) bad(fmt::format("latency_s {} is negative", latency_s));
  if (!(noise_deg >= 0.0 && noise_deg < 10.0)) bad(fmt::format("noise_deg {} outside [0, 10)", noise_deg));
  if (!(intrusion_rate_hz >= 0.0)) bad(fmt::format("intrusion_rate_hz {} is negative", intrusion_rate_hz));
  if (!(intrusion_amp_deg >= 0.0)) bad(fmt::format("intrusion_amp_deg {} is negative", intrusion_amp_deg));
}

SessionSpec SessionSpec::defaults(TestKind kind, Label label, std::uint64_t seed) {
  SessionSpec s;
  s.test_kind = kind;
  s.metronome_bpm = kind == TestKind::SP ? 180.0 : 50.0;
  s.impairment = ImpairmentParams::defaults(label);
  s.label = label;
  s.seed = seed;
  return s;
}

double SessionSpec::duration_s() const {
  if (test_kind == TestKind::SP) return 2.0 * sp_axis_duration_s;
  // One repetition is over and back: two beats.
  return static_cast<double>(vms_repetitions) * 2.0 * 60.0 / metronome_bpm;
}

std::size_t SessionSpec::frame_count() const {
  return static_cast<std::size_t>(std::llround(duration_s() * sample_rate_hz));
}

double SessionSpec::sp_half_angle_deg() const {
  return std::atan(0.5 * target_extent_m / viewing_distance_m) / kDegToRad;
}

void SessionSpec::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidSpec, what); };
  if (!(sample_rate_hz > 0.0)) bad(fmt::format("sample_rate_hz {} must be positive", sample_rate_hz));
  if (!(metronome_bpm > 0.0)) bad(fmt::format("metronome_bpm {} must be positive", metronome_bpm));
  if (!(sample_rate_hz >= 2.0 * metronome_bpm / 60.0)) {
    bad(fmt::format("sample_rate_hz {} is below twice the beat rate {} Hz", sample_rate_hz, metronome_bpm / 60.0));
  }
  if (!(viewing_distance_m > 0.0)) bad("viewing_distance_m must be positive");
  if (!(target_extent_m > 0.0)) bad("target_extent_m must be positive");
  if (vms_repetitions <= 0) bad(fmt::format("vms_repetitions {} must be positive", vms_repetitions));
  if (!(sp_axis_duration_s > 0.0)) bad("sp_axis_duration_s must be positive");
  if (!(vms_sweep_deg > 0.0 && vms_sweep_deg <= 180.0)) bad("vms_sweep_deg must lie in (0, 180]");
  if (!(intrusion_duration_s > 0.0)) bad("intrusion_duration_s must be positive");
  if (!std::isfinite(pupil_label_effect_mm)) bad("pupil_label_effect_mm must be finite");
  impairment.validate();
}

Eigen::Vector3d direction_from_angles(double yaw_deg, double pitch_deg) {
  const double yaw = yaw_deg * kDegToRad;
  const double pitch = pitch_deg * kDegToRad;
  const double cp = std::cos(pitch);
  return {std::sin(yaw) * cp, std::sin(pitch), std::cos(yaw) * cp};
}

GazeAngles angles_from_direction(const Eigen::Vector3d& dir) {
  const Eigen::Vector3d d = dir.normalized();
  return {std::atan2(d.x(), d.z()) / kDegToRad, std::asin(std::clamp(d.y(), -1.0, 1.0)) / kDegToRad};
}

double angular_error_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  // atan2 form stays accurate for tiny angles, unlike acos of the dot product.
  return std::atan2(a.cross(b).norm(), a.dot(b)) / kDegToRad;
}

GazeAngles target_angles(const SessionSpec& spec, double t) {
  const double duration = spec.duration_s();
  if (!(t >= 0.0 && t <= duration)) {
    fail(ErrorCode::OutOfRangeTime, fmt::format("t = {} outside session [0, {}]", t, duration));
  }
  const double w = 2.0 * std::numbers::pi * spec.cycle_hz();
  if (spec.test_kind == TestKind::VMS) return {-spec.vms_sweep_deg * std::cos(w * t), 0.0};

  const double a = spec.sp_half_angle_deg();
  if (t < spec.sp_axis_duration_s) return {-a * std::cos(w * t), 0.0};
  return {0.0, -a * std::cos(w * (t - spec.sp_axis_duration_s))};
}

Eigen::Vector3d target_trajectory(const SessionSpec& spec, double t) {
  const auto a = target_angles(spec, t);
  return direction_from_angles(a.yaw_deg, a.pitch_deg);
}

GazeDataset simulate_session(const SessionSpec& spec, const std::string& session_id) {
  spec.validate();
  const auto& imp = spec.impairment;
  const std::size_t n = spec.frame_count();
  const double duration = spec.duration_s();

  Rng noise_rng(derive_seed(spec.seed, 1));
  Rng intrusion_rng(derive_seed(spec.seed, 2));
  Rng aux_rng(derive_seed(spec.seed, 3));
  std::normal_distribution<double> unit_normal(0.0, 1.0);

  struct Intrusion {
    double start;
    double offset_deg;
  };
  std::vector<Intrusion> intrusions;
  if (imp.intrusion_rate_hz > 0.0 && imp.intrusion_amp_deg > 0.0) {
    std::exponential_distribution<double> gap(imp.intrusion_rate_hz);
    std::bernoulli_distribution sign;
    for (double t = gap(intrusion_rng); t < duration; t += gap(intrusion_rng)) {
      intrusions.push_back({t, sign(intrusion_rng) ? imp.intrusion_amp_deg : -imp.intrusion_amp_deg});
    }
  }

  GazeDataset ds(spec.test_kind);
  ds.reserve(n);
  const double pupil_shift = spec.label == Label::Concussed ? spec.pupil_label_effect_mm : 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / spec.sample_rate_hz;
    const auto target = target_angles(spec, std::max(t - imp.latency_s, 0.0));

    double intrusion = 0.0;
    for (const auto& e : intrusions) {
      if (e.start > t) break;
      if (t < e.start + spec.intrusion_duration_s) intrusion += e.offset_deg;
    }

    std::array<double, 4> z{};
    for (double& v : z) v = unit_normal(noise_rng);
    const double yaw = imp.pursuit_gain * target.yaw_deg + intrusion;
    const double pitch = imp.pursuit_gain * target.pitch_deg;

    GazeFrame f;
    f.t = t;
    f.left_dir = direction_from_angles(yaw + imp.noise_deg * z[0], pitch + imp.noise_deg * z[1]);
    f.right_dir = direction_from_angles(yaw + imp.noise_deg * z[2], pitch + imp.noise_deg * z[3]);
    f.cyclopean_dir = (f.left_dir + f.right_dir).normalized();
    f.left_pupil_mm = std::max(0.5, kPupilMeanMm + pupil_shift + kPupilSdMm * unit_normal(aux_rng));
    f.right_pupil_mm = std::max(0.5, kPupilMeanMm + pupil_shift + kPupilSdMm * unit_normal(aux_rng));
    f.left_openness = std::clamp(1.0 - std::abs(kOpennessSd * unit_normal(aux_rng)), 0.0, 1.0);
    f.right_openness = std::clamp(1.0 - std::abs(kOpennessSd * unit_normal(aux_rng)), 0.0, 1.0);
    f.label = spec.label;
    ds.push_back(f, session_id);
  }
  return ds;
}

GazeDataset generate_cohort(const CohortSpec& cohort) {
  GazeDataset out(cohort.test_kind);
  const std::size_t total = cohort.n_control + cohort.n_concussed;
  for (std::size_t i = 0; i < total; ++i) {
    const bool control = i < cohort.n_control;
    const Label label = control ? Label::Control : Label::Concussed;
    SessionSpec spec = SessionSpec::defaults(cohort.test_kind, label, derive_seed(cohort.base_seed, i));
    spec.impairment = control ? cohort.control_impairment : cohort.concussed_impairment;
    spec.sample_rate_hz = cohort.sample_rate_hz;
    spec.sp_axis_duration_s = cohort.sp_axis_duration_s;
    spec.pupil_label_effect_mm = cohort.pupil_label_effect_mm;
    const std::size_t index = control ? i : i - cohort.n_control;
    const std::string id =
        fmt::format("{}-{}-{:04d}", to_string(cohort.test_kind), control ? "ctl" : "cnc", index);
    out.append(simulate_session(spec, id));
  }
  return out;
}

GazeDataset generate_cohort(std::size_t n_control, std::size_t n_concussed, TestKind kind, std::uint64_t base_seed) {
  CohortSpec c;
  c.test_kind = kind;
  c.n_control = n_control;
  c.n_concussed = n_concussed;
  c.base_seed = base_seed;
  return generate_cohort(c);
}

// ------------------------------------------------------------ spec files

namespace {

Label parse_label(std::string_view text, std::string_view where) {
  if (text == "control" || text == "0") return Label::Control;
  if (text == "concussed" || text == "1") return Label::Concussed;
  fail(ErrorCode::InvalidSpec, fmt::format("{}: label '{}' must be control or concussed", where, text));
}

constexpr std::array<std::string_view, 17> kSpecKeys = {
    "test_kind",         "label",          "seed",           "sample_rate_hz",    "metronome_bpm",
    "viewing_distance_m", "target_extent_m", "vms_repetitions", "sp_axis_duration_s", "vms_sweep_deg",
    "intrusion_duration_s", "pupil_label_effect_mm", "pursuit_gain", "latency_s", "noise_deg",
    "intrusion_rate_hz", "intrusion_amp_deg"};

}  // namespace

std::vector<NamedSessionSpec> parse_session_specs(std::istream& in, std::string_view source) {
  const auto cfg = KeyValueConfig::parse(in, source);
  std::vector<NamedSessionSpec> out;
  for (const auto& section : cfg.sections()) {
    cfg.require_known_keys(section, kSpecKeys);
    const std::string where = fmt::format("{} [{}]", source, section);
    TestKind kind = TestKind::SP;
    try {
      kind = parse_test_kind(cfg.get_string(section, "test_kind", "SP"));
    } catch (const Error& e) {
      fail(ErrorCode::InvalidSpec, fmt::format("{}: {}", where, e.detail()));
    }
    const Label label = parse_label(cfg.get_string(section, "label", "control"), where);
    SessionSpec s = SessionSpec::defaults(kind, label, cfg.get_uint(section, "seed", 0));
    s.sample_rate_hz = cfg.get_double(section, "sample_rate_hz", s.sample_rate_hz);
    s.metronome_bpm = cfg.get_double(section, "metronome_bpm", s.metronome_bpm);
    s.viewing_distance_m = cfg.get_double(section, "viewing_distance_m", s.viewing_distance_m);
    s.target_extent_m = cfg.get_double(section, "target_extent_m", s.target_extent_m);
    s.vms_repetitions = static_cast<int>(cfg.get_int(section, "vms_repetitions", s.vms_repetitions));
    s.sp_axis_duration_s = cfg.get_double(section, "sp_axis_duration_s", s.sp_axis_duration_s);
    s.vms_sweep_deg = cfg.get_double(section, "vms_sweep_deg", s.vms_sweep_deg);
    s.intrusion_duration_s = cfg.get_double(section, "intrusion_duration_s", s.intrusion_duration_s);
    s.pupil_label_effect_mm = cfg.get_double(section, "pupil_label_effect_mm", s.pupil_label_effect_mm);
    auto& imp = s.impairment;
    imp.pursuit_gain = cfg.get_double(section, "pursuit_gain", imp.pursuit_gain);
    imp.latency_s = cfg.get_double(section, "latency_s", imp.latency_s);
    imp.noise_deg = cfg.get_double(section, "noise_deg", imp.noise_deg);
    imp.intrusion_rate_hz = cfg.get_double(section, "intrusion_rate_hz", imp.intrusion_rate_hz);
    imp.intrusion_amp_deg = cfg.get_double(section, "intrusion_amp_deg", imp.intrusion_amp_deg);
    try {
      s.validate();
    } catch (const Error& e) {
      fail(ErrorCode::InvalidSpec, fmt::format("{}: {}", where, e.detail()));
    }
    out.push_back({section, s});
  }
  return out;
}

std::vector<NamedSessionSpec> load_session_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, fmt::format("cannot open spec file '{}'", path.string()));
  return parse_session_specs(in, path.string());
}

}  // namespace gazescreen
