#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "gazescreen/gaze_data.hpp"

namespace gazescreen {

/// Parameters of the eye-movement model. Defaults differ by label.
struct ImpairmentParams {
  double pursuit_gain = 0.95;
  double latency_s = 0.01;
  double noise_deg = 0.3;
  double intrusion_rate_hz = 0.1;
  double intrusion_amp_deg = 0.5;

  static ImpairmentParams control();
  static ImpairmentParams concussed();
  static ImpairmentParams defaults(Label label);

  void validate() const;
};

/// One simulated SP or VMS session.
///
/// SP: the target sweeps sinusoidally between two endpoints
/// `target_extent_m` apart at `viewing_distance_m`, one endpoint-to-endpoint
/// sweep per metronome beat; first along the horizontal axis for
/// `sp_axis_duration_s`, then along the vertical axis for the same time.
///
/// VMS: the target is held straight ahead in the head frame while the body
/// yaws +/- `vms_sweep_deg`, one half-rotation per beat, for
/// `vms_repetitions` over-and-back cycles. All directions are world-frame.
struct SessionSpec {
  TestKind test_kind = TestKind::SP;
  double sample_rate_hz = 90.0;
  double metronome_bpm = 180.0;
  double viewing_distance_m = 0.9144;
  double target_extent_m = 0.9144;
  int vms_repetitions = 10;
  double sp_axis_duration_s = 10.0;
  double vms_sweep_deg = 90.0;
  // Square-wave intrusion width; conjugate, horizontal, random sign.
  double intrusion_duration_s = 0.2;
  // Added to both pupils of concussed sessions. Zero keeps pupils label-free.
  double pupil_label_effect_mm = 0.0;
  ImpairmentParams impairment;
  Label label = Label::Control;
  std::uint64_t seed = 0;

  /// Protocol defaults for `kind` with the impairment defaults of `label`.
  static SessionSpec defaults(TestKind kind, Label label, std::uint64_t seed = 0);

  double duration_s() const;
  std::size_t frame_count() const;
  /// Sweep frequency of one over-and-back cycle, bpm / 120.
  double cycle_hz() const { return metronome_bpm / 120.0; }
  /// SP endpoint half-angle in degrees, atan(extent / 2 / distance).
  double sp_half_angle_deg() const;

  void validate() const;
};

struct GazeAngles {
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
};

/// x right, y up, z forward.
Eigen::Vector3d direction_from_angles(double yaw_deg, double pitch_deg);
GazeAngles angles_from_direction(const Eigen::Vector3d& dir);
double angular_error_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

GazeAngles target_angles(const SessionSpec& spec, double t);
/// Unit gaze-target direction at time t in [0, duration].
Eigen::Vector3d target_trajectory(const SessionSpec& spec, double t);

/// Frames at t_k = k / sample_rate_hz, k < frame_count(). Deterministic in
/// (spec, seed).
GazeDataset simulate_session(const SessionSpec& spec, const std::string& session_id = "session");

struct CohortSpec {
  TestKind test_kind = TestKind::SP;
  std::size_t n_control = 0;
  std::size_t n_concussed = 0;
  std::uint64_t base_seed = 0;
  ImpairmentParams control_impairment = ImpairmentParams::control();
  ImpairmentParams concussed_impairment = ImpairmentParams::concussed();
  double sample_rate_hz = 90.0;
  double sp_axis_duration_s = 10.0;
  double pupil_label_effect_mm = 0.0;
};

/// Control sessions first, then concussed; session ids are unique and each
/// session's seed is derived from base_seed and its position.
GazeDataset generate_cohort(const CohortSpec& spec);
GazeDataset generate_cohort(std::size_t n_control, std::size_t n_concussed, TestKind kind, std::uint64_t base_seed);

/// Spec files hold one `[session-id]` section per session, keys named after
/// SessionSpec / ImpairmentParams fields. `test_kind` and `label` select
/// the defaults the remaining keys override.
struct NamedSessionSpec {
  std::string session_id;
  SessionSpec spec;
};
std::vector<NamedSessionSpec> parse_session_specs(std::istream& in, std::string_view source = "<spec>");
std::vector<NamedSessionSpec> load_session_specs(const std::filesystem::path& path);

}  // namespace gazescreen
