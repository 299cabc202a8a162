#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gazescreen/matrix.hpp"

namespace gazescreen {

enum class TestKind { SP, VMS };
enum class Label : std::uint8_t { Control = 0, Concussed = 1 };

std::string_view to_string(TestKind kind);
TestKind parse_test_kind(std::string_view text);

/// Number of model features per frame: t, three direction vectors, two pupil
/// diameters and two openness values.
inline constexpr std::size_t kFeatureCount = 14;

inline constexpr std::array<std::string_view, 16> kCsvColumns = {
    "session_id", "t",  "lx", "ly", "lz",      "rx",      "ry",    "rz",
    "cx",         "cy", "cz", "lpupil", "rpupil", "lopen", "ropen", "label"};

/// One timestamped eye-tracking sample.
struct GazeFrame {
  double t = 0.0;
  Eigen::Vector3d left_dir = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d right_dir = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d cyclopean_dir = Eigen::Vector3d::UnitZ();
  double left_pupil_mm = 3.5;
  double right_pupil_mm = 3.5;
  double left_openness = 1.0;
  double right_openness = 1.0;
  Label label = Label::Control;

  /// Feature vector in the fixed 14-column order.
  std::array<double, kFeatureCount> features() const;
};

struct ClassCounts {
  std::size_t control = 0;
  std::size_t concussed = 0;
  std::size_t total() const { return control + concussed; }
  std::size_t of(Label l) const { return l == Label::Control ? control : concussed; }
};

/// Ordered frames with a per-frame session identifier.
class GazeDataset {
 public:
  GazeDataset() = default;
  explicit GazeDataset(TestKind kind) : kind_(kind) {}

  TestKind test_kind() const { return kind_; }
  std::size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }

  const std::vector<GazeFrame>& frames() const { return frames_; }
  const std::vector<std::string>& session_ids() const { return session_ids_; }
  const GazeFrame& frame(std::size_t i) const { return frames_[i]; }
  const std::string& session_id(std::size_t i) const { return session_ids_[i]; }

  void push_back(GazeFrame frame, std::string session_id);
  void append(const GazeDataset& other);
  void reserve(std::size_t n);

  ClassCounts class_counts() const;

  /// Frames at `indices`, in the given order.
  GazeDataset select(std::span<const std::size_t> indices) const;

  /// Row-major n x 14 feature matrix and the 0/1 label vector.
  Matrix feature_matrix() const;
  std::vector<int> labels() const;

  friend bool operator==(const GazeDataset& a, const GazeDataset& b);

 private:
  TestKind kind_ = TestKind::SP;
  std::vector<GazeFrame> frames_;
  std::vector<std::string> session_ids_;
};

bool operator==(const GazeFrame& a, const GazeFrame& b);

// ---------------------------------------------------------------- CSV I/O

GazeDataset read_csv(std::istream& in, TestKind kind, std::string_view source = "<stream>");
GazeDataset load_csv(const std::filesystem::path& path, TestKind kind);

/// Shortest round-trip decimal representation; load_csv(write_csv(ds)) == ds.
void write_csv(std::ostream& out, const GazeDataset& ds);
void write_csv(const std::filesystem::path& path, const GazeDataset& ds);

// -------------------------------------------------------------- splitting

struct SplitConfig {
  double test_fraction = 0.2;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  bool stratified = true;
  // Assigns whole sessions to one partition; sizes then only approximate
  // the frame-level targets.
  bool session_level = false;

  void validate() const;
};

struct Split {
  GazeDataset train;
  GazeDataset validation;
  GazeDataset test;
};

/// Index form of a split; each vector is sorted ascending.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// Frame-level partition sizes: |test| = round(test_fraction N),
/// |val| = round(validation_fraction (N - |test|)).
SplitSizes planned_split_sizes(std::size_t n, const SplitConfig& cfg);

SplitIndices split_indices(const GazeDataset& ds, const SplitConfig& cfg);
Split split(const GazeDataset& ds, const SplitConfig& cfg);

// ---------------------------------------------------------- class balance

struct ClassWeights {
  double weight_control = 1.0;
  double weight_concussed = 1.0;
  double of(Label l) const { return l == Label::Control ? weight_control : weight_concussed; }
  double of(int label) const { return label == 0 ? weight_control : weight_concussed; }
};

/// Inverse-frequency weights N / (2 N_c).
ClassWeights class_weights(const ClassCounts& counts);
ClassWeights class_weights(const GazeDataset& ds);

/// Exactly `per_class` frames of each class, drawn without replacement and
/// returned in original order.
GazeDataset balanced_subset(const GazeDataset& ds, std::size_t per_class, std::uint64_t seed);
std::vector<std::size_t> balanced_subset_indices(const GazeDataset& ds, std::size_t per_class,
                                                 std::uint64_t seed);

/// Stratified random subsample of at most `max_frames` frames (all frames
/// when max_frames == 0 or >= size). Original order is kept.
GazeDataset stratified_subsample(const GazeDataset& ds, std::size_t max_frames, std::uint64_t seed);

}  // namespace gazescreen
