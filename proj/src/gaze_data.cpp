#include "gazescreen/gaze_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "gazescreen/error.hpp"
#include "gazescreen/io.hpp"
#include "gazescreen/rng.hpp"

namespace gazescreen {

std::string_view to_string(TestKind kind) { return kind == TestKind::SP ? "SP" : "VMS"; }

TestKind parse_test_kind(std::string_view text) {
  if (text == "SP" || text == "sp") return TestKind::SP;
  if (text == "VMS" || text == "vms") return TestKind::VMS;
  fail(ErrorCode::InvalidConfig, fmt::format("unknown test kind '{}' (expected SP or VMS)", text));
}

std::array<double, kFeatureCount> GazeFrame::features() const {
  return {t,
          left_dir.x(),      left_dir.y(),      left_dir.z(),
          right_dir.x(),     right_dir.y(),     right_dir.z(),
          cyclopean_dir.x(), cyclopean_dir.y(), cyclopean_dir.z(),
          left_pupil_mm,     right_pupil_mm,    left_openness, right_openness};
}

bool operator==(const GazeFrame& a, const GazeFrame& b) {
  return a.features() == b.features() && a.label == b.label;
}

void GazeDataset::push_back(GazeFrame frame, std::string session_id) {
  frames_.push_back(std::move(frame));
  session_ids_.push_back(std::move(session_id));
}

void GazeDataset::append(const GazeDataset& other) {
  frames_.insert(frames_.end(), other.frames_.begin(), other.frames_.end());
  session_ids_.insert(session_ids_.end(), other.session_ids_.begin(), other.session_ids_.end());
}

void GazeDataset::reserve(std::size_t n) {
  frames_.reserve(n);
  session_ids_.reserve(n);
}

ClassCounts GazeDataset::class_counts() const {
  ClassCounts c;
  for (const auto& f : frames_) {
    if (f.label == Label::Control) {
      ++c.control;
    } else {
      ++c.concussed;
    }
  }
  return c;
}

GazeDataset GazeDataset::select(std::span<const std::size_t> indices) const {
  GazeDataset out(kind_);
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(frames_.at(i), session_ids_.at(i));
  return out;
}

Matrix GazeDataset::feature_matrix() const {
  Matrix x(static_cast<Eigen::Index>(frames_.size()), static_cast<Eigen::Index>(kFeatureCount));
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    const auto f = frames_[i].features();
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
    }
  }
  return x;
}

std::vector<int> GazeDataset::labels() const {
  std::vector<int> y(frames_.size());
  for (std::size_t i = 0; i < frames_.size(); ++i) y[i] = static_cast<int>(frames_[i].label);
  return y;
}

bool operator==(const GazeDataset& a, const GazeDataset& b) {
  return a.kind_ == b.kind_ && a.frames_ == b.frames_ && a.session_ids_ == b.session_ids_;
}

// ------------------------------------------------------------------ CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

double parse_number(std::string_view field, std::string_view column, std::string_view where) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || field.empty()) {
    fail(ErrorCode::MalformedRow, fmt::format("{}: column '{}' is not a number: '{}'", where, column, field));
  }
  if (!std::isfinite(v)) {
    fail(ErrorCode::MalformedRow, fmt::format("{}: column '{}' is not finite", where, column));
  }
  return v;
}

Eigen::Vector3d checked_direction(const Eigen::Vector3d& v, std::string_view name, std::string_view where) {
  const double norm = v.norm();
  const double deviation = std::abs(norm - 1.0);
  if (!(deviation <= 1e-3)) {
    fail(ErrorCode::NonUnitDirection,
         fmt::format("{}: {} direction has norm {:.6g} (allowed 1 +/- 1e-3)", where, name, norm));
  }
  return deviation > 1e-12 ? Eigen::Vector3d(v / norm) : v;
}

}  // namespace

GazeDataset read_csv(std::istream& in, TestKind kind, std::string_view source) {
  std::string line;
  if (!std::getline(in, line)) {
    fail(ErrorCode::MissingColumn, fmt::format("{}: empty file, no header row", source));
  }
  const auto header = split_fields(line);
  for (std::size_t i = 0; i < kCsvColumns.size(); ++i) {
    if (i >= header.size() || header[i] != kCsvColumns[i]) {
      fail(ErrorCode::MissingColumn,
           fmt::format("{}: header column {} must be '{}', found '{}'", source, i + 1, kCsvColumns[i],
                       i < header.size() ? header[i] : std::string_view("<none>")));
    }
  }
  if (header.size() != kCsvColumns.size()) {
    fail(ErrorCode::MissingColumn,
         fmt::format("{}: header has {} columns, expected {}", source, header.size(), kCsvColumns.size()));
  }

  GazeDataset ds(kind);
  std::unordered_map<std::string, double> last_t;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = fmt::format("{}:{}", source, line_no);
    const auto fields = split_fields(line);
    if (fields.size() != kCsvColumns.size()) {
      fail(ErrorCode::MalformedRow,
           fmt::format("{}: {} fields, expected {}", where, fields.size(), kCsvColumns.size()));
    }
    std::array<double, 15> v{};
    for (std::size_t j = 1; j < kCsvColumns.size(); ++j) v[j - 1] = parse_number(fields[j], kCsvColumns[j], where);

    GazeFrame f;
    f.t = v[0];
    if (f.t < 0.0) fail(ErrorCode::MalformedRow, fmt::format("{}: negative time {}", where, f.t));
    f.left_dir = checked_direction({v[1], v[2], v[3]}, "left", where);
    f.right_dir = checked_direction({v[4], v[5], v[6]}, "right", where);
    f.cyclopean_dir = checked_direction({v[7], v[8], v[9]}, "cyclopean", where);
    f.left_pupil_mm = v[10];
    f.right_pupil_mm = v[11];
    f.left_openness = v[12];
    f.right_openness = v[13];
    if (!(f.left_pupil_mm > 0.0 && f.right_pupil_mm > 0.0)) {
      fail(ErrorCode::MalformedRow, fmt::format("{}: pupil diameter must be positive", where));
    }
    for (double o : {f.left_openness, f.right_openness}) {
      if (o < 0.0 || o > 1.0) fail(ErrorCode::MalformedRow, fmt::format("{}: openness {} outside [0, 1]", where, o));
    }
    if (v[14] == 0.0) {
      f.label = Label::Control;
    } else if (v[14] == 1.0) {
      f.label = Label::Concussed;
    } else {
      fail(ErrorCode::BadLabel, fmt::format("{}: label '{}' is not 0 or 1", where, fields[15]));
    }

    std::string session(fields[0]);
    if (session.empty()) fail(ErrorCode::MalformedRow, fmt::format("{}: empty session_id", where));
    auto [it, inserted] = last_t.try_emplace(session, f.t);
    if (!inserted) {
      if (!(f.t > it->second)) {
        fail(ErrorCode::NonMonotonicTime,
             fmt::format("{}: session '{}' time {} does not increase (previous {})", where, session, f.t, it->second));
      }
      it->second = f.t;
    }
    ds.push_back(f, std::move(session));
  }
  return ds;
}

GazeDataset load_csv(const std::filesystem::path& path, TestKind kind) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, fmt::format("cannot open '{}'", path.string()));
  return read_csv(in, kind, path.string());
}

void write_csv(std::ostream& out, const GazeDataset& ds) {
  for (std::size_t j = 0; j < kCsvColumns.size(); ++j) out << (j ? "," : "") << kCsvColumns[j];
  out << '\n';
  std::string row;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    row.clear();
    row += ds.session_id(i);
    for (double v : ds.frame(i).features()) {
      row += ',';
      append_shortest(row, v);
    }
    row += ds.frame(i).label == Label::Control ? ",0\n" : ",1\n";
    out << row;
  }
}

void write_csv(const std::filesystem::path& path, const GazeDataset& ds) {
  std::ostringstream buf;
  write_csv(buf, ds);
  write_file_atomic(path, buf.str());
}

// ------------------------------------------------------------- splitting

void SplitConfig::validate() const {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    fail(ErrorCode::InvalidConfig, fmt::format("test_fraction {} must lie in (0, 1)", test_fraction));
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    fail(ErrorCode::InvalidConfig, fmt::format("validation_fraction {} must lie in [0, 1)", validation_fraction));
  }
  if (!(test_fraction + validation_fraction * (1.0 - test_fraction) < 1.0)) {
    fail(ErrorCode::InvalidConfig, "test and validation fractions leave no training data");
  }
}

namespace {

// Splits `total` across buckets proportionally to `sizes` with the
// largest-remainder rule; remainder ties go to the lower bucket index.
std::array<std::size_t, 2> apportion(std::size_t total, const std::array<std::size_t, 2>& sizes) {
  const std::size_t sum = sizes[0] + sizes[1];
  if (sum == 0) return {0, 0};
  std::array<std::size_t, 2> out{};
  std::array<double, 2> rem{};
  std::size_t given = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    const long double exact = static_cast<long double>(total) * sizes[c] / sum;
    out[c] = static_cast<std::size_t>(std::floor(exact));
    rem[c] = static_cast<double>(exact - out[c]);
    given += out[c];
  }
  while (given < total) {
    const std::size_t c = rem[1] > rem[0] ? 1 : 0;
    ++out[c];
    rem[c] = -1.0;
    ++given;
  }
  return out;
}

std::size_t rounded(double x) { return static_cast<std::size_t>(std::llround(x)); }

std::array<std::vector<std::size_t>, 2> indices_by_class(const GazeDataset& ds) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<int>(ds.frame(i).label)].push_back(i);
  return by_class;
}

SplitIndices frame_level_split(const GazeDataset& ds, const SplitConfig& cfg, std::size_t n_test, std::size_t n_val) {
  Rng rng(cfg.seed);
  SplitIndices out;
  auto take = [&](std::vector<std::size_t>& pool, std::size_t test_n, std::size_t val_n) {
    std::shuffle(pool.begin(), pool.end(), rng);
    out.test.insert(out.test.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(test_n));
    out.validation.insert(out.validation.end(), pool.begin() + static_cast<std::ptrdiff_t>(test_n),
                          pool.begin() + static_cast<std::ptrdiff_t>(test_n + val_n));
    out.train.insert(out.train.end(), pool.begin() + static_cast<std::ptrdiff_t>(test_n + val_n), pool.end());
  };

  if (cfg.stratified) {
    auto by_class = indices_by_class(ds);
    const auto test_c = apportion(n_test, {by_class[0].size(), by_class[1].size()});
    const auto val_c = apportion(n_val, {by_class[0].size() - test_c[0], by_class[1].size() - test_c[1]});
    for (std::size_t c = 0; c < 2; ++c) take(by_class[c], test_c[c], val_c[c]);
  } else {
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    take(all, n_test, n_val);
  }
  return out;
}

SplitIndices session_level_split(const GazeDataset& ds, const SplitConfig& cfg, std::size_t n_test,
                                 std::size_t n_val) {
  // Sessions in order of first appearance, grouped by the label of their first frame.
  std::unordered_map<std::string, std::size_t> session_index;
  std::vector<std::vector<std::size_t>> members;
  std::vector<int> session_label;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto [it, inserted] = session_index.try_emplace(ds.session_id(i), members.size());
    if (inserted) {
      members.emplace_back();
      session_label.push_back(static_cast<int>(ds.frame(i).label));
    }
    members[it->second].push_back(i);
  }

  Rng rng(cfg.seed);
  SplitIndices out;
  auto assign = [&](std::vector<std::size_t> sessions, std::size_t test_target, std::size_t val_target) {
    std::shuffle(sessions.begin(), sessions.end(), rng);
    std::size_t in_test = 0;
    std::size_t in_val = 0;
    for (std::size_t s : sessions) {
      auto& rows = members[s];
      std::vector<std::size_t>* dest = &out.train;
      if (in_test < test_target) {
        dest = &out.test;
        in_test += rows.size();
      } else if (in_val < val_target) {
        dest = &out.validation;
        in_val += rows.size();
      }
      dest->insert(dest->end(), rows.begin(), rows.end());
    }
  };

  if (cfg.stratified) {
    std::array<std::vector<std::size_t>, 2> by_class;
    std::array<std::size_t, 2> frames{};
    for (std::size_t s = 0; s < members.size(); ++s) {
      by_class[session_label[s]].push_back(s);
      frames[session_label[s]] += members[s].size();
    }
    const auto test_c = apportion(n_test, frames);
    const auto val_c = apportion(n_val, {frames[0] - test_c[0], frames[1] - test_c[1]});
    for (std::size_t c = 0; c < 2; ++c) assign(by_class[c], test_c[c], val_c[c]);
  } else {
    std::vector<std::size_t> all(members.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    assign(all, n_test, n_val);
  }
  return out;
}

}  // namespace

SplitSizes planned_split_sizes(std::size_t n, const SplitConfig& cfg) {
  cfg.validate();
  SplitSizes s;
  s.test = rounded(cfg.test_fraction * static_cast<double>(n));
  s.validation = rounded(cfg.validation_fraction * static_cast<double>(n - s.test));
  s.train = n - s.test - s.validation;
  return s;
}

SplitIndices split_indices(const GazeDataset& ds, const SplitConfig& cfg) {
  cfg.validate();
  if (ds.empty()) fail(ErrorCode::EmptyDataset, "cannot split an empty dataset");
  const auto counts = ds.class_counts();
  if (cfg.stratified && (counts.control == 0 || counts.concussed == 0)) {
    fail(ErrorCode::SingleClassStratify,
         fmt::format("stratified split needs both classes (control {}, concussed {})", counts.control,
                     counts.concussed));
  }
  const auto sizes = planned_split_sizes(ds.size(), cfg);
  const std::size_t n_test = sizes.test;
  const std::size_t n_val = sizes.validation;

  SplitIndices out = cfg.session_level ? session_level_split(ds, cfg, n_test, n_val)
                                       : frame_level_split(ds, cfg, n_test, n_val);
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

Split split(const GazeDataset& ds, const SplitConfig& cfg) {
  const auto idx = split_indices(ds, cfg);
  return {ds.select(idx.train), ds.select(idx.validation), ds.select(idx.test)};
}

// ---------------------------------------------------------- class balance

ClassWeights class_weights(const ClassCounts& counts) {
  if (counts.control == 0 || counts.concussed == 0) {
    fail(ErrorCode::SingleClass, fmt::format("class weights need both classes (control {}, concussed {})",
                                             counts.control, counts.concussed));
  }
  const double n = static_cast<double>(counts.total());
  return {n / (2.0 * static_cast<double>(counts.control)), n / (2.0 * static_cast<double>(counts.concussed))};
}

ClassWeights class_weights(const GazeDataset& ds) { return class_weights(ds.class_counts()); }

std::vector<std::size_t> balanced_subset_indices(const GazeDataset& ds, std::size_t per_class, std::uint64_t seed) {
  auto by_class = indices_by_class(ds);
  for (std::size_t c = 0; c < 2; ++c) {
    if (by_class[c].size() < per_class) {
      fail(ErrorCode::InsufficientClassSamples,
           fmt::format("balanced subset needs {} frames of class {}, only {} available", per_class,
                       c == 0 ? "control" : "concussed", by_class[c].size()));
    }
  }
  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(2 * per_class);
  for (auto& pool : by_class) {
    std::shuffle(pool.begin(), pool.end(), rng);
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  std::sort(out.begin(), out.end());
  return out;
}

GazeDataset balanced_subset(const GazeDataset& ds, std::size_t per_class, std::uint64_t seed) {
  const auto idx = balanced_subset_indices(ds, per_class, seed);
  return ds.select(idx);
}

GazeDataset stratified_subsample(const GazeDataset& ds, std::size_t max_frames, std::uint64_t seed) {
  if (max_frames == 0 || max_frames >= ds.size()) return ds;
  auto by_class = indices_by_class(ds);
  const auto take = apportion(max_frames, {by_class[0].size(), by_class[1].size()});
  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(max_frames);
  for (std::size_t c = 0; c < 2; ++c) {
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    out.insert(out.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(take[c]));
  }
  std::sort(out.begin(), out.end());
  return ds.select(out);
}

}  // namespace gazescreen
