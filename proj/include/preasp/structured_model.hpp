#pragma once

#include "preasp/acoustics.hpp"
#include "preasp/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace preasp {

/// What a single component of phi measures. Intervals are half-open frame ranges:
/// the candidate covers [ts, te), the post window [te, te + span).
enum class MapKind {
  kValueAtStart,     // x[ts]
  kValueAtEnd,       // x[te]
  kDiffAtStart,      // local_diff(x, ts, span)
  kDiffAtEnd,        // local_diff(x, te, span)
  kIntervalMean,     // mean over [ts, te); with span > 0, minus the mean over [ts - span, ts)
  kIntervalMax,      // max over [ts, te); with span > 0, minus the max over [ts - span, ts)
  kMeanMinusPost,    // mean over [ts, te) - mean over [te, te + span)
  kPostMean,         // mean over [te, te + span)
  kPostMax,          // max over [te, te + span)
  kDuration,         // (te - ts - mean) / std of training durations
};

struct MapDescriptor {
  MapKind kind = MapKind::kDuration;
  int feature = 0;  // ignored for kDuration
  int span = 0;     // ms; meaning depends on kind

  friend bool operator==(const MapDescriptor&, const MapDescriptor&) = default;
};

/// How the "mean & max over the interval" row for P_max is expanded.
enum class IntervalRowReading {
  kWithBoundaryDiffs,  // {mean, max} x {plain, diff-5, diff-10}: 6 maps
  kPlain,              // {mean, max}: 2 maps
};

struct FeatureMapSpec {
  std::vector<MapDescriptor> maps;

  int dim() const { return static_cast<int>(maps.size()); }

  /// The full feature-map table plus one duration map.
  static FeatureMapSpec standard(IntervalRowReading reading = IntervalRowReading::kWithBoundaryDiffs);

  friend bool operator==(const FeatureMapSpec&, const FeatureMapSpec&) = default;
};

/// Stable one-line text form, e.g. "diff_at_ts E_total 5".
std::string to_string(const MapDescriptor& map);
MapDescriptor parse_map_descriptor(const std::string& line);

inline constexpr int kPostWindowMs = 50;
inline constexpr int kLocalDiffSpans[] = {5, 10, 15};

/// Prefix sums and sparse-table range maxima over a feature sequence, giving O(1)
/// interval means and maxima.
class CumulativeStats {
 public:
  explicit CumulativeStats(const FeatureSequence& features);

  int num_frames() const { return frames_; }
  double value(int feature, int t) const { return values_(t, feature); }

  /// Mean of frames [lo, hi) clipped to the sequence. An empty clipped range falls back
  /// to the nearest frame.
  double mean(int feature, int lo, int hi) const;
  double max(int feature, int lo, int hi) const;

  /// mean over [t, t + span) minus mean over [t - span, t).
  double local_diff(int feature, int t, int span) const;

 private:
  bool clip(int& lo, int& hi) const;

  int frames_ = 0;
  FeatureSequence values_;
  FeatureRow<double> anchor_;
  Eigen::Matrix<double, Eigen::Dynamic, kNumFeatures, Eigen::RowMajor> prefix_;
  // levels_[k] holds max over [t, t + 2^k) for every valid t.
  std::vector<FeatureSequence> levels_;
};

/// Free-function form of CumulativeStats::local_diff.
double local_diff(const FeatureSequence& features, int feature, int t, int span);

struct DurationNorm {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Feature vector of a candidate interval; components follow `spec.maps`.
Eigen::VectorXd phi(const CumulativeStats& stats, const Interval& candidate, const FeatureMapSpec& spec,
                    const DurationNorm& duration = {});
Eigen::VectorXd phi(const FeatureSequence& features, const Interval& candidate,
                    const FeatureMapSpec& spec, const DurationNorm& duration = {});

struct DurationConstraints {
  int min_ms = 5;
  int max_ms = 150;
};

/// Inclusive frame range the boundaries may fall in.
struct SearchWindow {
  int first = 0;
  int last = 0;
};

/// Window used for training: 50 ms before the gold onset to 60 ms after the offset.
SearchWindow training_window(const Interval& gold, int num_frames, int before_ms = 50,
                             int after_ms = 60);

/// All (ts, te) with ts < te inside the window (clipped to [0, T)) and duration within
/// the constraints, in lexicographic order. Throws InferenceError when empty.
std::vector<Interval> candidate_set(int num_frames, const DurationConstraints& constraints,
                                    const SearchWindow& window);
std::vector<Interval> candidate_set(int num_frames, const DurationConstraints& constraints);

/// Epsilon-insensitive absolute duration difference, in ms.
double task_loss(const Interval& gold, const Interval& pred, double epsilon);

struct StructuredModel {
  Eigen::VectorXd w;
  FeatureMapSpec spec;
  NormStats norm;
  DurationNorm duration;
  double C = 50.0;
  double epsilon = 2.0;
  DurationConstraints constraints;

  void validate() const;
};

/// Linear scorer w . phi for every candidate of one sequence. The score of a candidate
/// splits into onset-only, offset-only and interval terms, so each candidate costs a
/// handful of range queries instead of a full phi evaluation.
class ScoreTable {
 public:
  ScoreTable(const CumulativeStats& stats, const FeatureMapSpec& spec, const Eigen::VectorXd& w,
             const DurationNorm& duration);

  double score(const Interval& candidate) const;

 private:
  const CumulativeStats* stats_;
  Eigen::VectorXd onset_terms_;
  Eigen::VectorXd offset_terms_;
  std::vector<std::pair<int, double>> mean_coeffs_;
  std::vector<std::pair<int, double>> max_coeffs_;
  double duration_coeff_ = 0.0;
  DurationNorm duration_;
};

/// A sequence prepared for repeated scoring: normalized features and their stats.
struct PreparedSequence {
  FeatureSequence normalized;
  CumulativeStats stats;
  SearchWindow window;

  PreparedSequence(const FeatureSequence& raw, const NormStats& norm, const SearchWindow& window);
};

/// argmax over candidates of w . phi; ties go to the lexicographically smallest pair.
Interval infer(const StructuredModel& model, const PreparedSequence& seq);
Interval infer(const StructuredModel& model, const FeatureSequence& raw, const SearchWindow& window);
Interval infer(const StructuredModel& model, const FeatureSequence& raw);

/// argmax over candidates of w . phi + task_loss(gold, candidate).
Interval loss_augmented_infer(const StructuredModel& model, const PreparedSequence& seq,
                              const Interval& gold);

struct PaStep {
  Interval violator;
  double loss = 0.0;   // task loss of the violator
  double hinge = 0.0;  // max(0, loss - w . dphi)
  double tau = 0.0;
  bool updated = false;
};

/// Closed-form PA-I step on w for the constraint w . dphi >= loss.
PaStep pa_step(Eigen::VectorXd& w, const Eigen::VectorXd& delta_phi, double loss, double C);

/// Finds the most violated candidate for `gold` and applies the PA-I step.
PaStep pa_update(StructuredModel& model, const PreparedSequence& seq, const Interval& gold);

struct StructuredTrainConfig {
  double C = 50.0;
  double epsilon = 2.0;
  DurationConstraints constraints;
  IntervalRowReading interval_row = IntervalRowReading::kWithBoundaryDiffs;
  int max_epochs = 50;
  int patience = 5;
  bool average_weights = false;
  // Replace each training example's window by the one derived from its gold pair.
  bool derive_training_windows = true;
  std::uint64_t seed = 1;
};

struct StructuredEpochLog {
  int epoch = 0;
  double train_loss = 0.0;       // mean task loss of the violators found during the epoch
  double validation_loss = 0.0;  // mean task loss of infer() on validation
  int updates = 0;
};

struct StructuredTrainResult {
  StructuredModel model;
  std::vector<StructuredEpochLog> history;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
};

StructuredTrainResult train_structured(std::span<const Example> train, std::span<const Example> validation,
                                       const StructuredTrainConfig& config);

/// Mean task loss of infer() over examples with gold labels.
double mean_task_loss(const StructuredModel& model, std::span<const Example> examples);

inline constexpr const char* kStructuredModelHeader = "PREASP-STRUCT v1";

void save_structured_model(std::ostream& out, const StructuredModel& model);
StructuredModel load_structured_model(std::istream& in);
void save_structured_model(const std::string& path, const StructuredModel& model);
StructuredModel load_structured_model(const std::string& path);

}  // namespace preasp
