#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace preasp {

inline constexpr int kNumFeatures = 8;

/// Column order of every feature matrix.
enum Feature : int {
  kETotal = 0,
  kELow = 1,
  kEHigh = 2,
  kHWiener = 3,
  kPMax = 4,
  kPitch = 5,
  kVoicing = 6,
  kZeroCross = 7,
};

inline constexpr const char* kFeatureNames[kNumFeatures] = {
    "E_total", "E_low", "E_high", "H_wiener", "P_max", "R_l", "V", "ZC"};

template <typename Scalar>
using FeatureMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, kNumFeatures, Eigen::RowMajor>;

template <typename Scalar>
using FeatureRow = Eigen::Matrix<Scalar, 1, kNumFeatures>;

using FeatureSequence = FeatureMatrix<double>;
using VectorXd = Eigen::VectorXd;

// Error categories. The CLI maps these onto exit codes.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InferenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingDataError : DataError {
  using DataError::DataError;
};
struct FormatError : DataError {
  using DataError::DataError;
};

/// An onset/offset pair in frames (1 frame = 1 ms).
struct Interval {
  int ts = 0;
  int te = 0;

  int duration() const { return te - ts; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// One utterance ready for learning: raw (unnormalized) features, the gold pair and
/// the frame range [window_start, window_end] the boundaries are searched in.
struct Example {
  std::string id;
  std::string speaker;
  std::string word;
  FeatureSequence features;
  Interval gold;
  bool has_gold = true;
  int window_start = 0;
  int window_end = 0;

  int num_frames() const { return static_cast<int>(features.rows()); }
};

}  // namespace preasp
