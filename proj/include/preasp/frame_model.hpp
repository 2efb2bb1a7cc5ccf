#pragma once

#include "preasp/acoustics.hpp"
#include "preasp/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace preasp {

inline constexpr int kContextFrames = 5;
inline constexpr int kContextDim = kContextFrames * kNumFeatures;  // 40
inline constexpr int kHiddenUnits = 40;

template <typename Scalar>
using ContextVector = Eigen::Matrix<Scalar, kContextDim, 1>;

/// 40 -> 40 (ReLU, dropout) -> 1 (sigmoid) network. The same struct carries
/// gradients, which have the parameters' shape.
template <typename Scalar>
struct FrameNet {
  Eigen::Matrix<Scalar, kHiddenUnits, kContextDim> w1 =
      Eigen::Matrix<Scalar, kHiddenUnits, kContextDim>::Zero();
  Eigen::Matrix<Scalar, kHiddenUnits, 1> b1 = Eigen::Matrix<Scalar, kHiddenUnits, 1>::Zero();
  Eigen::Matrix<Scalar, kHiddenUnits, 1> w2 = Eigen::Matrix<Scalar, kHiddenUnits, 1>::Zero();
  Scalar b2 = Scalar(0);

  static constexpr int kNumParams = kHiddenUnits * kContextDim + 2 * kHiddenUnits + 1;

  /// Flat parameter i in the order w1 (row-major), b1, w2, b2.
  Scalar& param(int i) {
    if (i < kHiddenUnits * kContextDim) return w1(i / kContextDim, i % kContextDim);
    i -= kHiddenUnits * kContextDim;
    if (i < kHiddenUnits) return b1[i];
    i -= kHiddenUnits;
    if (i < kHiddenUnits) return w2[i];
    return b2;
  }
  Scalar param(int i) const { return const_cast<FrameNet&>(*this).param(i); }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && std::isfinite(b2);
  }

  /// this += scale * other
  void axpy(Scalar scale, const FrameNet& other) {
    w1 += scale * other.w1;
    b1 += scale * other.b1;
    w2 += scale * other.w2;
    b2 += scale * other.b2;
  }

  friend bool operator==(const FrameNet& a, const FrameNet& b) {
    return a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2;
  }
};

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

/// Hidden-unit multipliers. All ones at inference; 0 or 1/(1-rate) when training
/// (inverted dropout).
template <typename Scalar>
using DropoutMask = Eigen::Matrix<Scalar, kHiddenUnits, 1>;

template <typename Scalar>
DropoutMask<Scalar> sample_dropout_mask(double rate, std::mt19937_64& rng) {
  DropoutMask<Scalar> mask;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
  for (int i = 0; i < kHiddenUnits; ++i) mask[i] = unit(rng) < rate ? Scalar(0) : keep_scale;
  return mask;
}

template <typename Scalar>
Scalar forward(const FrameNet<Scalar>& net, const ContextVector<Scalar>& x,
               const DropoutMask<Scalar>& mask) {
  const Eigen::Matrix<Scalar, kHiddenUnits, 1> hidden =
      (net.w1 * x + net.b1).cwiseMax(Scalar(0)).cwiseProduct(mask);
  return sigmoid<Scalar>(net.w2.dot(hidden) + net.b2);
}

/// Inference pass, no dropout.
template <typename Scalar>
Scalar forward(const FrameNet<Scalar>& net, const ContextVector<Scalar>& x) {
  return forward(net, x, DropoutMask<Scalar>::Ones().eval());
}

/// Training pass with a freshly sampled dropout mask.
template <typename Scalar>
Scalar forward(const FrameNet<Scalar>& net, const ContextVector<Scalar>& x, double dropout_rate,
               std::mt19937_64& rng) {
  return forward(net, x, sample_dropout_mask<Scalar>(dropout_rate, rng));
}

inline constexpr double kProbClamp = 1e-7;

template <typename Scalar>
Scalar bce_loss(Scalar p, Scalar y) {
  const Scalar q = std::clamp(p, Scalar(kProbClamp), Scalar(1.0 - kProbClamp));
  return -(y * std::log(q) + (Scalar(1) - y) * std::log(Scalar(1) - q));
}

/// Gradient of bce_loss(forward(net, x, mask), y) with respect to every parameter.
template <typename Scalar>
FrameNet<Scalar> bce_gradient(const FrameNet<Scalar>& net, const ContextVector<Scalar>& x,
                              Scalar y, const DropoutMask<Scalar>& mask) {
  const Eigen::Matrix<Scalar, kHiddenUnits, 1> pre = net.w1 * x + net.b1;
  const Eigen::Matrix<Scalar, kHiddenUnits, 1> active =
      (pre.array() > Scalar(0)).select(mask.array(), Scalar(0)).matrix();
  const Eigen::Matrix<Scalar, kHiddenUnits, 1> hidden = pre.cwiseMax(Scalar(0)).cwiseProduct(mask);
  const Scalar p = sigmoid<Scalar>(net.w2.dot(hidden) + net.b2);

  // Inside the clamp the loss gradient w.r.t. the logit is p - y; outside it is flat.
  const bool clamped = p < Scalar(kProbClamp) || p > Scalar(1.0 - kProbClamp);
  const Scalar dz = clamped ? Scalar(0) : p - y;

  FrameNet<Scalar> grad;
  grad.b2 = dz;
  grad.w2 = dz * hidden;
  grad.b1 = dz * net.w2.cwiseProduct(active);
  grad.w1 = grad.b1 * x.transpose();
  return grad;
}

/// Context window (x[t-2], ..., x[t+2]) of a normalized sequence; out-of-range rows
/// replicate the nearest edge row.
ContextVector<double> build_context(const FeatureSequence& features, int t);

FrameNet<double> init_frame_net(std::mt19937_64& rng);

struct FrameSample {
  ContextVector<double> x;
  double y = 0.0;
};

/// One gradient-descent step on the mean BCE of `batch`. Returns the batch's mean loss
/// before the update.
double train_step(FrameNet<double>& net, std::span<const FrameSample> batch, double learning_rate,
                  double dropout_rate, std::mt19937_64& rng);

struct DecodeConfig {
  int smoothing_ms = 9;
  double threshold = 0.5;
};

struct DecodeResult {
  Interval interval;
  bool low_confidence = false;
};

/// Centred moving average; edge frames average over what is available.
std::vector<double> moving_average(std::span<const double> values, int window);

/// Bounds (inclusive) of the longest run of true values, earliest run on ties.
/// Returns false if there is none.
bool longest_run(std::span<const bool> binary, Interval& run);

/// Smoothing, thresholding and longest-run selection over per-frame probabilities.
/// Falls back to the argmax frame, flagged low confidence, when nothing passes.
DecodeResult decode_probabilities(std::span<const double> probabilities, const DecodeConfig& config);

/// A trained classifier together with what it needs at inference time.
struct FrameModel {
  FrameNet<double> net;
  double dropout_rate = 0.3;
  DecodeConfig decode;
  NormStats norm;
};

/// Per-frame probabilities for raw (unnormalized) features.
std::vector<double> frame_probabilities(const FrameModel& model, const FeatureSequence& features);

/// Decodes frames [first, last] of raw features; frame indices in the result are absolute.
DecodeResult decode(const FrameModel& model, const FeatureSequence& features, int first, int last);
DecodeResult decode(const FrameModel& model, const FeatureSequence& features);

struct FrameTrainConfig {
  double learning_rate = 0.01;
  int batch_size = 32;
  int patience = 10;
  int max_epochs = 200;
  double dropout_rate = 0.3;
  std::uint64_t seed = 1;
  DecodeConfig decode;
};

/// Labelled context vectors from the search window of each example: frames inside the
/// gold [ts, te] are positive. The larger class is subsampled (seeded) to the size of
/// the smaller one.
std::vector<FrameSample> build_frame_dataset(std::span<const Example> examples, const NormStats& norm,
                                             std::mt19937_64& rng);

struct FrameEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct FrameTrainResult {
  FrameModel model;
  std::vector<FrameEpochLog> history;
  int best_epoch = 0;
};

FrameTrainResult train_frame_model(std::span<const Example> train, std::span<const Example> validation,
                                   const FrameTrainConfig& config);

/// Mean BCE over `samples` with dropout off.
double mean_bce(const FrameNet<double>& net, std::span<const FrameSample> samples);

inline constexpr const char* kFrameModelHeader = "PREASP-FRAME v1";

void save_frame_model(std::ostream& out, const FrameModel& model);
FrameModel load_frame_model(std::istream& in);
void save_frame_model(const std::string& path, const FrameModel& model);
FrameModel load_frame_model(const std::string& path);

}  // namespace preasp
