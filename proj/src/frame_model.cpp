#include "preasp/frame_model.hpp"

#include "preasp/text_io.hpp"

#include <fstream>
#include <istream>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>

namespace preasp {

ContextVector<double> build_context(const FeatureSequence& features, int t) {
  const int frames = static_cast<int>(features.rows());
  if (t < 0 || t >= frames) {
    throw std::out_of_range("build_context: frame " + std::to_string(t) + " outside [0, " +
                            std::to_string(frames) + ")");
  }
  ContextVector<double> x;
  for (int k = 0; k < kContextFrames; ++k) {
    const int row = std::clamp(t + k - kContextFrames / 2, 0, frames - 1);
    x.segment<kNumFeatures>(k * kNumFeatures) = features.row(row).transpose();
  }
  return x;
}

FrameNet<double> init_frame_net(std::mt19937_64& rng) {
  FrameNet<double> net;
  // He-uniform for the ReLU layer, Glorot-uniform for the output unit.
  std::uniform_real_distribution<double> hidden(-std::sqrt(6.0 / kContextDim),
                                                std::sqrt(6.0 / kContextDim));
  std::uniform_real_distribution<double> output(-std::sqrt(6.0 / (kHiddenUnits + 1)),
                                                std::sqrt(6.0 / (kHiddenUnits + 1)));
  for (int r = 0; r < kHiddenUnits; ++r) {
    for (int c = 0; c < kContextDim; ++c) net.w1(r, c) = hidden(rng);
  }
  for (int r = 0; r < kHiddenUnits; ++r) net.w2[r] = output(rng);
  return net;
}

double train_step(FrameNet<double>& net, std::span<const FrameSample> batch, double learning_rate,
                  double dropout_rate, std::mt19937_64& rng) {
  if (batch.empty()) return 0.0;
  FrameNet<double> grad;
  double loss = 0.0;
  for (const auto& sample : batch) {
    const auto mask = sample_dropout_mask<double>(dropout_rate, rng);
    loss += bce_loss(forward(net, sample.x, mask), sample.y);
    grad.axpy(1.0, bce_gradient(net, sample.x, sample.y, mask));
  }
  const double n = static_cast<double>(batch.size());
  net.axpy(-learning_rate / n, grad);
  return loss / n;
}

std::vector<double> moving_average(std::span<const double> values, int window) {
  const int n = static_cast<int>(values.size());
  const int half = std::max(0, window / 2);
  std::vector<double> prefix(n + 1, 0.0);
  for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + values[i];
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    out[i] = (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1);
  }
  return out;
}

bool longest_run(std::span<const bool> binary, Interval& run) {
  int best_len = 0;
  int start = -1;
  for (int i = 0; i <= static_cast<int>(binary.size()); ++i) {
    const bool on = i < static_cast<int>(binary.size()) && binary[i];
    if (on && start < 0) start = i;
    if (!on && start >= 0) {
      if (i - start > best_len) {
        best_len = i - start;
        run = {start, i - 1};
      }
      start = -1;
    }
  }
  return best_len > 0;
}

DecodeResult decode_probabilities(std::span<const double> probabilities, const DecodeConfig& config) {
  if (probabilities.empty()) throw InvalidInput("decode: no frames");
  const auto smoothed = moving_average(probabilities, config.smoothing_ms);
  // std::vector<bool> has no contiguous storage, so use a plain array.
  std::unique_ptr<bool[]> binary(new bool[smoothed.size()]);
  for (std::size_t i = 0; i < smoothed.size(); ++i) binary[i] = smoothed[i] >= config.threshold;

  DecodeResult result;
  if (longest_run(std::span<const bool>(binary.get(), smoothed.size()), result.interval)) {
    return result;
  }
  const auto peak = std::max_element(smoothed.begin(), smoothed.end()) - smoothed.begin();
  result.interval = {static_cast<int>(peak), static_cast<int>(peak)};
  result.low_confidence = true;
  return result;
}

std::vector<double> frame_probabilities(const FrameModel& model, const FeatureSequence& features) {
  const FeatureSequence normalized = apply_norm(features, model.norm);
  std::vector<double> probs(features.rows());
  for (int t = 0; t < features.rows(); ++t) {
    probs[t] = forward(model.net, build_context(normalized, t));
  }
  return probs;
}

DecodeResult decode(const FrameModel& model, const FeatureSequence& features, int first, int last) {
  const int frames = static_cast<int>(features.rows());
  first = std::max(0, first);
  last = std::min(frames - 1, last);
  if (frames == 0 || first > last) throw InvalidInput("decode: empty frame range");
  const FeatureSequence normalized = apply_norm(features, model.norm);
  std::vector<double> probs;
  probs.reserve(last - first + 1);
  for (int t = first; t <= last; ++t) probs.push_back(forward(model.net, build_context(normalized, t)));
  DecodeResult result = decode_probabilities(probs, model.decode);
  result.interval.ts += first;
  result.interval.te += first;
  return result;
}

DecodeResult decode(const FrameModel& model, const FeatureSequence& features) {
  return decode(model, features, 0, static_cast<int>(features.rows()) - 1);
}

std::vector<FrameSample> build_frame_dataset(std::span<const Example> examples, const NormStats& norm,
                                             std::mt19937_64& rng) {
  std::vector<FrameSample> positives, negatives;
  for (const auto& ex : examples) {
    if (!ex.has_gold) throw TrainingDataError("example '" + ex.id + "' has no gold labels");
    const FeatureSequence normalized = apply_norm(ex.features, norm);
    const int first = std::max(0, ex.window_start);
    const int last = std::min(ex.num_frames() - 1, ex.window_end);
    for (int t = first; t <= last; ++t) {
      const bool inside = t >= ex.gold.ts && t <= ex.gold.te;
      (inside ? positives : negatives).push_back({build_context(normalized, t), inside ? 1.0 : 0.0});
    }
  }
  if (positives.empty() || negatives.empty()) {
    throw TrainingDataError("frame dataset needs both positive and negative frames");
  }
  auto& larger = positives.size() > negatives.size() ? positives : negatives;
  const std::size_t keep = std::min(positives.size(), negatives.size());
  std::shuffle(larger.begin(), larger.end(), rng);
  larger.resize(keep);

  std::vector<FrameSample> out;
  out.reserve(2 * keep);
  out.insert(out.end(), positives.begin(), positives.end());
  out.insert(out.end(), negatives.begin(), negatives.end());
  return out;
}

double mean_bce(const FrameNet<double>& net, std::span<const FrameSample> samples) {
  if (samples.empty()) return 0.0;
  double loss = 0.0;
  for (const auto& s : samples) loss += bce_loss(forward(net, s.x), s.y);
  return loss / static_cast<double>(samples.size());
}

FrameTrainResult train_frame_model(std::span<const Example> train, std::span<const Example> validation,
                                   const FrameTrainConfig& config) {
  if (train.empty()) throw TrainingDataError("frame training set is empty");
  if (validation.empty()) throw TrainingDataError("frame validation set is empty");

  std::vector<FeatureSequence> sequences;
  sequences.reserve(train.size());
  for (const auto& ex : train) sequences.push_back(ex.features);

  std::mt19937_64 rng(config.seed);
  FrameTrainResult result;
  result.model.norm = fit_norm_stats(sequences);
  result.model.dropout_rate = config.dropout_rate;
  result.model.decode = config.decode;

  std::vector<FrameSample> train_set = build_frame_dataset(train, result.model.norm, rng);
  const std::vector<FrameSample> val_set = build_frame_dataset(validation, result.model.norm, rng);

  FrameNet<double> net = init_frame_net(rng);
  result.model.net = net;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  const std::size_t batch = static_cast<std::size_t>(std::max(1, config.batch_size));

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(train_set.begin(), train_set.end(), rng);
    double train_loss = 0.0;
    for (std::size_t i = 0; i < train_set.size(); i += batch) {
      const std::size_t n = std::min(batch, train_set.size() - i);
      train_loss += static_cast<double>(n) *
                    train_step(net, std::span<const FrameSample>(train_set).subspan(i, n),
                               config.learning_rate, config.dropout_rate, rng);
    }
    train_loss /= static_cast<double>(train_set.size());
    const double val_loss = mean_bce(net, val_set);
    result.history.push_back({epoch, train_loss, val_loss});

    if (val_loss < best) {
      best = val_loss;
      result.model.net = net;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return result;
}

void save_frame_model(std::ostream& out, const FrameModel& model) {
  using text_io::format_double;
  out << kFrameModelHeader << '\n';
  out << "dropout_rate " << format_double(model.dropout_rate) << '\n';
  out << "smoothing_ms " << model.decode.smoothing_ms << '\n';
  out << "threshold " << format_double(model.decode.threshold) << '\n';
  text_io::write_row(out, "norm_mean", model.norm.mean);
  text_io::write_row(out, "norm_std", model.norm.stddev);
  out << "[w1] " << kHiddenUnits << ' ' << kContextDim << '\n';
  for (int r = 0; r < kHiddenUnits; ++r) text_io::write_row(out, "row", model.net.w1.row(r));
  out << "[b1] " << kHiddenUnits << '\n';
  text_io::write_row(out, "row", model.net.b1.transpose());
  out << "[w2] " << kHiddenUnits << '\n';
  text_io::write_row(out, "row", model.net.w2.transpose());
  out << "[b2] 1\n";
  out << "row " << format_double(model.net.b2) << '\n';
}

namespace {

template <int N>
Eigen::Matrix<double, 1, N> fixed_row(std::istream& in, const std::string& key) {
  const auto values = text_io::read_row(in, key);
  if (values.size() != N) {
    throw FormatError("'" + key + "' expects " + std::to_string(N) + " values, got " +
                      std::to_string(values.size()));
  }
  return Eigen::Map<const Eigen::Matrix<double, 1, N>>(values.data());
}

void expect_section(std::istream& in, const std::string& name) {
  std::string line;
  while (std::getline(in, line) && text_io::trim(line).empty()) {
  }
  if (text_io::split_ws(line).empty() || text_io::split_ws(line).front() != name) {
    throw FormatError("expected section " + name);
  }
}

}  // namespace

FrameModel load_frame_model(std::istream& in) {
  std::string header;
  std::getline(in, header);
  if (text_io::trim(header) != kFrameModelHeader) {
    throw FormatError("not a frame model (header '" + text_io::trim(header) + "', expected '" +
                      kFrameModelHeader + "')");
  }
  FrameModel model;
  model.dropout_rate = text_io::parse_double(text_io::read_value(in, "dropout_rate"));
  model.decode.smoothing_ms = static_cast<int>(text_io::parse_long(text_io::read_value(in, "smoothing_ms")));
  model.decode.threshold = text_io::parse_double(text_io::read_value(in, "threshold"));
  model.norm.mean = fixed_row<kNumFeatures>(in, "norm_mean");
  model.norm.stddev = fixed_row<kNumFeatures>(in, "norm_std");
  expect_section(in, "[w1]");
  for (int r = 0; r < kHiddenUnits; ++r) model.net.w1.row(r) = fixed_row<kContextDim>(in, "row");
  expect_section(in, "[b1]");
  model.net.b1 = fixed_row<kHiddenUnits>(in, "row").transpose();
  expect_section(in, "[w2]");
  model.net.w2 = fixed_row<kHiddenUnits>(in, "row").transpose();
  expect_section(in, "[b2]");
  model.net.b2 = fixed_row<1>(in, "row")[0];
  if (!model.net.all_finite()) throw FormatError("frame model has non-finite parameters");
  return model;
}

void save_frame_model(const std::string& path, const FrameModel& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  save_frame_model(out, model);
  if (!out) throw DataError("write failed: " + path);
}

FrameModel load_frame_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  return load_frame_model(in);
}

}  // namespace preasp
