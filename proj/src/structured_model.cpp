#include "preasp/structured_model.hpp"

#include "preasp/text_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace preasp {

namespace {

struct KindName {
  MapKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {MapKind::kValueAtStart, "value_at_ts"},   {MapKind::kValueAtEnd, "value_at_te"},
    {MapKind::kDiffAtStart, "diff_at_ts"},     {MapKind::kDiffAtEnd, "diff_at_te"},
    {MapKind::kIntervalMean, "interval_mean"}, {MapKind::kIntervalMax, "interval_max"},
    {MapKind::kMeanMinusPost, "mean_minus_post"}, {MapKind::kPostMean, "post_mean"},
    {MapKind::kPostMax, "post_max"},           {MapKind::kDuration, "duration"},
};

int feature_index(const std::string& name) {
  for (int f = 0; f < kNumFeatures; ++f) {
    if (name == kFeatureNames[f]) return f;
  }
  throw FormatError("unknown acoustic feature '" + name + "'");
}

}  // namespace

FeatureMapSpec FeatureMapSpec::standard(IntervalRowReading reading) {
  FeatureMapSpec spec;
  auto add = [&spec](MapKind kind, int feature, int span = 0) {
    spec.maps.push_back({kind, feature, span});
  };
  auto add_diffs = [&add](MapKind kind, int feature) {
    for (int s : kLocalDiffSpans) add(kind, feature, s);
  };

  // Value at t_s: F for E_total, E_high, H_wiener, R_l; local differences for all eight.
  for (int f : {kETotal, kEHigh, kHWiener, kPitch}) add(MapKind::kValueAtStart, f);
  for (int f = 0; f < kNumFeatures; ++f) add_diffs(MapKind::kDiffAtStart, f);

  // Value at t_e: F and local differences for the first six features.
  for (int f : {kETotal, kELow, kEHigh, kHWiener, kPMax, kPitch}) add(MapKind::kValueAtEnd, f);
  for (int f : {kETotal, kELow, kEHigh, kHWiener, kPMax, kPitch}) add_diffs(MapKind::kDiffAtEnd, f);

  // Mean & max of P_max over the interval.
  if (reading == IntervalRowReading::kWithBoundaryDiffs) {
    for (int s : {0, 5, 10}) add(MapKind::kIntervalMean, kPMax, s);
    for (int s : {0, 5, 10}) add(MapKind::kIntervalMax, kPMax, s);
  } else {
    add(MapKind::kIntervalMean, kPMax);
    add(MapKind::kIntervalMax, kPMax);
  }

  for (int f : {kEHigh, kHWiener, kZeroCross}) add(MapKind::kMeanMinusPost, f, kPostWindowMs);
  for (int f : {kEHigh, kHWiener, kPitch, kVoicing}) add(MapKind::kPostMean, f, kPostWindowMs);
  for (int f : {kEHigh, kHWiener}) add(MapKind::kPostMax, f, kPostWindowMs);

  add(MapKind::kDuration, 0);
  return spec;
}

std::string to_string(const MapDescriptor& map) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind != map.kind) continue;
    if (kind == MapKind::kDuration) return name;
    return std::string(name) + ' ' + kFeatureNames[map.feature] + ' ' + std::to_string(map.span);
  }
  throw InvalidInput("unknown map kind");
}

MapDescriptor parse_map_descriptor(const std::string& line) {
  const auto tokens = text_io::split_ws(line);
  if (tokens.empty()) throw FormatError("empty feature-map descriptor");
  for (const auto& [kind, name] : kKindNames) {
    if (tokens[0] != name) continue;
    if (kind == MapKind::kDuration) {
      if (tokens.size() != 1) throw FormatError("bad descriptor: " + line);
      return {kind, 0, 0};
    }
    if (tokens.size() != 3) throw FormatError("bad descriptor: " + line);
    const long span = text_io::parse_long(tokens[2]);
    if (span < 0) throw FormatError("negative span in descriptor: " + line);
    return {kind, feature_index(tokens[1]), static_cast<int>(span)};
  }
  throw FormatError("unknown feature-map kind '" + tokens[0] + "'");
}

CumulativeStats::CumulativeStats(const FeatureSequence& features)
    : frames_(static_cast<int>(features.rows())), values_(features) {
  if (frames_ == 0) throw InvalidInput("CumulativeStats: empty sequence");
  // Sums of deviations from the first frame: better conditioned, and a constant
  // feature gives interval means equal to that constant exactly.
  anchor_ = values_.row(0);
  prefix_.setZero(frames_ + 1, kNumFeatures);
  for (int t = 0; t < frames_; ++t) prefix_.row(t + 1) = prefix_.row(t) + (values_.row(t) - anchor_);

  levels_.push_back(values_);
  for (int width = 2; width <= frames_; width *= 2) {
    const FeatureSequence& prev = levels_.back();
    const int half = width / 2;
    FeatureSequence next(frames_ - width + 1, kNumFeatures);
    for (int t = 0; t + width <= frames_; ++t) {
      next.row(t) = prev.row(t).cwiseMax(prev.row(t + half));
    }
    levels_.push_back(std::move(next));
  }
}

bool CumulativeStats::clip(int& lo, int& hi) const {
  const int orig_hi = hi;
  lo = std::max(lo, 0);
  hi = std::min(hi, frames_);
  if (lo < hi) return true;
  // Nearest frame to an empty range.
  lo = orig_hi <= 0 ? 0 : std::min(lo, frames_ - 1);
  hi = lo + 1;
  return false;
}

double CumulativeStats::mean(int feature, int lo, int hi) const {
  clip(lo, hi);
  return anchor_[feature] + (prefix_(hi, feature) - prefix_(lo, feature)) / static_cast<double>(hi - lo);
}

double CumulativeStats::max(int feature, int lo, int hi) const {
  clip(lo, hi);
  const unsigned len = static_cast<unsigned>(hi - lo);
  const int k = std::bit_width(len) - 1;
  const FeatureSequence& level = levels_[k];
  return std::max(level(lo, feature), level(hi - (1 << k), feature));
}

double CumulativeStats::local_diff(int feature, int t, int span) const {
  return mean(feature, t, t + span) - mean(feature, t - span, t);
}

double local_diff(const FeatureSequence& features, int feature, int t, int span) {
  return CumulativeStats(features).local_diff(feature, t, span);
}

Eigen::VectorXd phi(const CumulativeStats& stats, const Interval& c, const FeatureMapSpec& spec,
                    const DurationNorm& duration) {
  Eigen::VectorXd out(spec.dim());
  for (int i = 0; i < spec.dim(); ++i) {
    const auto& m = spec.maps[i];
    const int f = m.feature;
    switch (m.kind) {
      case MapKind::kValueAtStart: out[i] = stats.value(f, c.ts); break;
      case MapKind::kValueAtEnd: out[i] = stats.value(f, c.te); break;
      case MapKind::kDiffAtStart: out[i] = stats.local_diff(f, c.ts, m.span); break;
      case MapKind::kDiffAtEnd: out[i] = stats.local_diff(f, c.te, m.span); break;
      case MapKind::kIntervalMean:
        out[i] = stats.mean(f, c.ts, c.te);
        if (m.span > 0) out[i] -= stats.mean(f, c.ts - m.span, c.ts);
        break;
      case MapKind::kIntervalMax:
        out[i] = stats.max(f, c.ts, c.te);
        if (m.span > 0) out[i] -= stats.max(f, c.ts - m.span, c.ts);
        break;
      case MapKind::kMeanMinusPost:
        out[i] = stats.mean(f, c.ts, c.te) - stats.mean(f, c.te, c.te + m.span);
        break;
      case MapKind::kPostMean: out[i] = stats.mean(f, c.te, c.te + m.span); break;
      case MapKind::kPostMax: out[i] = stats.max(f, c.te, c.te + m.span); break;
      case MapKind::kDuration:
        out[i] = (static_cast<double>(c.duration()) - duration.mean) / duration.stddev;
        break;
    }
  }
  return out;
}

Eigen::VectorXd phi(const FeatureSequence& features, const Interval& candidate,
                    const FeatureMapSpec& spec, const DurationNorm& duration) {
  return phi(CumulativeStats(features), candidate, spec, duration);
}

SearchWindow training_window(const Interval& gold, int num_frames, int before_ms, int after_ms) {
  return {std::max(0, gold.ts - before_ms), std::min(num_frames - 1, gold.te + after_ms)};
}

namespace {

// Calls fn(candidate) for every valid candidate in lexicographic order.
template <typename Fn>
void for_each_candidate(int num_frames, const DurationConstraints& constraints,
                        const SearchWindow& window, Fn&& fn) {
  const int first = std::max(0, window.first);
  const int last = std::min(num_frames - 1, window.last);
  const int min_dur = std::max(1, constraints.min_ms);
  for (int ts = first; ts <= last; ++ts) {
    const int te_hi = std::min(last, ts + constraints.max_ms);
    for (int te = ts + min_dur; te <= te_hi; ++te) fn(Interval{ts, te});
  }
}

}  // namespace

std::vector<Interval> candidate_set(int num_frames, const DurationConstraints& constraints,
                                    const SearchWindow& window) {
  std::vector<Interval> out;
  for_each_candidate(num_frames, constraints, window, [&out](const Interval& c) { out.push_back(c); });
  if (out.empty()) throw InferenceError("no valid candidate interval in the search window");
  return out;
}

std::vector<Interval> candidate_set(int num_frames, const DurationConstraints& constraints) {
  return candidate_set(num_frames, constraints, SearchWindow{0, num_frames - 1});
}

double task_loss(const Interval& gold, const Interval& pred, double epsilon) {
  const double diff = std::abs(static_cast<double>(pred.duration() - gold.duration()));
  return std::max(diff - epsilon, 0.0);
}

void StructuredModel::validate() const {
  if (w.size() != spec.dim()) {
    throw InvalidInput("weight vector has " + std::to_string(w.size()) + " entries, the feature map set has " +
                       std::to_string(spec.dim()));
  }
  if (!(C > 0.0)) throw InvalidInput("C must be positive");
  if (!(epsilon >= 0.0)) throw InvalidInput("epsilon must be non-negative");
  if (!(constraints.min_ms < constraints.max_ms)) {
    throw InvalidInput("min duration must be below max duration");
  }
  if (!(duration.stddev > 0.0)) throw InvalidInput("duration stddev must be positive");
  for (const auto& m : spec.maps) {
    if (m.feature < 0 || m.feature >= kNumFeatures) throw InvalidInput("feature index out of range");
  }
}

ScoreTable::ScoreTable(const CumulativeStats& stats, const FeatureMapSpec& spec,
                       const Eigen::VectorXd& w, const DurationNorm& duration)
    : stats_(&stats), duration_(duration) {
  const int frames = stats.num_frames();
  onset_terms_ = Eigen::VectorXd::Zero(frames);
  offset_terms_ = Eigen::VectorXd::Zero(frames);
  Eigen::Matrix<double, kNumFeatures, 1> mean_coeff = Eigen::Matrix<double, kNumFeatures, 1>::Zero();
  Eigen::Matrix<double, kNumFeatures, 1> max_coeff = Eigen::Matrix<double, kNumFeatures, 1>::Zero();

  for (int i = 0; i < spec.dim(); ++i) {
    const double wi = w[i];
    if (wi == 0.0) continue;
    const auto& m = spec.maps[i];
    const int f = m.feature;
    switch (m.kind) {
      case MapKind::kValueAtStart:
        for (int t = 0; t < frames; ++t) onset_terms_[t] += wi * stats.value(f, t);
        break;
      case MapKind::kValueAtEnd:
        for (int t = 0; t < frames; ++t) offset_terms_[t] += wi * stats.value(f, t);
        break;
      case MapKind::kDiffAtStart:
        for (int t = 0; t < frames; ++t) onset_terms_[t] += wi * stats.local_diff(f, t, m.span);
        break;
      case MapKind::kDiffAtEnd:
        for (int t = 0; t < frames; ++t) offset_terms_[t] += wi * stats.local_diff(f, t, m.span);
        break;
      case MapKind::kIntervalMean:
        mean_coeff[f] += wi;
        if (m.span > 0) {
          for (int t = 0; t < frames; ++t) onset_terms_[t] -= wi * stats.mean(f, t - m.span, t);
        }
        break;
      case MapKind::kIntervalMax:
        max_coeff[f] += wi;
        if (m.span > 0) {
          for (int t = 0; t < frames; ++t) onset_terms_[t] -= wi * stats.max(f, t - m.span, t);
        }
        break;
      case MapKind::kMeanMinusPost:
        mean_coeff[f] += wi;
        for (int t = 0; t < frames; ++t) offset_terms_[t] -= wi * stats.mean(f, t, t + m.span);
        break;
      case MapKind::kPostMean:
        for (int t = 0; t < frames; ++t) offset_terms_[t] += wi * stats.mean(f, t, t + m.span);
        break;
      case MapKind::kPostMax:
        for (int t = 0; t < frames; ++t) offset_terms_[t] += wi * stats.max(f, t, t + m.span);
        break;
      case MapKind::kDuration: duration_coeff_ += wi; break;
    }
  }
  for (int f = 0; f < kNumFeatures; ++f) {
    if (mean_coeff[f] != 0.0) mean_coeffs_.emplace_back(f, mean_coeff[f]);
    if (max_coeff[f] != 0.0) max_coeffs_.emplace_back(f, max_coeff[f]);
  }
}

double ScoreTable::score(const Interval& c) const {
  double s = onset_terms_[c.ts] + offset_terms_[c.te];
  for (const auto& [f, a] : mean_coeffs_) s += a * stats_->mean(f, c.ts, c.te);
  for (const auto& [f, b] : max_coeffs_) s += b * stats_->max(f, c.ts, c.te);
  if (duration_coeff_ != 0.0) {
    s += duration_coeff_ * (static_cast<double>(c.duration()) - duration_.mean) / duration_.stddev;
  }
  return s;
}

PreparedSequence::PreparedSequence(const FeatureSequence& raw, const NormStats& norm,
                                   const SearchWindow& window)
    : normalized(apply_norm(raw, norm)), stats(normalized), window(window) {}

namespace {

template <typename Objective>
Interval argmax_candidate(const StructuredModel& model, const PreparedSequence& seq,
                          Objective&& objective) {
  const ScoreTable table(seq.stats, model.spec, model.w, model.duration);
  Interval best{-1, -1};
  double best_score = -std::numeric_limits<double>::infinity();
  for_each_candidate(seq.stats.num_frames(), model.constraints, seq.window, [&](const Interval& c) {
    const double s = objective(table.score(c), c);
    if (s > best_score || best.ts < 0) {
      best_score = s;
      best = c;
    }
  });
  if (best.ts < 0) throw InferenceError("no valid candidate interval in the search window");
  return best;
}

}  // namespace

Interval infer(const StructuredModel& model, const PreparedSequence& seq) {
  return argmax_candidate(model, seq, [](double score, const Interval&) { return score; });
}

Interval infer(const StructuredModel& model, const FeatureSequence& raw, const SearchWindow& window) {
  return infer(model, PreparedSequence(raw, model.norm, window));
}

Interval infer(const StructuredModel& model, const FeatureSequence& raw) {
  return infer(model, raw, SearchWindow{0, static_cast<int>(raw.rows()) - 1});
}

Interval loss_augmented_infer(const StructuredModel& model, const PreparedSequence& seq,
                              const Interval& gold) {
  return argmax_candidate(model, seq, [&](double score, const Interval& c) {
    return score + task_loss(gold, c, model.epsilon);
  });
}

PaStep pa_step(Eigen::VectorXd& w, const Eigen::VectorXd& delta_phi, double loss, double C) {
  PaStep step;
  step.loss = loss;
  step.hinge = std::max(0.0, loss - w.dot(delta_phi));
  const double norm_sq = delta_phi.squaredNorm();
  if (step.hinge <= 0.0 || norm_sq == 0.0) return step;
  step.tau = std::min(C, step.hinge / norm_sq);
  w += step.tau * delta_phi;
  step.updated = true;
  return step;
}

PaStep pa_update(StructuredModel& model, const PreparedSequence& seq, const Interval& gold) {
  const Interval violator = loss_augmented_infer(model, seq, gold);
  const Eigen::VectorXd delta = phi(seq.stats, gold, model.spec, model.duration) -
                                phi(seq.stats, violator, model.spec, model.duration);
  PaStep step = pa_step(model.w, delta, task_loss(gold, violator, model.epsilon), model.C);
  step.violator = violator;
  return step;
}

double mean_task_loss(const StructuredModel& model, std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) {
    if (!ex.has_gold) throw DataError("example '" + ex.id + "' has no gold labels");
    const Interval pred = infer(model, ex.features, {ex.window_start, ex.window_end});
    total += task_loss(ex.gold, pred, model.epsilon);
  }
  return total / static_cast<double>(examples.size());
}

StructuredTrainResult train_structured(std::span<const Example> train, std::span<const Example> validation,
                                       const StructuredTrainConfig& config) {
  if (train.empty()) throw TrainingDataError("structured training set is empty");
  if (validation.empty()) throw TrainingDataError("structured validation set is empty");

  StructuredModel model;
  model.spec = FeatureMapSpec::standard(config.interval_row);
  model.C = config.C;
  model.epsilon = config.epsilon;
  model.constraints = config.constraints;
  model.w = Eigen::VectorXd::Zero(model.spec.dim());

  std::vector<FeatureSequence> sequences;
  std::vector<double> durations;
  for (const auto& ex : train) {
    if (!ex.has_gold) throw TrainingDataError("training example '" + ex.id + "' has no gold labels");
    sequences.push_back(ex.features);
    durations.push_back(ex.gold.duration());
  }
  for (const auto& ex : validation) {
    if (!ex.has_gold) throw TrainingDataError("validation example '" + ex.id + "' has no gold labels");
  }
  model.norm = fit_norm_stats(sequences);
  const double n = static_cast<double>(durations.size());
  model.duration.mean = std::accumulate(durations.begin(), durations.end(), 0.0) / n;
  double var = 0.0;
  for (double d : durations) var += (d - model.duration.mean) * (d - model.duration.mean);
  model.duration.stddev = durations.size() > 1 ? std::sqrt(var / (n - 1.0)) : 1.0;
  if (!(model.duration.stddev > 1e-12)) model.duration.stddev = 1.0;
  model.validate();

  std::vector<PreparedSequence> train_seqs;
  train_seqs.reserve(train.size());
  for (const auto& ex : train) {
    const SearchWindow window = config.derive_training_windows
                                    ? training_window(ex.gold, ex.num_frames())
                                    : SearchWindow{ex.window_start, ex.window_end};
    train_seqs.emplace_back(ex.features, model.norm, window);
  }
  std::vector<PreparedSequence> val_seqs;
  val_seqs.reserve(validation.size());
  for (const auto& ex : validation) {
    val_seqs.emplace_back(ex.features, model.norm, SearchWindow{ex.window_start, ex.window_end});
  }

  auto validation_loss = [&](const StructuredModel& m) {
    double total = 0.0;
    for (std::size_t i = 0; i < val_seqs.size(); ++i) {
      total += task_loss(validation[i].gold, infer(m, val_seqs[i]), m.epsilon);
    }
    return total / static_cast<double>(val_seqs.size());
  };

  StructuredTrainResult result;
  result.model = model;
  result.best_validation_loss = std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd weight_sum = Eigen::VectorXd::Zero(model.w.size());
  double steps = 0.0;
  int stale = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    StructuredEpochLog log;
    log.epoch = epoch;
    for (std::size_t idx : order) {
      const PaStep step = pa_update(model, train_seqs[idx], train[idx].gold);
      log.train_loss += step.loss;
      log.updates += step.updated ? 1 : 0;
      weight_sum += model.w;
      steps += 1.0;
    }
    log.train_loss /= static_cast<double>(order.size());

    StructuredModel snapshot = model;
    if (config.average_weights) snapshot.w = weight_sum / steps;
    log.validation_loss = validation_loss(snapshot);
    result.history.push_back(log);

    if (log.validation_loss < result.best_validation_loss) {
      result.best_validation_loss = log.validation_loss;
      result.best_epoch = epoch;
      result.model = snapshot;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
    if (log.updates == 0) break;
  }
  return result;
}

void save_structured_model(std::ostream& out, const StructuredModel& model) {
  using text_io::format_double;
  model.validate();
  out << kStructuredModelHeader << '\n';
  out << "C " << format_double(model.C) << '\n';
  out << "epsilon " << format_double(model.epsilon) << '\n';
  out << "min_duration_ms " << model.constraints.min_ms << '\n';
  out << "max_duration_ms " << model.constraints.max_ms << '\n';
  text_io::write_row(out, "norm_mean", model.norm.mean);
  text_io::write_row(out, "norm_std", model.norm.stddev);
  out << "duration_norm " << format_double(model.duration.mean) << ' '
      << format_double(model.duration.stddev) << '\n';
  out << "maps " << model.spec.dim() << '\n';
  for (const auto& m : model.spec.maps) out << "map " << to_string(m) << '\n';
  text_io::write_row(out, "w", model.w.transpose());
}

StructuredModel load_structured_model(std::istream& in) {
  std::string header;
  std::getline(in, header);
  if (text_io::trim(header) != kStructuredModelHeader) {
    throw FormatError("not a structured model (header '" + text_io::trim(header) + "', expected '" +
                      kStructuredModelHeader + "')");
  }
  StructuredModel model;
  model.C = text_io::parse_double(text_io::read_value(in, "C"));
  model.epsilon = text_io::parse_double(text_io::read_value(in, "epsilon"));
  model.constraints.min_ms = static_cast<int>(text_io::parse_long(text_io::read_value(in, "min_duration_ms")));
  model.constraints.max_ms = static_cast<int>(text_io::parse_long(text_io::read_value(in, "max_duration_ms")));

  const auto mean = text_io::read_row(in, "norm_mean");
  const auto stddev = text_io::read_row(in, "norm_std");
  if (mean.size() != kNumFeatures || stddev.size() != kNumFeatures) {
    throw FormatError("normalization rows need " + std::to_string(kNumFeatures) + " values");
  }
  model.norm.mean = Eigen::Map<const FeatureRow<double>>(mean.data());
  model.norm.stddev = Eigen::Map<const FeatureRow<double>>(stddev.data());

  const auto duration = text_io::read_row(in, "duration_norm");
  if (duration.size() != 2) throw FormatError("duration_norm needs mean and stddev");
  model.duration = {duration[0], duration[1]};

  const long count = text_io::parse_long(text_io::read_value(in, "maps"));
  if (count < 0) throw FormatError("negative map count");
  std::string line;
  while (static_cast<long>(model.spec.maps.size()) < count && std::getline(in, line)) {
    const std::string trimmed = text_io::trim(line);
    if (trimmed.empty()) continue;
    if (trimmed.rfind("map ", 0) != 0) throw FormatError("expected 'map', found '" + trimmed + "'");
    model.spec.maps.push_back(parse_map_descriptor(trimmed.substr(4)));
  }
  if (static_cast<long>(model.spec.maps.size()) != count) throw FormatError("truncated map list");

  const auto w = text_io::read_row(in, "w");
  model.w = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  try {
    model.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("inconsistent structured model: ") + e.what());
  }
  return model;
}

void save_structured_model(const std::string& path, const StructuredModel& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  save_structured_model(out, model);
  if (!out) throw DataError("write failed: " + path);
}

StructuredModel load_structured_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  return load_structured_model(in);
}

}  // namespace preasp
