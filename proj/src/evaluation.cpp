#include "preasp/evaluation.hpp"

#include "preasp/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

namespace preasp {

namespace {

void check_pairs(std::span<const Interval> preds, std::span<const Interval> golds) {
  if (preds.size() != golds.size()) {
    throw InvalidInput("prediction count " + std::to_string(preds.size()) +
                       " does not match gold count " + std::to_string(golds.size()));
  }
  if (preds.empty()) throw InvalidInput("no examples to evaluate");
}

std::vector<double> durations(std::span<const Interval> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.duration());
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Moves floor(val_fraction * |pool|) items of an already shuffled pool into validation.
void carve_validation(Fold& fold, std::vector<std::size_t> pool, double val_fraction) {
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(pool.size())));
  fold.validation.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
  fold.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
  std::sort(fold.validation.begin(), fold.validation.end());
  std::sort(fold.train.begin(), fold.train.end());
  std::sort(fold.test.begin(), fold.test.end());
}

}  // namespace

std::vector<double> tolerance_accuracy(std::span<const Interval> preds, std::span<const Interval> golds,
                                       std::span<const double> thresholds, ToleranceMode mode) {
  check_pairs(preds, golds);
  std::vector<double> out;
  for (double theta : thresholds) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      bool ok;
      if (mode == ToleranceMode::kDuration) {
        ok = std::abs(preds[i].duration() - golds[i].duration()) <= theta;
      } else {
        ok = std::abs(preds[i].ts - golds[i].ts) <= theta && std::abs(preds[i].te - golds[i].te) <= theta;
      }
      hits += ok ? 1 : 0;
    }
    out.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(preds.size()));
  }
  return out;
}

BoundaryError boundary_mae(std::span<const Interval> preds, std::span<const Interval> golds) {
  check_pairs(preds, golds);
  BoundaryError err;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    err.onset += std::abs(preds[i].ts - golds[i].ts);
    err.offset += std::abs(preds[i].te - golds[i].te);
  }
  const double n = static_cast<double>(preds.size());
  err.onset /= n;
  err.offset /= n;
  return err;
}

DurationStats duration_stats(std::span<const Interval> pairs) {
  if (pairs.size() < 2) throw InvalidInput("duration_stats needs at least two pairs");
  const auto d = durations(pairs);
  const double n = static_cast<double>(d.size());
  DurationStats s;
  s.mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : d) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / (n - 1.0));
  return s;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("pearson: length mismatch");
  if (a.size() < 2) throw InvalidInput("pearson: need at least two values");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw InvalidInput("pearson: correlation undefined for zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

EvalReport evaluate(std::span<const Interval> preds, std::span<const Interval> golds,
                    std::span<const double> thresholds, ToleranceMode mode) {
  check_pairs(preds, golds);
  EvalReport r;
  r.thresholds.assign(thresholds.begin(), thresholds.end());
  r.accuracy = tolerance_accuracy(preds, golds, thresholds, mode);
  r.mae = boundary_mae(preds, golds);
  r.count = preds.size();
  if (preds.size() >= 2) {
    r.predicted = duration_stats(preds);
    r.gold = duration_stats(golds);
    try {
      r.pearson_r = pearson(durations(preds), durations(golds));
    } catch (const InvalidInput&) {
      r.pearson_defined = false;
    }
  } else {
    r.predicted = {static_cast<double>(preds[0].duration()), 0.0};
    r.gold = {static_cast<double>(golds[0].duration()), 0.0};
    r.pearson_defined = false;
  }
  return r;
}

EvalReport aggregate(std::span<const EvalReport> folds) {
  if (folds.empty()) throw InvalidInput("aggregate: no folds");
  EvalReport out;
  out.thresholds = folds.front().thresholds;
  out.accuracy.assign(out.thresholds.size(), 0.0);
  double total = 0.0, r_weight = 0.0;
  for (const auto& f : folds) {
    if (f.thresholds != out.thresholds) throw InvalidInput("aggregate: folds use different thresholds");
    const double w = static_cast<double>(f.count);
    total += w;
    for (std::size_t i = 0; i < out.accuracy.size(); ++i) out.accuracy[i] += w * f.accuracy[i];
    out.mae.onset += w * f.mae.onset;
    out.mae.offset += w * f.mae.offset;
    out.predicted.mean += w * f.predicted.mean;
    out.predicted.stddev += w * f.predicted.stddev;
    out.gold.mean += w * f.gold.mean;
    out.gold.stddev += w * f.gold.stddev;
    if (f.pearson_defined) {
      out.pearson_r += w * f.pearson_r;
      r_weight += w;
    }
    out.count += f.count;
  }
  for (auto& a : out.accuracy) a /= total;
  out.mae.onset /= total;
  out.mae.offset /= total;
  out.predicted.mean /= total;
  out.predicted.stddev /= total;
  out.gold.mean /= total;
  out.gold.stddev /= total;
  out.pearson_defined = r_weight > 0.0;
  out.pearson_r = out.pearson_defined ? out.pearson_r / r_weight : 0.0;
  return out;
}

void print_report(std::ostream& out, const EvalReport& report, const std::string& label) {
  char buf[256];
  if (!label.empty()) out << label << '\n';
  for (double t : report.thresholds) {
    std::snprintf(buf, sizeof buf, "%7s", ("<=" + std::to_string(static_cast<int>(t))).c_str());
    out << buf;
  }
  out << " |    dTs    dTe\n";
  for (double a : report.accuracy) {
    std::snprintf(buf, sizeof buf, "%7.1f", a);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, " | %6.1f %6.1f\n", report.mae.onset, report.mae.offset);
  out << buf;
  std::snprintf(buf, sizeof buf, "duration mean/std (ms): gold %.1f / %.1f, predicted %.1f / %.1f\n",
                report.gold.mean, report.gold.stddev, report.predicted.mean, report.predicted.stddev);
  out << buf;
  if (report.pearson_defined) {
    std::snprintf(buf, sizeof buf, "pearson r: %.3f (n = %zu)\n", report.pearson_r, report.count);
  } else {
    std::snprintf(buf, sizeof buf, "pearson r: undefined (n = %zu)\n", report.count);
  }
  out << buf;
}

void write_report_csv(std::ostream& out, std::span<const EvalReport> reports,
                      std::span<const std::string> labels) {
  using text_io::format_double;
  if (reports.empty()) return;
  out << "label";
  for (double t : reports.front().thresholds) out << ",acc_le_" << format_double(t);
  out << ",mae_ts,mae_te,pred_dur_mean,pred_dur_std,gold_dur_mean,gold_dur_std,pearson_r,count\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    out << (i < labels.size() ? labels[i] : std::to_string(i));
    for (double a : r.accuracy) out << ',' << format_double(a);
    out << ',' << format_double(r.mae.onset) << ',' << format_double(r.mae.offset) << ','
        << format_double(r.predicted.mean) << ',' << format_double(r.predicted.stddev) << ','
        << format_double(r.gold.mean) << ',' << format_double(r.gold.stddev) << ','
        << (r.pearson_defined ? format_double(r.pearson_r) : std::string("NA")) << ',' << r.count
        << '\n';
  }
}

std::vector<Fold> kfold_split(std::size_t n, int k, double val_fraction, std::uint64_t seed) {
  if (k < 2) throw InvalidInput("kfold_split: k must be at least 2");
  if (n < static_cast<std::size_t>(k)) {
    throw InvalidInput("kfold_split: " + std::to_string(n) + " items cannot fill " +
                       std::to_string(k) + " folds");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw InvalidInput("kfold_split: val_fraction must be in [0, 1)");
  }
  std::mt19937_64 rng(seed);
  const auto order = shuffled_indices(n, rng);
  const std::size_t base = n / k, extra = n % k;

  std::vector<Fold> folds(k);
  std::size_t begin = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    Fold& fold = folds[f];
    fold.name = "fold" + std::to_string(f + 1);
    fold.test.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(begin + size));
    std::vector<std::size_t> rest;
    rest.reserve(n - size);
    rest.insert(rest.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(begin));
    rest.insert(rest.end(), order.begin() + static_cast<std::ptrdiff_t>(begin + size), order.end());
    carve_validation(fold, std::move(rest), val_fraction);
    begin += size;
  }
  return folds;
}

std::vector<Fold> loso_split(std::span<const std::string> speakers, double val_fraction,
                             std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < speakers.size(); ++i) by_speaker[speakers[i]].push_back(i);
  if (by_speaker.size() < 2) throw InvalidInput("loso_split: need at least two speakers");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw InvalidInput("loso_split: val_fraction must be in [0, 1)");
  }

  std::mt19937_64 rng(seed);
  std::vector<Fold> folds;
  for (const auto& [speaker, items] : by_speaker) {
    Fold fold;
    fold.name = speaker;
    fold.test = items;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < speakers.size(); ++i) {
      if (speakers[i] != speaker) rest.push_back(i);
    }
    std::shuffle(rest.begin(), rest.end(), rng);
    carve_validation(fold, std::move(rest), val_fraction);
    folds.push_back(std::move(fold));
  }
  return folds;
}

}  // namespace preasp
