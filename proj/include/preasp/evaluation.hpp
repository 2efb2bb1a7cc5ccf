#pragma once

#include "preasp/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace preasp {

inline constexpr double kDefaultTolerances[] = {5.0, 10.0, 15.0, 20.0};

enum class ToleranceMode {
  kDuration,        // |pred duration - gold duration| <= threshold
  kBothBoundaries,  // |dts| <= threshold and |dte| <= threshold
};

/// Percent of examples within each threshold.
std::vector<double> tolerance_accuracy(std::span<const Interval> preds, std::span<const Interval> golds,
                                       std::span<const double> thresholds,
                                       ToleranceMode mode = ToleranceMode::kDuration);

struct BoundaryError {
  double onset = 0.0;
  double offset = 0.0;
};

/// Mean absolute onset and offset errors.
BoundaryError boundary_mae(std::span<const Interval> preds, std::span<const Interval> golds);

struct DurationStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) standard deviation
};

DurationStats duration_stats(std::span<const Interval> pairs);

/// Pearson product-moment correlation. Throws InvalidInput on zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> accuracy;  // percent, one per threshold
  BoundaryError mae;
  DurationStats predicted;
  DurationStats gold;
  double pearson_r = 0.0;
  bool pearson_defined = true;
  std::size_t count = 0;
};

EvalReport evaluate(std::span<const Interval> preds, std::span<const Interval> golds,
                    std::span<const double> thresholds = kDefaultTolerances,
                    ToleranceMode mode = ToleranceMode::kDuration);

/// Average of per-fold reports weighted by each fold's example count.
EvalReport aggregate(std::span<const EvalReport> folds);

/// Table with columns `<=5 <=10 <=15 <=20 | dTs dTe`, then duration statistics and r.
void print_report(std::ostream& out, const EvalReport& report, const std::string& label = "");

void write_report_csv(std::ostream& out, std::span<const EvalReport> reports,
                      std::span<const std::string> labels);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::string name;
};

/// Seeded k-fold partition of `n` items. In each fold floor(val_fraction * |rest|) of the
/// non-test items become validation.
std::vector<Fold> kfold_split(std::size_t n, int k, double val_fraction, std::uint64_t seed);

/// One fold per distinct speaker, in sorted speaker order.
std::vector<Fold> loso_split(std::span<const std::string> speakers, double val_fraction,
                             std::uint64_t seed);

}  // namespace preasp
