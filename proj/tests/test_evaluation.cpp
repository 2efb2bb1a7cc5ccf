#include "preasp/annotation.hpp"
#include "preasp/evaluation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace preasp;

namespace {

std::vector<Interval> shift_durations(const std::vector<Interval>& golds, const std::vector<int>& diffs) {
  std::vector<Interval> out;
  for (std::size_t i = 0; i < golds.size(); ++i) out.push_back({golds[i].ts, golds[i].te + diffs[i]});
  return out;
}

double two_pass_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<Interval> random_pairs(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> pos(0, 400), len(5, 120);
  std::vector<Interval> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int ts = pos(rng);
    out.push_back({ts, ts + len(rng)});
  }
  return out;
}

void expect_partition(const std::vector<Fold>& folds, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& f : folds) {
    std::set<std::size_t> test(f.test.begin(), f.test.end()), train(f.train.begin(), f.train.end()),
        val(f.validation.begin(), f.validation.end());
    EXPECT_EQ(test.size() + train.size() + val.size(), n) << f.name;
    for (auto i : f.test) {
      ++seen[i];
      EXPECT_FALSE(train.count(i) || val.count(i));
    }
    for (auto i : f.validation) EXPECT_FALSE(train.count(i));
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], 1) << i;
}

}  // namespace

TEST(ToleranceAccuracy, Identity) {
  std::mt19937_64 rng(1);
  const auto golds = random_pairs(rng, 30);
  for (auto mode : {ToleranceMode::kDuration, ToleranceMode::kBothBoundaries}) {
    const auto acc = tolerance_accuracy(golds, golds, kDefaultTolerances, mode);
    for (double a : acc) EXPECT_EQ(a, 100.0);
  }
}

TEST(ToleranceAccuracy, HandCount) {
  const std::vector<Interval> golds{{0, 40}, {100, 130}, {10, 70}, {200, 220}};
  const auto preds = shift_durations(golds, {3, -7, 12, 25});
  EXPECT_EQ(tolerance_accuracy(preds, golds, kDefaultTolerances), (std::vector<double>{25, 50, 75, 75}));
}

TEST(ToleranceAccuracy, MonotoneInThreshold) {
  std::mt19937_64 rng(2);
  const std::vector<double> thresholds{0, 1, 2, 5, 10, 15, 20, 50};
  for (int trial = 0; trial < 50; ++trial) {
    const auto golds = random_pairs(rng, 25);
    const auto preds = random_pairs(rng, 25);
    for (auto mode : {ToleranceMode::kDuration, ToleranceMode::kBothBoundaries}) {
      const auto acc = tolerance_accuracy(preds, golds, thresholds, mode);
      for (std::size_t i = 0; i < acc.size(); ++i) {
        EXPECT_GE(acc[i], 0.0);
        EXPECT_LE(acc[i], 100.0);
        if (i > 0) EXPECT_GE(acc[i], acc[i - 1]);
      }
    }
  }
}

TEST(ToleranceAccuracy, Errors) {
  const std::vector<Interval> one{{0, 10}}, two{{0, 10}, {5, 20}}, none;
  EXPECT_THROW(tolerance_accuracy(one, two, kDefaultTolerances), InvalidInput);
  EXPECT_THROW(tolerance_accuracy(none, none, kDefaultTolerances), InvalidInput);
  EXPECT_THROW(boundary_mae(one, two), InvalidInput);
}

TEST(BoundaryMae, HandComputation) {
  const std::vector<Interval> golds{{100, 140}, {200, 260}};
  const std::vector<Interval> preds{{102, 140}, {196, 266}};
  const auto mae = boundary_mae(preds, golds);
  EXPECT_EQ(mae.onset, 3.0);
  EXPECT_EQ(mae.offset, 3.0);
  const auto zero = boundary_mae(golds, golds);
  EXPECT_EQ(zero.onset, 0.0);
  EXPECT_EQ(zero.offset, 0.0);
}

TEST(Metrics, PermutationInvariant) {
  std::mt19937_64 rng(3);
  auto golds = random_pairs(rng, 40);
  auto preds = random_pairs(rng, 40);
  const EvalReport a = evaluate(preds, golds);
  std::vector<std::size_t> order(golds.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Interval> g2, p2;
  for (auto i : order) {
    g2.push_back(golds[i]);
    p2.push_back(preds[i]);
  }
  const EvalReport b = evaluate(p2, g2);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_NEAR(a.mae.onset, b.mae.onset, 1e-12);
  EXPECT_NEAR(a.mae.offset, b.mae.offset, 1e-12);
  EXPECT_NEAR(a.predicted.mean, b.predicted.mean, 1e-12);
  EXPECT_NEAR(a.gold.stddev, b.gold.stddev, 1e-12);
  EXPECT_NEAR(a.pearson_r, b.pearson_r, 1e-12);
}

TEST(DurationStats, HandComputation) {
  const std::vector<Interval> pairs{{0, 30}, {10, 60}};
  const auto s = duration_stats(pairs);
  EXPECT_EQ(s.mean, 40.0);
  EXPECT_NEAR(s.stddev, 14.142135623730951, 1e-12);
  const std::vector<Interval> same{{0, 25}, {40, 65}, {100, 125}};
  EXPECT_EQ(duration_stats(same).stddev, 0.0);
  const std::vector<Interval> single{{0, 10}};
  EXPECT_THROW(duration_stats(single), InvalidInput);
}

TEST(Pearson, Cases) {
  const std::vector<double> a{1, 2, 3, 4}, b{1.1, 1.9, 3.2, 3.8};
  EXPECT_NEAR(pearson(a, a), 1.0, 1e-15);
  std::vector<double> anti;
  for (double v : a) anti.push_back(-v + 7.0);
  EXPECT_NEAR(pearson(a, anti), -1.0, 1e-15);
  EXPECT_NEAR(pearson(a, b), two_pass_pearson(a, b), 1e-12);
  const std::vector<double> flat{2, 2, 2, 2};
  EXPECT_THROW(pearson(a, flat), InvalidInput);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{2}), InvalidInput);
  EXPECT_THROW(pearson(a, std::vector<double>{1, 2}), InvalidInput);
}

TEST(Pearson, AffineInvariance) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> dist(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(20), b(20);
    for (auto& v : a) v = dist(rng);
    const double c = dist(rng), d = dist(rng);
    for (std::size_t i = 0; i < a.size(); ++i) b[i] = c * a[i] + d;
    const double r = pearson(a, b);
    EXPECT_NEAR(r, c > 0 ? 1.0 : -1.0, 1e-9);
    std::vector<double> noisy(20);
    for (auto& v : noisy) v = dist(rng);
    const double q = pearson(a, noisy);
    EXPECT_GE(q, -1.0);
    EXPECT_LE(q, 1.0);
    EXPECT_NEAR(q, two_pass_pearson(a, noisy), 1e-12);
  }
}

TEST(Evaluate, CommittedFixture) {
  const auto records = read_predictions(std::string(PREASP_FIXTURE_DIR) + "/metrics_predictions.csv");
  ASSERT_EQ(records.size(), 4u);
  std::vector<Interval> preds, golds;
  for (const auto& r : records) {
    preds.push_back(*r.pred);
    golds.push_back(*r.gold);
  }
  const EvalReport rep = evaluate(preds, golds);
  EXPECT_EQ(rep.accuracy, (std::vector<double>{25, 50, 75, 75}));
  EXPECT_EQ(rep.mae.onset, 5.75);
  EXPECT_EQ(rep.mae.offset, 6.5);
  EXPECT_EQ(rep.gold.mean, 37.5);
  EXPECT_EQ(rep.gold.stddev, std::sqrt(875.0 / 3.0));
  EXPECT_EQ(rep.predicted.mean, 42.75);
  EXPECT_EQ(rep.predicted.stddev, std::sqrt(68.75 / 3.0));
  EXPECT_NEAR(rep.pearson_r, 117.5 / std::sqrt(875.0 * 68.75), 1e-15);
  EXPECT_EQ(rep.count, 4u);

  const EvalReport both = evaluate(preds, golds, kDefaultTolerances, ToleranceMode::kBothBoundaries);
  EXPECT_EQ(both.accuracy, (std::vector<double>{50, 75, 100, 100}));
}

TEST(Evaluate, SingleExampleHasNoCorrelation) {
  const std::vector<Interval> one{{0, 30}};
  const EvalReport r = evaluate(one, one);
  EXPECT_FALSE(r.pearson_defined);
  EXPECT_EQ(r.gold.mean, 30.0);
}

TEST(Aggregate, WeightsByCount) {
  EvalReport a, b;
  a.thresholds = b.thresholds = {5, 10};
  a.accuracy = {100, 100};
  b.accuracy = {0, 50};
  a.count = 3;
  b.count = 1;
  a.mae = {2, 4};
  b.mae = {6, 8};
  a.pearson_r = 0.5;
  b.pearson_defined = false;
  const std::vector<EvalReport> folds{a, b};
  const EvalReport out = aggregate(folds);
  EXPECT_EQ(out.accuracy, (std::vector<double>{75, 87.5}));
  EXPECT_EQ(out.mae.onset, 3.0);
  EXPECT_EQ(out.mae.offset, 5.0);
  EXPECT_EQ(out.count, 4u);
  EXPECT_TRUE(out.pearson_defined);
  EXPECT_EQ(out.pearson_r, 0.5);

  b.thresholds = {5, 15};
  const std::vector<EvalReport> mismatched{a, b};
  EXPECT_THROW(aggregate(mismatched), InvalidInput);
  EXPECT_THROW(aggregate(std::span<const EvalReport>{}), InvalidInput);
}

TEST(Report, TextAndCsv) {
  const std::vector<Interval> golds{{100, 140}, {200, 230}, {50, 110}, {300, 320}};
  const std::vector<Interval> preds{{102, 143}, {197, 234}, {58, 106}, {290, 335}};
  const EvalReport rep = evaluate(preds, golds);
  std::ostringstream text;
  print_report(text, rep, "fixture");
  EXPECT_NE(text.str().find("25.0"), std::string::npos);
  EXPECT_NE(text.str().find("5.8"), std::string::npos);
  EXPECT_NE(text.str().find("gold 37.5 / 17.1"), std::string::npos);

  std::ostringstream csv;
  const std::vector<EvalReport> reps{rep};
  const std::vector<std::string> labels{"fixture"};
  write_report_csv(csv, reps, labels);
  std::istringstream lines(csv.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_EQ(header.rfind("label,acc_le_5,acc_le_10,acc_le_15,acc_le_20,mae_ts", 0), 0u);
  EXPECT_EQ(row.rfind("fixture,25,50,75,75,5.75,6.5,", 0), 0u);
}

TEST(KFold, TenItemsFiveFolds) {
  const auto folds = kfold_split(10, 5, 0.15, 7);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) {
    EXPECT_EQ(f.test.size(), 2u);
    EXPECT_EQ(f.validation.size(), 1u);  // floor(0.15 * 8)
    EXPECT_EQ(f.train.size(), 7u);
  }
  expect_partition(folds, 10);
  const auto again = kfold_split(10, 5, 0.15, 7);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    EXPECT_EQ(folds[i].test, again[i].test);
    EXPECT_EQ(folds[i].train, again[i].train);
    EXPECT_EQ(folds[i].validation, again[i].validation);
  }
}

TEST(KFold, PropertiesOverRandomSizes) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 9);
    const std::size_t n = k + rng() % 300;
    const auto folds = kfold_split(n, k, 0.15, rng());
    ASSERT_EQ(folds.size(), static_cast<std::size_t>(k));
    expect_partition(folds, n);
    std::size_t lo = n, hi = 0;
    for (const auto& f : folds) {
      lo = std::min(lo, f.test.size());
      hi = std::max(hi, f.test.size());
      const std::size_t rest = n - f.test.size();
      EXPECT_EQ(f.validation.size(), static_cast<std::size_t>(std::floor(0.15 * static_cast<double>(rest))));
    }
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(KFold, Errors) {
  EXPECT_THROW(kfold_split(4, 5, 0.15, 1), InvalidInput);
  EXPECT_THROW(kfold_split(10, 1, 0.15, 1), InvalidInput);
  EXPECT_THROW(kfold_split(10, 2, 1.0, 1), InvalidInput);
}

TEST(Loso, ThreeSpeakers) {
  const std::vector<std::string> speakers{"b", "a", "c", "a", "b", "c", "c", "a", "b", "a"};
  const auto folds = loso_split(speakers, 0.15, 3);
  ASSERT_EQ(folds.size(), 3u);
  EXPECT_EQ(folds[0].name, "a");
  EXPECT_EQ(folds[2].name, "c");
  expect_partition(folds, speakers.size());
  for (const auto& f : folds) {
    for (auto i : f.test) EXPECT_EQ(speakers[i], f.name);
    for (auto i : f.train) EXPECT_NE(speakers[i], f.name);
    for (auto i : f.validation) EXPECT_NE(speakers[i], f.name);
  }
}

TEST(Loso, Errors) {
  const std::vector<std::string> one{"a", "a", "a"};
  EXPECT_THROW(loso_split(one, 0.15, 1), InvalidInput);
}
