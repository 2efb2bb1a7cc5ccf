#include "preasp/structured_model.hpp"
#include "preasp/synthdata.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace preasp;

using oracle::brute_force;
using oracle::random_model;
using oracle::random_sequence;
using oracle::random_weights;

TEST(FeatureMapSpec, StandardDimensions) {
  EXPECT_EQ(FeatureMapSpec::standard().dim(), 68);
  EXPECT_EQ(FeatureMapSpec::standard(IntervalRowReading::kPlain).dim(), 64);
  const auto spec = FeatureMapSpec::standard();
  EXPECT_EQ(spec.maps.back().kind, MapKind::kDuration);
  for (const auto& m : spec.maps) {
    EXPECT_GE(m.feature, 0);
    EXPECT_LT(m.feature, kNumFeatures);
    EXPECT_EQ(parse_map_descriptor(to_string(m)), m);
  }
  EXPECT_EQ(to_string({MapKind::kDiffAtStart, kETotal, 5}), "diff_at_ts E_total 5");
  EXPECT_THROW(parse_map_descriptor("diff_at_ts E_nope 5"), FormatError);
  EXPECT_THROW(parse_map_descriptor("mystery E_total 5"), FormatError);
  EXPECT_THROW(parse_map_descriptor("diff_at_ts E_total"), FormatError);
}

TEST(LocalDiff, ClosedForms) {
  const FeatureSequence constant = FeatureSequence::Constant(60, kNumFeatures, 0.1);
  for (int s : kLocalDiffSpans) {
    for (int t = 0; t < 60; ++t) EXPECT_EQ(local_diff(constant, kEHigh, t, s), 0.0);
  }
  FeatureSequence step = FeatureSequence::Zero(60, kNumFeatures);
  step.block(30, 0, 30, kNumFeatures).setOnes();
  for (int s : kLocalDiffSpans) EXPECT_EQ(local_diff(step, kETotal, 30, s), 1.0);

  FeatureSequence ramp(80, kNumFeatures);
  for (int t = 0; t < 80; ++t) ramp.row(t).setConstant(0.25 * t);
  for (int s : kLocalDiffSpans) {
    for (int t = 20; t < 60; ++t) EXPECT_NEAR(local_diff(ramp, kZeroCross, t, s), 0.25 * s, 1e-12);
  }
}

TEST(Phi, PrefixSumsMatchNaiveSummation) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 20 + static_cast<int>(rng() % 180);
    const FeatureSequence x = random_sequence(T, rng);
    const auto spec = FeatureMapSpec::standard(trial % 3 ? IntervalRowReading::kWithBoundaryDiffs
                                                         : IntervalRowReading::kPlain);
    const int ts = static_cast<int>(rng() % (T - 1));
    const int te = ts + 1 + static_cast<int>(rng() % (T - 1 - ts));
    const DurationNorm dn{35.0, 17.5};
    const CumulativeStats stats(x);
    const Eigen::VectorXd fast = phi(stats, {ts, te}, spec, dn);
    const Eigen::VectorXd slow = oracle::naive_phi(x, {ts, te}, spec, dn);
    EXPECT_LE((fast - slow).cwiseAbs().maxCoeff(), 1e-9) << "T " << T << " (" << ts << ", " << te << ")";
    EXPECT_TRUE(fast == phi(stats, {ts, te}, spec, dn));
  }
}

TEST(Phi, ConstantSequenceHasZeroDifferences) {
  for (double c : {0.1, -3.7, 1e5 / 3.0}) {
    const FeatureSequence x = FeatureSequence::Constant(150, kNumFeatures, c);
    const auto spec = FeatureMapSpec::standard();
    for (const Interval cand : {Interval{0, 10}, Interval{40, 90}, Interval{120, 149}}) {
      const Eigen::VectorXd v = phi(x, cand, spec);
      for (int i = 0; i < spec.dim(); ++i) {
        const auto& m = spec.maps[i];
        switch (m.kind) {
          case MapKind::kDiffAtStart:
          case MapKind::kDiffAtEnd:
          case MapKind::kMeanMinusPost: EXPECT_EQ(v[i], 0.0) << to_string(m); break;
          case MapKind::kIntervalMean:
          case MapKind::kIntervalMax: EXPECT_EQ(v[i], m.span > 0 ? 0.0 : c) << to_string(m); break;
          case MapKind::kDuration: break;
          default: EXPECT_EQ(v[i], c) << to_string(m);
        }
      }
    }
  }
}

TEST(Phi, DurationComponent) {
  std::mt19937_64 rng(2);
  const FeatureSequence x = random_sequence(80, rng);
  const auto spec = FeatureMapSpec::standard();
  EXPECT_EQ(phi(x, {10, 50}, spec)[spec.dim() - 1], 40.0);
  EXPECT_EQ(phi(x, {10, 50}, spec, {30.0, 5.0})[spec.dim() - 1], 2.0);
}

TEST(Candidates, Counts) {
  const DurationConstraints open{1, 1000};
  EXPECT_EQ(candidate_set(5, open).size(), 10u);
  EXPECT_EQ(candidate_set(5, DurationConstraints{2, 1000}).size(), 6u);
  const auto c = candidate_set(5, open);
  EXPECT_EQ(c.front(), (Interval{0, 1}));
  EXPECT_EQ(c.back(), (Interval{3, 4}));
  EXPECT_THROW(candidate_set(1, open), InferenceError);
  EXPECT_THROW(candidate_set(50, DurationConstraints{5, 150}, SearchWindow{10, 12}), InferenceError);
}

TEST(Candidates, RespectConstraintsAndOrder) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 2 + static_cast<int>(rng() % 120);
    const DurationConstraints dc{1 + static_cast<int>(rng() % 5), 6 + static_cast<int>(rng() % 60)};
    const int a = static_cast<int>(rng() % T), b = static_cast<int>(rng() % T);
    const SearchWindow window{std::min(a, b) - 3, std::max(a, b) + 3};
    std::size_t expected = 0;
    for (int ts = 0; ts < T; ++ts) {
      for (int te = ts + 1; te < T; ++te) {
        expected += ts >= window.first && te <= window.last && te - ts >= dc.min_ms && te - ts <= dc.max_ms;
      }
    }
    if (expected == 0) {
      EXPECT_THROW(candidate_set(T, dc, window), InferenceError);
      continue;
    }
    const auto cands = candidate_set(T, dc, window);
    EXPECT_EQ(cands.size(), expected);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const auto& c = cands[i];
      EXPECT_TRUE(c.ts >= 0 && c.ts < c.te && c.te < T);
      EXPECT_TRUE(c.duration() >= dc.min_ms && c.duration() <= dc.max_ms);
      if (i > 0) {
        const auto& p = cands[i - 1];
        EXPECT_TRUE(p.ts < c.ts || (p.ts == c.ts && p.te < c.te));
      }
    }
  }
}

TEST(Candidates, TrainingWindow) {
  EXPECT_EQ(training_window({100, 140}, 400).first, 50);
  EXPECT_EQ(training_window({100, 140}, 400).last, 200);
  EXPECT_EQ(training_window({20, 40}, 80).first, 0);
  EXPECT_EQ(training_window({20, 40}, 80).last, 79);
}

TEST(TaskLoss, Fixtures) {
  EXPECT_EQ(task_loss({10, 50}, {12, 55}, 2.0), 1.0);
  EXPECT_EQ(task_loss({10, 50}, {30, 70}, 2.0), 0.0);
  EXPECT_EQ(task_loss({10, 50}, {10, 50}, 2.0), 0.0);
  EXPECT_EQ(task_loss({10, 50}, {10, 52}, 2.0), 0.0);
  EXPECT_EQ(task_loss({10, 50}, {10, 60}, 0.0), 10.0);
}

TEST(TaskLoss, ShiftInvariance) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pos(0, 500), len(1, 150), shift(-200, 200);
  for (int i = 0; i < 1000; ++i) {
    const Interval gold{pos(rng), 0};
    const Interval g{gold.ts, gold.ts + len(rng)};
    const int ps = pos(rng);
    const Interval p{ps, ps + len(rng)};
    const int k = shift(rng);
    EXPECT_EQ(task_loss(g, p, 2.0), task_loss(g, {p.ts + k, p.te + k}, 2.0));
    EXPECT_GE(task_loss(g, p, 2.0), 0.0);
  }
}

TEST(Infer, ZeroWeightsPickFirstCandidate) {
  std::mt19937_64 rng(5);
  StructuredModel m;
  m.spec = FeatureMapSpec::standard();
  m.w = Eigen::VectorXd::Zero(m.spec.dim());
  const FeatureSequence x = random_sequence(60, rng);
  EXPECT_EQ(infer(m, x), (Interval{0, 5}));
  EXPECT_EQ(infer(m, x, SearchWindow{12, 40}), (Interval{12, 17}));
}

TEST(Infer, MatchesBruteForce) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 10 + static_cast<int>(rng() % 71);
    const FeatureSequence x = random_sequence(T, rng);
    StructuredModel m = random_model(rng, trial % 2 ? IntervalRowReading::kPlain
                                                    : IntervalRowReading::kWithBoundaryDiffs);
    if (trial % 10 == 0) m.w.setZero();
    if (trial % 10 == 1) m.w.head(m.w.size() - 1).setZero();  // duration only: many ties
    const SearchWindow window{static_cast<int>(rng() % 5), T - 1 - static_cast<int>(rng() % 5)};
    const Interval expected = brute_force(m, x, window, nullptr);
    if (expected.ts < 0) {
      EXPECT_THROW(infer(m, x, window), InferenceError);
      continue;
    }
    EXPECT_EQ(infer(m, x, window), expected) << "trial " << trial;
    // Positive rescaling of w leaves the argmax alone.
    StructuredModel scaled = m;
    scaled.w *= 4.0;
    EXPECT_EQ(infer(scaled, x, window), expected);
  }
}

TEST(LossAugmentedInfer, MatchesBruteForce) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 10 + static_cast<int>(rng() % 71);
    const FeatureSequence x = random_sequence(T, rng);
    StructuredModel m = random_model(rng, IntervalRowReading::kWithBoundaryDiffs);
    m.w *= 0.05;
    if (trial % 10 == 0) m.w.setZero();
    const SearchWindow window{0, T - 1};
    const auto cands = candidate_set(T, m.constraints, window);
    const Interval gold = cands[rng() % cands.size()];
    const PreparedSequence seq(x, m.norm, window);
    const Interval got = loss_augmented_infer(m, seq, gold);
    EXPECT_EQ(got, brute_force(m, x, window, &gold)) << "trial " << trial;
    const auto objective = [&](const Interval& c) {
      return m.w.dot(oracle::naive_phi(x, c, m.spec, m.duration)) + task_loss(gold, c, m.epsilon);
    };
    EXPECT_GE(objective(got), objective(gold) - 1e-12);
  }
}

TEST(LossAugmentedInfer, ZeroWeightsMaximizeLoss) {
  std::mt19937_64 rng(8);
  StructuredModel m;
  m.spec = FeatureMapSpec::standard();
  m.w = Eigen::VectorXd::Zero(m.spec.dim());
  m.constraints = {5, 40};
  const FeatureSequence x = random_sequence(70, rng);
  const PreparedSequence seq(x, m.norm, {0, 69});
  // Gold duration 10: the most distant duration is 40, first such pair is (0, 40).
  EXPECT_EQ(loss_augmented_infer(m, seq, {20, 30}), (Interval{0, 40}));
  // Gold duration 38: duration 5 is farthest.
  EXPECT_EQ(loss_augmented_infer(m, seq, {10, 48}), (Interval{0, 5}));
}

TEST(PaStep, PassiveAndClosedForm) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(4);
  d[0] = 1.0;
  const PaStep s = pa_step(w, d, 0.5, 50.0);
  EXPECT_TRUE(s.updated);
  EXPECT_EQ(s.tau, 0.5);
  EXPECT_EQ(w, (Eigen::VectorXd(4) << 0.5, 0, 0, 0).finished());

  // Margin already met: nothing moves.
  const Eigen::VectorXd before = w;
  const PaStep passive = pa_step(w, d, 0.25, 50.0);
  EXPECT_FALSE(passive.updated);
  EXPECT_EQ(passive.tau, 0.0);
  EXPECT_EQ(passive.hinge, 0.0);
  EXPECT_TRUE(w == before);

  // Zero feature difference: no update even with positive loss.
  const PaStep flat = pa_step(w, Eigen::VectorXd::Zero(4), 3.0, 50.0);
  EXPECT_FALSE(flat.updated);
  EXPECT_TRUE(w == before);

  // Clipped by C.
  Eigen::VectorXd w2 = Eigen::VectorXd::Zero(4);
  const PaStep clipped = pa_step(w2, d * 0.1, 100.0, 50.0);
  EXPECT_EQ(clipped.tau, 50.0);
}

TEST(PaStep, RandomUpdatesSatisfyTheConstraint) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> loss(0.0, 20.0);
  int active = 0, clipped = 0, passive = 0;
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd w = random_weights(12, rng);
    const Eigen::VectorXd d = random_weights(12, rng) * (i % 4 == 0 ? 0.01 : 1.0);
    const double gamma = loss(rng);
    const double C = i % 3 == 0 ? 0.5 : 50.0;
    const Eigen::VectorXd before = w;
    const double hinge = std::max(0.0, gamma - before.dot(d));
    const PaStep s = pa_step(w, d, gamma, C);
    EXPECT_LE(s.tau, C);
    EXPECT_LE((w - before).norm(), C * d.norm() * (1.0 + 1e-12));
    if (hinge == 0.0) {
      ++passive;
      EXPECT_TRUE(w == before);
      EXPECT_EQ(s.tau, 0.0);
    } else if (s.tau < C) {
      ++active;
      EXPECT_NEAR(w.dot(d), gamma, 1e-9);
    } else {
      ++clipped;
      EXPECT_LT(w.dot(d), gamma);
    }
  }
  EXPECT_GT(active, 0);
  EXPECT_GT(clipped, 0);
  EXPECT_GT(passive, 0);
}

TEST(TrainStructured, TriviallyScorableExample) {
  // E_high is 1 exactly inside the gold interval and 0 elsewhere.
  Example ex;
  ex.id = "one";
  ex.features = FeatureSequence::Zero(200, kNumFeatures);
  ex.gold = {80, 115};
  ex.features.block(80, kEHigh, 35, 1).setOnes();
  std::mt19937_64 rng(10);
  std::normal_distribution<double> small(0.0, 0.01);
  for (int t = 0; t < 200; ++t) ex.features(t, kETotal) = small(rng);
  ex.window_start = 30;
  ex.window_end = 175;
  const std::vector<Example> train{ex};
  StructuredTrainConfig config;
  config.max_epochs = 5;
  // Narrow durations so the E_high step, not the duration term, separates the gold pair.
  config.constraints = {25, 45};
  const auto result = train_structured(train, train, config);
  EXPECT_LE(result.history.size(), 5u);
  EXPECT_EQ(mean_task_loss(result.model, train), 0.0);
  EXPECT_EQ(result.best_validation_loss, 0.0);
}

TEST(TrainStructured, EmptySetsAreErrors) {
  std::vector<Example> none;
  Example ex;
  ex.features = FeatureSequence::Zero(100, kNumFeatures);
  ex.gold = {20, 40};
  ex.window_end = 99;
  const std::vector<Example> one{ex};
  EXPECT_THROW(train_structured(none, one, {}), TrainingDataError);
  EXPECT_THROW(train_structured(one, none, {}), TrainingDataError);
}

class SyntheticStructured : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    GenParams params;
    params.seed = 21;
    examples_ = new std::vector<Example>;
    for (int i = 0; i < 120; ++i) {
      const SynthToken tok = generate_corpus_token(params, i);
      Example ex;
      ex.id = std::to_string(i);
      ex.speaker = tok.speaker_id;
      ex.features = extract_features(tok.wave);
      ex.gold = tok.gold;
      ex.window_start = tok.window_start_ms;
      ex.window_end = tok.window_end_ms;
      examples_->push_back(std::move(ex));
    }
  }
  static void TearDownTestSuite() { delete examples_; }
  static std::span<const Example> train() { return std::span<const Example>(*examples_).subspan(0, 70); }
  static std::span<const Example> val() { return std::span<const Example>(*examples_).subspan(70, 15); }
  static std::span<const Example> test() { return std::span<const Example>(*examples_).subspan(85); }
  static std::vector<Example>* examples_;
};

std::vector<Example>* SyntheticStructured::examples_ = nullptr;

TEST_F(SyntheticStructured, PredictionsOverlapGold) {
  const auto result = train_structured(train(), val(), {});
  int overlap = 0;
  for (const auto& ex : test()) {
    const Interval p = infer(result.model, ex.features, {ex.window_start, ex.window_end});
    EXPECT_GT(p.duration(), 0);
    overlap += p.ts < ex.gold.te && ex.gold.ts < p.te;
  }
  EXPECT_GE(overlap, static_cast<int>(std::ceil(0.95 * test().size())));
}

TEST_F(SyntheticStructured, EarlyStoppingAndDeterminism) {
  StructuredTrainConfig config;
  config.max_epochs = 8;
  const auto a = train_structured(train(), val(), config);
  const auto b = train_structured(train(), val(), config);
  EXPECT_TRUE(a.model.w == b.model.w);
  EXPECT_LE(a.best_validation_loss, a.history.back().validation_loss);
  EXPECT_EQ(a.history[a.best_epoch - 1].validation_loss, a.best_validation_loss);
  EXPECT_NEAR(mean_task_loss(a.model, val()), a.best_validation_loss, 1e-12);

  config.average_weights = true;
  const auto avg = train_structured(train(), val(), config);
  EXPECT_EQ(avg.model.w.size(), a.model.w.size());
  EXPECT_TRUE(avg.model.w.allFinite());
}

TEST(StructuredModelFile, RoundTripIsBitExact) {
  std::mt19937_64 rng(11);
  for (auto reading : {IntervalRowReading::kWithBoundaryDiffs, IntervalRowReading::kPlain}) {
    StructuredModel m = random_model(rng, reading);
    m.w *= 1.0 / 3.0;
    m.C = 12.5;
    m.epsilon = 1.75;
    m.duration = {37.123456789, 20.8};
    m.norm.mean = FeatureRow<double>::Random();
    m.norm.stddev = FeatureRow<double>::Random().cwiseAbs() + FeatureRow<double>::Constant(0.5);
    std::stringstream first;
    save_structured_model(first, m);
    const StructuredModel back = load_structured_model(first);
    EXPECT_TRUE(back.w == m.w);
    EXPECT_EQ(back.spec, m.spec);
    EXPECT_TRUE(back.norm.mean == m.norm.mean);
    EXPECT_TRUE(back.norm.stddev == m.norm.stddev);
    EXPECT_EQ(back.duration.mean, m.duration.mean);
    EXPECT_EQ(back.duration.stddev, m.duration.stddev);
    EXPECT_EQ(back.C, m.C);
    EXPECT_EQ(back.epsilon, m.epsilon);
    EXPECT_EQ(back.constraints.min_ms, m.constraints.min_ms);
    EXPECT_EQ(back.constraints.max_ms, m.constraints.max_ms);
    std::stringstream second;
    save_structured_model(second, back);
    EXPECT_EQ(first.str(), second.str());
  }
  std::stringstream wrong("PREASP-FRAME v1\n");
  EXPECT_THROW(load_structured_model(wrong), FormatError);
}
