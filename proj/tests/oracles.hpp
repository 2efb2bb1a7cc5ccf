#pragma once

// Independent reference implementations shared by the unit tests and the acceptance suite.
// Everything here is written with plain loops and no shared code paths with the library
// beyond its data types.

#include "preasp/structured_model.hpp"
#include "preasp/wav.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace preasp::oracle {

template <typename Fn>
Waveform make_wave(int sr, long n, Fn fn) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (long i = 0; i < n; ++i) w.samples[i] = fn(i);
  return w;
}

inline Waveform noise(int sr, long n, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  return make_wave(sr, n, [&](long) { return dist(rng); });
}

inline Waveform sawtooth(int sr, double ms, double f0) {
  return make_wave(sr, static_cast<long>(ms * sr / 1000), [&](long i) {
    const double phase = std::fmod(f0 * i / sr, 1.0);
    return 0.5 * (2.0 * phase - 1.0);
  });
}

// Windowed segment exactly as the extractor frames it: Hamming (symmetric) over
// round(window_ms * sr) samples starting half a window before the centre.
inline std::vector<double> windowed_segment(const Waveform& w, double center_ms, double window_ms) {
  const int n = static_cast<int>(std::lround(window_ms * w.sample_rate / 1000.0));
  const long center = static_cast<long>(std::floor(center_ms * w.sample_rate / 1000.0 + 1e-9));
  std::vector<double> seg(n);
  for (int i = 0; i < n; ++i) {
    const long j = std::clamp<long>(center - n / 2 + i, 0, w.samples.size() - 1);
    seg[i] = (0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1))) * w.samples[j];
  }
  return seg;
}

inline double direct_dft_power(const std::vector<double>& seg, double freq_hz, int sr) {
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    acc += seg[i] * std::polar(1.0, -2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / sr);
  }
  return std::norm(acc);
}

inline FeatureSequence random_sequence(int frames, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  FeatureSequence f(frames, kNumFeatures);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = dist(rng);
  return f;
}

inline Eigen::VectorXd random_weights(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd w(n);
  for (auto& v : w) v = dist(rng);
  return w;
}

// [lo, hi) clipped to the sequence; an empty range uses the nearest frame.
inline void clip_range(int T, int& lo, int& hi) {
  const int orig_hi = hi;
  lo = std::max(lo, 0);
  hi = std::min(hi, T);
  if (lo >= hi) {
    lo = orig_hi <= 0 ? 0 : std::min(lo, T - 1);
    hi = lo + 1;
  }
}

inline double range_mean(const FeatureSequence& x, int f, int lo, int hi) {
  clip_range(static_cast<int>(x.rows()), lo, hi);
  double s = 0.0;
  for (int t = lo; t < hi; ++t) s += x(t, f);
  return s / (hi - lo);
}

inline double range_max(const FeatureSequence& x, int f, int lo, int hi) {
  clip_range(static_cast<int>(x.rows()), lo, hi);
  double m = -std::numeric_limits<double>::infinity();
  for (int t = lo; t < hi; ++t) m = std::max(m, x(t, f));
  return m;
}

inline Eigen::VectorXd naive_phi(const FeatureSequence& x, const Interval& c, const FeatureMapSpec& spec,
                                 const DurationNorm& dn) {
  Eigen::VectorXd out(spec.dim());
  for (int i = 0; i < spec.dim(); ++i) {
    const auto& m = spec.maps[i];
    const int f = m.feature, s = m.span;
    double v = 0.0;
    switch (m.kind) {
      case MapKind::kValueAtStart: v = x(c.ts, f); break;
      case MapKind::kValueAtEnd: v = x(c.te, f); break;
      case MapKind::kDiffAtStart: v = range_mean(x, f, c.ts, c.ts + s) - range_mean(x, f, c.ts - s, c.ts); break;
      case MapKind::kDiffAtEnd: v = range_mean(x, f, c.te, c.te + s) - range_mean(x, f, c.te - s, c.te); break;
      case MapKind::kIntervalMean:
        v = range_mean(x, f, c.ts, c.te) - (s > 0 ? range_mean(x, f, c.ts - s, c.ts) : 0.0);
        break;
      case MapKind::kIntervalMax:
        v = range_max(x, f, c.ts, c.te) - (s > 0 ? range_max(x, f, c.ts - s, c.ts) : 0.0);
        break;
      case MapKind::kMeanMinusPost: v = range_mean(x, f, c.ts, c.te) - range_mean(x, f, c.te, c.te + s); break;
      case MapKind::kPostMean: v = range_mean(x, f, c.te, c.te + s); break;
      case MapKind::kPostMax: v = range_max(x, f, c.te, c.te + s); break;
      case MapKind::kDuration: v = (c.te - c.ts - dn.mean) / dn.stddev; break;
    }
    out[i] = v;
  }
  return out;
}

// Exhaustive argmax in lexicographic order with a strict comparison. Adds the task loss
// against `gold` when given. Returns {-1, -1} when no candidate is admissible. The
// model's normalization must be the identity.
inline Interval brute_force(const StructuredModel& model, const FeatureSequence& x, const SearchWindow& window,
                            const Interval* gold) {
  const int T = static_cast<int>(x.rows());
  Interval best{-1, -1};
  double best_score = 0.0;
  for (int ts = 0; ts < T; ++ts) {
    for (int te = ts + 1; te < T; ++te) {
      if (ts < window.first || te > window.last) continue;
      const int d = te - ts;
      if (d < model.constraints.min_ms || d > model.constraints.max_ms) continue;
      double score = model.w.dot(naive_phi(x, {ts, te}, model.spec, model.duration));
      if (gold) score += std::max(0.0, std::abs(static_cast<double>(gold->duration() - d)) - model.epsilon);
      if (best.ts < 0 || score > best_score) {
        best_score = score;
        best = {ts, te};
      }
    }
  }
  return best;
}

inline StructuredModel random_model(std::mt19937_64& rng, IntervalRowReading reading) {
  StructuredModel m;
  m.spec = FeatureMapSpec::standard(reading);
  m.w = random_weights(m.spec.dim(), rng);
  m.duration = {30.0, 12.0};
  std::uniform_int_distribution<int> min_d(1, 8), span(10, 60);
  m.constraints.min_ms = min_d(rng);
  m.constraints.max_ms = m.constraints.min_ms + span(rng);
  return m;
}

}  // namespace preasp::oracle
