#include "preasp/acoustics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

namespace preasp {

namespace {

int samples_for(double ms, int sample_rate) {
  return std::max(1, static_cast<int>(std::lround(ms * sample_rate / 1000.0)));
}

template <typename Vector>
double sample_at(const Vector& x, long i) {
  const long n = static_cast<long>(x.size());
  return x[std::clamp(i, 0L, n - 1)];
}

Eigen::VectorXd hamming(int n) {
  Eigen::VectorXd w(n);
  if (n == 1) {
    w[0] = 1.0;
    return w;
  }
  for (int i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  }
  return w;
}

// Windowed power spectra for one (sample rate, window length) pair.
class PowerSpectrum {
 public:
  PowerSpectrum(int sample_rate, double window_ms)
      : window_(hamming(samples_for(window_ms, sample_rate))),
        nfft_(fft_size_for(static_cast<int>(window_.size()))),
        frame_(nfft_, 0.0) {}

  Eigen::VectorXd operator()(const Eigen::VectorXd& x, long center) {
    const long n = static_cast<long>(window_.size());
    const long start = center - n / 2;
    std::fill(frame_.begin(), frame_.end(), 0.0);
    for (long i = 0; i < n; ++i) frame_[i] = window_[i] * sample_at(x, start + i);
    fft_.fwd(bins_, frame_);
    Eigen::VectorXd power(nfft_ / 2 + 1);
    for (int k = 0; k <= nfft_ / 2; ++k) power[k] = std::norm(bins_[k]);
    return power;
  }

 private:
  Eigen::VectorXd window_;
  int nfft_;
  std::vector<double> frame_;
  std::vector<std::complex<double>> bins_;
  Eigen::FFT<double> fft_;
};

}  // namespace

int num_frames(const Waveform& wave) {
  return static_cast<int>(static_cast<long long>(wave.samples.size()) * 1000 / wave.sample_rate);
}

long frame_center_sample(double center_ms, int sample_rate) {
  return static_cast<long>(std::floor(center_ms * sample_rate / 1000.0 + 1e-9));
}

int fft_size_for(int window_samples) {
  int n = 1;
  while (n < window_samples) n <<= 1;
  return n;
}

Eigen::VectorXd stft_power(const Waveform& wave, double center_ms, double window_ms) {
  if (wave.samples.size() == 0) throw InvalidInput("stft_power: empty signal");
  if (wave.sample_rate <= 0) throw InvalidInput("stft_power: invalid sample rate");
  PowerSpectrum spectrum(wave.sample_rate, window_ms);
  return spectrum(wave.samples, frame_center_sample(center_ms, wave.sample_rate));
}

double band_energy(const Eigen::Ref<const Eigen::VectorXd>& spectrum, double lo_hz, double hi_hz,
                   int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  if (!(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz <= nyquist)) {
    throw InvalidInput("band_energy: invalid band [" + std::to_string(lo_hz) + ", " +
                       std::to_string(hi_hz) + "]");
  }
  const Eigen::Index bins = spectrum.size();
  const double nfft = 2.0 * static_cast<double>(bins - 1);
  double sum = 0.0;
  for (Eigen::Index k = 0; k < bins; ++k) {
    const double freq = static_cast<double>(k) * sample_rate / nfft;
    if (freq >= lo_hz && freq <= hi_hz) sum += spectrum[k];
  }
  return std::log(std::max(sum, kLogFloor));
}

double total_energy(const Eigen::Ref<const Eigen::VectorXd>& spectrum) {
  return std::log(std::max(spectrum.sum(), kLogFloor));
}

double wiener_entropy(const Eigen::Ref<const Eigen::VectorXd>& spectrum) {
  const Eigen::ArrayXd floored = spectrum.array().max(kLogFloor);
  const double log_geo = floored.log().mean();
  const double log_arith = std::log(floored.mean());
  // Rounding can push a flat spectrum a hair above zero.
  return std::min(0.0, log_geo - log_arith);
}

double max_power(const Waveform& wave, double center_ms, const AcousticsConfig& config) {
  validate(wave);
  const int frames = num_frames(wave);
  PowerSpectrum spectrum(wave.sample_rate, config.stft_window_ms);
  const long lo = std::max(0L, std::lround(std::ceil(center_ms - config.pmax_before_ms)));
  const long hi =
      std::min<long>(frames - 1, std::lround(std::floor(center_ms + config.pmax_after_ms)));
  double best = -std::numeric_limits<double>::infinity();
  for (long t = lo; t <= hi; ++t) {
    best = std::max(best, total_energy(spectrum(wave.samples,
                                                frame_center_sample(t, wave.sample_rate))));
  }
  if (lo > hi) {
    best = total_energy(spectrum(wave.samples, frame_center_sample(center_ms, wave.sample_rate)));
  }
  return best;
}

PeriodicityTrack periodicity(const Waveform& wave, const AcousticsConfig& config) {
  validate(wave);
  const int sr = wave.sample_rate;
  const int frames = num_frames(wave);
  const long width = samples_for(config.pitch_window_ms, sr);
  const long min_lag = std::max(1L, static_cast<long>(std::floor(sr / config.pitch_max_hz)));
  const long max_lag = static_cast<long>(std::ceil(sr / config.pitch_min_hz));
  const long gate_width = samples_for(5.0, sr);

  PeriodicityTrack track;
  track.pitch_hz = Eigen::VectorXd::Zero(frames);
  track.peak_corr = Eigen::VectorXd::Zero(frames);
  track.voiced = Eigen::VectorXd::Zero(frames);

  const long span = width + max_lag + 1;
  Eigen::VectorXd segment(span);
  Eigen::VectorXd energy(span + 1);  // prefix sums of squares
  Eigen::VectorXd corr(max_lag + 2);

  for (int t = 0; t < frames; ++t) {
    const long center = frame_center_sample(t, sr);
    const long start = center - width / 2;
    for (long i = 0; i < span; ++i) segment[i] = sample_at(wave.samples, start + i);
    energy[0] = 0.0;
    for (long i = 0; i < span; ++i) energy[i + 1] = energy[i] + segment[i] * segment[i];

    const double e0 = energy[width];
    if (e0 <= width * kLogFloor) continue;

    const auto head = segment.head(width);
    corr.setZero();
    long best_lag = -1;
    double best = -1.0;
    for (long lag = min_lag - 1; lag <= max_lag + 1; ++lag) {
      const double elag = energy[lag + width] - energy[lag];
      if (elag <= width * kLogFloor) continue;
      corr[lag] = head.dot(segment.segment(lag, width)) / std::sqrt(e0 * elag);
      if (lag >= min_lag && lag <= max_lag && corr[lag] > best) {
        best = corr[lag];
        best_lag = lag;
      }
    }
    if (best_lag < 0) continue;

    // Prefer the shortest lag that is a local peak close to the global best; this
    // keeps multiples of the period from winning.
    for (long lag = min_lag; lag < best_lag; ++lag) {
      if (corr[lag] >= 0.9 * best && corr[lag] >= corr[lag - 1] && corr[lag] >= corr[lag + 1]) {
        best_lag = lag;
        break;
      }
    }
    track.peak_corr[t] = best;

    // The gate spans at least one period so it cannot fall between glottal pulses.
    const long gate = std::min(width, std::max(gate_width, best_lag));
    const long gate_start = width / 2 - gate / 2;
    const double local = (energy[gate_start + gate] - energy[gate_start]) / gate;
    const bool voiced = best >= config.voicing_threshold &&
                        local >= config.voicing_energy_ratio * (e0 / width);
    if (!voiced) continue;

    double lag = static_cast<double>(best_lag);
    const double a = corr[best_lag - 1], b = corr[best_lag], c = corr[best_lag + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0.0) lag += std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
    track.voiced[t] = 1.0;
    track.pitch_hz[t] = sr / lag;
  }
  return track;
}

Eigen::VectorXd pitch_track(const Waveform& wave, const AcousticsConfig& config) {
  return periodicity(wave, config).pitch_hz;
}

Eigen::VectorXd smooth_hamming(const Eigen::Ref<const Eigen::VectorXd>& track, int kernel_frames) {
  const Eigen::VectorXd kernel = hamming(kernel_frames) / hamming(kernel_frames).sum();
  const long n = static_cast<long>(track.size());
  const long half = kernel_frames / 2;
  Eigen::VectorXd out(n);
  for (long t = 0; t < n; ++t) {
    double acc = 0.0;
    for (long k = 0; k < kernel_frames; ++k) acc += kernel[k] * sample_at(track, t + k - half);
    out[t] = std::clamp(acc, 0.0, 1.0);
  }
  return out;
}

Eigen::VectorXd voicing_track(const Waveform& wave, const AcousticsConfig& config) {
  const int taps = std::max(1, static_cast<int>(std::lround(config.voicing_smooth_ms)));
  return smooth_hamming(periodicity(wave, config).voiced, taps);
}

int zero_crossings(const Waveform& wave, double center_ms, double window_ms) {
  const long n = static_cast<long>(wave.samples.size());
  if (n == 0) return 0;
  const long width = samples_for(window_ms, wave.sample_rate);
  const long start = frame_center_sample(center_ms, wave.sample_rate) - width / 2;
  const long lo = std::max(0L, start);
  const long hi = std::min(n, start + width);
  int count = 0;
  int sign = 0;
  for (long i = lo; i < hi; ++i) {
    const double v = wave.samples[i];
    const int s = v > 0.0 ? 1 : (v < 0.0 ? -1 : sign);
    if (sign != 0 && s != sign) ++count;
    sign = s;
  }
  return count;
}

FeatureSequence extract_features(const Waveform& wave, const AcousticsConfig& config) {
  validate(wave);
  const int sr = wave.sample_rate;
  const int frames = num_frames(wave);
  FeatureSequence features(frames, kNumFeatures);

  PowerSpectrum spectrum(sr, config.stft_window_ms);
  const double nyquist = sr / 2.0;
  for (int t = 0; t < frames; ++t) {
    const Eigen::VectorXd power = spectrum(wave.samples, frame_center_sample(t, sr));
    features(t, kETotal) = total_energy(power);
    features(t, kELow) = band_energy(power, config.low_band_lo_hz, config.low_band_hi_hz, sr);
    features(t, kEHigh) = band_energy(power, config.high_band_lo_hz, nyquist, sr);
    features(t, kHWiener) = wiener_entropy(power);
    features(t, kZeroCross) = zero_crossings(wave, t, config.zc_window_ms);
  }

  const int before = static_cast<int>(std::lround(config.pmax_before_ms));
  const int after = static_cast<int>(std::lround(config.pmax_after_ms));
  for (int t = 0; t < frames; ++t) {
    const int lo = std::max(0, t - before);
    const int hi = std::min(frames - 1, t + after);
    features(t, kPMax) = features.col(kETotal).segment(lo, hi - lo + 1).maxCoeff();
  }

  const PeriodicityTrack track = periodicity(wave, config);
  const int taps = std::max(1, static_cast<int>(std::lround(config.voicing_smooth_ms)));
  features.col(kPitch) = track.pitch_hz;
  features.col(kVoicing) = smooth_hamming(track.voiced, taps);
  return features;
}

NormStats fit_norm_stats(std::span<const FeatureSequence> sequences) {
  if (sequences.empty()) throw InvalidInput("fit_norm_stats: no sequences");
  FeatureRow<double> sum = FeatureRow<double>::Zero();
  double count = 0.0;
  for (const auto& seq : sequences) {
    sum += seq.colwise().sum();
    count += static_cast<double>(seq.rows());
  }
  if (count == 0.0) throw InvalidInput("fit_norm_stats: sequences have no frames");
  NormStats stats;
  stats.mean = sum / count;
  FeatureRow<double> sq = FeatureRow<double>::Zero();
  for (const auto& seq : sequences) {
    sq += (seq.rowwise() - stats.mean).array().square().matrix().colwise().sum();
  }
  stats.stddev = (sq / count).array().sqrt().matrix();
  for (int j = 0; j < kNumFeatures; ++j) {
    if (!(stats.stddev[j] > 1e-12)) stats.stddev[j] = 1.0;
  }
  return stats;
}

FeatureSequence apply_norm(const FeatureSequence& features, const NormStats& stats) {
  FeatureSequence out = features.rowwise() - stats.mean;
  out.array().rowwise() /= stats.stddev.array();
  return out;
}

}  // namespace preasp
