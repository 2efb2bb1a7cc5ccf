#pragma once

#include "preasp/types.hpp"
#include "preasp/wav.hpp"

#include <Eigen/Dense>

#include <span>

namespace preasp {

/// Floor applied to every power quantity before taking a log.
inline constexpr double kLogFloor = 1e-10;

struct AcousticsConfig {
  double stft_window_ms = 5.0;
  double low_band_lo_hz = 50.0;
  double low_band_hi_hz = 1000.0;
  double high_band_lo_hz = 3000.0;
  // P_max looks this far around each frame.
  double pmax_before_ms = 6.0;
  double pmax_after_ms = 18.0;
  double pitch_window_ms = 25.0;
  double pitch_min_hz = 60.0;
  double pitch_max_hz = 400.0;
  double voicing_threshold = 0.45;
  // A frame is only voiced if its 5 ms energy is at least this fraction of the
  // mean energy of the surrounding pitch window.
  double voicing_energy_ratio = 0.1;
  double voicing_smooth_ms = 5.0;
  double zc_window_ms = 5.0;
};

/// Number of 1 ms frames produced for a waveform: floor(duration in ms).
int num_frames(const Waveform& wave);

/// Sample index at a given time; frame t is centred at t ms.
long frame_center_sample(double center_ms, int sample_rate);

/// FFT length used for a window of `window_samples`: next power of two.
int fft_size_for(int window_samples);

/// |FFT|^2 of the Hamming-windowed segment centred at `center_ms`. Out-of-range
/// samples replicate the first/last sample. Length is fft_size / 2 + 1.
Eigen::VectorXd stft_power(const Waveform& wave, double center_ms, double window_ms);

/// Log of the summed power of bins whose centre frequency lies in [lo_hz, hi_hz].
double band_energy(const Eigen::Ref<const Eigen::VectorXd>& spectrum, double lo_hz, double hi_hz,
                   int sample_rate);

/// Log total power of a spectrum.
double total_energy(const Eigen::Ref<const Eigen::VectorXd>& spectrum);

/// log(geometric mean / arithmetic mean) of the floored spectrum; always <= 0.
double wiener_entropy(const Eigen::Ref<const Eigen::VectorXd>& spectrum);

/// Maximum per-frame log total power over frames in [center - 6 ms, center + 18 ms],
/// clamped to the frames of the signal.
double max_power(const Waveform& wave, double center_ms, const AcousticsConfig& config = {});

/// Per-frame normalized cross-correlation analysis shared by the pitch and voicing
/// features.
struct PeriodicityTrack {
  Eigen::VectorXd pitch_hz;   // 0 where unvoiced
  Eigen::VectorXd peak_corr;  // best normalized correlation in the lag range
  Eigen::VectorXd voiced;     // 0/1 decision
};

PeriodicityTrack periodicity(const Waveform& wave, const AcousticsConfig& config = {});

/// Per-frame fundamental frequency, 0 where unvoiced.
Eigen::VectorXd pitch_track(const Waveform& wave, const AcousticsConfig& config = {});

/// Binary voicing decision smoothed with a normalized Hamming kernel; values in [0, 1].
Eigen::VectorXd voicing_track(const Waveform& wave, const AcousticsConfig& config = {});

/// Smooths a 0/1 track with a normalized Hamming kernel of `kernel_frames` taps.
Eigen::VectorXd smooth_hamming(const Eigen::Ref<const Eigen::VectorXd>& track, int kernel_frames);

/// Sign changes between consecutive samples of the window centred at `center_ms`,
/// clamped to the signal. Zero samples inherit the previous sign.
int zero_crossings(const Waveform& wave, double center_ms, double window_ms = 5.0);

/// All eight features at a 1 ms hop, in the canonical column order.
FeatureSequence extract_features(const Waveform& wave, const AcousticsConfig& config = {});

/// Per-feature z-score statistics fitted on training data.
struct NormStats {
  FeatureRow<double> mean = FeatureRow<double>::Zero();
  FeatureRow<double> stddev = FeatureRow<double>::Ones();
};

NormStats fit_norm_stats(std::span<const FeatureSequence> sequences);
FeatureSequence apply_norm(const FeatureSequence& features, const NormStats& stats);

}  // namespace preasp
