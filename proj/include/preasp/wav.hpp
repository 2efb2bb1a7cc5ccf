#pragma once

#include <Eigen/Dense>

#include <string>

namespace preasp {

/// Mono audio. Samples are nominally in [-1, 1].
struct Waveform {
  Eigen::VectorXd samples;
  int sample_rate = 0;

  double duration_ms() const {
    return 1000.0 * static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Throws InvalidInput unless the waveform is usable for feature extraction:
/// sample rate >= 8 kHz, non-empty, at least 5 ms long.
void validate(const Waveform& wave);

/// Reads a mono RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float samples.
/// Stereo and other encodings are rejected with FormatError.
Waveform read_wav(const std::string& path);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void write_wav(const std::string& path, const Waveform& wave);

/// Same as write_wav but 32-bit float; used for lossless fixtures.
void write_wav_float(const std::string& path, const Waveform& wave);

}  // namespace preasp
