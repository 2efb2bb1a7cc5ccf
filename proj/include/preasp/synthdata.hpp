#pragma once

#include "preasp/annotation.hpp"
#include "preasp/types.hpp"
#include "preasp/wav.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace preasp {

/// Small deterministic generator. The standard distributions are implementation
/// defined, so uniform and normal draws are done here to keep corpora identical
/// across toolchains.
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : state_(seed) {}
  SynthRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next();
  double uniform();                  // [0, 1)
  double uniform(double lo, double hi);
  double normal();                   // standard normal
  double truncated_normal(double mean, double stddev, double lo, double hi);

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct GenParams {
  int sample_rate = 16000;
  Range vowel_ms{80.0, 160.0};
  double preasp_mean_ms = 37.6;
  double preasp_std_ms = 20.8;
  Range preasp_limits_ms{8.0, 120.0};
  Range closure_ms{70.0, 120.0};
  double burst_probability = 0.7;
  Range f0_hz{90.0, 230.0};
  double aspiration_cutoff_hz = 3000.0;
  // Aspiration and background noise levels, in dB relative to the vowel RMS.
  Range aspiration_db{-30.0, -8.0};
  Range noise_floor_db{-40.0, -28.0};
  // Per-token shift of the aspiration high-pass cutoff, Hz.
  double aspiration_cutoff_jitter_hz = 800.0;
  // Level of the aspiration at the offset relative to the onset (linear decay).
  Range aspiration_decay{0.15, 1.0};
  // Breathy vowel ending: aspiration noise mixed into the last 30 ms of the vowel.
  Range breathiness_db{-26.0, -10.0};
  // Voicing that fades out inside the pre-aspiration, as a fraction of its duration,
  // starting at `voicing_bleed_db` and decaying linearly to zero.
  Range voicing_bleed{0.0, 0.7};
  Range voicing_bleed_db{-20.0, -10.0};
  // Overall token gain, as a fraction of the peak budget.
  Range gain{0.3, 1.0};
  int speakers = 8;
  // Spread of the per-speaker shift of the mean pre-aspiration duration.
  double speaker_preasp_offset_std_ms = 6.0;
  // Extra search-window margin beyond the 50 ms / 60 ms minimum, drawn per token.
  double window_jitter_ms = 40.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TruncatedMoments {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Mean and standard deviation of a normal(location, scale) truncated to `limits`.
TruncatedMoments truncated_moments(double location, double scale, const Range& limits);

/// Location and scale of the normal whose truncation to `limits` has the given moments.
/// The pre-aspiration durations are drawn from it so the corpus matches the configured
/// mean and standard deviation rather than the shifted truncated ones.
TruncatedMoments untruncated_parameters(double mean, double stddev, const Range& limits);

/// Systematic per-speaker differences, drawn once per speaker.
struct SpeakerProfile {
  std::string id;
  double f0_hz = 120.0;
  double preasp_offset_ms = 0.0;
  double formant1_hz = 650.0;
  double formant2_hz = 1300.0;
  double aspiration_shift_db = 0.0;
};

SpeakerProfile make_speaker(const GenParams& params, int index);

struct SynthToken {
  Waveform wave;
  Interval gold;  // ms
  std::string speaker_id;
  std::string word_id;
  int window_start_ms = 0;
  int window_end_ms = 0;
  bool has_burst = false;
};

SynthToken generate_token(SynthRng& rng, const GenParams& params, const SpeakerProfile& speaker);

/// Token `index` of the corpus described by `params`; speakers are assigned round-robin
/// and every token draws from its own stream split off the corpus seed.
SynthToken generate_corpus_token(const GenParams& params, int index);

std::vector<SynthToken> generate_corpus(const GenParams& params, int n);

/// Writes `tok_NNNNN.wav` files and `annotations.csv` under `dir` (created if needed).
/// Returns the annotation file path.
std::string write_corpus(const std::string& dir, const std::vector<SynthToken>& tokens);

/// Annotation row for a token whose audio is stored at `audio_path`.
AnnotationRecord annotation_for(const SynthToken& token, const std::string& example_id,
                                const std::string& audio_path);

}  // namespace preasp
