#include "preasp/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

namespace preasp {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kSpeakerStream = 0x5350454Bull;  // "SPEK"
constexpr std::uint64_t kTokenStream = 0x544F4B4Eull;    // "TOKN"

constexpr const char* kWords[] = {"cook", "kit", "pack", "top", "bet", "map", "seat", "lock"};

// RBJ biquad high-pass, direct form I.
class HighPass {
 public:
  HighPass(double cutoff_hz, int sample_rate) {
    const double w0 = 2.0 * std::numbers::pi * cutoff_hz / sample_rate;
    const double alpha = std::sin(w0) / std::numbers::sqrt2;  // Q = 1/sqrt(2)
    const double cosw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    b0_ = (1.0 + cosw) / 2.0 / a0;
    b1_ = -(1.0 + cosw) / a0;
    b2_ = b0_;
    a1_ = -2.0 * cosw / a0;
    a2_ = (1.0 - alpha) / a0;
  }

  double operator()(double x) {
    const double y = b0_ * x + b1_ * x1_ + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_, b1_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

// Two-pole resonator with unit gain at DC removed; enough for vowel formants.
class Resonator {
 public:
  Resonator(double freq_hz, double bandwidth_hz, int sample_rate) {
    const double r = std::exp(-std::numbers::pi * bandwidth_hz / sample_rate);
    a1_ = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq_hz / sample_rate);
    a2_ = -r * r;
    gain_ = 1.0 - a1_ - a2_;
  }

  double operator()(double x) {
    const double y = gain_ * x + a1_ * y1_ + a2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a1_, a2_, gain_;
  double y1_ = 0, y2_ = 0;
};

double rms(const Eigen::VectorXd& x, long lo, long hi) {
  lo = std::max(0L, lo);
  hi = std::min(static_cast<long>(x.size()), hi);
  if (hi <= lo) return 0.0;
  return std::sqrt(x.segment(lo, hi - lo).squaredNorm() / static_cast<double>(hi - lo));
}

// Piecewise-linear gain: 0 before `a`, rising to 1 at `b`.
double ramp_up(double t, double a, double b) {
  if (t <= a) return 0.0;
  if (t >= b) return 1.0;
  return (t - a) / (b - a);
}

double db_to_gain(double db) { return std::pow(10.0, db / 20.0); }

}  // namespace

SynthRng::SynthRng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  const std::uint64_t a = splitmix64(s);
  std::uint64_t t = stream ^ 0xD1B54A32D192ED03ULL;
  state_ = a ^ splitmix64(t);
}

std::uint64_t SynthRng::next() { return splitmix64(state_); }

double SynthRng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SynthRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SynthRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  spare_ = mag * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return mag * std::cos(2.0 * std::numbers::pi * u2);
}

double SynthRng::truncated_normal(double mean, double stddev, double lo, double hi) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double v = mean + stddev * normal();
    if (v >= lo && v <= hi) return v;
  }
  return std::clamp(mean, lo, hi);
}

void GenParams::validate() const {
  auto positive_range = [](const Range& r, const char* name) {
    if (!(r.lo > 0.0 && r.lo <= r.hi)) throw InvalidInput(std::string("invalid range for ") + name);
  };
  if (sample_rate < 8000) throw InvalidInput("sample_rate must be at least 8000 Hz");
  positive_range(vowel_ms, "vowel_ms");
  positive_range(preasp_limits_ms, "preasp_limits_ms");
  positive_range(closure_ms, "closure_ms");
  positive_range(f0_hz, "f0_hz");
  positive_range(gain, "gain");
  if (closure_ms.lo < 60.0) throw InvalidInput("closure must leave at least 60 ms after the offset");
  if (!(preasp_std_ms >= 0.0)) throw InvalidInput("preasp_std_ms must be non-negative");
  if (!(burst_probability >= 0.0 && burst_probability <= 1.0)) {
    throw InvalidInput("burst_probability must be in [0, 1]");
  }
  if (!(aspiration_cutoff_hz > 0.0 && aspiration_cutoff_hz < sample_rate / 2.0)) {
    throw InvalidInput("aspiration cutoff must be below Nyquist");
  }
  if (!(aspiration_decay.lo >= 0.0 && aspiration_decay.lo <= aspiration_decay.hi)) {
    throw InvalidInput("invalid range for aspiration_decay");
  }
  if (!(voicing_bleed.lo >= 0.0 && voicing_bleed.lo <= voicing_bleed.hi && voicing_bleed.hi <= 1.0)) {
    throw InvalidInput("voicing_bleed must lie in [0, 1]");
  }
  if (speakers < 1) throw InvalidInput("need at least one speaker");
  untruncated_parameters(preasp_mean_ms, preasp_std_ms, preasp_limits_ms);
  if (gain.hi > 1.0) throw InvalidInput("gain above 1 would clip");
}

TruncatedMoments truncated_moments(double location, double scale, const Range& limits) {
  if (!(scale > 0.0)) return {std::clamp(location, limits.lo, limits.hi), 0.0};
  const auto pdf = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };
  const auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); };
  const double a = (limits.lo - location) / scale, b = (limits.hi - location) / scale;
  const double mass = cdf(b) - cdf(a);
  if (!(mass > 1e-12)) throw InvalidInput("truncation limits hold no probability mass");
  const double k = (pdf(a) - pdf(b)) / mass;
  const double var = 1.0 + (a * pdf(a) - b * pdf(b)) / mass - k * k;
  return {location + scale * k, scale * std::sqrt(std::max(var, 0.0))};
}

TruncatedMoments untruncated_parameters(double mean, double stddev, const Range& limits) {
  if (!(mean > limits.lo && mean < limits.hi)) {
    throw InvalidInput("pre-aspiration mean must lie inside its limits");
  }
  if (stddev == 0.0) return {mean, 0.0};
  TruncatedMoments p{mean, stddev};
  for (int it = 0; it < 500; ++it) {
    const TruncatedMoments m = truncated_moments(p.mean, p.stddev, limits);
    const double dm = mean - m.mean, ds = stddev / m.stddev;
    if (std::abs(dm) < 1e-10 && std::abs(ds - 1.0) < 1e-12) return p;
    p.mean += dm;
    p.stddev *= ds;
  }
  throw InvalidInput("no normal distribution truncated to the limits has the requested moments");
}

namespace {

double raw_speaker_offset(const GenParams& params, int index) {
  SynthRng rng(params.seed ^ kSpeakerStream, static_cast<std::uint64_t>(index));
  rng.uniform();
  return params.speaker_preasp_offset_std_ms * rng.normal();
}

}  // namespace

SpeakerProfile make_speaker(const GenParams& params, int index) {
  SynthRng rng(params.seed ^ kSpeakerStream, static_cast<std::uint64_t>(index));
  SpeakerProfile s;
  char id[16];
  std::snprintf(id, sizeof id, "spk%02d", index + 1);
  s.id = id;
  s.f0_hz = rng.uniform(params.f0_hz.lo, params.f0_hz.hi);
  // Offsets are centred over the speaker set so the corpus keeps the configured mean.
  double offset_mean = 0.0;
  for (int k = 0; k < params.speakers; ++k) offset_mean += raw_speaker_offset(params, k);
  offset_mean /= params.speakers;
  s.preasp_offset_ms = params.speaker_preasp_offset_std_ms * rng.normal() - offset_mean;
  s.formant1_hz = rng.uniform(500.0, 800.0);
  s.formant2_hz = rng.uniform(1100.0, 1800.0);
  s.aspiration_shift_db = rng.uniform(-3.0, 3.0);
  return s;
}

SynthToken generate_token(SynthRng& rng, const GenParams& params, const SpeakerProfile& speaker) {
  const int sr = params.sample_rate;
  const auto ms_to_sample = [sr](double ms) { return static_cast<long>(std::floor(ms * sr / 1000.0)); };

  const TruncatedMoments base =
      untruncated_parameters(params.preasp_mean_ms, params.preasp_std_ms, params.preasp_limits_ms);
  const int vowel_ms = static_cast<int>(std::lround(rng.uniform(params.vowel_ms.lo, params.vowel_ms.hi)));
  const int preasp_ms = static_cast<int>(std::lround(
      rng.truncated_normal(base.mean + speaker.preasp_offset_ms, base.stddev, params.preasp_limits_ms.lo,
                           params.preasp_limits_ms.hi)));
  const int closure_ms =
      static_cast<int>(std::lround(rng.uniform(params.closure_ms.lo, params.closure_ms.hi)));
  const bool burst = rng.uniform() < params.burst_probability;
  const int burst_ms = burst ? 20 : 0;
  const int tail_ms = 15;

  SynthToken tok;
  tok.speaker_id = speaker.id;
  tok.has_burst = burst;
  tok.gold = {vowel_ms, vowel_ms + preasp_ms};
  const int total_ms = tok.gold.te + closure_ms + burst_ms + tail_ms;
  const long n = ms_to_sample(total_ms);
  const double ts = tok.gold.ts, te = tok.gold.te;
  constexpr double kFade = 5.0;  // cross-fade length; boundaries sit at the midpoint

  // Voiced source: impulse train with jitter and a falling contour, shaped by a
  // spectral tilt filter and three formants.
  const double f0 = speaker.f0_hz * (1.0 + 0.05 * rng.normal());
  Resonator tilt(0.0, 300.0, sr);
  Resonator f1(speaker.formant1_hz, 90.0, sr);
  Resonator f2(speaker.formant2_hz, 110.0, sr);
  Resonator f3(2500.0 + 200.0 * rng.normal(), 160.0, sr);
  Eigen::VectorXd voiced(n);
  double phase = rng.uniform();
  for (long i = 0; i < n; ++i) {
    const double t_ms = 1000.0 * static_cast<double>(i) / sr;
    const double freq = f0 * (1.0 - 0.1 * t_ms / total_ms);
    phase += freq * (1.0 + 0.01 * rng.normal()) / sr;
    double pulse = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      pulse = 1.0;
    }
    voiced[i] = f3(f2(f1(tilt(pulse))));
  }
  const double vowel_rms = rms(voiced, ms_to_sample(10.0), ms_to_sample(ts - kFade));
  voiced /= vowel_rms > 0.0 ? vowel_rms : 1.0;

  // Pre-aspiration: high-passed white noise with a linear level ramp.
  const double cutoff = std::clamp(
      params.aspiration_cutoff_hz + rng.uniform(-1.0, 1.0) * params.aspiration_cutoff_jitter_hz, 500.0,
      0.45 * sr);
  HighPass hp1(cutoff, sr), hp2(cutoff, sr);
  Eigen::VectorXd breath(n);
  for (long i = 0; i < n; ++i) breath[i] = hp2(hp1(rng.normal()));
  breath /= std::max(rms(breath, 0, n), 1e-12);
  const double asp_gain =
      db_to_gain(rng.uniform(params.aspiration_db.lo, params.aspiration_db.hi) + speaker.aspiration_shift_db);
  const double ramp_end = rng.uniform(params.aspiration_decay.lo, params.aspiration_decay.hi);
  const double breathy_gain = db_to_gain(rng.uniform(params.breathiness_db.lo, params.breathiness_db.hi));
  const double bleed_end = ts + (te - ts) * rng.uniform(params.voicing_bleed.lo, params.voicing_bleed.hi);
  const double bleed_gain = db_to_gain(rng.uniform(params.voicing_bleed_db.lo, params.voicing_bleed_db.hi));

  // Burst: short broadband click followed by a decaying release noise.
  const double burst_at = te + closure_ms;
  const double burst_gain = 0.5 * rng.uniform(0.5, 1.0);
  HighPass release_hp(1500.0, sr);
  const double floor_gain = db_to_gain(rng.uniform(params.noise_floor_db.lo, params.noise_floor_db.hi));

  Eigen::VectorXd out(n);
  for (long i = 0; i < n; ++i) {
    const double t = 1000.0 * static_cast<double>(i) / sr;
    const double vowel_env = ramp_up(t, 0.0, 10.0) * (1.0 - ramp_up(t, ts - kFade / 2, ts + kFade / 2));
    const double asp_env = ramp_up(t, ts - kFade / 2, ts + kFade / 2) *
                           (1.0 - ramp_up(t, te - kFade / 2, te + kFade / 2));
    const double progress = std::clamp((t - ts) / std::max(1.0, te - ts), 0.0, 1.0);
    double v = vowel_env * voiced[i] + asp_gain * asp_env * (1.0 - (1.0 - ramp_end) * progress) * breath[i];
    v += vowel_env * breathy_gain * ramp_up(t, ts - 30.0, ts) * breath[i];
    if (t > ts && t < bleed_end) v += bleed_gain * (bleed_end - t) / (bleed_end - ts) * voiced[i];
    if (burst && t >= burst_at) {
      const double since = t - burst_at;
      const double noise = rng.normal();
      v += since < 2.0 ? burst_gain * 2.0 * noise
                       : burst_gain * std::exp(-(since - 2.0) / 6.0) * release_hp(noise);
    }
    v += floor_gain * rng.normal();
    out[i] = v;
  }
  const double peak = out.cwiseAbs().maxCoeff();
  const double gain = rng.uniform(params.gain.lo, params.gain.hi);
  out *= (peak > 0.0 ? 0.9 * gain / peak : 1.0);

  tok.wave.samples = std::move(out);
  tok.wave.sample_rate = sr;
  const int last_ms = total_ms - 1;
  tok.window_start_ms =
      std::max(0, tok.gold.ts - 50 - static_cast<int>(std::lround(rng.uniform(0.0, params.window_jitter_ms))));
  tok.window_end_ms = std::min(
      last_ms, tok.gold.te + 60 + static_cast<int>(std::lround(rng.uniform(0.0, params.window_jitter_ms))));
  return tok;
}

SynthToken generate_corpus_token(const GenParams& params, int index) {
  params.validate();
  const int speaker_index = index % params.speakers;
  const SpeakerProfile speaker = make_speaker(params, speaker_index);
  SynthRng rng(params.seed ^ kTokenStream, static_cast<std::uint64_t>(index));
  SynthToken tok = generate_token(rng, params, speaker);
  const int word = (index / params.speakers) % static_cast<int>(std::size(kWords));
  tok.word_id = kWords[word];
  return tok;
}

std::vector<SynthToken> generate_corpus(const GenParams& params, int n) {
  if (n < 1) throw InvalidInput("corpus size must be at least 1");
  params.validate();
  std::vector<SynthToken> tokens;
  tokens.reserve(n);
  for (int i = 0; i < n; ++i) tokens.push_back(generate_corpus_token(params, i));
  return tokens;
}

AnnotationRecord annotation_for(const SynthToken& token, const std::string& example_id,
                                const std::string& audio_path) {
  AnnotationRecord r;
  r.example_id = example_id;
  r.audio_path = audio_path;
  r.speaker_id = token.speaker_id;
  r.word_id = token.word_id;
  r.gold_ts_ms = token.gold.ts;
  r.gold_te_ms = token.gold.te;
  r.window_start_ms = token.window_start_ms;
  r.window_end_ms = token.window_end_ms;
  return r;
}

std::string write_corpus(const std::string& dir, const std::vector<SynthToken>& tokens) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw DataError("cannot create output directory '" + dir + "'" + (ec ? ": " + ec.message() : ""));
  }
  std::vector<AnnotationRecord> records;
  records.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "tok_%05zu", i);
    const std::string file = std::string(name) + ".wav";
    write_wav((std::filesystem::path(dir) / file).string(), tokens[i].wave);
    records.push_back(annotation_for(tokens[i], name, file));
  }
  const std::string csv = (std::filesystem::path(dir) / "annotations.csv").string();
  write_annotations(csv, records);
  return csv;
}

}  // namespace preasp
