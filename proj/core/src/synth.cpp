#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "ainv/dataio.hpp"
#include "ainv/error.hpp"
#include "ainv/rng.hpp"

namespace ainv {

void SynthConfig::validate() const {
  if (subjects < 1 || sessions < 1 || epochs_per_subject_session < 1 ||
      channels < 1 || samples < 1)
    throw ConfigError("synth: all counts must be positive");
  if (sample_rate_hz <= 0) throw ConfigError("synth: sample rate must be > 0");
  if (subject_scale < 0 || session_gain_spread < 0 || session_tilt < 0 ||
      noise_floor < 0)
    throw ConfigError("synth: effect scales must be >= 0");
}

namespace {

constexpr int kSources = 4;
constexpr int kBackground = 2;            // diffuse session-noise sources
constexpr double kPoleRadius = 0.92;      // AR(2) resonance sharpness
constexpr double kBaseTilt = 0.15;        // AR(1) color shared by all sessions
constexpr double kSessionNoiseAmp = 2.0;  // e_r amplitude relative to sources
constexpr int kBurnIn = 128;

// Resonance bands as fractions of the sample rate, one per source.
constexpr double kBandLo[kSources] = {0.030, 0.080, 0.140, 0.230};
constexpr double kBandHi[kSources] = {0.070, 0.125, 0.200, 0.320};

// Between-day drift of a subject's resonance frequencies, as a fraction of
// the sample rate per unit session_tilt. Rhythms move a little from one
// recording day to the next; a plainly trained model keys on the exact
// peak positions and pays for it on an unseen day.
constexpr double kFreqDriftPerTilt = 0.01;

// Between-day perturbation of the source topographies per unit
// session_gain_spread, standing in for electrode placement and impedance
// changes between recordings.
constexpr double kMixDriftPerGain = 0.8;

// The background occupies a fixed 2-D channel subspace; inside that plane
// each subject has a characteristic pattern that drifts strongly from day to
// day (per unit session_gain_spread). A plainly trained model leans on the
// pattern as an identification shortcut and pays on an unseen day, while an
// encoder pushed toward session invariance can cancel the whole plane
// spatially without losing the resonant sources.
constexpr double kBackgroundDriftPerGain = 3.2;

// Stationary standard deviation of x_t = p1 x_{t-1} + p2 x_{t-2} + eps,
// unit-variance innovations.
double ar2_stationary_sd(double p1, double p2) {
  const double var =
      (1.0 - p2) / ((1.0 + p2) * ((1.0 - p2) * (1.0 - p2) - p1 * p1));
  return std::sqrt(std::max(var, 1e-12));
}

void gen_ar2(Rng& rng, double freq_frac, int samples, std::vector<double>& out) {
  const double omega = 2.0 * 3.14159265358979323846 * freq_frac;
  const double p1 = 2.0 * kPoleRadius * std::cos(omega);
  const double p2 = -kPoleRadius * kPoleRadius;
  const double scale = 1.0 / ar2_stationary_sd(p1, p2);
  double x1 = 0, x2 = 0;
  for (int t = 0; t < kBurnIn; ++t) {
    const double x = p1 * x1 + p2 * x2 + rng.normal();
    x2 = x1;
    x1 = x;
  }
  out.resize(static_cast<size_t>(samples));
  for (int t = 0; t < samples; ++t) {
    const double x = p1 * x1 + p2 * x2 + rng.normal();
    x2 = x1;
    x1 = x;
    out[static_cast<size_t>(t)] = x * scale;
  }
}

void gen_ar1(Rng& rng, double coeff, double sd, int samples,
             std::vector<double>& out) {
  const double innov_sd = sd * std::sqrt(std::max(1.0 - coeff * coeff, 1e-6));
  double x = 0;
  for (int t = 0; t < kBurnIn; ++t) x = coeff * x + innov_sd * rng.normal();
  out.resize(static_cast<size_t>(samples));
  for (int t = 0; t < samples; ++t) {
    x = coeff * x + innov_sd * rng.normal();
    out[static_cast<size_t>(t)] = x;
  }
}

}  // namespace

Dataset synth_generate(const SynthConfig& config) {
  config.validate();
  const Rng root = Rng(config.seed).substream("synth");
  const int S = config.subjects, R = config.sessions, C = config.channels,
            T = config.samples;
  const double w_subj = std::min(config.subject_scale, 1.0);

  // Shared population structure (what remains when subject_scale is 0).
  Rng shared = root.substream("shared");
  std::vector<double> shared_freq(kSources);
  for (int k = 0; k < kSources; ++k)
    shared_freq[static_cast<size_t>(k)] = shared.uniform(kBandLo[k], kBandHi[k]);
  std::vector<double> shared_mix(static_cast<size_t>(C) * kSources);
  for (auto& v : shared_mix) v = shared.normal() / std::sqrt(double(kSources));

  // Fixed background plane: two diffuse noise sources project into the
  // channels through B0, a dataset-wide low-rank topography.
  Rng bg = root.substream("background");
  std::vector<double> background_plane(static_cast<size_t>(C) * kBackground);
  for (auto& v : background_plane)
    v = bg.normal() / std::sqrt(double(kBackground));

  // Subject-specific resonances and mixing, interpolated toward the shared
  // structure as subject_scale shrinks. Inside the background plane each
  // subject carries a characteristic 2x2 pattern; at subject_scale = 0 every
  // pattern collapses to the identity.
  constexpr double kBackgroundPattern = 0.6;
  std::vector<std::vector<double>> subj_freq(static_cast<size_t>(S));
  std::vector<std::vector<double>> subj_mix(static_cast<size_t>(S));
  std::vector<std::array<double, 4>> subj_pattern(static_cast<size_t>(S));
  for (int s = 0; s < S; ++s) {
    Rng rs = root.substream("subject").substream(static_cast<uint64_t>(s));
    auto& fr = subj_freq[static_cast<size_t>(s)];
    fr.resize(kSources);
    for (int k = 0; k < kSources; ++k) {
      const double own = rs.uniform(kBandLo[k], kBandHi[k]);
      fr[static_cast<size_t>(k)] =
          (1.0 - w_subj) * shared_freq[static_cast<size_t>(k)] + w_subj * own;
    }
    auto& mix = subj_mix[static_cast<size_t>(s)];
    mix.resize(static_cast<size_t>(C) * kSources);
    for (size_t i = 0; i < mix.size(); ++i) {
      const double own = rs.normal() / std::sqrt(double(kSources));
      mix[i] = (1.0 - w_subj) * shared_mix[i] + w_subj * own;
    }
    auto& pattern = subj_pattern[static_cast<size_t>(s)];
    for (int i = 0; i < 4; ++i) {
      const double base = (i == 0 || i == 3) ? 1.0 : 0.0;  // identity
      pattern[static_cast<size_t>(i)] =
          base + w_subj * kBackgroundPattern * rs.normal();
    }
  }

  // Per-session noise color (spectral tilt) shared across subjects; sessions
  // take evenly spaced tilts so any two differ by a calibrated margin.
  std::vector<double> session_tilt(static_cast<size_t>(R));
  for (int r = 0; r < R; ++r) {
    const double spread =
        R > 1 ? 2.0 * static_cast<double>(r) / (R - 1) - 1.0 : 0.0;
    session_tilt[static_cast<size_t>(r)] =
        std::clamp(kBaseTilt + config.session_tilt * spread, -0.8, 0.8);
  }

  // Per (subject, session) channel gains, resonance drift, topography drift,
  // and the day's in-plane background mixing B0 * (pattern + drift).
  std::vector<double> gains(static_cast<size_t>(S) * R * C);
  std::vector<double> drifted_freq(static_cast<size_t>(S) * R * kSources);
  std::vector<double> drifted_mix(static_cast<size_t>(S) * R * C * kSources);
  std::vector<double> session_background(static_cast<size_t>(S) * R * C *
                                         kBackground);
  for (int s = 0; s < S; ++s)
    for (int r = 0; r < R; ++r) {
      Rng rg = root.substream("gain")
                   .substream(static_cast<uint64_t>(s))
                   .substream(static_cast<uint64_t>(r));
      for (int c = 0; c < C; ++c)
        gains[(static_cast<size_t>(s) * R + r) * C + c] =
            1.0 + config.session_gain_spread * rg.uniform(-1.0, 1.0);
      Rng rf = root.substream("freq_drift")
                   .substream(static_cast<uint64_t>(s))
                   .substream(static_cast<uint64_t>(r));
      for (int k = 0; k < kSources; ++k) {
        const double drift =
            kFreqDriftPerTilt * config.session_tilt * rf.uniform(-1.0, 1.0);
        drifted_freq[(static_cast<size_t>(s) * R + r) * kSources + k] =
            std::clamp(subj_freq[static_cast<size_t>(s)][static_cast<size_t>(k)] +
                           drift,
                       0.01, 0.45);
      }
      Rng rm = root.substream("mix_drift")
                   .substream(static_cast<uint64_t>(s))
                   .substream(static_cast<uint64_t>(r));
      const double mix_sd =
          kMixDriftPerGain * config.session_gain_spread / std::sqrt(double(kSources));
      double* dmix =
          &drifted_mix[(static_cast<size_t>(s) * R + r) * C * kSources];
      const double* base = subj_mix[static_cast<size_t>(s)].data();
      for (int i = 0; i < C * kSources; ++i)
        dmix[i] = base[i] + mix_sd * rm.normal();

      Rng rb = root.substream("background_drift")
                   .substream(static_cast<uint64_t>(s))
                   .substream(static_cast<uint64_t>(r));
      std::array<double, 4> day_pattern = subj_pattern[static_cast<size_t>(s)];
      const double bg_sd =
          kBackgroundDriftPerGain * config.session_gain_spread / 2.0;
      for (auto& v : day_pattern) v += bg_sd * rb.normal();
      double* bdst = &session_background[(static_cast<size_t>(s) * R + r) * C *
                                         kBackground];
      for (int c = 0; c < C; ++c)
        for (int j = 0; j < kBackground; ++j)
          bdst[c * kBackground + j] =
              background_plane[static_cast<size_t>(c * kBackground)] *
                  day_pattern[static_cast<size_t>(j)] +
              background_plane[static_cast<size_t>(c * kBackground + 1)] *
                  day_pattern[static_cast<size_t>(2 + j)];
    }

  Dataset ds;
  ds.header.channels = C;
  ds.header.samples = T;
  ds.header.subjects = S;
  ds.header.sessions = R;
  ds.header.sample_rate_hz = config.sample_rate_hz;
  ds.header.normalized = false;
  ds.records.reserve(static_cast<size_t>(config.total_epochs()));

  std::vector<std::vector<double>> sources(kSources);
  std::vector<std::vector<double>> background(kBackground);
  for (int s = 0; s < S; ++s) {
    for (int r = 0; r < R; ++r) {
      const double* g = &gains[(static_cast<size_t>(s) * R + r) * C];
      const double* freqs =
          &drifted_freq[(static_cast<size_t>(s) * R + r) * kSources];
      const double* session_mix =
          &drifted_mix[(static_cast<size_t>(s) * R + r) * C * kSources];
      const double* session_bg = &session_background[(static_cast<size_t>(s) * R + r) *
                                                     C * kBackground];
      const double tilt = session_tilt[static_cast<size_t>(r)];
      for (int i = 0; i < config.epochs_per_subject_session; ++i) {
        Rng re = root.substream("epoch")
                     .substream(static_cast<uint64_t>(s))
                     .substream(static_cast<uint64_t>(r))
                     .substream(static_cast<uint64_t>(i));
        for (int k = 0; k < kSources; ++k)
          gen_ar2(re, freqs[k], T, sources[static_cast<size_t>(k)]);
        for (int j = 0; j < kBackground; ++j)
          gen_ar1(re, tilt, kSessionNoiseAmp, T,
                  background[static_cast<size_t>(j)]);

        EpochRecord rec;
        rec.subject = s;
        rec.session = r;
        rec.signal = Tensor({C, T});
        const double* mix = session_mix;
        const double* bmix = session_bg;
        for (int c = 0; c < C; ++c) {
          float* row = rec.signal.ptr() + static_cast<int64_t>(c) * T;
          for (int t = 0; t < T; ++t) {
            double v = 0;
            for (int k = 0; k < kSources; ++k)
              v += mix[c * kSources + k] *
                   sources[static_cast<size_t>(k)][static_cast<size_t>(t)];
            for (int j = 0; j < kBackground; ++j)
              v += bmix[c * kBackground + j] *
                   background[static_cast<size_t>(j)][static_cast<size_t>(t)];
            v = g[c] * v + config.noise_floor * re.normal();
            row[t] = static_cast<float>(v);
          }
        }
        ds.records.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

}  // namespace ainv
