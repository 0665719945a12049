#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ainv/tensor.hpp"

namespace ainv {

// One labelled epoch: a (C, T) multichannel signal window, the subject it was
// recorded from, and the recording session (day) it belongs to.
struct EpochRecord {
  Tensor signal;  // (C, T)
  int subject = 0;
  int session = 0;
};

struct DatasetHeader {
  int channels = 0;       // C
  int samples = 0;        // T
  int subjects = 0;       // S, labels in [0, S)
  int sessions = 0;       // R, labels in [0, R)
  float sample_rate_hz = 0.0f;
  bool normalized = false;
};

struct Dataset {
  DatasetHeader header;
  std::vector<EpochRecord> records;

  size_t size() const { return records.size(); }
};

// Per-channel: subtract the channel mean over T, then divide by the channel's
// post-centering max absolute value. A channel whose max-abs is 0 stays
// all-zero. Exactly idempotent: applying twice yields bit-identical output.
void normalize_epoch(Tensor& X);

// Normalizes every record in place and sets header.normalized.
void normalize_dataset(Dataset& ds);

// Dataset file, little-endian: magic "EEGB", version u32 = 1, C u32, T u32,
// S u32, R u32, sample_rate_hz f32, n_epochs u64, normalized u8, then per
// epoch: s u16, r u16, C*T f32 channel-major. Round-trips are bit-exact.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

// 70/10/20 split of one session's pool, shuffled by seed, stratified per
// subject. The three parts are disjoint and exhaustive.
struct WithinSessionSplit {
  Dataset train, val, test;
};
WithinSessionSplit split_within_session(const Dataset& ds, int session,
                                        uint64_t seed);

// Leave-one-session-out: the held-out session is the test set; the remaining
// sessions pool into 80/20 train/val stratified per (subject, session).
// session_label_map remaps the surviving session IDs to {0..R_train-1} in
// ascending original order, for adversary targets.
struct LosoSplit {
  Dataset train, val, test;
  std::map<int, int> session_label_map;
};
LosoSplit split_loso(const Dataset& ds, int test_session, uint64_t seed);

// Synthetic session-confounded generator. Per epoch of subject s in session r:
//   X = G_{s,r} (A_s z + e_r) + w
// where z are four order-2 autoregressive sources with subject-specific
// resonance frequencies, A_s a subject-specific mixing matrix, G_{s,r} a
// diagonal per-session channel gain (1 +- session_gain_spread), e_r
// session-colored noise whose spectral tilt is drawn per session, and w white
// noise at the noise floor. Fully determined by the seed.
struct SynthConfig {
  int subjects = 10;
  int sessions = 3;
  int epochs_per_subject_session = 64;
  int channels = 16;
  int samples = 128;
  float sample_rate_hz = 256.0f;
  double subject_scale = 1.0;       // 0 = identical subjects
  double session_gain_spread = 0.25;
  double session_tilt = 0.35;       // 0 = session-independent noise color
  double noise_floor = 0.3;
  uint64_t seed = 1;

  int64_t total_epochs() const {
    return static_cast<int64_t>(subjects) * sessions *
           epochs_per_subject_session;
  }
  void validate() const;
};

Dataset synth_generate(const SynthConfig& config);

}  // namespace ainv
