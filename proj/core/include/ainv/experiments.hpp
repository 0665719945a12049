#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ainv/dataio.hpp"
#include "ainv/gradcheck.hpp"
#include "ainv/trainer.hpp"

namespace ainv {

// Welch settings for the spectral baseline: 3 half-overlapping segments per
// 128-sample epoch.
constexpr int kWelchSegLen = 64;
constexpr int kWelchOverlap = 32;
constexpr double kQdaShrinkage = 1e-3;
constexpr double kPcaVarianceThreshold = 0.9;

struct ExperimentSpec {
  std::string dataset_path;
  int test_session = 0;            // LOSO held-out / within-session target
  std::vector<double> lambdas;     // sweep grid
  TrainConfig train;               // lambda and seed are filled per run
  int repetitions = 1;
  uint64_t base_seed = 1;
  std::string out_dir;
  int jobs = 1;                    // parallel repetitions, each single-threaded
};

// One trained repetition.
struct RepResult {
  std::string method;
  double lambda = 0;
  int rep = 0;
  uint64_t seed = 0;
  double id_val_acc = 0;
  double adv_val_acc = 0;  // NaN where no adversary exists
  double test_acc = 0;
  int best_pass = 0;
  int passes_run = 0;
};

// Aggregated row: means and population standard deviations over repetitions.
struct ResultRow {
  std::string method;
  double lambda = 0;
  double id_val_mean = 0, id_val_sd = 0;
  double adv_val_mean = 0, adv_val_sd = 0;
  double test_mean = 0, test_sd = 0;
  int repetitions = 0;
};

// Within-session protocol: plain (non-adversarial) training on the 70/10
// splits of one session, scored on its 20% test split.
std::vector<RepResult> run_within_session(const ExperimentSpec& spec,
                                          const Dataset& ds);

// Leave-one-session-out sweep over spec.lambdas; every (lambda, repetition)
// pair trains adversarially on the pooled remaining sessions. The adversary
// is never scored against the held-out session. Results are ordered by
// (lambda index, repetition) regardless of spec.jobs.
std::vector<RepResult> run_loso(const ExperimentSpec& spec, const Dataset& ds);

enum class BaselineMethod { kSpectral, kPca };

// Classical baselines on the same LOSO splits: channel log-bandpowers or a
// PCA projection of the vectorized epochs, each followed by QDA. Feature
// extraction and projection are fitted on the training split only.
std::vector<RepResult> run_baselines(const ExperimentSpec& spec,
                                     const Dataset& ds, BaselineMethod method);

std::vector<ResultRow> aggregate(const std::vector<RepResult>& reps);

// Report files under spec.out_dir:
//   results.csv      aggregated rows (method, lambda, means, sds, reps)
//   raw.csv          one row per repetition
//   sweep_scatter.csv  per-lambda (lambda, id_mean, id_sd, adv_mean, adv_sd)
//   manifest.txt     resolved settings and seeds
void write_raw_csv(const std::string& path, const std::vector<RepResult>& reps);
void write_results_csv(const std::string& path,
                       const std::vector<ResultRow>& rows);
void write_scatter_csv(const std::string& path,
                       const std::vector<ResultRow>& rows);
void write_manifest(const std::string& path, const ExperimentSpec& spec,
                    const std::string& mode);

// Reads a results/raw CSV back; returns rows of doubles per data line
// (non-numeric cells become NaN). Used by the verification suite.
std::vector<std::vector<double>> read_csv_numeric(const std::string& path);

// Spearman rank correlation (average ranks on ties).
double spearman_rho(std::span<const double> x, std::span<const double> y);

// Finite-difference verification of every layer gradient through a narrow
// encoder with both heads and the combined loss CE_id - lambda * CE_adv.
GradCheckReport verify_network_gradients(double lambda, uint64_t seed);

// Narrow encoder geometry used by gradient verification and fast tests.
EncoderConfig tiny_encoder_config();

// Runs the full gradient verification, one line per parameter tensor;
// returns a process exit status (0 = all below tolerance).
int cmd_gradcheck(std::ostream& out);

// Plain-text "key = value" config files for SynthConfig / TrainConfig.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
SynthConfig synth_config_from_kv(const std::map<std::string, std::string>& kv);
void apply_train_overrides(TrainConfig& cfg,
                           const std::map<std::string, std::string>& kv);

}  // namespace ainv
