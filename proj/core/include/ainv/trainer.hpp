#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ainv/dataio.hpp"
#include "ainv/model.hpp"
#include "ainv/ops.hpp"

namespace ainv {

struct TrainConfig {
  double lambda = 0.0;   // adversarial loss weight, >= 0
  int batch_size = 100;
  int max_passes = 500;  // full sweeps over the training set
  int patience = 20;     // passes without validation improvement before stop
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 0;

  AdamHyper adam() const { return {lr, beta1, beta2, eps}; }
  void validate(size_t train_size) const;
};

// Encoder plus identifier head; the adversary head is present only for
// adversarial runs.
struct Model {
  EncoderParams encoder;
  HeadParams identifier;
  std::optional<HeadParams> adversary;
};

// Builds a model with reproducible per-component init streams derived from
// one seed. adversary_classes == 0 means no adversary head.
Model build_model(const EncoderConfig& config, int subject_classes,
                  int adversary_classes, uint64_t seed);

struct Batch {
  Tensor X;                  // (N, C, T)
  std::vector<int> subject;  // identifier targets
  std::vector<int> session;  // adversary targets, already remapped
};

// Assembles a batch from dataset records; session labels are remapped through
// session_label_map when given (required when the batch feeds an adversary).
Batch make_batch(const Dataset& ds, std::span<const size_t> indices,
                 const std::map<int, int>* session_label_map);

struct TrainerState {
  AdamState enc_id;  // encoder + identifier head
  AdamState adv;     // adversary head only
};

// Adversary head updates per batch inside train(): the head is refit toward
// its current optimum on the cached batch features before each
// encoder-identifier update.
constexpr int kAdversaryStepsPerBatch = 20;

// One adversary update: features are computed in train mode with gradients
// blocked from the encoder, only the adversary head parameters (and its Adam
// accumulators) change. Returns the adversary cross-entropy before the
// update. Batchnorm running statistics are not touched here.
double adversary_step(Model& model, const Batch& batch, AdamState& adv_state,
                      const AdamHyper& hp);

struct EncIdLosses {
  double id_ce = 0;        // identifier cross-entropy
  double adv_ce = 0;       // adversary cross-entropy (NaN without adversary)
  double combined = 0;     // id_ce - lambda * adv_ce
};

// One encoder-identifier update on L = CE_id - lambda * CE_adv with the
// adversary frozen; updates encoder and identifier parameters and folds the
// batch into the batchnorm running statistics.
EncIdLosses encoder_identifier_step(Model& model, const Batch& batch,
                                    AdamState& enc_id_state,
                                    const AdamHyper& hp, double lambda);

struct PassRecord {
  int pass = 0;
  double id_train_loss = 0;
  double id_val_loss = 0;
  double id_val_acc = 0;
  double adv_val_acc = 0;  // NaN for non-adversarial runs
  double enc_loss = 0;     // mean combined encoder-step loss
};

struct TrainHistory {
  std::vector<PassRecord> passes;
  int best_pass = -1;  // pass with minimal identifier validation loss
};

struct EvalResult {
  double accuracy = 0;
  double mean_ce = 0;
};

// Accuracy (argmax, ties to the lowest class index) and mean cross-entropy
// of a logit matrix against integer labels.
EvalResult score_logits(const Tensor& logits, std::span<const int> labels);

enum class EvalTarget { kIdentifier, kAdversary };

// Eval-mode metrics; argmax ties break toward the lowest class index.
// Adversary evaluation requires every record's session to appear in
// session_label_map, else LabelDomainError.
EvalResult evaluate(Model& model, const Dataset& ds, EvalTarget target,
                    const std::map<int, int>* session_label_map = nullptr);

struct TrainResult {
  Model best;            // checkpoint of the best pass
  TrainHistory history;
};

// Alternating optimization: per batch one adversary update then one
// encoder-identifier update on the same mini-batch. Stops when the identifier
// validation loss has not improved for `patience` passes or at max_passes.
// Aborts with DivergenceError on any non-finite loss.
TrainResult train(Model model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config,
                  const std::map<int, int>* session_label_map = nullptr);

// History CSV: pass,id_train_loss,id_val_loss,id_val_acc,adv_val_acc,enc_loss
void write_history_csv(const std::string& path, const TrainHistory& history);

// Checkpoint round trip for a full model; the optional session label map is
// stored so a standalone evaluation can score the adversary.
void save_model(const std::string& path, Model& model,
                const std::map<int, int>* session_label_map = nullptr);

struct LoadedModel {
  Model model;
  std::map<int, int> session_label_map;  // empty if absent
};
LoadedModel load_model(const std::string& path);

}  // namespace ainv
