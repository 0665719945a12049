#include "ainv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "ainv/checkpoint.hpp"
#include "ainv/error.hpp"
#include "ainv/rng.hpp"

namespace ainv {

void TrainConfig::validate(size_t train_size) const {
  if (lambda < 0) throw ConfigError("train: lambda must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch size must be positive");
  if (static_cast<size_t>(batch_size) > train_size)
    throw ConfigError("train: batch size exceeds training set size");
  if (max_passes < 1) throw ConfigError("train: max_passes must be positive");
  if (patience < 1) throw ConfigError("train: patience must be positive");
  if (lr <= 0) throw ConfigError("train: learning rate must be positive");
}

Model build_model(const EncoderConfig& config, int subject_classes,
                  int adversary_classes, uint64_t seed) {
  auto derive = [&](std::string_view name) {
    Rng r = Rng(seed).substream(name);
    return r.next();
  };
  Model m;
  m.encoder = build_encoder<float>(config, derive("encoder"));
  m.identifier =
      build_head<float>(subject_classes, config.feature_dim(), derive("identifier"));
  if (adversary_classes > 0)
    m.adversary = build_head<float>(adversary_classes, config.feature_dim(),
                                    derive("adversary"));
  return m;
}

Batch make_batch(const Dataset& ds, std::span<const size_t> indices,
                 const std::map<int, int>* session_label_map) {
  if (indices.empty()) throw ArgumentError("make_batch: empty index list");
  const int64_t c = ds.header.channels, t = ds.header.samples;
  Batch b;
  b.X = Tensor({static_cast<int64_t>(indices.size()), c, t});
  b.subject.reserve(indices.size());
  b.session.reserve(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    const EpochRecord& rec = ds.records[indices[i]];
    std::memcpy(b.X.ptr() + static_cast<int64_t>(i) * c * t, rec.signal.ptr(),
                static_cast<size_t>(c * t) * 4);
    b.subject.push_back(rec.subject);
    if (session_label_map) {
      const auto it = session_label_map->find(rec.session);
      if (it == session_label_map->end())
        throw LabelDomainError("batch: session " + std::to_string(rec.session) +
                               " is not a training session");
      b.session.push_back(it->second);
    } else {
      b.session.push_back(rec.session);
    }
  }
  return b;
}

namespace {

// The adversary head (a few thousand parameters) must track an encoder three
// orders of magnitude larger. A faster step and several head updates per
// batch keep it near its optimal read-out, so the encoder's adversarial
// gradient points at genuinely session-readable directions instead of
// out-running a stale head. The extra steps reuse the cached features and
// cost a fraction of one encoder pass.
constexpr double kAdversaryLrMultiplier = 2.0;

AdamHyper adversary_hyper(const AdamHyper& hp) {
  AdamHyper out = hp;
  out.lr *= kAdversaryLrMultiplier;
  return out;
}

std::vector<Tensor*> tensor_ptrs(
    std::vector<std::pair<std::string, Tensor*>>& named) {
  std::vector<Tensor*> out;
  out.reserve(named.size());
  for (auto& [name, ptr] : named) out.push_back(ptr);
  return out;
}

void check_session_labels(const Batch& batch, int adversary_classes) {
  for (const int r : batch.session)
    if (r < 0 || r >= adversary_classes)
      throw LabelDomainError("adversary: session label " + std::to_string(r) +
                             " outside remapped range [0, " +
                             std::to_string(adversary_classes) + ")");
}

// Adversary head update given already-computed features.
double adversary_update_on_features(Model& model, const Tensor& features,
                                    const Batch& batch, AdamState& adv_state,
                                    const AdamHyper& hp) {
  HeadParams& adv = *model.adversary;
  const Tensor logits = head_forward(adv, features);
  const auto ce = softmax_cross_entropy<float>(logits, batch.session);
  const Tensor dlogits =
      softmax_cross_entropy_backward<float>(ce.probs, batch.session);
  LinearGrads<float> grads = linear_backward(features, adv.weight, dlogits);
  Tensor* params[] = {&adv.weight, &adv.bias};
  const Tensor* gptrs[] = {&grads.weight, &grads.bias};
  adam_step<float>(params, gptrs, adv_state, adversary_hyper(hp));
  return ce.loss;
}

// Encoder + identifier update given features and their forward cache.
EncIdLosses enc_id_update_on_features(Model& model, const Tensor& features,
                                      const EncoderCache<float>& cache,
                                      const Batch& batch,
                                      AdamState& enc_id_state,
                                      const AdamHyper& hp, double lambda) {
  EncIdLosses out;
  const Tensor id_logits = head_forward(model.identifier, features);
  const auto ce_id = softmax_cross_entropy<float>(id_logits, batch.subject);
  out.id_ce = ce_id.loss;
  const Tensor dlogits_id =
      softmax_cross_entropy_backward<float>(ce_id.probs, batch.subject);
  LinearGrads<float> id_grads =
      linear_backward(features, model.identifier.weight, dlogits_id);
  Tensor dfeatures = std::move(id_grads.input);

  out.adv_ce = std::numeric_limits<double>::quiet_NaN();
  if (model.adversary) {
    const Tensor adv_logits = head_forward(*model.adversary, features);
    const auto ce_adv = softmax_cross_entropy<float>(adv_logits, batch.session);
    out.adv_ce = ce_adv.loss;
    if (lambda != 0.0) {
      const Tensor dlogits_adv =
          softmax_cross_entropy_backward<float>(ce_adv.probs, batch.session);
      LinearGrads<float> adv_grads =
          linear_backward(features, model.adversary->weight, dlogits_adv);
      const float lam = static_cast<float>(lambda);
      for (size_t i = 0; i < dfeatures.data.size(); ++i)
        dfeatures.data[i] -= lam * adv_grads.input.data[i];
    }
  }
  out.combined =
      out.id_ce - (std::isnan(out.adv_ce) ? 0.0 : lambda * out.adv_ce);

  std::vector<Tensor> enc_grads = encoder_backward(model.encoder, cache, dfeatures);

  auto named = trainable_tensors(model.encoder);
  std::vector<Tensor*> params = tensor_ptrs(named);
  std::vector<const Tensor*> grads;
  grads.reserve(enc_grads.size() + 2);
  for (auto& g : enc_grads) grads.push_back(&g);
  params.push_back(&model.identifier.weight);
  params.push_back(&model.identifier.bias);
  grads.push_back(&id_grads.weight);
  grads.push_back(&id_grads.bias);
  adam_step<float>(params, grads, enc_id_state, hp);
  return out;
}

}  // namespace

double adversary_step(Model& model, const Batch& batch, AdamState& adv_state,
                      const AdamHyper& hp) {
  if (!model.adversary)
    throw StateError("adversary_step: model has no adversary head");
  check_session_labels(batch, model.adversary->classes());
  // Train-mode statistics, but running stats stay untouched: the
  // encoder-identifier step owns the running-average update for this batch.
  const Tensor features = encoder_forward<float>(model.encoder, batch.X,
                                          RunMode::kTrain,
                                          /*update_running=*/false, nullptr);
  return adversary_update_on_features(model, features, batch, adv_state, hp);
}

EncIdLosses encoder_identifier_step(Model& model, const Batch& batch,
                                    AdamState& enc_id_state,
                                    const AdamHyper& hp, double lambda) {
  if (lambda < 0) throw ArgumentError("encoder_identifier_step: lambda < 0");
  if (model.adversary) check_session_labels(batch, model.adversary->classes());
  EncoderCache<float> cache;
  const Tensor features = encoder_forward<float>(model.encoder, batch.X,
                                          RunMode::kTrain,
                                          /*update_running=*/true, &cache);
  return enc_id_update_on_features(model, features, cache, batch, enc_id_state,
                                   hp, lambda);
}

namespace {

// Per-sample correct count and summed cross-entropy, accumulated in double
// in row order.
std::pair<int64_t, double> score_sums(const Tensor& logits,
                                      std::span<const int> labels) {
  const int64_t n = logits.dim(0), classes = logits.dim(1);
  int64_t correct = 0;
  double ce_total = 0;
  for (int64_t i = 0; i < n; ++i) {
    const float* z = logits.ptr() + i * classes;
    const int label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= classes)
      throw LabelDomainError("score: label outside model classes");
    int arg = 0;
    double zmax = z[0];
    for (int64_t k = 1; k < classes; ++k) {
      if (z[k] > z[arg]) arg = static_cast<int>(k);  // ties keep lowest index
      zmax = std::max(zmax, static_cast<double>(z[k]));
    }
    double denom = 0;
    for (int64_t k = 0; k < classes; ++k)
      denom += std::exp(static_cast<double>(z[k]) - zmax);
    ce_total += std::log(denom) - (static_cast<double>(z[label]) - zmax);
    if (arg == label) ++correct;
  }
  return {correct, ce_total};
}

}  // namespace

EvalResult score_logits(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "score_logits");
  if (static_cast<int64_t>(labels.size()) != logits.dim(0))
    throw DimensionError("score_logits: label count != rows");
  const auto [correct, ce_total] = score_sums(logits, labels);
  const double n = static_cast<double>(logits.dim(0));
  return {static_cast<double>(correct) / n, ce_total / n};
}

EvalResult evaluate(Model& model, const Dataset& ds, EvalTarget target,
                    const std::map<int, int>* session_label_map) {
  if (ds.records.empty()) throw ArgumentError("evaluate: empty dataset");
  if (target == EvalTarget::kAdversary && !model.adversary)
    throw StateError("evaluate: no adversary head");
  const HeadParams& head =
      target == EvalTarget::kIdentifier ? model.identifier : *model.adversary;
  const int classes = head.classes();

  std::vector<int> labels(ds.records.size());
  for (size_t i = 0; i < ds.records.size(); ++i) {
    if (target == EvalTarget::kIdentifier) {
      labels[i] = ds.records[i].subject;
    } else {
      if (!session_label_map)
        throw LabelDomainError("evaluate: adversary needs a session label map");
      const auto it = session_label_map->find(ds.records[i].session);
      if (it == session_label_map->end())
        throw LabelDomainError("evaluate: session " +
                               std::to_string(ds.records[i].session) +
                               " was not a training session");
      labels[i] = it->second;
    }
    if (labels[i] < 0 || labels[i] >= classes)
      throw LabelDomainError("evaluate: label outside model classes");
  }

  constexpr size_t kEvalChunk = 256;
  double ce_total = 0;
  int64_t correct = 0;
  std::vector<size_t> idx(kEvalChunk);
  for (size_t start = 0; start < ds.records.size(); start += kEvalChunk) {
    const size_t n = std::min(kEvalChunk, ds.records.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(ds, idx, nullptr);
    const Tensor features = encoder_forward<float>(model.encoder, batch.X,
                                                   RunMode::kEval, false,
                                                   nullptr);
    const Tensor logits = head_forward(head, features);
    const auto [chunk_correct, chunk_ce] = score_sums(
        logits, std::span<const int>(labels.data() + start, n));
    correct += chunk_correct;
    ce_total += chunk_ce;
  }
  const double n = static_cast<double>(ds.records.size());
  return {static_cast<double>(correct) / n, ce_total / n};
}

TrainResult train(Model model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config,
                  const std::map<int, int>* session_label_map) {
  config.validate(train_set.size());
  if (val_set.records.empty())
    throw ArgumentError("train: empty validation set");
  if (train_set.records.empty())
    throw ArgumentError("train: empty training set");
  if (model.adversary && !session_label_map)
    throw LabelDomainError("train: adversarial model needs a session label map");
  if (config.lambda > 0 && !model.adversary)
    throw ConfigError("train: lambda > 0 requires an adversary head");

  const AdamHyper hp = config.adam();
  TrainerState state;

  TrainResult result;
  TrainHistory& history = result.history;
  double best_val = std::numeric_limits<double>::infinity();
  const Rng shuffle_root = Rng(config.seed).substream("shuffle");

  std::vector<size_t> order(train_set.size());
  for (int pass = 0; pass < config.max_passes; ++pass) {
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng = shuffle_root.substream(static_cast<uint64_t>(pass));
    rng.shuffle(order);

    double id_loss_sum = 0, enc_loss_sum = 0;
    size_t samples_seen = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t n =
          std::min(static_cast<size_t>(config.batch_size), order.size() - start);
      const Batch batch = make_batch(
          train_set, std::span<const size_t>(order.data() + start, n),
          model.adversary ? session_label_map : nullptr);

      // Shared train-mode forward: the adversary sees the same batch
      // statistics the encoder step will use, and the running averages are
      // folded in exactly once.
      EncoderCache<float> cache;
      const Tensor features = encoder_forward<float>(model.encoder, batch.X,
                                              RunMode::kTrain, true, &cache);
      if (model.adversary)
        for (int k = 0; k < kAdversaryStepsPerBatch; ++k)
          adversary_update_on_features(model, features, batch, state.adv, hp);
      const EncIdLosses losses = enc_id_update_on_features(
          model, features, cache, batch, state.enc_id, hp, config.lambda);

      if (!std::isfinite(losses.id_ce) || !std::isfinite(losses.combined))
        throw DivergenceError("train: non-finite loss at pass " +
                              std::to_string(pass) + " (lambda=" +
                              std::to_string(config.lambda) + ")");
      id_loss_sum += losses.id_ce * static_cast<double>(n);
      enc_loss_sum += losses.combined * static_cast<double>(n);
      samples_seen += n;
    }

    PassRecord rec;
    rec.pass = pass;
    rec.id_train_loss = id_loss_sum / static_cast<double>(samples_seen);
    rec.enc_loss = enc_loss_sum / static_cast<double>(samples_seen);
    const EvalResult id_val = evaluate(model, val_set, EvalTarget::kIdentifier);
    rec.id_val_loss = id_val.mean_ce;
    rec.id_val_acc = id_val.accuracy;
    rec.adv_val_acc = std::numeric_limits<double>::quiet_NaN();
    if (model.adversary) {
      const EvalResult adv_val =
          evaluate(model, val_set, EvalTarget::kAdversary, session_label_map);
      rec.adv_val_acc = adv_val.accuracy;
    }
    if (!std::isfinite(rec.id_val_loss))
      throw DivergenceError("train: non-finite validation loss at pass " +
                            std::to_string(pass));
    history.passes.push_back(rec);

    if (rec.id_val_loss < best_val) {
      best_val = rec.id_val_loss;
      history.best_pass = pass;
      result.best = model;  // deep copy checkpoint of the best pass
    }
    if (pass - history.best_pass >= config.patience) break;
  }
  return result;
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("history: cannot write '" + path + "'");
  os << "pass,id_train_loss,id_val_loss,id_val_acc,adv_val_acc,enc_loss\n";
  char line[256];
  for (const auto& r : history.passes) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.pass,
                  r.id_train_loss, r.id_val_loss, r.id_val_acc, r.adv_val_acc,
                  r.enc_loss);
    os << line;
  }
}

// ---------------------------------------------------------------------------
// model checkpointing
// ---------------------------------------------------------------------------

void save_model(const std::string& path, Model& model,
                const std::map<int, int>* session_label_map) {
  std::vector<std::pair<std::string, const Tensor*>> entries;
  auto named = trainable_tensors(model.encoder);
  for (auto& [name, ptr] : named) entries.emplace_back(name, ptr);
  auto stats = running_stat_tensors(model.encoder);
  for (auto& [name, ptr] : stats) entries.emplace_back(name, ptr);
  auto id_named = head_tensors(model.identifier, "id");
  for (auto& [name, ptr] : id_named) entries.emplace_back(name, ptr);
  if (model.adversary) {
    auto adv_named = head_tensors(*model.adversary, "adv");
    for (auto& [name, ptr] : adv_named) entries.emplace_back(name, ptr);
  }

  const EncoderConfig& c = model.encoder.config;
  Tensor meta_encoder({6}, {static_cast<float>(c.channels),
                            static_cast<float>(c.samples),
                            static_cast<float>(c.b1_filters),
                            static_cast<float>(c.depth_multiplier),
                            static_cast<float>(c.b3_filters),
                            static_cast<float>(c.b4_filters)});
  Tensor meta_heads(
      {2}, {static_cast<float>(model.identifier.classes()),
            static_cast<float>(model.adversary ? model.adversary->classes() : 0)});
  Tensor meta_bn({4}, {model.encoder.b1.running.initialized ? 1.0f : 0.0f,
                       model.encoder.b2.running.initialized ? 1.0f : 0.0f,
                       model.encoder.b3.running.initialized ? 1.0f : 0.0f,
                       model.encoder.b4.running.initialized ? 1.0f : 0.0f});
  entries.emplace_back("meta.encoder", &meta_encoder);
  entries.emplace_back("meta.heads", &meta_heads);
  entries.emplace_back("meta.bn_initialized", &meta_bn);

  Tensor meta_sessions;
  if (session_label_map && !session_label_map->empty()) {
    std::vector<float> originals(session_label_map->size());
    for (const auto& [orig, mapped] : *session_label_map)
      originals[static_cast<size_t>(mapped)] = static_cast<float>(orig);
    const auto count = static_cast<int64_t>(originals.size());
    meta_sessions = Tensor({count}, std::move(originals));
    entries.emplace_back("meta.session_map", &meta_sessions);
  }

  save_checkpoint(path, entries);
}

LoadedModel load_model(const std::string& path) {
  auto tensors = load_checkpoint(path);
  auto fetch = [&](const std::string& name) -> Tensor& {
    const auto it = tensors.find(name);
    if (it == tensors.end())
      throw FormatError("checkpoint: missing tensor '" + name + "'");
    return it->second;
  };

  const Tensor& me = fetch("meta.encoder");
  if (me.numel() != 6) throw FormatError("checkpoint: bad meta.encoder");
  EncoderConfig config;
  config.channels = static_cast<int>(me[0]);
  config.samples = static_cast<int>(me[1]);
  config.b1_filters = static_cast<int>(me[2]);
  config.depth_multiplier = static_cast<int>(me[3]);
  config.b3_filters = static_cast<int>(me[4]);
  config.b4_filters = static_cast<int>(me[5]);

  const Tensor& mh = fetch("meta.heads");
  if (mh.numel() != 2) throw FormatError("checkpoint: bad meta.heads");
  const int subject_classes = static_cast<int>(mh[0]);
  const int adversary_classes = static_cast<int>(mh[1]);

  LoadedModel out;
  out.model = build_model(config, subject_classes, adversary_classes, 0);

  auto assign = [&](const std::string& name, Tensor* dst) {
    Tensor& src = fetch(name);
    if (src.shape != dst->shape)
      throw FormatError("checkpoint: tensor '" + name + "' has shape " +
                        shape_string(src) + ", expected " + shape_string(*dst));
    *dst = std::move(src);
  };
  for (auto& [name, ptr] : trainable_tensors(out.model.encoder)) assign(name, ptr);
  for (auto& [name, ptr] : running_stat_tensors(out.model.encoder)) assign(name, ptr);
  for (auto& [name, ptr] : head_tensors(out.model.identifier, "id")) assign(name, ptr);
  if (out.model.adversary)
    for (auto& [name, ptr] : head_tensors(*out.model.adversary, "adv"))
      assign(name, ptr);

  const Tensor& mb = fetch("meta.bn_initialized");
  if (mb.numel() != 4) throw FormatError("checkpoint: bad meta.bn_initialized");
  out.model.encoder.b1.running.initialized = mb[0] != 0;
  out.model.encoder.b2.running.initialized = mb[1] != 0;
  out.model.encoder.b3.running.initialized = mb[2] != 0;
  out.model.encoder.b4.running.initialized = mb[3] != 0;

  const auto ms = tensors.find("meta.session_map");
  if (ms != tensors.end()) {
    for (int64_t i = 0; i < ms->second.numel(); ++i)
      out.session_label_map[static_cast<int>(ms->second[static_cast<size_t>(i)])] =
          static_cast<int>(i);
  }
  return out;
}

}  // namespace ainv
