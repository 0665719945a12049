#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "ainv/dataio.hpp"
#include "ainv/error.hpp"
#include "ainv/rng.hpp"
#include "ainv/trainer.hpp"
#include "support/oracles.hpp"

using namespace ainv;

namespace {

// Small geometry keeps these runs inside seconds.
EncoderConfig small_config(int channels = 8, int samples = 32) {
  EncoderConfig c;
  c.channels = channels;
  c.samples = samples;
  c.b1_filters = 4;
  c.depth_multiplier = 4;
  c.b3_filters = 40;
  c.b4_filters = 20;
  return c;
}

SynthConfig small_synth(int subjects, int sessions, int epochs_per,
                        uint64_t seed) {
  SynthConfig c;
  c.subjects = subjects;
  c.sessions = sessions;
  c.epochs_per_subject_session = epochs_per;
  c.channels = 8;
  c.samples = 32;
  c.seed = seed;
  return c;
}

Batch whole_batch(const Dataset& ds, const std::map<int, int>* map) {
  std::vector<size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  return make_batch(ds, idx, map);
}

std::vector<Tensor> snapshot(Model& m, bool encoder_only) {
  std::vector<Tensor> out;
  for (auto& [name, t] : trainable_tensors(m.encoder)) out.push_back(*t);
  if (!encoder_only) {
    out.push_back(m.identifier.weight);
    out.push_back(m.identifier.bias);
  }
  return out;
}

double max_abs_delta(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, oracle::max_abs_diff(a[i], b[i]));
  return m;
}

}  // namespace

TEST_CASE("adversary_step: only the adversary head moves") {
  Dataset ds = synth_generate(small_synth(3, 2, 10, 1));
  normalize_dataset(ds);
  Model model = build_model(small_config(), 3, 2, 7);
  const std::map<int, int> session_map{{0, 0}, {1, 1}};
  const Batch batch = whole_batch(ds, &session_map);

  const std::vector<Tensor> theta_before = snapshot(model, false);
  const Tensor adv_w_before = model.adversary->weight;
  const auto stats_before = model.encoder.b1.running;

  AdamState adv_state;
  const double ce = adversary_step(model, batch, adv_state, {1e-3});
  CHECK(std::isfinite(ce));

  const std::vector<Tensor> theta_after = snapshot(model, false);
  CHECK(max_abs_delta(theta_before, theta_after) == 0.0);
  CHECK_FALSE(oracle::bit_identical(adv_w_before, model.adversary->weight));
  // Running statistics belong to the encoder-identifier step.
  CHECK(oracle::bit_identical(stats_before.mean, model.encoder.b1.running.mean));
  CHECK(model.encoder.b1.running.initialized == stats_before.initialized);
}

TEST_CASE("adversary_step: zero-weight adversary starts at ln 2") {
  Dataset ds = synth_generate(small_synth(2, 2, 16, 2));
  normalize_dataset(ds);
  Model model = build_model(small_config(), 2, 2, 9);
  model.adversary->weight = Tensor({2, small_config().feature_dim()});
  model.adversary->bias = Tensor({2});
  const std::map<int, int> session_map{{0, 0}, {1, 1}};
  const Batch batch = whole_batch(ds, &session_map);
  AdamState adv_state;
  const double ce = adversary_step(model, batch, adv_state, {1e-3});
  CHECK(ce == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("adversary_step: reaches the logistic-probe ceiling on separable "
          "sessions") {
  SynthConfig sc = small_synth(3, 2, 40, 3);
  sc.session_tilt = 0.6;  // strong spectral separation between the two days
  Dataset ds = synth_generate(sc);
  normalize_dataset(ds);
  Model model = build_model(small_config(), 3, 2, 11);
  const std::map<int, int> session_map{{0, 0}, {1, 1}};
  const Batch batch = whole_batch(ds, &session_map);

  // Frozen features: same full batch every step, encoder untouched.
  const Tensor features = encoder_forward<float>(
      model.encoder, batch.X, RunMode::kTrain, false, nullptr);
  std::vector<std::vector<double>> probe_x(ds.size());
  std::vector<int> probe_y(batch.session.begin(), batch.session.end());
  const int64_t dim = features.dim(1);
  for (size_t i = 0; i < ds.size(); ++i) {
    probe_x[i].resize(static_cast<size_t>(dim));
    for (int64_t j = 0; j < dim; ++j)
      probe_x[i][static_cast<size_t>(j)] =
          features.ptr()[static_cast<int64_t>(i) * dim + j];
  }
  const double probe_acc =
      oracle::logistic_probe_accuracy(probe_x, probe_y, 300, 0.5);
  REQUIRE(probe_acc > 0.9);  // the feature set is linearly separable

  AdamState adv_state;
  for (int step = 0; step < 300; ++step)
    adversary_step(model, batch, adv_state, {1e-2});
  const Tensor logits = head_forward(*model.adversary, features);
  const EvalResult r = score_logits(logits, batch.session);
  CHECK(r.accuracy > 0.9);
}

TEST_CASE("encoder_identifier_step: adversary stays frozen; loss identity "
          "holds") {
  Dataset ds = synth_generate(small_synth(3, 2, 12, 4));
  normalize_dataset(ds);
  Model model = build_model(small_config(), 3, 2, 13);
  const std::map<int, int> session_map{{0, 0}, {1, 1}};
  const Batch batch = whole_batch(ds, &session_map);

  const Tensor phi_before = model.adversary->weight;
  AdamState enc_state;
  const EncIdLosses losses =
      encoder_identifier_step(model, batch, enc_state, {1e-3}, 0.05);
  CHECK(oracle::bit_identical(phi_before, model.adversary->weight));
  CHECK(losses.combined ==
        doctest::Approx(losses.id_ce - 0.05 * losses.adv_ce).epsilon(1e-9));
  CHECK(model.encoder.b1.running.initialized);  // running stats updated here
}

TEST_CASE("lambda=0 adversarial training equals plain training") {
  Dataset ds = synth_generate(small_synth(4, 2, 25, 5));
  normalize_dataset(ds);
  const std::map<int, int> session_map{{0, 0}, {1, 1}};

  // 10 batches of 20 over 200 epochs = one full pass.
  TrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.batch_size = 20;
  cfg.max_passes = 1;
  cfg.patience = 1;
  cfg.lr = 1e-3;
  cfg.seed = 42;

  Dataset val;
  val.header = ds.header;
  val.records.assign(ds.records.begin(), ds.records.begin() + 20);

  Model adversarial = build_model(small_config(), 4, 2, 21);
  Model plain = build_model(small_config(), 4, 0, 21);
  const TrainResult res_a =
      train(std::move(adversarial), ds, val, cfg, &session_map);
  const TrainResult res_p = train(std::move(plain), ds, val, cfg);

  Model best_a = res_a.best;
  Model best_p = res_p.best;
  const double delta =
      max_abs_delta(snapshot(best_a, false), snapshot(best_p, false));
  CHECK(delta <= 1e-6);
}

TEST_CASE("fused train-loop step equals standalone adversary + encoder steps") {
  for (const double lambda : {0.0, 0.05}) {
    CAPTURE(lambda);
    Dataset ds = synth_generate(small_synth(3, 2, 20, 6));
    normalize_dataset(ds);
    const std::map<int, int> session_map{{0, 0}, {1, 1}};

    TrainConfig cfg;
    cfg.lambda = lambda;
    cfg.batch_size = static_cast<int>(ds.size());  // one batch per pass
    cfg.max_passes = 1;
    cfg.patience = 1;
    cfg.lr = 1e-3;
    cfg.seed = 77;

    Dataset val;
    val.header = ds.header;
    val.records.assign(ds.records.begin(), ds.records.begin() + 10);

    Model fused = build_model(small_config(), 3, 2, 31);
    Model manual = build_model(small_config(), 3, 2, 31);

    const TrainResult res = train(std::move(fused), ds, val, cfg, &session_map);

    // Reproduce the pass by hand: same shuffle stream, same batch.
    std::vector<size_t> order(ds.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng = Rng(cfg.seed).substream("shuffle").substream(0);
    rng.shuffle(order);
    const Batch batch = make_batch(ds, order, &session_map);
    AdamState adv_state, enc_state;
    for (int k = 0; k < kAdversaryStepsPerBatch; ++k)
      adversary_step(manual, batch, adv_state, cfg.adam());
    encoder_identifier_step(manual, batch, enc_state, cfg.adam(), lambda);

    Model best = res.best;
    CHECK(max_abs_delta(snapshot(best, false), snapshot(manual, false)) == 0.0);
    CHECK(oracle::bit_identical(best.adversary->weight,
                                manual.adversary->weight));
    auto ra = running_stat_tensors(best.encoder);
    auto rb = running_stat_tensors(manual.encoder);
    for (size_t i = 0; i < ra.size(); ++i)
      CHECK(oracle::bit_identical(*ra[i].second, *rb[i].second));
  }
}

TEST_CASE("train: seeded twice gives bit-identical history") {
  Dataset ds = synth_generate(small_synth(3, 2, 20, 8));
  normalize_dataset(ds);
  const std::map<int, int> session_map{{0, 0}, {1, 1}};
  Dataset val;
  val.header = ds.header;
  val.records.assign(ds.records.begin(), ds.records.begin() + 24);

  TrainConfig cfg;
  cfg.lambda = 0.01;
  cfg.batch_size = 30;
  cfg.max_passes = 3;
  cfg.patience = 3;
  cfg.lr = 1e-3;
  cfg.seed = 1234;

  auto run = [&] {
    Model model = build_model(small_config(), 3, 2, 55);
    return train(std::move(model), ds, val, cfg, &session_map);
  };
  const TrainResult a = run();
  const TrainResult b = run();
  REQUIRE(a.history.passes.size() == b.history.passes.size());
  CHECK(a.history.best_pass == b.history.best_pass);
  for (size_t i = 0; i < a.history.passes.size(); ++i) {
    CHECK(std::memcmp(&a.history.passes[i].id_train_loss,
                      &b.history.passes[i].id_train_loss, sizeof(double)) == 0);
    CHECK(std::memcmp(&a.history.passes[i].id_val_loss,
                      &b.history.passes[i].id_val_loss, sizeof(double)) == 0);
    CHECK(std::memcmp(&a.history.passes[i].enc_loss,
                      &b.history.passes[i].enc_loss, sizeof(double)) == 0);
  }
}

TEST_CASE("train: early stopping returns the best checkpoint, never a later "
          "one") {
  Dataset ds = synth_generate(small_synth(4, 2, 15, 9));
  normalize_dataset(ds);
  const std::map<int, int> session_map{{0, 0}, {1, 1}};
  Dataset val;
  val.header = ds.header;
  for (size_t i = 0; i < ds.size(); i += 5) val.records.push_back(ds.records[i]);

  TrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.batch_size = 24;
  cfg.max_passes = 12;
  cfg.patience = 3;
  cfg.lr = 5e-3;  // deliberately hot so validation loss oscillates
  cfg.seed = 99;

  Model model = build_model(small_config(), 4, 2, 77);
  TrainResult res = train(std::move(model), ds, val, cfg, &session_map);
  REQUIRE(!res.history.passes.empty());

  double best_val = std::numeric_limits<double>::infinity();
  int best_pass = -1;
  for (const auto& rec : res.history.passes) {
    if (rec.id_val_loss < best_val) {
      best_val = rec.id_val_loss;
      best_pass = rec.pass;
    }
  }
  CHECK(res.history.best_pass == best_pass);
  // The returned parameters reproduce exactly the best recorded loss.
  const EvalResult re = evaluate(res.best, val, EvalTarget::kIdentifier);
  CHECK(re.mean_ce == doctest::Approx(best_val).epsilon(1e-12));
  // Early stop fired no later than patience passes after the best one.
  const int last_pass = res.history.passes.back().pass;
  CHECK(last_pass - best_pass <= cfg.patience);
}

TEST_CASE("train: empty validation set and divergence are rejected") {
  Dataset ds = synth_generate(small_synth(2, 2, 10, 10));
  normalize_dataset(ds);
  Dataset empty_val;
  empty_val.header = ds.header;
  TrainConfig cfg;
  cfg.batch_size = 10;
  Model model = build_model(small_config(), 2, 0, 1);
  CHECK_THROWS_AS(
      train(std::move(model), ds, empty_val, cfg), ArgumentError);

  // A non-finite parameter poisons the first loss; the guard aborts.
  Model poisoned = build_model(small_config(), 2, 0, 1);
  poisoned.identifier.weight.data[0] =
      std::numeric_limits<float>::quiet_NaN();
  Dataset val;
  val.header = ds.header;
  val.records.assign(ds.records.begin(), ds.records.begin() + 5);
  CHECK_THROWS_AS(train(std::move(poisoned), ds, val, cfg), DivergenceError);
}

TEST_CASE("train: batch size larger than the training set is a config error") {
  Dataset ds = synth_generate(small_synth(2, 2, 3, 11));
  normalize_dataset(ds);
  Dataset val = ds;
  TrainConfig cfg;
  cfg.batch_size = 1000;
  Model model = build_model(small_config(), 2, 0, 1);
  CHECK_THROWS_AS(train(std::move(model), ds, val, cfg), ConfigError);
}

TEST_CASE("score_logits: perfect, uniform, and tie-breaking stubs") {
  // Perfect logits: +10 on the true class.
  Tensor perfect({4, 3});
  const std::vector<int> labels{2, 0, 1, 2};
  for (size_t i = 0; i < 4; ++i)
    perfect.ptr()[i * 3 + static_cast<size_t>(labels[i])] = 10.0f;
  const EvalResult p = score_logits(perfect, labels);
  CHECK(p.accuracy == 1.0);

  // Uniform logits over 10 classes on a balanced set: ties resolve to class
  // 0, so exactly the class-0 tenth scores, and CE is ln 10.
  const int64_t n = 200;
  Tensor uniform({n, 10});
  std::vector<int> balanced(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) balanced[static_cast<size_t>(i)] = static_cast<int>(i % 10);
  const EvalResult u = score_logits(uniform, balanced);
  CHECK(u.accuracy == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(u.mean_ce == doctest::Approx(std::log(10.0)).epsilon(1e-9));
}

TEST_CASE("evaluate: adversary refuses labels outside the training sessions") {
  Dataset ds = synth_generate(small_synth(2, 3, 6, 12));
  normalize_dataset(ds);
  Model model = build_model(small_config(), 2, 2, 5);
  // Initialize running stats so eval mode is legal.
  const Batch warm = whole_batch(ds, nullptr);
  encoder_forward<float>(model.encoder, warm.X, RunMode::kTrain, true, nullptr);

  // Sessions {0, 1} trained; the dataset still contains session 2.
  const std::map<int, int> session_map{{0, 0}, {1, 1}};
  CHECK_THROWS_AS(
      evaluate(model, ds, EvalTarget::kAdversary, &session_map),
      LabelDomainError);
  CHECK_THROWS_AS(evaluate(model, ds, EvalTarget::kAdversary, nullptr),
                  LabelDomainError);
  // The identifier is indifferent to sessions.
  CHECK_NOTHROW(evaluate(model, ds, EvalTarget::kIdentifier));
}

TEST_CASE("train: easy within-session synthetic data clears 90% validation "
          "accuracy at lambda 0") {
  SynthConfig sc = small_synth(4, 1, 60, 13);
  sc.session_gain_spread = 0;
  sc.session_tilt = 0;
  sc.noise_floor = 0.15;
  Dataset ds = synth_generate(sc);
  normalize_dataset(ds);
  const WithinSessionSplit split = split_within_session(ds, 0, 3);

  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_passes = 30;
  cfg.patience = 8;
  cfg.lr = 2e-3;
  cfg.seed = 7;

  Model model = build_model(small_config(), 4, 0, 15);
  TrainResult res = train(std::move(model), split.train, split.val, cfg);
  const EvalResult val = evaluate(res.best, split.val, EvalTarget::kIdentifier);
  CHECK(val.accuracy > 0.9);
}
