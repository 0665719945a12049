#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ainv/experiments.hpp"
#include "ainv/gradcheck.hpp"
#include "ainv/model.hpp"
#include "ainv/ops.hpp"
#include "ainv/rng.hpp"
#include "support/oracles.hpp"

using namespace ainv;

namespace {

// Scalar probe loss: weighted sum of the output tensor, which exercises every
// output element with a distinct upstream gradient.
Tensor64 probe_weights(const std::vector<int64_t>& shape, Rng& rng) {
  Tensor64 w(shape);
  for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);
  return w;
}

double weighted_sum(const Tensor64& t, const Tensor64& w) {
  double acc = 0;
  for (size_t i = 0; i < t.data.size(); ++i) acc += t.data[i] * w.data[i];
  return acc;
}

}  // namespace

TEST_CASE("gradcheck: single linear layer + CE below 1e-6") {
  Rng rng(101);
  Tensor64 input = oracle::random_tensor<double>({3, 4}, rng);
  Tensor64 weight = oracle::random_tensor<double>({5, 4}, rng);
  Tensor64 bias = oracle::random_tensor<double>({5}, rng);
  const std::vector<int> labels{0, 2, 4};

  auto loss = [&] {
    return softmax_cross_entropy<double>(linear_forward(input, weight, bias),
                                         labels)
        .loss;
  };
  auto grads = [&] {
    const Tensor64 logits = linear_forward(input, weight, bias);
    const auto ce = softmax_cross_entropy<double>(logits, labels);
    const Tensor64 dlogits =
        softmax_cross_entropy_backward<double>(ce.probs, labels);
    LinearGrads<double> g = linear_backward(input, weight, dlogits);
    std::vector<Tensor64> out;
    out.push_back(std::move(g.weight));
    out.push_back(std::move(g.bias));
    return out;
  };
  const auto report = gradcheck({{"weight", &weight}, {"bias", &bias}}, loss,
                                grads, 1e-6, 1e-12);
  CHECK(report.all_finite);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: tiny encoder with both heads and combined loss") {
  const auto report = verify_network_gradients(0.05, 20240501);
  CHECK(report.all_finite);
  CHECK(report.max_rel_err < 1e-4);
  // Every parameter tensor appears under its checkpoint name.
  REQUIRE(report.entries.size() == 20);
  CHECK(report.entries.front().name == "enc.b1.kernel");
  CHECK(report.entries[16].name == "id.weight");
  CHECK(report.entries.back().name == "adv.bias");
}

TEST_CASE("gradcheck: a corrupted gradient is reported above 1e-2") {
  Rng rng(103);
  Tensor64 weight = oracle::random_tensor<double>({3, 3}, rng);
  Tensor64 input = oracle::random_tensor<double>({2, 3}, rng);
  Tensor64 bias = oracle::random_tensor<double>({3}, rng);
  const std::vector<int> labels{1, 2};

  auto loss = [&] {
    return softmax_cross_entropy<double>(linear_forward(input, weight, bias),
                                         labels)
        .loss;
  };
  auto corrupted = [&] {
    const Tensor64 logits = linear_forward(input, weight, bias);
    const auto ce = softmax_cross_entropy<double>(logits, labels);
    const Tensor64 dlogits =
        softmax_cross_entropy_backward<double>(ce.probs, labels);
    LinearGrads<double> g = linear_backward(input, weight, dlogits);
    g.weight.data[4] += 1.0;  // fault injection
    std::vector<Tensor64> out;
    out.push_back(std::move(g.weight));
    return out;
  };
  const auto report = gradcheck({{"weight", &weight}}, loss, corrupted);
  CHECK(report.max_rel_err > 1e-2);
}

TEST_CASE("gradcheck: sign flip in the adversarial term fails the combined "
          "loss check") {
  // Same harness as verify_network_gradients but with +lambda instead of
  // -lambda in the analytic feature gradient.
  const EncoderConfig config = tiny_encoder_config();
  Rng root = Rng(99).substream("gradcheck");
  EncoderParamsT<double> encoder = build_encoder<double>(config, root.next());
  HeadParamsT<double> id_head =
      build_head<double>(4, config.feature_dim(), root.next());
  HeadParamsT<double> adv_head =
      build_head<double>(2, config.feature_dim(), root.next());
  Tensor64 x({6, config.channels, config.samples});
  Rng data_rng = root.substream("input");
  for (auto& v : x.data) v = data_rng.uniform(-1.0, 1.0);
  std::vector<int> subjects{0, 1, 2, 3, 0, 1}, sessions{0, 1, 0, 1, 0, 1};
  const double lambda = 0.05;

  auto loss = [&] {
    const Tensor64 f = encoder_forward<double>(encoder, x, RunMode::kTrain,
                                               false, nullptr);
    return softmax_cross_entropy<double>(head_forward(id_head, f), subjects)
               .loss -
           lambda *
               softmax_cross_entropy<double>(head_forward(adv_head, f), sessions)
                   .loss;
  };
  auto flipped_grads = [&] {
    EncoderCache<double> cache;
    const Tensor64 f =
        encoder_forward<double>(encoder, x, RunMode::kTrain, false, &cache);
    const auto ce_id =
        softmax_cross_entropy<double>(head_forward(id_head, f), subjects);
    const auto ce_adv =
        softmax_cross_entropy<double>(head_forward(adv_head, f), sessions);
    const Tensor64 did =
        softmax_cross_entropy_backward<double>(ce_id.probs, subjects);
    const Tensor64 dadv =
        softmax_cross_entropy_backward<double>(ce_adv.probs, sessions);
    LinearGrads<double> idg = linear_backward(f, id_head.weight, did);
    LinearGrads<double> advg = linear_backward(f, adv_head.weight, dadv);
    Tensor64 dfeat = idg.input;
    for (size_t i = 0; i < dfeat.data.size(); ++i)
      dfeat.data[i] += lambda * advg.input.data[i];  // wrong sign
    return encoder_backward(encoder, cache, dfeat);
  };
  auto params = trainable_tensors(encoder);
  const auto report = gradcheck(params, loss, flipped_grads);
  CHECK(report.max_rel_err > 1e-2);
}

TEST_CASE("property: conv2d gradients match finite differences over seeds") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng = Rng(500).substream(seed);
    const int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(2));
    const int64_t cin = 1 + static_cast<int64_t>(rng.uniform_int(2));
    const int64_t h = 2 + static_cast<int64_t>(rng.uniform_int(3));
    const int64_t w = 3 + static_cast<int64_t>(rng.uniform_int(4));
    const int64_t cout = 1 + static_cast<int64_t>(rng.uniform_int(3));
    const int64_t kh = 1 + static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(h)));
    const int64_t kw = 1 + static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(w)));
    const int sw = 1 + static_cast<int>(rng.uniform_int(2));
    const int pw = static_cast<int>(rng.uniform_int(2));
    Tensor64 input = oracle::random_tensor<double>({n, cin, h, w}, rng);
    Tensor64 kern = oracle::random_tensor<double>({cout, cin, kh, kw}, rng);
    Tensor64 bias = oracle::random_tensor<double>({cout}, rng);
    const Stride st{1, sw};
    const Pad pd{0, pw};
    const auto out_shape =
        conv2d_forward(input, kern, bias, st, pd).shape;
    Rng wrng = rng.substream("probe");
    const Tensor64 pw_t = probe_weights(out_shape, wrng);

    auto loss = [&] {
      return weighted_sum(conv2d_forward(input, kern, bias, st, pd), pw_t);
    };
    auto grads = [&] {
      Conv2dGrads<double> g = conv2d_backward(input, kern, st, pd, pw_t);
      std::vector<Tensor64> out;
      out.push_back(std::move(g.kernels));
      out.push_back(std::move(g.bias));
      out.push_back(std::move(g.input));
      return out;
    };
    const auto report = gradcheck(
        {{"kernels", &kern}, {"bias", &bias}, {"input", &input}}, loss, grads);
    CHECK(report.all_finite);
    CHECK(report.max_rel_err < 1e-4);
  }
}

TEST_CASE("property: depthwise gradients match finite differences") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng = Rng(600).substream(seed);
    const int64_t cin = 1 + static_cast<int64_t>(rng.uniform_int(3));
    const int64_t mult = 1 + static_cast<int64_t>(rng.uniform_int(3));
    const int64_t h = 2 + static_cast<int64_t>(rng.uniform_int(3));
    const int64_t w = 2 + static_cast<int64_t>(rng.uniform_int(4));
    const int64_t kh = 1 + static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(h)));
    Tensor64 input = oracle::random_tensor<double>({2, cin, h, w}, rng);
    Tensor64 kern = oracle::random_tensor<double>({cin, mult, kh, 1}, rng);
    Tensor64 bias = oracle::random_tensor<double>({cin * mult}, rng);
    const auto out_shape =
        depthwise_conv2d_forward(input, kern, bias, {1, 1}, {0, 0}).shape;
    Rng wrng = rng.substream("probe");
    const Tensor64 pw_t = probe_weights(out_shape, wrng);

    auto loss = [&] {
      return weighted_sum(
          depthwise_conv2d_forward(input, kern, bias, {1, 1}, {0, 0}), pw_t);
    };
    auto grads = [&] {
      Conv2dGrads<double> g =
          depthwise_conv2d_backward(input, kern, {1, 1}, {0, 0}, pw_t);
      std::vector<Tensor64> out;
      out.push_back(std::move(g.kernels));
      out.push_back(std::move(g.bias));
      out.push_back(std::move(g.input));
      return out;
    };
    const auto report = gradcheck(
        {{"kernels", &kern}, {"bias", &bias}, {"input", &input}}, loss, grads);
    CHECK(report.all_finite);
    CHECK(report.max_rel_err < 1e-4);
  }
}

TEST_CASE("property: batchnorm gradients match finite differences") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng = Rng(700).substream(seed);
    const int64_t n = 2 + static_cast<int64_t>(rng.uniform_int(3));
    const int64_t c = 1 + static_cast<int64_t>(rng.uniform_int(3));
    const int64_t h = 1 + static_cast<int64_t>(rng.uniform_int(3));
    const int64_t w = 2 + static_cast<int64_t>(rng.uniform_int(3));
    Tensor64 input = oracle::random_tensor<double>({n, c, h, w}, rng);
    Tensor64 gamma = oracle::random_tensor<double>({c}, rng, 0.5, 1.5);
    Tensor64 beta = oracle::random_tensor<double>({c}, rng);
    Rng wrng = rng.substream("probe");
    const Tensor64 pw_t = probe_weights({n, c, h, w}, wrng);

    auto forward = [&](BnCache<double>* cache) {
      BnRunningStats<double> stats;  // fresh per call: pure train-mode map
      return batchnorm_forward<double>(input, gamma, beta, stats,
                                       BnMode::kTrain, 1e-5, 0.9, false, cache);
    };
    auto loss = [&] { return weighted_sum(forward(nullptr), pw_t); };
    auto grads = [&] {
      BnCache<double> cache;
      forward(&cache);
      BnGrads<double> g = batchnorm_backward(cache, gamma, pw_t);
      std::vector<Tensor64> out;
      out.push_back(std::move(g.gamma));
      out.push_back(std::move(g.beta));
      out.push_back(std::move(g.input));
      return out;
    };
    const auto report = gradcheck(
        {{"gamma", &gamma}, {"beta", &beta}, {"input", &input}}, loss, grads);
    CHECK(report.all_finite);
    CHECK(report.max_rel_err < 1e-4);
  }
}

TEST_CASE("property: relu and linear gradients match finite differences") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng = Rng(800).substream(seed);
    const int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(4));
    const int64_t d = 2 + static_cast<int64_t>(rng.uniform_int(5));
    const int64_t k = 2 + static_cast<int64_t>(rng.uniform_int(4));
    Tensor64 input = oracle::random_tensor<double>({n, d}, rng);
    Tensor64 weight = oracle::random_tensor<double>({k, d}, rng);
    Tensor64 bias = oracle::random_tensor<double>({k}, rng);
    Rng wrng = rng.substream("probe");
    const Tensor64 pw_t = probe_weights({n, k}, wrng);

    auto loss = [&] {
      return weighted_sum(relu_forward(linear_forward(input, weight, bias)),
                          pw_t);
    };
    auto grads = [&] {
      const Tensor64 pre = linear_forward(input, weight, bias);
      const Tensor64 dpre = relu_backward(pre, pw_t);
      LinearGrads<double> g = linear_backward(input, weight, dpre);
      std::vector<Tensor64> out;
      out.push_back(std::move(g.weight));
      out.push_back(std::move(g.bias));
      out.push_back(std::move(g.input));
      return out;
    };
    const auto report = gradcheck(
        {{"weight", &weight}, {"bias", &bias}, {"input", &input}}, loss, grads);
    CHECK(report.all_finite);
    CHECK(report.max_rel_err < 1e-4);
  }
}

TEST_CASE("relu finite-difference example: grad of sum(relu(x))") {
  Tensor64 x({1, 2}, {-1.0, 2.0});
  const Tensor64 ones = Tensor64::full({1, 2}, 1.0);
  const Tensor64 g = relu_backward(x, ones);
  CHECK(g.data[0] == 0.0);
  CHECK(g.data[1] == 1.0);
  // central differences on sum(relu(x))
  const double h = 1e-5;
  for (size_t i = 0; i < 2; ++i) {
    auto f = [&](double v) {
      Tensor64 t = x;
      t.data[i] = v;
      const Tensor64 r = relu_forward(t);
      return r.data[0] + r.data[1];
    };
    const double numeric = (f(x.data[i] + h) - f(x.data[i] - h)) / (2 * h);
    CHECK(g.data[i] == doctest::Approx(numeric).epsilon(1e-8));
  }
}
