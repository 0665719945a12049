#include "ainv/model.hpp"

#include <algorithm>
#include <cmath>

#include "ainv/error.hpp"
#include "ainv/rng.hpp"

namespace ainv {

void EncoderConfig::validate() const {
  if (channels < 1) throw ConfigError("encoder: channel count must be >= 1");
  if (samples < 8 || samples % 8 != 0)
    throw ConfigError("encoder: sample count must be a positive multiple of 8");
  if (b1_filters < 1 || depth_multiplier < 1 || b3_filters < 1 ||
      b4_filters < 1)
    throw ConfigError("encoder: block widths must be positive");
}

int solve_pad(int in, int kernel, int stride, int out) {
  // Smallest symmetric padding p with floor((in + 2p - kernel)/stride) + 1
  // == out; strided convolutions may leave trailing columns uncovered.
  const int need = (out - 1) * stride + kernel - in;
  const int pad = std::max(0, (need + 1) / 2);
  if ((in + 2 * pad - kernel) / stride + 1 != out)
    throw ConfigError("encoder: no symmetric padding realizes the block dims");
  return pad;
}

namespace {

template <class Real>
void init_uniform_fan_in(TensorT<Real>& t, int64_t fan_in, Rng rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<Real>(rng.uniform(-a, a));
}

template <class Real>
ConvBnBlock<Real> make_block(std::vector<int64_t> kernel_shape, int64_t bn_channels,
                             int64_t fan_in, Rng rng) {
  ConvBnBlock<Real> b;
  b.kernels = TensorT<Real>(std::move(kernel_shape));
  init_uniform_fan_in(b.kernels, fan_in, rng);
  const int64_t cout = bn_channels;
  b.bias = TensorT<Real>({cout});
  b.gamma = TensorT<Real>::full({cout}, Real(1));
  b.beta = TensorT<Real>({cout});
  b.running.mean = TensorT<Real>({cout});
  b.running.var = TensorT<Real>::full({cout}, Real(1));
  return b;
}

struct BlockGeometry {
  int t_half, t_quarter, t_eighth;
  int pad1, pad3, pad4;
  int64_t depth_out;  // b1_filters * depth_multiplier
};

BlockGeometry geometry(const EncoderConfig& c) {
  BlockGeometry g{};
  g.t_half = c.samples / 2;
  g.t_quarter = c.samples / 4;
  g.t_eighth = c.samples / 8;
  g.pad1 = solve_pad(c.samples, g.t_half, 2, g.t_half);
  g.pad3 = solve_pad(g.t_half, g.t_quarter, 2, g.t_quarter);
  g.pad4 = solve_pad(g.t_quarter, g.t_eighth, 2, g.t_eighth);
  g.depth_out = static_cast<int64_t>(c.b1_filters) * c.depth_multiplier;
  return g;
}

}  // namespace

template <class Real>
EncoderParamsT<Real> build_encoder(const EncoderConfig& config, uint64_t seed) {
  config.validate();
  const BlockGeometry g = geometry(config);

  EncoderParamsT<Real> p;
  p.config = config;
  const Rng root = Rng(seed).substream("init");

  // Block 1: temporal filters spanning half the epoch.
  p.b1 = make_block<Real>({config.b1_filters, 1, 1, g.t_half},
                          config.b1_filters, g.t_half,
                          root.substream("enc.b1"));
  // Block 2: depthwise spatial filters across all channels.
  p.b2 = make_block<Real>(
      {config.b1_filters, config.depth_multiplier, config.channels, 1},
      g.depth_out, config.channels, root.substream("enc.b2"));
  // Block 3: aggregation over the stacked depthwise maps.
  p.b3 = make_block<Real>({config.b3_filters, 1, g.depth_out, g.t_quarter},
                          config.b3_filters,
                          g.depth_out * static_cast<int64_t>(g.t_quarter),
                          root.substream("enc.b3"));
  // Block 4: final aggregation stage.
  p.b4 = make_block<Real>({config.b4_filters, 1, config.b3_filters, g.t_eighth},
                          config.b4_filters,
                          static_cast<int64_t>(config.b3_filters) * g.t_eighth,
                          root.substream("enc.b4"));
  return p;
}

template <class Real>
HeadParamsT<Real> build_head(int classes, int feature_dim, uint64_t seed) {
  if (classes < 2) throw ConfigError("head: needs at least 2 classes");
  if (feature_dim < 1) throw ConfigError("head: feature dim must be positive");
  HeadParamsT<Real> h;
  h.weight = TensorT<Real>({classes, feature_dim});
  init_uniform_fan_in(h.weight, feature_dim, Rng(seed).substream("init.head"));
  h.bias = TensorT<Real>({classes});
  return h;
}

template <class Real>
TensorT<Real> encoder_forward(EncoderParamsT<Real>& params,
                              const TensorT<Real>& X, RunMode mode,
                              bool update_running, EncoderCache<Real>* cache) {
  require_rank(X, 3, "encoder input");
  const EncoderConfig& c = params.config;
  if (X.dim(1) != c.channels || X.dim(2) != c.samples)
    throw DimensionError("encoder: input is " + shape_string(X) +
                         ", expected (N," + std::to_string(c.channels) + "," +
                         std::to_string(c.samples) + ")");
  const int64_t n = X.dim(0);
  const BlockGeometry g = geometry(c);
  const BnMode bn_mode = mode == RunMode::kTrain ? BnMode::kTrain : BnMode::kEval;
  const bool upd = update_running && mode == RunMode::kTrain;

  EncoderCache<Real> local;
  EncoderCache<Real>& cc = cache ? *cache : local;
  const bool want_cache = cache != nullptr;
  cc.stage_shapes.clear();
  auto record = [&](const TensorT<Real>& t) { cc.stage_shapes.push_back(t.shape); };

  // (N,C,T) -> (N,1,C,T)
  TensorT<Real> x = X;
  x.reshape({n, 1, c.channels, c.samples});
  if (want_cache) cc.x1 = x;
  record(x);

  TensorT<Real> y = conv2d_forward(x, params.b1.kernels, params.b1.bias,
                                   Stride{1, 2}, Pad{0, g.pad1});
  record(y);
  y = batchnorm_forward(y, params.b1.gamma, params.b1.beta, params.b1.running,
                        bn_mode, Real(kBnEpsilon), Real(kBnMomentum), upd,
                        want_cache ? &cc.bn1 : nullptr);
  record(y);

  if (want_cache) cc.x2 = y;
  y = depthwise_conv2d_forward(y, params.b2.kernels, params.b2.bias,
                               Stride{1, 1}, Pad{0, 0});
  record(y);
  y = batchnorm_forward(y, params.b2.gamma, params.b2.beta, params.b2.running,
                        bn_mode, Real(kBnEpsilon), Real(kBnMomentum), upd,
                        want_cache ? &cc.bn2 : nullptr);
  if (want_cache) cc.pre_relu2 = y;
  y = relu_forward(y);
  y.reshape({n, 1, g.depth_out, g.t_half});
  record(y);

  if (want_cache) cc.x3 = y;
  y = conv2d_forward(y, params.b3.kernels, params.b3.bias, Stride{1, 2},
                     Pad{0, g.pad3});
  record(y);
  y = batchnorm_forward(y, params.b3.gamma, params.b3.beta, params.b3.running,
                        bn_mode, Real(kBnEpsilon), Real(kBnMomentum), upd,
                        want_cache ? &cc.bn3 : nullptr);
  if (want_cache) cc.pre_relu3 = y;
  y = relu_forward(y);
  y.reshape({n, 1, c.b3_filters, g.t_quarter});
  record(y);

  if (want_cache) cc.x4 = y;
  y = conv2d_forward(y, params.b4.kernels, params.b4.bias, Stride{1, 2},
                     Pad{0, g.pad4});
  record(y);
  y = batchnorm_forward(y, params.b4.gamma, params.b4.beta, params.b4.running,
                        bn_mode, Real(kBnEpsilon), Real(kBnMomentum), upd,
                        want_cache ? &cc.bn4 : nullptr);
  if (want_cache) cc.pre_relu4 = y;
  y = relu_forward(y);
  record(y);

  y.reshape({n, c.feature_dim()});
  record(y);
  return y;
}

template <class Real>
std::vector<TensorT<Real>> encoder_backward(const EncoderParamsT<Real>& params,
                                            const EncoderCache<Real>& cache,
                                            const TensorT<Real>& dfeatures) {
  const EncoderConfig& c = params.config;
  const BlockGeometry g = geometry(c);
  const int64_t n = dfeatures.dim(0);
  if (dfeatures.dim(1) != c.feature_dim())
    throw DimensionError("encoder backward: feature grad dim mismatch");

  // Block 4
  TensorT<Real> dy = dfeatures;
  dy.reshape({n, c.b4_filters, 1, g.t_eighth});
  dy = relu_backward(cache.pre_relu4, dy);
  BnGrads<Real> bn4 = batchnorm_backward(cache.bn4, params.b4.gamma, dy);
  Conv2dGrads<Real> c4 = conv2d_backward(cache.x4, params.b4.kernels,
                                         Stride{1, 2}, Pad{0, g.pad4},
                                         bn4.input);

  // Block 3
  dy = std::move(c4.input);
  dy.reshape({n, c.b3_filters, 1, g.t_quarter});
  dy = relu_backward(cache.pre_relu3, dy);
  BnGrads<Real> bn3 = batchnorm_backward(cache.bn3, params.b3.gamma, dy);
  Conv2dGrads<Real> c3 = conv2d_backward(cache.x3, params.b3.kernels,
                                         Stride{1, 2}, Pad{0, g.pad3},
                                         bn3.input);

  // Block 2
  dy = std::move(c3.input);
  dy.reshape({n, g.depth_out, 1, g.t_half});
  dy = relu_backward(cache.pre_relu2, dy);
  BnGrads<Real> bn2 = batchnorm_backward(cache.bn2, params.b2.gamma, dy);
  Conv2dGrads<Real> c2 = depthwise_conv2d_backward(
      cache.x2, params.b2.kernels, Stride{1, 1}, Pad{0, 0}, bn2.input);

  // Block 1
  BnGrads<Real> bn1 = batchnorm_backward(cache.bn1, params.b1.gamma, c2.input);
  Conv2dGrads<Real> c1 = conv2d_backward(cache.x1, params.b1.kernels,
                                         Stride{1, 2}, Pad{0, g.pad1},
                                         bn1.input);

  std::vector<TensorT<Real>> grads;
  grads.reserve(16);
  grads.push_back(std::move(c1.kernels));
  grads.push_back(std::move(c1.bias));
  grads.push_back(std::move(bn1.gamma));
  grads.push_back(std::move(bn1.beta));
  grads.push_back(std::move(c2.kernels));
  grads.push_back(std::move(c2.bias));
  grads.push_back(std::move(bn2.gamma));
  grads.push_back(std::move(bn2.beta));
  grads.push_back(std::move(c3.kernels));
  grads.push_back(std::move(c3.bias));
  grads.push_back(std::move(bn3.gamma));
  grads.push_back(std::move(bn3.beta));
  grads.push_back(std::move(c4.kernels));
  grads.push_back(std::move(c4.bias));
  grads.push_back(std::move(bn4.gamma));
  grads.push_back(std::move(bn4.beta));
  return grads;
}

template <class Real>
TensorT<Real> head_forward(const HeadParamsT<Real>& head,
                           const TensorT<Real>& features) {
  return linear_forward(features, head.weight, head.bias);
}

template <class Real>
std::vector<std::pair<std::string, TensorT<Real>*>> trainable_tensors(
    EncoderParamsT<Real>& p) {
  std::vector<std::pair<std::string, TensorT<Real>*>> v;
  auto add = [&](const std::string& blk, ConvBnBlock<Real>& b) {
    v.emplace_back("enc." + blk + ".kernel", &b.kernels);
    v.emplace_back("enc." + blk + ".bias", &b.bias);
    v.emplace_back("enc." + blk + ".bn.gamma", &b.gamma);
    v.emplace_back("enc." + blk + ".bn.beta", &b.beta);
  };
  add("b1", p.b1);
  add("b2", p.b2);
  add("b3", p.b3);
  add("b4", p.b4);
  return v;
}

template <class Real>
std::vector<std::pair<std::string, TensorT<Real>*>> running_stat_tensors(
    EncoderParamsT<Real>& p) {
  std::vector<std::pair<std::string, TensorT<Real>*>> v;
  auto add = [&](const std::string& blk, ConvBnBlock<Real>& b) {
    v.emplace_back("enc." + blk + ".bn.running_mean", &b.running.mean);
    v.emplace_back("enc." + blk + ".bn.running_var", &b.running.var);
  };
  add("b1", p.b1);
  add("b2", p.b2);
  add("b3", p.b3);
  add("b4", p.b4);
  return v;
}

template <class Real>
std::vector<std::pair<std::string, TensorT<Real>*>> head_tensors(
    HeadParamsT<Real>& head, const std::string& prefix) {
  return {{prefix + ".weight", &head.weight}, {prefix + ".bias", &head.bias}};
}

int64_t encoder_parameter_count(const EncoderConfig& config) {
  config.validate();
  EncoderConfig c = config;
  const int64_t depth_out =
      static_cast<int64_t>(c.b1_filters) * c.depth_multiplier;
  int64_t count = 0;
  // kernels + bias + gamma + beta per block
  count += static_cast<int64_t>(c.b1_filters) * (c.samples / 2) + 3 * c.b1_filters;
  count += static_cast<int64_t>(c.b1_filters) * c.depth_multiplier * c.channels +
           3 * depth_out;
  count += static_cast<int64_t>(c.b3_filters) * depth_out * (c.samples / 4) +
           3 * c.b3_filters;
  count += static_cast<int64_t>(c.b4_filters) * c.b3_filters * (c.samples / 8) +
           3 * c.b4_filters;
  return count;
}

#define AINV_INSTANTIATE_MODEL(Real)                                          \
  template EncoderParamsT<Real> build_encoder<Real>(const EncoderConfig&,     \
                                                    uint64_t);                \
  template HeadParamsT<Real> build_head<Real>(int, int, uint64_t);            \
  template TensorT<Real> encoder_forward<Real>(EncoderParamsT<Real>&,         \
                                               const TensorT<Real>&, RunMode, \
                                               bool, EncoderCache<Real>*);    \
  template std::vector<TensorT<Real>> encoder_backward<Real>(                 \
      const EncoderParamsT<Real>&, const EncoderCache<Real>&,                 \
      const TensorT<Real>&);                                                  \
  template TensorT<Real> head_forward<Real>(const HeadParamsT<Real>&,         \
                                            const TensorT<Real>&);            \
  template std::vector<std::pair<std::string, TensorT<Real>*>>                \
  trainable_tensors<Real>(EncoderParamsT<Real>&);                             \
  template std::vector<std::pair<std::string, TensorT<Real>*>>                \
  running_stat_tensors<Real>(EncoderParamsT<Real>&);                          \
  template std::vector<std::pair<std::string, TensorT<Real>*>>                \
  head_tensors<Real>(HeadParamsT<Real>&, const std::string&);

AINV_INSTANTIATE_MODEL(float)
AINV_INSTANTIATE_MODEL(double)

#undef AINV_INSTANTIATE_MODEL

}  // namespace ainv
