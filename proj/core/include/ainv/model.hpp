#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ainv/ops.hpp"
#include "ainv/tensor.hpp"

namespace ainv {

// ---------------------------------------------------------------------------
// Convolutional encoder: four conv blocks mapping an (N, C, T) multichannel
// epoch to an (N, feature_dim) embedding, feature_dim = b4_filters * T/8.
//
//   reshape (N,1,C,T)
//   block1: b1_filters x conv (1, T/2), stride (1,2)    -> (N, f1, C, T/2), BN
//   block2: depthwise (C, 1) with multiplier            -> (N, f1*m, 1, T/2), BN, ReLU
//           reshape                                     -> (N, 1, f1*m, T/2)
//   block3: b3_filters x conv (f1*m, T/4), stride (1,2) -> (N, f3, 1, T/4), BN, ReLU
//           reshape                                     -> (N, 1, f3, T/4)
//   block4: b4_filters x conv (f3, T/8), stride (1,2)   -> (N, f4, 1, T/8), BN, ReLU
//   flatten                                             -> (N, f4 * T/8)
//
// Widths default to the full-scale network (20, 20, 200, 100); tests use a
// narrower variant for finite-difference verification.
// ---------------------------------------------------------------------------
struct EncoderConfig {
  int channels = 16;  // C
  int samples = 128;  // T, must be divisible by 8
  int b1_filters = 20;
  int depth_multiplier = 20;
  int b3_filters = 200;
  int b4_filters = 100;

  int feature_dim() const { return b4_filters * (samples / 8); }
  void validate() const;
};

constexpr float kBnEpsilon = 1e-5f;
constexpr float kBnMomentum = 0.9f;

template <class Real>
struct ConvBnBlock {
  TensorT<Real> kernels, bias, gamma, beta;
  BnRunningStats<Real> running;
};

template <class Real>
struct EncoderParamsT {
  EncoderConfig config;
  ConvBnBlock<Real> b1, b2, b3, b4;
};

template <class Real>
struct HeadParamsT {
  TensorT<Real> weight;  // (K, feature_dim)
  TensorT<Real> bias;    // (K)
  int classes() const { return static_cast<int>(weight.dim(0)); }
};

using EncoderParams = EncoderParamsT<float>;
using HeadParams = HeadParamsT<float>;

// Fan-in-scaled uniform init for kernels and weights; zero biases and beta,
// unit gamma.
template <class Real>
EncoderParamsT<Real> build_encoder(const EncoderConfig& config, uint64_t seed);

template <class Real>
HeadParamsT<Real> build_head(int classes, int feature_dim, uint64_t seed);

enum class RunMode { kTrain, kEval };

// Everything the backward pass needs, plus the intermediate shapes for
// conformance checks.
template <class Real>
struct EncoderCache {
  TensorT<Real> x1;                    // (N,1,C,T) conv1 input
  BnCache<Real> bn1;
  TensorT<Real> x2;                    // bn1 output, conv2 input
  BnCache<Real> bn2;
  TensorT<Real> pre_relu2;
  TensorT<Real> x3;                    // reshaped relu2, conv3 input
  BnCache<Real> bn3;
  TensorT<Real> pre_relu3;
  TensorT<Real> x4;                    // reshaped relu3, conv4 input
  BnCache<Real> bn4;
  TensorT<Real> pre_relu4;
  std::vector<std::vector<int64_t>> stage_shapes;  // after each named stage
};

// X is (N, C, T). In train mode batch statistics are used; running statistics
// are folded in only when update_running is set.
template <class Real>
TensorT<Real> encoder_forward(EncoderParamsT<Real>& params,
                              const TensorT<Real>& X, RunMode mode,
                              bool update_running, EncoderCache<Real>* cache);

// Gradients ordered exactly as trainable_tensors(): per block kernels, bias,
// gamma, beta.
template <class Real>
std::vector<TensorT<Real>> encoder_backward(const EncoderParamsT<Real>& params,
                                            const EncoderCache<Real>& cache,
                                            const TensorT<Real>& dfeatures);

template <class Real>
TensorT<Real> head_forward(const HeadParamsT<Real>& head,
                           const TensorT<Real>& features);

// Named views of the learnable tensors, checkpoint naming scheme:
// enc.b1.kernel, enc.b1.bias, enc.b1.bn.gamma, enc.b1.bn.beta, ... enc.b4.*
template <class Real>
std::vector<std::pair<std::string, TensorT<Real>*>> trainable_tensors(
    EncoderParamsT<Real>& params);

// Running statistics: enc.b1.bn.running_mean / running_var, ...
template <class Real>
std::vector<std::pair<std::string, TensorT<Real>*>> running_stat_tensors(
    EncoderParamsT<Real>& params);

template <class Real>
std::vector<std::pair<std::string, TensorT<Real>*>> head_tensors(
    HeadParamsT<Real>& head, const std::string& prefix);

// Total learnable parameter count (kernels + biases + gamma + beta).
int64_t encoder_parameter_count(const EncoderConfig& config);

// Symmetric padding solving (out-1)*stride + kernel == in + 2*pad; throws
// ConfigError when no exact non-negative solution exists.
int solve_pad(int in, int kernel, int stride, int out);

}  // namespace ainv
