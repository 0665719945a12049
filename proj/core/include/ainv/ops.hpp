#pragma once

#include <span>

#include "ainv/tensor.hpp"

namespace ainv {

struct Stride {
  int h = 1, w = 1;
};
struct Pad {
  int h = 0, w = 0;
};

enum class BnMode { kTrain, kEval };

// ---------------------------------------------------------------------------
// 2-D cross-correlation ("convolution" in the neural-network sense, no kernel
// flipping), zero padding.
//   input   (N, Cin, H, W)
//   kernels (Cout, Cin, kH, kW)
//   bias    (Cout)
//   output  (N, Cout, H', W'),  H' = floor((H + 2*pad.h - kH)/stride.h) + 1
// ---------------------------------------------------------------------------
template <class Real>
TensorT<Real> conv2d_forward(const TensorT<Real>& input,
                             const TensorT<Real>& kernels,
                             const TensorT<Real>& bias, Stride stride, Pad pad);

template <class Real>
struct Conv2dGrads {
  TensorT<Real> input, kernels, bias;
};

template <class Real>
Conv2dGrads<Real> conv2d_backward(const TensorT<Real>& input,
                                  const TensorT<Real>& kernels, Stride stride,
                                  Pad pad, const TensorT<Real>& grad_out);

// ---------------------------------------------------------------------------
// Depthwise convolution with depth multiplier M: input channel c is convolved
// independently with its own M kernels; output channel index is c*M + m.
//   input   (N, Cin, H, W)
//   kernels (Cin, M, kH, kW)
//   bias    (Cin*M)
//   output  (N, Cin*M, H', W')
// ---------------------------------------------------------------------------
template <class Real>
TensorT<Real> depthwise_conv2d_forward(const TensorT<Real>& input,
                                       const TensorT<Real>& kernels,
                                       const TensorT<Real>& bias, Stride stride,
                                       Pad pad);

template <class Real>
Conv2dGrads<Real> depthwise_conv2d_backward(const TensorT<Real>& input,
                                            const TensorT<Real>& kernels,
                                            Stride stride, Pad pad,
                                            const TensorT<Real>& grad_out);

// ---------------------------------------------------------------------------
// Batch normalization over (N, H, W) per channel of an (N, C, H, W) tensor.
// Train mode normalizes by the batch mean and biased batch variance and, when
// update_running is set, folds them into the running statistics by
// exponential moving average. Eval mode uses the running statistics and
// requires them to be initialized by at least one prior train-mode call.
// ---------------------------------------------------------------------------
template <class Real>
struct BnRunningStats {
  TensorT<Real> mean, var;
  bool initialized = false;
};

template <class Real>
struct BnCache {
  TensorT<Real> xhat;           // normalized pre-affine activations
  std::vector<Real> inv_std;    // per channel
  int64_t per_channel_count = 0;
};

template <class Real>
TensorT<Real> batchnorm_forward(const TensorT<Real>& input,
                                const TensorT<Real>& gamma,
                                const TensorT<Real>& beta,
                                BnRunningStats<Real>& running, BnMode mode,
                                Real eps, Real momentum, bool update_running,
                                BnCache<Real>* cache);

template <class Real>
struct BnGrads {
  TensorT<Real> input, gamma, beta;
};

template <class Real>
BnGrads<Real> batchnorm_backward(const BnCache<Real>& cache,
                                 const TensorT<Real>& gamma,
                                 const TensorT<Real>& grad_out);

// ---------------------------------------------------------------------------
// Elementwise max(0, x); the backward pass uses subgradient 0 at x == 0.
// ---------------------------------------------------------------------------
template <class Real>
TensorT<Real> relu_forward(const TensorT<Real>& input);

template <class Real>
TensorT<Real> relu_backward(const TensorT<Real>& input,
                            const TensorT<Real>& grad_out);

// ---------------------------------------------------------------------------
// Fully connected layer: (N, D) x (K, D)^T + (K) -> (N, K).
// ---------------------------------------------------------------------------
template <class Real>
TensorT<Real> linear_forward(const TensorT<Real>& input,
                             const TensorT<Real>& weight,
                             const TensorT<Real>& bias);

template <class Real>
struct LinearGrads {
  TensorT<Real> input, weight, bias;
};

template <class Real>
LinearGrads<Real> linear_backward(const TensorT<Real>& input,
                                  const TensorT<Real>& weight,
                                  const TensorT<Real>& grad_out);

// ---------------------------------------------------------------------------
// Mean softmax cross-entropy over a batch of logits (N, K) with integer
// labels in [0, K). Computed with max-subtraction; loss accumulated in
// double. Gradient w.r.t. logits is (probs - onehot) / N.
// ---------------------------------------------------------------------------
template <class Real>
struct SoftmaxCeResult {
  double loss = 0.0;
  TensorT<Real> probs;
};

template <class Real>
SoftmaxCeResult<Real> softmax_cross_entropy(const TensorT<Real>& logits,
                                            std::span<const int> labels);

template <class Real>
TensorT<Real> softmax_cross_entropy_backward(const TensorT<Real>& probs,
                                             std::span<const int> labels);

// ---------------------------------------------------------------------------
// Adam with bias correction. One state instance tracks one ordered parameter
// list; shapes are validated on every call and t increments by exactly 1.
// ---------------------------------------------------------------------------
struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class Real>
struct AdamStateT {
  std::vector<TensorT<Real>> m, v;
  int64_t t = 0;

  void init(std::span<TensorT<Real>* const> params) {
    m.clear();
    v.clear();
    for (const auto* p : params) {
      m.push_back(TensorT<Real>::zeros(p->shape));
      v.push_back(TensorT<Real>::zeros(p->shape));
    }
    t = 0;
  }
};

using AdamState = AdamStateT<float>;

template <class Real>
void adam_step(std::span<TensorT<Real>* const> params,
               std::span<const TensorT<Real>* const> grads,
               AdamStateT<Real>& state, const AdamHyper& hp);

// Number of threads Eigen may use for matrix products (default 1; results
// are identical for any fixed value).
void set_compute_threads(int n);
int compute_threads();

}  // namespace ainv
