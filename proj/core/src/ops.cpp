#include "ainv/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace ainv {

namespace {

template <class Real>
using MatMap =
    Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class Real>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct ConvDims {
  int64_t n, cin, h, w;
  int64_t cout, kh, kw;
  int64_t oh, ow;
};

int64_t conv_out_extent(int64_t in, int64_t k, int pad, int stride) {
  return (in + 2 * pad - k) / stride + 1;
}

ConvDims check_conv_args(const std::vector<int64_t>& in_shape,
                         const std::vector<int64_t>& k_shape,
                         int64_t expected_kernel_cin, int64_t bias_len,
                         int64_t out_channels, Stride stride, Pad pad) {
  if (stride.h <= 0 || stride.w <= 0)
    throw ArgumentError("conv stride must be positive");
  if (pad.h < 0 || pad.w < 0) throw ArgumentError("conv padding must be >= 0");
  ConvDims d{};
  d.n = in_shape[0];
  d.cin = in_shape[1];
  d.h = in_shape[2];
  d.w = in_shape[3];
  d.kh = k_shape[2];
  d.kw = k_shape[3];
  d.cout = out_channels;
  if (k_shape[1] != expected_kernel_cin)
    throw DimensionError("kernel channel count does not match input");
  if (d.kh > d.h + 2 * pad.h || d.kw > d.w + 2 * pad.w)
    throw DimensionError("kernel larger than padded input");
  if (bias_len != d.cout)
    throw DimensionError("bias length does not match output channels");
  d.oh = conv_out_extent(d.h, d.kh, pad.h, stride.h);
  d.ow = conv_out_extent(d.w, d.kw, pad.w, stride.w);
  return d;
}

// Scratch for im2col patch matrices, reused across calls per thread.
template <class Real>
std::vector<Real>& scratch_cols() {
  thread_local std::vector<Real> buf;
  return buf;
}

// Patch matrix for samples [n0, n0+nn): rows = cin*kh*kw, one column per
// output position, column index ((n - n0)*oh + oy)*ow + ox.
template <class Real>
void im2col(const Real* in, const ConvDims& d, Stride stride, Pad pad,
            int64_t n0, int64_t nn, Real* cols) {
  const int64_t ckk = d.cin * d.kh * d.kw;
  const int64_t ncols = nn * d.oh * d.ow;
  for (int64_t c = 0; c < d.cin; ++c) {
    for (int64_t ky = 0; ky < d.kh; ++ky) {
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        Real* row = cols + ((c * d.kh + ky) * d.kw + kx) * ncols;
        for (int64_t n = 0; n < nn; ++n) {
          const Real* img = in + ((n0 + n) * d.cin + c) * d.h * d.w;
          for (int64_t oy = 0; oy < d.oh; ++oy) {
            const int64_t iy = oy * stride.h - pad.h + ky;
            Real* out_row = row + (n * d.oh + oy) * d.ow;
            if (iy < 0 || iy >= d.h) {
              std::fill(out_row, out_row + d.ow, Real(0));
              continue;
            }
            const Real* src = img + iy * d.w;
            const int64_t x0 = -pad.w + kx;
            for (int64_t ox = 0; ox < d.ow; ++ox) {
              const int64_t ix = ox * stride.w + x0;
              out_row[ox] = (ix >= 0 && ix < d.w) ? src[ix] : Real(0);
            }
          }
        }
      }
    }
  }
}

// Transpose-accumulate of im2col: scatters column gradients back to images.
template <class Real>
void col2im_add(const Real* cols, const ConvDims& d, Stride stride, Pad pad,
                int64_t n0, int64_t nn, Real* in_grad) {
  const int64_t ncols = nn * d.oh * d.ow;
  for (int64_t c = 0; c < d.cin; ++c) {
    for (int64_t ky = 0; ky < d.kh; ++ky) {
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        const Real* row = cols + ((c * d.kh + ky) * d.kw + kx) * ncols;
        for (int64_t n = 0; n < nn; ++n) {
          Real* img = in_grad + ((n0 + n) * d.cin + c) * d.h * d.w;
          for (int64_t oy = 0; oy < d.oh; ++oy) {
            const int64_t iy = oy * stride.h - pad.h + ky;
            if (iy < 0 || iy >= d.h) continue;
            const Real* src_row = row + (n * d.oh + oy) * d.ow;
            Real* dst = img + iy * d.w;
            const int64_t x0 = -pad.w + kx;
            for (int64_t ox = 0; ox < d.ow; ++ox) {
              const int64_t ix = ox * stride.w + x0;
              if (ix >= 0 && ix < d.w) dst[ix] += src_row[ox];
            }
          }
        }
      }
    }
  }
}

// Batch chunking keeps the patch matrix under ~96 MB.
int64_t conv_chunk(const ConvDims& d) {
  const int64_t bytes_per_sample = d.cin * d.kh * d.kw * d.oh * d.ow *
                                   static_cast<int64_t>(sizeof(float));
  const int64_t cap = 96ll << 20;
  return std::clamp<int64_t>(cap / std::max<int64_t>(1, bytes_per_sample), 1,
                             d.n);
}

}  // namespace

static int g_compute_threads = 1;

void set_compute_threads(int n) {
  g_compute_threads = std::max(1, n);
  Eigen::setNbThreads(g_compute_threads);
}

int compute_threads() { return g_compute_threads; }

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> conv2d_forward(const TensorT<Real>& input,
                             const TensorT<Real>& kernels,
                             const TensorT<Real>& bias, Stride stride,
                             Pad pad) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  require_rank(bias, 1, "conv2d bias");
  if (kernels.dim(1) != input.dim(1))
    throw DimensionError("conv2d: kernel Cin != input Cin");
  const ConvDims d = check_conv_args(input.shape, kernels.shape,
                                     input.dim(1), bias.numel(),
                                     kernels.dim(0), stride, pad);

  TensorT<Real> out({d.n, d.cout, d.oh, d.ow});
  const int64_t ckk = d.cin * d.kh * d.kw;
  const int64_t chunk = conv_chunk(d);
  auto& cols = scratch_cols<Real>();

  for (int64_t n0 = 0; n0 < d.n; n0 += chunk) {
    const int64_t nn = std::min(chunk, d.n - n0);
    const int64_t ncols = nn * d.oh * d.ow;
    cols.resize(static_cast<size_t>(ckk * ncols));
    im2col(input.ptr(), d, stride, pad, n0, nn, cols.data());

    // (cout x ckk) * (ckk x ncols)
    ConstMatMap<Real> kmat(kernels.ptr(), d.cout, ckk);
    ConstMatMap<Real> cmat(cols.data(), ckk, ncols);
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> prod =
        kmat * cmat;

    const int64_t plane = d.oh * d.ow;
    for (int64_t co = 0; co < d.cout; ++co) {
      const Real b = bias[static_cast<size_t>(co)];
      const Real* src = prod.data() + co * ncols;
      for (int64_t n = 0; n < nn; ++n) {
        Real* dst = out.ptr() + (((n0 + n) * d.cout + co) * plane);
        const Real* s = src + n * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] = s[i] + b;
      }
    }
  }
  return out;
}

template <class Real>
Conv2dGrads<Real> conv2d_backward(const TensorT<Real>& input,
                                  const TensorT<Real>& kernels, Stride stride,
                                  Pad pad, const TensorT<Real>& grad_out) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  require_rank(grad_out, 4, "conv2d grad_out");
  const ConvDims d = check_conv_args(input.shape, kernels.shape, input.dim(1),
                                     kernels.dim(0), kernels.dim(0), stride,
                                     pad);
  if (grad_out.dim(0) != d.n || grad_out.dim(1) != d.cout ||
      grad_out.dim(2) != d.oh || grad_out.dim(3) != d.ow)
    throw DimensionError("conv2d: grad_out shape mismatch");

  Conv2dGrads<Real> g{TensorT<Real>(input.shape), TensorT<Real>(kernels.shape),
                      TensorT<Real>({d.cout})};
  const int64_t ckk = d.cin * d.kh * d.kw;
  const int64_t plane = d.oh * d.ow;
  const int64_t chunk = conv_chunk(d);
  auto& cols = scratch_cols<Real>();
  std::vector<Real> go_mat;   // (cout x nn*plane), grad_out regrouped
  std::vector<Real> col_grad;

  MatMap<Real> dk(g.kernels.ptr(), d.cout, ckk);

  for (int64_t n0 = 0; n0 < d.n; n0 += chunk) {
    const int64_t nn = std::min(chunk, d.n - n0);
    const int64_t ncols = nn * plane;

    go_mat.resize(static_cast<size_t>(d.cout * ncols));
    for (int64_t co = 0; co < d.cout; ++co)
      for (int64_t n = 0; n < nn; ++n)
        std::memcpy(go_mat.data() + co * ncols + n * plane,
                    grad_out.ptr() + (((n0 + n) * d.cout + co) * plane),
                    static_cast<size_t>(plane) * sizeof(Real));
    ConstMatMap<Real> go(go_mat.data(), d.cout, ncols);

    // dBias
    for (int64_t co = 0; co < d.cout; ++co) {
      double acc = 0;
      const Real* row = go_mat.data() + co * ncols;
      for (int64_t i = 0; i < ncols; ++i) acc += static_cast<double>(row[i]);
      g.bias[static_cast<size_t>(co)] += static_cast<Real>(acc);
    }

    // dKernels += go * cols^T
    cols.resize(static_cast<size_t>(ckk * ncols));
    im2col(input.ptr(), d, stride, pad, n0, nn, cols.data());
    ConstMatMap<Real> cmat(cols.data(), ckk, ncols);
    dk.noalias() += go * cmat.transpose();

    // dInput: cols_grad = kernels^T * go, then scatter.
    col_grad.resize(static_cast<size_t>(ckk * ncols));
    MatMap<Real> cg(col_grad.data(), ckk, ncols);
    ConstMatMap<Real> kmat(kernels.ptr(), d.cout, ckk);
    cg.noalias() = kmat.transpose() * go;
    col2im_add(col_grad.data(), d, stride, pad, n0, nn, g.input.ptr());
  }
  return g;
}

// ---------------------------------------------------------------------------
// depthwise conv2d
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> depthwise_conv2d_forward(const TensorT<Real>& input,
                                       const TensorT<Real>& kernels,
                                       const TensorT<Real>& bias, Stride stride,
                                       Pad pad) {
  require_rank(input, 4, "depthwise input");
  require_rank(kernels, 4, "depthwise kernels");
  require_rank(bias, 1, "depthwise bias");
  if (kernels.dim(0) != input.dim(1))
    throw DimensionError("depthwise: kernel count != input channels");
  const int64_t mult = kernels.dim(1);
  const ConvDims d = check_conv_args(input.shape, kernels.shape, mult,
                                     bias.numel(), input.dim(1) * mult, stride,
                                     pad);
  // check_conv_args validated kH/kW against the padded input; channel logic
  // here is per input channel with its own multiplier bank.
  TensorT<Real> out({d.n, d.cout, d.oh, d.ow});
  const int64_t plane = d.oh * d.ow;
  const int64_t khw = d.kh * d.kw;
  auto& cols = scratch_cols<Real>();
  cols.resize(static_cast<size_t>(khw * plane));

  ConvDims dc = d;  // single-channel view for im2col
  dc.cin = 1;

  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t c = 0; c < d.cin; ++c) {
      const Real* img = input.ptr() + (n * d.cin + c) * d.h * d.w;
      im2col(img, dc, stride, pad, 0, 1, cols.data());
      ConstMatMap<Real> kmat(kernels.ptr() + c * mult * khw, mult, khw);
      ConstMatMap<Real> cmat(cols.data(), khw, plane);
      Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
          prod = kmat * cmat;
      for (int64_t m = 0; m < mult; ++m) {
        const Real b = bias[static_cast<size_t>(c * mult + m)];
        Real* dst = out.ptr() + ((n * d.cout + c * mult + m) * plane);
        const Real* src = prod.data() + m * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] + b;
      }
    }
  }
  return out;
}

template <class Real>
Conv2dGrads<Real> depthwise_conv2d_backward(const TensorT<Real>& input,
                                            const TensorT<Real>& kernels,
                                            Stride stride, Pad pad,
                                            const TensorT<Real>& grad_out) {
  require_rank(input, 4, "depthwise input");
  require_rank(kernels, 4, "depthwise kernels");
  require_rank(grad_out, 4, "depthwise grad_out");
  if (kernels.dim(0) != input.dim(1))
    throw DimensionError("depthwise: kernel count != input channels");
  const int64_t mult = kernels.dim(1);
  const ConvDims d = check_conv_args(input.shape, kernels.shape, mult,
                                     input.dim(1) * mult, input.dim(1) * mult,
                                     stride, pad);
  if (grad_out.dim(0) != d.n || grad_out.dim(1) != d.cout ||
      grad_out.dim(2) != d.oh || grad_out.dim(3) != d.ow)
    throw DimensionError("depthwise: grad_out shape mismatch");

  Conv2dGrads<Real> g{TensorT<Real>(input.shape), TensorT<Real>(kernels.shape),
                      TensorT<Real>({d.cout})};
  const int64_t plane = d.oh * d.ow;
  const int64_t khw = d.kh * d.kw;
  auto& cols = scratch_cols<Real>();
  cols.resize(static_cast<size_t>(khw * plane));
  std::vector<Real> col_grad(static_cast<size_t>(khw * plane));

  ConvDims dc = d;
  dc.cin = 1;

  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t c = 0; c < d.cin; ++c) {
      const Real* img = input.ptr() + (n * d.cin + c) * d.h * d.w;
      im2col(img, dc, stride, pad, 0, 1, cols.data());
      ConstMatMap<Real> cmat(cols.data(), khw, plane);
      ConstMatMap<Real> go(grad_out.ptr() + ((n * d.cout + c * mult) * plane),
                           mult, plane);

      MatMap<Real> dk(g.kernels.ptr() + c * mult * khw, mult, khw);
      dk.noalias() += go * cmat.transpose();

      for (int64_t m = 0; m < mult; ++m) {
        double acc = 0;
        const Real* row = grad_out.ptr() + ((n * d.cout + c * mult + m) * plane);
        for (int64_t i = 0; i < plane; ++i) acc += static_cast<double>(row[i]);
        g.bias[static_cast<size_t>(c * mult + m)] += static_cast<Real>(acc);
      }

      ConstMatMap<Real> kmat(kernels.ptr() + c * mult * khw, mult, khw);
      MatMap<Real> cg(col_grad.data(), khw, plane);
      cg.noalias() = kmat.transpose() * go;
      col2im_add(col_grad.data(), dc, stride, pad, 0, 1,
                 g.input.ptr() + (n * d.cin + c) * d.h * d.w);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// batchnorm
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> batchnorm_forward(const TensorT<Real>& input,
                                const TensorT<Real>& gamma,
                                const TensorT<Real>& beta,
                                BnRunningStats<Real>& running, BnMode mode,
                                Real eps, Real momentum, bool update_running,
                                BnCache<Real>* cache) {
  require_rank(input, 4, "batchnorm input");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                w = input.dim(3);
  if (gamma.numel() != c || beta.numel() != c)
    throw DimensionError("batchnorm: gamma/beta length != channel count");
  const int64_t plane = h * w;
  const int64_t count = n * plane;

  TensorT<Real> out(input.shape);
  if (cache) {
    cache->xhat = TensorT<Real>(input.shape);
    cache->inv_std.assign(static_cast<size_t>(c), Real(0));
    cache->per_channel_count = count;
  }

  if (mode == BnMode::kEval) {
    if (!running.initialized)
      throw StateError(
          "batchnorm: eval mode requires running statistics from a prior "
          "train-mode call");
    for (int64_t ch = 0; ch < c; ++ch) {
      const Real mu = running.mean[static_cast<size_t>(ch)];
      const Real inv =
          Real(1) / std::sqrt(running.var[static_cast<size_t>(ch)] + eps);
      const Real gm = gamma[static_cast<size_t>(ch)] * inv;
      const Real bt = beta[static_cast<size_t>(ch)];
      for (int64_t i = 0; i < n; ++i) {
        const Real* src = input.ptr() + (i * c + ch) * plane;
        Real* dst = out.ptr() + (i * c + ch) * plane;
        for (int64_t k = 0; k < plane; ++k) dst[k] = gm * (src[k] - mu) + bt;
      }
    }
    return out;
  }

  if (running.mean.numel() != c) {
    running.mean = TensorT<Real>({c});
    running.var = TensorT<Real>::full({c}, Real(1));
  }

  for (int64_t ch = 0; ch < c; ++ch) {
    double sum = 0, sumsq = 0;
    for (int64_t i = 0; i < n; ++i) {
      const Real* src = input.ptr() + (i * c + ch) * plane;
      for (int64_t k = 0; k < plane; ++k) {
        const double v = static_cast<double>(src[k]);
        sum += v;
        sumsq += v * v;
      }
    }
    const double mu = sum / static_cast<double>(count);
    const double var =
        std::max(0.0, sumsq / static_cast<double>(count) - mu * mu);
    const Real inv = static_cast<Real>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    if (cache) cache->inv_std[static_cast<size_t>(ch)] = inv;

    const Real gm = gamma[static_cast<size_t>(ch)];
    const Real bt = beta[static_cast<size_t>(ch)];
    const Real mean_r = static_cast<Real>(mu);
    for (int64_t i = 0; i < n; ++i) {
      const Real* src = input.ptr() + (i * c + ch) * plane;
      Real* dst = out.ptr() + (i * c + ch) * plane;
      Real* xh = cache ? cache->xhat.ptr() + (i * c + ch) * plane : nullptr;
      for (int64_t k = 0; k < plane; ++k) {
        const Real norm = (src[k] - mean_r) * inv;
        if (xh) xh[k] = norm;
        dst[k] = gm * norm + bt;
      }
    }

    if (update_running) {
      running.mean[static_cast<size_t>(ch)] =
          momentum * running.mean[static_cast<size_t>(ch)] +
          (Real(1) - momentum) * static_cast<Real>(mu);
      running.var[static_cast<size_t>(ch)] =
          momentum * running.var[static_cast<size_t>(ch)] +
          (Real(1) - momentum) * static_cast<Real>(var);
    }
  }
  if (update_running) running.initialized = true;
  return out;
}

template <class Real>
BnGrads<Real> batchnorm_backward(const BnCache<Real>& cache,
                                 const TensorT<Real>& gamma,
                                 const TensorT<Real>& grad_out) {
  const auto& xhat = cache.xhat;
  if (!xhat.same_shape(grad_out))
    throw DimensionError("batchnorm backward: grad shape mismatch");
  const int64_t n = xhat.dim(0), c = xhat.dim(1), plane = xhat.dim(2) * xhat.dim(3);
  const double m = static_cast<double>(cache.per_channel_count);

  BnGrads<Real> g{TensorT<Real>(xhat.shape), TensorT<Real>({c}),
                  TensorT<Real>({c})};
  for (int64_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0, sum_dy_xhat = 0;
    for (int64_t i = 0; i < n; ++i) {
      const Real* dy = grad_out.ptr() + (i * c + ch) * plane;
      const Real* xh = xhat.ptr() + (i * c + ch) * plane;
      for (int64_t k = 0; k < plane; ++k) {
        sum_dy += static_cast<double>(dy[k]);
        sum_dy_xhat += static_cast<double>(dy[k]) * static_cast<double>(xh[k]);
      }
    }
    g.beta[static_cast<size_t>(ch)] = static_cast<Real>(sum_dy);
    g.gamma[static_cast<size_t>(ch)] = static_cast<Real>(sum_dy_xhat);

    const double gm = static_cast<double>(gamma[static_cast<size_t>(ch)]);
    const double inv = static_cast<double>(cache.inv_std[static_cast<size_t>(ch)]);
    const double k1 = gm * inv;
    const double mean_dy = sum_dy / m;
    const double mean_dy_xhat = sum_dy_xhat / m;
    for (int64_t i = 0; i < n; ++i) {
      const Real* dy = grad_out.ptr() + (i * c + ch) * plane;
      const Real* xh = xhat.ptr() + (i * c + ch) * plane;
      Real* dx = g.input.ptr() + (i * c + ch) * plane;
      for (int64_t k = 0; k < plane; ++k) {
        dx[k] = static_cast<Real>(
            k1 * (static_cast<double>(dy[k]) - mean_dy -
                  static_cast<double>(xh[k]) * mean_dy_xhat));
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> relu_forward(const TensorT<Real>& input) {
  TensorT<Real> out(input.shape);
  for (size_t i = 0; i < input.data.size(); ++i)
    out.data[i] = input.data[i] > Real(0) ? input.data[i] : Real(0);
  return out;
}

template <class Real>
TensorT<Real> relu_backward(const TensorT<Real>& input,
                            const TensorT<Real>& grad_out) {
  if (!input.same_shape(grad_out))
    throw DimensionError("relu backward: grad shape mismatch");
  TensorT<Real> g(input.shape);
  for (size_t i = 0; i < input.data.size(); ++i)
    g.data[i] = input.data[i] > Real(0) ? grad_out.data[i] : Real(0);
  return g;
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> linear_forward(const TensorT<Real>& input,
                             const TensorT<Real>& weight,
                             const TensorT<Real>& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  require_rank(bias, 1, "linear bias");
  const int64_t n = input.dim(0), d = input.dim(1), k = weight.dim(0);
  if (weight.dim(1) != d)
    throw DimensionError("linear: weight columns != input features");
  if (bias.numel() != k)
    throw DimensionError("linear: bias length != output features");

  TensorT<Real> out({n, k});
  ConstMatMap<Real> x(input.ptr(), n, d);
  ConstMatMap<Real> w(weight.ptr(), k, d);
  MatMap<Real> y(out.ptr(), n, k);
  y.noalias() = x * w.transpose();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < k; ++j)
      out.ptr()[i * k + j] += bias[static_cast<size_t>(j)];
  return out;
}

template <class Real>
LinearGrads<Real> linear_backward(const TensorT<Real>& input,
                                  const TensorT<Real>& weight,
                                  const TensorT<Real>& grad_out) {
  require_rank(grad_out, 2, "linear grad_out");
  const int64_t n = input.dim(0), d = input.dim(1), k = weight.dim(0);
  if (grad_out.dim(0) != n || grad_out.dim(1) != k)
    throw DimensionError("linear backward: grad shape mismatch");

  LinearGrads<Real> g{TensorT<Real>({n, d}), TensorT<Real>({k, d}),
                      TensorT<Real>({k})};
  ConstMatMap<Real> x(input.ptr(), n, d);
  ConstMatMap<Real> w(weight.ptr(), k, d);
  ConstMatMap<Real> dy(grad_out.ptr(), n, k);
  MatMap<Real> dx(g.input.ptr(), n, d);
  MatMap<Real> dw(g.weight.ptr(), k, d);
  dx.noalias() = dy * w;
  dw.noalias() = dy.transpose() * x;
  for (int64_t j = 0; j < k; ++j) {
    double acc = 0;
    for (int64_t i = 0; i < n; ++i)
      acc += static_cast<double>(grad_out.ptr()[i * k + j]);
    g.bias[static_cast<size_t>(j)] = static_cast<Real>(acc);
  }
  return g;
}

// ---------------------------------------------------------------------------
// softmax cross-entropy
// ---------------------------------------------------------------------------

template <class Real>
SoftmaxCeResult<Real> softmax_cross_entropy(const TensorT<Real>& logits,
                                            std::span<const int> labels) {
  require_rank(logits, 2, "softmax logits");
  const int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw DimensionError("softmax: label count != batch size");

  SoftmaxCeResult<Real> r;
  r.probs = TensorT<Real>({n, k});
  double total = 0;
  for (int64_t i = 0; i < n; ++i) {
    const int label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= k)
      throw ArgumentError("softmax: label out of range [0, K)");
    const Real* z = logits.ptr() + i * k;
    Real* p = r.probs.ptr() + i * k;
    Real zmax = z[0];
    for (int64_t j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
    double denom = 0;
    for (int64_t j = 0; j < k; ++j) {
      const double e = std::exp(static_cast<double>(z[j] - zmax));
      p[j] = static_cast<Real>(e);
      denom += e;
    }
    const double inv = 1.0 / denom;
    for (int64_t j = 0; j < k; ++j) p[j] = static_cast<Real>(p[j] * inv);
    total += std::log(denom) - static_cast<double>(z[label] - zmax);
  }
  r.loss = total / static_cast<double>(n);
  if (!std::isfinite(r.loss))
    throw DivergenceError("softmax cross-entropy produced non-finite loss");
  return r;
}

template <class Real>
TensorT<Real> softmax_cross_entropy_backward(const TensorT<Real>& probs,
                                             std::span<const int> labels) {
  require_rank(probs, 2, "softmax probs");
  const int64_t n = probs.dim(0), k = probs.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw DimensionError("softmax backward: label count != batch size");
  TensorT<Real> g({n, k});
  const Real invn = Real(1) / static_cast<Real>(n);
  for (int64_t i = 0; i < n; ++i) {
    const int label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= k)
      throw ArgumentError("softmax backward: label out of range");
    const Real* p = probs.ptr() + i * k;
    Real* gp = g.ptr() + i * k;
    for (int64_t j = 0; j < k; ++j) gp[j] = p[j] * invn;
    gp[label] -= invn;
  }
  return g;
}

// ---------------------------------------------------------------------------
// adam
// ---------------------------------------------------------------------------

template <class Real>
void adam_step(std::span<TensorT<Real>* const> params,
               std::span<const TensorT<Real>* const> grads,
               AdamStateT<Real>& state, const AdamHyper& hp) {
  if (params.size() != grads.size())
    throw DimensionError("adam: parameter/gradient list size mismatch");
  if (state.m.size() != params.size()) {
    // Lazily size the accumulators on first use.
    if (!state.m.empty())
      throw DimensionError("adam: state tracks a different parameter list");
    state.init(params);
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) ||
        !params[i]->same_shape(state.m[i]))
      throw DimensionError("adam: shape mismatch at parameter " +
                           std::to_string(i));
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  const Real b1 = static_cast<Real>(hp.beta1);
  const Real b2 = static_cast<Real>(hp.beta2);
  const Real one_m_b1 = static_cast<Real>(1.0 - hp.beta1);
  const Real one_m_b2 = static_cast<Real>(1.0 - hp.beta2);
  const Real inv_bc1 = static_cast<Real>(1.0 / bc1);
  const Real inv_bc2 = static_cast<Real>(1.0 / bc2);
  const Real lr = static_cast<Real>(hp.lr);
  const Real eps = static_cast<Real>(hp.eps);

  for (size_t i = 0; i < params.size(); ++i) {
    Real* p = params[i]->ptr();
    const Real* g = grads[i]->ptr();
    Real* m = state.m[i].ptr();
    Real* v = state.v[i].ptr();
    const size_t count = params[i]->data.size();
    for (size_t j = 0; j < count; ++j) {
      m[j] = b1 * m[j] + one_m_b1 * g[j];
      v[j] = b2 * v[j] + one_m_b2 * g[j] * g[j];
      const Real mhat = m[j] * inv_bc1;
      const Real vhat = v[j] * inv_bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// explicit instantiations
// ---------------------------------------------------------------------------

#define AINV_INSTANTIATE_OPS(Real)                                            \
  template TensorT<Real> conv2d_forward<Real>(                                \
      const TensorT<Real>&, const TensorT<Real>&, const TensorT<Real>&,       \
      Stride, Pad);                                                           \
  template Conv2dGrads<Real> conv2d_backward<Real>(                           \
      const TensorT<Real>&, const TensorT<Real>&, Stride, Pad,                \
      const TensorT<Real>&);                                                  \
  template TensorT<Real> depthwise_conv2d_forward<Real>(                      \
      const TensorT<Real>&, const TensorT<Real>&, const TensorT<Real>&,       \
      Stride, Pad);                                                           \
  template Conv2dGrads<Real> depthwise_conv2d_backward<Real>(                 \
      const TensorT<Real>&, const TensorT<Real>&, Stride, Pad,                \
      const TensorT<Real>&);                                                  \
  template TensorT<Real> batchnorm_forward<Real>(                             \
      const TensorT<Real>&, const TensorT<Real>&, const TensorT<Real>&,       \
      BnRunningStats<Real>&, BnMode, Real, Real, bool, BnCache<Real>*);       \
  template BnGrads<Real> batchnorm_backward<Real>(                            \
      const BnCache<Real>&, const TensorT<Real>&, const TensorT<Real>&);      \
  template TensorT<Real> relu_forward<Real>(const TensorT<Real>&);            \
  template TensorT<Real> relu_backward<Real>(const TensorT<Real>&,            \
                                             const TensorT<Real>&);           \
  template TensorT<Real> linear_forward<Real>(                                \
      const TensorT<Real>&, const TensorT<Real>&, const TensorT<Real>&);      \
  template LinearGrads<Real> linear_backward<Real>(                           \
      const TensorT<Real>&, const TensorT<Real>&, const TensorT<Real>&);      \
  template SoftmaxCeResult<Real> softmax_cross_entropy<Real>(                 \
      const TensorT<Real>&, std::span<const int>);                            \
  template TensorT<Real> softmax_cross_entropy_backward<Real>(                \
      const TensorT<Real>&, std::span<const int>);                            \
  template void adam_step<Real>(std::span<TensorT<Real>* const>,              \
                                std::span<const TensorT<Real>* const>,        \
                                AdamStateT<Real>&, const AdamHyper&);

AINV_INSTANTIATE_OPS(float)
AINV_INSTANTIATE_OPS(double)

#undef AINV_INSTANTIATE_OPS

}  // namespace ainv
