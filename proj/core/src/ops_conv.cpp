#include <algorithm>
#include <vector>

#include "gemm.hpp"
#include "mcanet/autograd.hpp"
#include "mcanet/common.hpp"
#include "mcanet/ops.hpp"

namespace mcanet {

void Conv2dParams::validate() const {
  MCANET_CHECK(in_channels > 0 && out_channels > 0, "conv2d: channel counts must be positive");
  MCANET_CHECK(kernel >= 1 && stride >= 1 && dilation >= 1 && padding >= 0,
               "conv2d: invalid kernel/stride/dilation/padding");
  MCANET_CHECK(groups >= 1 && in_channels % groups == 0 && out_channels % groups == 0,
               "conv2d: groups=", groups, " must divide in_channels=", in_channels,
               " and out_channels=", out_channels);
}

namespace ops {

namespace {

struct ConvDims {
  int64_t batch, cin, h, w;
  int64_t cout, oh, ow;
  int64_t cg, kg;          // channels per group (in, out)
  int64_t col_rows, cols;  // im2col matrix: [cg*k*k, oh*ow]
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& weight, const Conv2dParams& p) {
  p.validate();
  MCANET_CHECK(x.dim() == 4, "conv2d: expected input [B,Cin,H,W], got ", shape_str(x.shape()));
  MCANET_CHECK(x.extent(1) == p.in_channels, "conv2d: input has ", x.extent(1),
               " channels, params expect ", p.in_channels);
  MCANET_CHECK(weight.dim() == 4 && weight.extent(0) == p.out_channels &&
                   weight.extent(1) == p.in_channels / p.groups &&
                   weight.extent(2) == p.kernel && weight.extent(3) == p.kernel,
               "conv2d: weight shape ", shape_str(weight.shape()), " does not match params [",
               p.out_channels, ", ", p.in_channels / p.groups, ", ", p.kernel, ", ", p.kernel, "]");
  ConvDims d;
  d.batch = x.extent(0);
  d.cin = x.extent(1);
  d.h = x.extent(2);
  d.w = x.extent(3);
  d.cout = p.out_channels;
  d.oh = p.out_extent(d.h);
  d.ow = p.out_extent(d.w);
  MCANET_CHECK(d.oh >= 1 && d.ow >= 1, "conv2d: non-positive output extent ", d.oh, "x", d.ow,
               " for input ", d.h, "x", d.w, " (kernel=", p.kernel, " stride=", p.stride,
               " dilation=", p.dilation, " padding=", p.padding, ")");
  d.cg = d.cin / p.groups;
  d.kg = d.cout / p.groups;
  d.col_rows = d.cg * p.kernel * p.kernel;
  d.cols = d.oh * d.ow;
  return d;
}

// Gathers the receptive-field columns for one (batch, group) slice.
template <typename T>
void im2col(const T* x, const ConvDims& d, const Conv2dParams& p, T* col) {
  const int64_t k = p.kernel;
  for (int64_t c = 0; c < d.cg; ++c) {
    const T* chan = x + c * d.h * d.w;
    for (int64_t ki = 0; ki < k; ++ki) {
      for (int64_t kj = 0; kj < k; ++kj) {
        T* row = col + ((c * k + ki) * k + kj) * d.cols;
        for (int64_t oh = 0; oh < d.oh; ++oh) {
          const int64_t ih = oh * p.stride - p.padding + ki * p.dilation;
          T* out = row + oh * d.ow;
          if (ih < 0 || ih >= d.h) {
            std::fill(out, out + d.ow, T(0));
            continue;
          }
          const T* src = chan + ih * d.w;
          for (int64_t ow = 0; ow < d.ow; ++ow) {
            const int64_t iw = ow * p.stride - p.padding + kj * p.dilation;
            out[ow] = (iw >= 0 && iw < d.w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add of a column gradient back onto the input slice.
template <typename T>
void col2im_add(const T* col, const ConvDims& d, const Conv2dParams& p, T* dx) {
  const int64_t k = p.kernel;
  for (int64_t c = 0; c < d.cg; ++c) {
    T* chan = dx + c * d.h * d.w;
    for (int64_t ki = 0; ki < k; ++ki) {
      for (int64_t kj = 0; kj < k; ++kj) {
        const T* row = col + ((c * k + ki) * k + kj) * d.cols;
        for (int64_t oh = 0; oh < d.oh; ++oh) {
          const int64_t ih = oh * p.stride - p.padding + ki * p.dilation;
          if (ih < 0 || ih >= d.h) continue;
          const T* src = row + oh * d.ow;
          T* dst = chan + ih * d.w;
          for (int64_t ow = 0; ow < d.ow; ++ow) {
            const int64_t iw = ow * p.stride - p.padding + kj * p.dilation;
            if (iw >= 0 && iw < d.w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

inline bool is_pointwise(const Conv2dParams& p) {
  return p.kernel == 1 && p.stride == 1 && p.padding == 0 && p.dilation == 1;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Conv2dParams& p) {
  const ConvDims d = conv_dims(x, weight, p);
  Tensor<T> y({d.batch, d.cout, d.oh, d.ow});

  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  T* yd = y.mutable_data().data();
  const bool pointwise = is_pointwise(p);
  std::vector<T> col;
  if (!pointwise) col.resize(static_cast<size_t>(d.col_rows * d.cols));

  for (int64_t b = 0; b < d.batch; ++b) {
    for (int64_t g = 0; g < p.groups; ++g) {
      const T* xg = xd + (b * d.cin + g * d.cg) * d.h * d.w;
      const T* cols_ptr;
      if (pointwise) {
        cols_ptr = xg;  // [cg, H*W] block is already the column matrix
      } else {
        im2col(xg, d, p, col.data());
        cols_ptr = col.data();
      }
      detail::gemm(false, false, d.kg, d.cols, d.col_rows, T(1), wd + g * d.kg * d.col_rows,
                   d.col_rows, cols_ptr, d.cols, T(0), yd + (b * d.cout + g * d.kg) * d.cols,
                   d.cols);
    }
  }

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x, &weight})) {
    // im2col is recomputed during the backward sweep instead of being saved;
    // at batch 64 the column buffers would dominate peak memory.
    tape.record("conv2d", {x, weight}, {y}, [x, weight, y, p, d]() mutable {
      const T* g = y.grad().data();
      const T* xd2 = x.data().data();
      const T* wd2 = weight.data().data();
      const bool pw = is_pointwise(p);
      const bool need_dx = x.requires_grad();
      const bool need_dw = weight.requires_grad();
      std::vector<T> col2, dcol;
      if (!pw) {
        if (need_dw) col2.resize(static_cast<size_t>(d.col_rows * d.cols));
        if (need_dx) dcol.resize(static_cast<size_t>(d.col_rows * d.cols));
      }
      T* gx = need_dx ? x.grad_buffer().data() : nullptr;
      T* gw = need_dw ? weight.grad_buffer().data() : nullptr;

      for (int64_t b = 0; b < d.batch; ++b) {
        for (int64_t grp = 0; grp < p.groups; ++grp) {
          const T* gy = g + (b * d.cout + grp * d.kg) * d.cols;
          const T* xg = xd2 + (b * d.cin + grp * d.cg) * d.h * d.w;
          if (need_dw) {
            const T* cols_ptr = pw ? xg : (im2col(xg, d, p, col2.data()), col2.data());
            detail::gemm(false, true, d.kg, d.col_rows, d.cols, T(1), gy, d.cols, cols_ptr,
                         d.cols, T(1), gw + grp * d.kg * d.col_rows, d.col_rows);
          }
          if (need_dx) {
            T* dxg = gx + (b * d.cin + grp * d.cg) * d.h * d.w;
            if (pw) {
              detail::gemm(true, false, d.col_rows, d.cols, d.kg, T(1),
                           wd2 + grp * d.kg * d.col_rows, d.col_rows, gy, d.cols, T(1), dxg,
                           d.cols);
            } else {
              detail::gemm(true, false, d.col_rows, d.cols, d.kg, T(1),
                           wd2 + grp * d.kg * d.col_rows, d.col_rows, gy, d.cols, T(0),
                           dcol.data(), d.cols);
              col2im_add(dcol.data(), d, p, dxg);
            }
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> conv1d_circular(const Tensor<T>& x, const Tensor<T>& h) {
  MCANET_CHECK(x.dim() == 1 || x.dim() == 2, "conv1d_circular: expected [N] or [B,N], got ",
               shape_str(x.shape()));
  MCANET_CHECK(h.dim() == 1, "conv1d_circular: kernel must be 1-D, got ", shape_str(h.shape()));
  const int64_t batch = x.dim() == 2 ? x.extent(0) : 1;
  const int64_t n = x.extent(x.dim() - 1);
  const int64_t k = h.extent(0);
  MCANET_CHECK(k <= n, "conv1d_circular: kernel size ", k, " exceeds signal length ", n);

  Tensor<T> y(x.shape());
  const T* xd = x.data().data();
  const T* hd = h.data().data();
  T* yd = y.mutable_data().data();
  for (int64_t b = 0; b < batch; ++b) {
    const T* row = xd + b * n;
    T* out = yd + b * n;
    for (int64_t i = 0; i < n; ++i) {
      T acc = 0;
      for (int64_t j = 0; j < k; ++j) {
        int64_t idx = i - j;
        if (idx < 0) idx += n;
        acc += hd[j] * row[idx];
      }
      out[i] = acc;
    }
  }

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x, &h})) {
    tape.record("conv1d_circular", {x, h}, {y}, [x, h, y, batch, n, k]() mutable {
      auto g = y.grad();
      const T* xd2 = x.data().data();
      const T* hd2 = h.data().data();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < k; ++j) {
              int64_t idx = i - j;
              if (idx < 0) idx += n;
              gx[static_cast<size_t>(b * n + idx)] += g[static_cast<size_t>(b * n + i)] * hd2[j];
            }
      }
      if (h.requires_grad()) {
        auto gh = h.grad_buffer();
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < k; ++j) {
              int64_t idx = i - j;
              if (idx < 0) idx += n;
              gh[static_cast<size_t>(j)] += g[static_cast<size_t>(b * n + i)] * xd2[b * n + idx];
            }
      }
    });
  }
  return y;
}

#define MCANET_INSTANTIATE(T)                                                               \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Conv2dParams&);    \
  template Tensor<T> conv1d_circular<T>(const Tensor<T>&, const Tensor<T>&);

MCANET_INSTANTIATE(float)
MCANET_INSTANTIATE(double)
#undef MCANET_INSTANTIATE

}  // namespace ops
}  // namespace mcanet
