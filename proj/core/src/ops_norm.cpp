#include <cmath>
#include <vector>

#include "mcanet/autograd.hpp"
#include "mcanet/common.hpp"
#include "mcanet/ops.hpp"

namespace mcanet::ops {

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  MCANET_CHECK(x.dim() == 4, "global_avg_pool: expected [B,C,H,W], got ", shape_str(x.shape()));
  const int64_t batch = x.extent(0), chans = x.extent(1);
  const int64_t plane = x.extent(2) * x.extent(3);
  Tensor<T> y({batch, chans});
  const T* xd = x.data().data();
  T* yd = y.mutable_data().data();
  const T inv = static_cast<T>(1.0 / static_cast<double>(plane));
  for (int64_t i = 0; i < batch * chans; ++i) {
    T acc = 0;
    const T* src = xd + i * plane;
    for (int64_t s = 0; s < plane; ++s) acc += src[s];
    yd[i] = acc * inv;
  }

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x})) {
    tape.record("global_avg_pool", {x}, {y}, [x, y, batch, chans, plane, inv]() mutable {
      auto g = y.grad();
      auto gx = x.grad_buffer();
      for (int64_t i = 0; i < batch * chans; ++i) {
        const T gv = g[static_cast<size_t>(i)] * inv;
        T* dst = gx.data() + i * plane;
        for (int64_t s = 0; s < plane; ++s) dst[s] += gv;
      }
    });
  }
  return y;
}

namespace {

struct NormDims {
  int64_t batch, chans, plane;  // plane = 1 for [B,C]
  int64_t count() const { return batch * plane; }
};

template <typename T>
NormDims norm_dims(const Tensor<T>& x, int64_t state_size, const char* op) {
  MCANET_CHECK(x.dim() == 2 || x.dim() == 4, op, ": expected [B,C] or [B,C,H,W], got ",
               shape_str(x.shape()));
  MCANET_CHECK(x.extent(1) == state_size, op, ": input has ", x.extent(1),
               " channels, state has ", state_size);
  NormDims d;
  d.batch = x.extent(0);
  d.chans = x.extent(1);
  d.plane = x.dim() == 4 ? x.extent(2) * x.extent(3) : 1;
  return d;
}

}  // namespace

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum, double eps) {
  const NormDims d = norm_dims(x, gamma.numel(), "batch_norm");
  MCANET_CHECK(beta.numel() == d.chans && running_mean.numel() == d.chans &&
                   running_var.numel() == d.chans,
               "batch_norm: state size mismatch for ", d.chans, " channels");
  MCANET_CHECK(eps > 0, "batch_norm: eps must be positive");

  const T* xd = x.data().data();
  const int64_t cstride = d.plane;           // elements per (b, c) slice
  const int64_t bstride = d.chans * d.plane; // elements per batch item
  const double m = static_cast<double>(d.count());

  std::vector<T> mean_v(static_cast<size_t>(d.chans)), var_v(static_cast<size_t>(d.chans));
  if (training) {
    for (int64_t c = 0; c < d.chans; ++c) {
      double acc = 0;
      for (int64_t b = 0; b < d.batch; ++b) {
        const T* src = xd + b * bstride + c * cstride;
        for (int64_t s = 0; s < d.plane; ++s) acc += static_cast<double>(src[s]);
      }
      const double mu = acc / m;
      double sq = 0;
      for (int64_t b = 0; b < d.batch; ++b) {
        const T* src = xd + b * bstride + c * cstride;
        for (int64_t s = 0; s < d.plane; ++s) {
          const double dv = static_cast<double>(src[s]) - mu;
          sq += dv * dv;
        }
      }
      mean_v[static_cast<size_t>(c)] = static_cast<T>(mu);
      var_v[static_cast<size_t>(c)] = static_cast<T>(sq / m);  // biased, used to normalize
    }
    // Fold into running statistics (unbiased variance when possible).
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    const double unbias = m > 1 ? m / (m - 1.0) : 1.0;
    for (int64_t c = 0; c < d.chans; ++c) {
      const size_t ci = static_cast<size_t>(c);
      rm[ci] = static_cast<T>((1.0 - momentum) * rm[ci] + momentum * mean_v[ci]);
      rv[ci] = static_cast<T>((1.0 - momentum) * rv[ci] + momentum * var_v[ci] * unbias);
    }
  } else {
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (int64_t c = 0; c < d.chans; ++c) {
      mean_v[static_cast<size_t>(c)] = rm[static_cast<size_t>(c)];
      var_v[static_cast<size_t>(c)] = rv[static_cast<size_t>(c)];
    }
  }

  Tensor<T> y(x.shape());
  T* yd = y.mutable_data().data();
  const T* gd = gamma.data().data();
  const T* bd = beta.data().data();
  std::vector<T> inv_std(static_cast<size_t>(d.chans));
  for (int64_t c = 0; c < d.chans; ++c)
    inv_std[static_cast<size_t>(c)] =
        static_cast<T>(1.0 / std::sqrt(static_cast<double>(var_v[static_cast<size_t>(c)]) + eps));
  for (int64_t b = 0; b < d.batch; ++b) {
    for (int64_t c = 0; c < d.chans; ++c) {
      const size_t ci = static_cast<size_t>(c);
      const T* src = xd + b * bstride + c * cstride;
      T* dst = yd + b * bstride + c * cstride;
      const T a = gd[ci] * inv_std[ci];
      const T o = bd[ci] - mean_v[ci] * a;
      for (int64_t s = 0; s < d.plane; ++s) dst[s] = a * src[s] + o;
    }
  }

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x, &gamma, &beta})) {
    tape.record("batch_norm", {x, gamma, beta}, {y},
                [x, gamma, beta, y, d, bstride, cstride, mean_v, inv_std, training]() mutable {
      auto g = y.grad();
      const T* xd2 = x.data().data();
      const T* gd2 = gamma.data().data();
      const double m2 = static_cast<double>(d.count());
      const bool need_dx = x.requires_grad();
      const bool need_dg = gamma.requires_grad();
      const bool need_db = beta.requires_grad();
      auto gx = need_dx ? x.grad_buffer() : std::span<T>{};
      auto gg = need_dg ? gamma.grad_buffer() : std::span<T>{};
      auto gb = need_db ? beta.grad_buffer() : std::span<T>{};

      for (int64_t c = 0; c < d.chans; ++c) {
        const size_t ci = static_cast<size_t>(c);
        const T mu = mean_v[ci];
        const T istd = inv_std[ci];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int64_t b = 0; b < d.batch; ++b) {
          const T* xp = xd2 + b * bstride + c * cstride;
          const T* gp = g.data() + b * bstride + c * cstride;
          for (int64_t s = 0; s < d.plane; ++s) {
            const double xhat = static_cast<double>((xp[s] - mu) * istd);
            sum_dy += static_cast<double>(gp[s]);
            sum_dy_xhat += static_cast<double>(gp[s]) * xhat;
          }
        }
        if (need_dg) gg[ci] += static_cast<T>(sum_dy_xhat);
        if (need_db) gb[ci] += static_cast<T>(sum_dy);
        if (!need_dx) continue;
        const double gam = static_cast<double>(gd2[ci]);
        if (training) {
          for (int64_t b = 0; b < d.batch; ++b) {
            const T* xp = xd2 + b * bstride + c * cstride;
            const T* gp = g.data() + b * bstride + c * cstride;
            T* dxp = gx.data() + b * bstride + c * cstride;
            for (int64_t s = 0; s < d.plane; ++s) {
              const double xhat = static_cast<double>((xp[s] - mu) * istd);
              const double dxhat = static_cast<double>(gp[s]) * gam;
              dxp[s] += static_cast<T>(istd * (dxhat - (gam * sum_dy + xhat * gam * sum_dy_xhat) / m2));
            }
          }
        } else {
          const T a = static_cast<T>(gam) * istd;
          for (int64_t b = 0; b < d.batch; ++b) {
            const T* gp = g.data() + b * bstride + c * cstride;
            T* dxp = gx.data() + b * bstride + c * cstride;
            for (int64_t s = 0; s < d.plane; ++s) dxp[s] += a * gp[s];
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> channel_shuffle(const std::vector<Tensor<T>>& stats) {
  MCANET_CHECK(!stats.empty(), "channel_shuffle: no inputs");
  const int64_t fn = static_cast<int64_t>(stats.size());
  const int64_t batch = stats[0].extent(0);
  MCANET_CHECK(stats[0].dim() == 2, "channel_shuffle: expected [B,C] inputs, got ",
               shape_str(stats[0].shape()));
  const int64_t chans = stats[0].extent(1);
  for (const auto& s : stats)
    MCANET_CHECK(s.dim() == 2 && s.extent(0) == batch && s.extent(1) == chans,
                 "channel_shuffle: branch shape mismatch ", shape_str(s.shape()), " vs [",
                 batch, ", ", chans, "]");

  const int64_t total = fn * chans;
  Tensor<T> y({batch, total});
  T* yd = y.mutable_data().data();
  for (int64_t r = 0; r < fn; ++r) {
    const T* src = stats[static_cast<size_t>(r)].data().data();
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t j = 0; j < chans; ++j) yd[b * total + j * fn + r] = src[b * chans + j];
  }

  auto& tape = Tape<T>::active();
  bool any = false;
  for (const auto& s : stats)
    if (s.requires_grad()) any = true;
  if (tape.recording() && any) {
    std::vector<Tensor<T>> ins = stats;
    tape.record("channel_shuffle", ins, {y}, [ins, y, fn, batch, chans, total]() mutable {
      auto g = y.grad();
      for (int64_t r = 0; r < fn; ++r) {
        auto& s = ins[static_cast<size_t>(r)];
        if (!s.requires_grad()) continue;
        auto gs = s.grad_buffer();
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t j = 0; j < chans; ++j)
            gs[static_cast<size_t>(b * chans + j)] += g[static_cast<size_t>(b * total + j * fn + r)];
      }
    });
  }
  return y;
}

template <typename T>
std::vector<Tensor<T>> channel_regroup(const Tensor<T>& x, int64_t fn) {
  MCANET_CHECK(x.dim() == 2, "channel_regroup: expected [B,N], got ", shape_str(x.shape()));
  MCANET_CHECK(fn >= 1, "channel_regroup: fn must be >= 1");
  const int64_t batch = x.extent(0);
  const int64_t total = x.extent(1);
  MCANET_CHECK(total % fn == 0, "channel_regroup: length ", total, " not divisible by fn=", fn);
  const int64_t chans = total / fn;

  std::vector<Tensor<T>> outs;
  outs.reserve(static_cast<size_t>(fn));
  const T* xd = x.data().data();
  for (int64_t r = 0; r < fn; ++r) {
    Tensor<T> o({batch, chans});
    T* od = o.mutable_data().data();
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t j = 0; j < chans; ++j) od[b * chans + j] = xd[b * total + j * fn + r];
    outs.push_back(std::move(o));
  }

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x})) {
    std::vector<Tensor<T>> captured = outs;
    tape.record("channel_regroup", {x}, captured, [x, captured, fn, batch, chans, total]() mutable {
      auto gx = x.grad_buffer();
      for (int64_t r = 0; r < fn; ++r) {
        const auto& o = captured[static_cast<size_t>(r)];
        if (!o.has_grad()) continue;
        auto go = o.grad();
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t j = 0; j < chans; ++j)
            gx[static_cast<size_t>(b * total + j * fn + r)] += go[static_cast<size_t>(b * chans + j)];
      }
    });
  }
  return outs;
}

#define MCANET_INSTANTIATE(T)                                                           \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                              \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                   Tensor<T>&, Tensor<T>&, bool, double, double);        \
  template Tensor<T> channel_shuffle<T>(const std::vector<Tensor<T>>&);                 \
  template std::vector<Tensor<T>> channel_regroup<T>(const Tensor<T>&, int64_t);

MCANET_INSTANTIATE(float)
MCANET_INSTANTIATE(double)
#undef MCANET_INSTANTIATE

}  // namespace mcanet::ops
