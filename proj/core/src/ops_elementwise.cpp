#include <cmath>

#include "gemm.hpp"
#include "mcanet/autograd.hpp"
#include "mcanet/common.hpp"
#include "mcanet/ops.hpp"

namespace mcanet::ops {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  MCANET_CHECK(same_shape(a.shape(), b.shape()), "add: shape mismatch ",
               shape_str(a.shape()), " vs ", shape_str(b.shape()));
  Tensor<T> y(a.shape());
  auto ad = a.data();
  auto bd = b.data();
  auto yd = y.mutable_data();
  for (size_t i = 0; i < yd.size(); ++i) yd[i] = ad[i] + bd[i];

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&a, &b})) {
    tape.record("add", {a, b}, {y}, [a, b, y]() mutable {
      auto g = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  MCANET_CHECK(same_shape(a.shape(), b.shape()), "mul: shape mismatch ",
               shape_str(a.shape()), " vs ", shape_str(b.shape()));
  Tensor<T> y(a.shape());
  auto ad = a.data();
  auto bd = b.data();
  auto yd = y.mutable_data();
  for (size_t i = 0; i < yd.size(); ++i) yd[i] = ad[i] * bd[i];

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&a, &b})) {
    tape.record("mul", {a, b}, {y}, [a, b, y]() mutable {
      auto g = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        auto bv = b.data();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        auto av = a.data();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s) {
  Tensor<T> y(a.shape());
  auto ad = a.data();
  auto yd = y.mutable_data();
  const T sv = static_cast<T>(s);
  for (size_t i = 0; i < yd.size(); ++i) yd[i] = sv * ad[i];

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&a})) {
    tape.record("scale", {a}, {y}, [a, y, sv]() mutable {
      auto g = y.grad();
      auto ga = a.grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += sv * g[i];
    });
  }
  return y;
}

namespace {

template <typename T>
void check_channelwise(const Tensor<T>& x, const Tensor<T>& v, const char* op) {
  MCANET_CHECK(x.dim() == 4 && v.dim() == 2, op, ": expected x [B,C,H,W] and v [B,C], got ",
               shape_str(x.shape()), " and ", shape_str(v.shape()));
  MCANET_CHECK(x.extent(0) == v.extent(0) && x.extent(1) == v.extent(1), op,
               ": batch/channel mismatch ", shape_str(x.shape()), " vs ", shape_str(v.shape()));
}

}  // namespace

template <typename T>
Tensor<T> add_channelwise(const Tensor<T>& x, const Tensor<T>& v) {
  check_channelwise(x, v, "add_channelwise");
  const int64_t bc = x.extent(0) * x.extent(1);
  const int64_t plane = x.extent(2) * x.extent(3);
  Tensor<T> y(x.shape());
  auto xd = x.data();
  auto vd = v.data();
  auto yd = y.mutable_data();
  for (int64_t i = 0; i < bc; ++i) {
    const T a = vd[static_cast<size_t>(i)];
    for (int64_t s = 0; s < plane; ++s)
      yd[static_cast<size_t>(i * plane + s)] = xd[static_cast<size_t>(i * plane + s)] + a;
  }

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x, &v})) {
    tape.record("add_channelwise", {x, v}, {y}, [x, v, y, bc, plane]() mutable {
      auto g = y.grad();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (v.requires_grad()) {
        auto gv = v.grad_buffer();
        for (int64_t i = 0; i < bc; ++i) {
          T acc = 0;
          for (int64_t s = 0; s < plane; ++s) acc += g[static_cast<size_t>(i * plane + s)];
          gv[static_cast<size_t>(i)] += acc;
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul_channelwise(const Tensor<T>& x, const Tensor<T>& v) {
  check_channelwise(x, v, "mul_channelwise");
  const int64_t bc = x.extent(0) * x.extent(1);
  const int64_t plane = x.extent(2) * x.extent(3);
  Tensor<T> y(x.shape());
  auto xd = x.data();
  auto vd = v.data();
  auto yd = y.mutable_data();
  for (int64_t i = 0; i < bc; ++i) {
    const T a = vd[static_cast<size_t>(i)];
    for (int64_t s = 0; s < plane; ++s)
      yd[static_cast<size_t>(i * plane + s)] = xd[static_cast<size_t>(i * plane + s)] * a;
  }

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x, &v})) {
    tape.record("mul_channelwise", {x, v}, {y}, [x, v, y, bc, plane]() mutable {
      auto g = y.grad();
      auto xd2 = x.data();
      auto vd2 = v.data();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (int64_t i = 0; i < bc; ++i) {
          const T a = vd2[static_cast<size_t>(i)];
          for (int64_t s = 0; s < plane; ++s)
            gx[static_cast<size_t>(i * plane + s)] += g[static_cast<size_t>(i * plane + s)] * a;
        }
      }
      if (v.requires_grad()) {
        auto gv = v.grad_buffer();
        for (int64_t i = 0; i < bc; ++i) {
          T acc = 0;
          for (int64_t s = 0; s < plane; ++s)
            acc += g[static_cast<size_t>(i * plane + s)] * xd2[static_cast<size_t>(i * plane + s)];
          gv[static_cast<size_t>(i)] += acc;
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  Tensor<T> y = Tensor<T>::scalar(acc);
  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&a})) {
    tape.record("sum", {a}, {y}, [a, y]() mutable {
      const T g = y.grad()[0];
      auto ga = a.grad_buffer();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  const T inv = static_cast<T>(1.0 / static_cast<double>(a.numel()));
  Tensor<T> y = Tensor<T>::scalar(acc * inv);
  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&a})) {
    tape.record("mean", {a}, {y}, [a, y, inv]() mutable {
      const T g = y.grad()[0] * inv;
      auto ga = a.grad_buffer();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  auto xd = x.data();
  auto yd = y.mutable_data();
  for (size_t i = 0; i < yd.size(); ++i) yd[i] = xd[i] > T(0) ? xd[i] : T(0);

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x})) {
    tape.record("relu", {x}, {y}, [x, y]() mutable {
      auto g = y.grad();
      auto yv = y.data();
      auto gx = x.grad_buffer();
      for (size_t i = 0; i < g.size(); ++i)
        if (yv[i] > T(0)) gx[i] += g[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu_inplace(Tensor<T>& x) {
  auto xd = x.mutable_data();
  for (size_t i = 0; i < xd.size(); ++i)
    if (xd[i] < T(0)) xd[i] = T(0);
  Tensor<T> y = x;  // same storage, rectified

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x})) {
    // Input and output share a gradient buffer; masking in place turns
    // d(loss)/d(output) into d(loss)/d(input).
    tape.record("relu_inplace", {x}, {y}, [y]() mutable {
      auto g = y.grad_buffer();
      auto yv = y.data();
      for (size_t i = 0; i < g.size(); ++i)
        if (!(yv[i] > T(0))) g[i] = T(0);
    });
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  auto xd = x.data();
  auto yd = y.mutable_data();
  for (size_t i = 0; i < yd.size(); ++i) {
    const double v = static_cast<double>(xd[i]);
    yd[i] = static_cast<T>(1.0 / (1.0 + std::exp(-v)));
  }

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x})) {
    tape.record("sigmoid", {x}, {y}, [x, y]() mutable {
      auto g = y.grad();
      auto yv = y.data();
      auto gx = x.grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (T(1) - yv[i]);
    });
  }
  return y;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  MCANET_CHECK(x.dim() == 2, "linear: expected x [B,I], got ", shape_str(x.shape()));
  MCANET_CHECK(weight.dim() == 2 && weight.extent(1) == x.extent(1),
               "linear: weight ", shape_str(weight.shape()), " does not match x ",
               shape_str(x.shape()));
  const int64_t batch = x.extent(0);
  const int64_t in = x.extent(1);
  const int64_t out = weight.extent(0);
  MCANET_CHECK(bias.numel() == out, "linear: bias length ", bias.numel(), " != ", out);

  Tensor<T> y({batch, out});
  detail::gemm(false, true, batch, out, in, T(1), x.data().data(), in, weight.data().data(), in,
               T(0), y.mutable_data().data(), out);
  {
    auto yd = y.mutable_data();
    auto bd = bias.data();
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t o = 0; o < out; ++o) yd[static_cast<size_t>(b * out + o)] += bd[static_cast<size_t>(o)];
  }

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&x, &weight, &bias})) {
    tape.record("linear", {x, weight, bias}, {y}, [x, weight, bias, y, batch, in, out]() mutable {
      auto g = y.grad();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        detail::gemm(false, false, batch, in, out, T(1), g.data(), out, weight.data().data(), in,
                     T(1), gx.data(), in);
      }
      if (weight.requires_grad()) {
        auto gw = weight.grad_buffer();
        detail::gemm(true, false, out, in, batch, T(1), g.data(), out, x.data().data(), in, T(1),
                     gw.data(), in);
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t o = 0; o < out; ++o) gb[static_cast<size_t>(o)] += g[static_cast<size_t>(b * out + o)];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  MCANET_CHECK(!xs.empty(), "concat_channels: no inputs");
  const int64_t rank = xs[0].dim();
  MCANET_CHECK(rank == 2 || rank == 4, "concat_channels: expected rank 2 or 4, got ", rank);
  const int64_t batch = xs[0].extent(0);
  const int64_t plane = rank == 4 ? xs[0].extent(2) * xs[0].extent(3) : 1;
  int64_t total_c = 0;
  for (const auto& x : xs) {
    MCANET_CHECK(x.dim() == rank && x.extent(0) == batch &&
                     (rank == 2 || (x.extent(2) == xs[0].extent(2) && x.extent(3) == xs[0].extent(3))),
                 "concat_channels: incompatible input shape ", shape_str(x.shape()));
    total_c += x.extent(1);
  }
  Shape out_shape = xs[0].shape();
  out_shape[1] = total_c;
  Tensor<T> y(out_shape);
  auto yd = y.mutable_data();
  int64_t c_off = 0;
  for (const auto& x : xs) {
    const int64_t c = x.extent(1);
    auto xd = x.data();
    for (int64_t b = 0; b < batch; ++b) {
      const T* src = xd.data() + b * c * plane;
      T* dst = yd.data() + (b * total_c + c_off) * plane;
      std::copy(src, src + c * plane, dst);
    }
    c_off += c;
  }

  auto& tape = Tape<T>::active();
  bool any = false;
  for (const auto& x : xs)
    if (x.requires_grad()) any = true;
  if (tape.recording() && any) {
    std::vector<Tensor<T>> ins = xs;
    tape.record("concat_channels", ins, {y}, [ins, y, batch, total_c, plane]() mutable {
      auto g = y.grad();
      int64_t off = 0;
      for (auto& x : ins) {
        const int64_t c = x.extent(1);
        if (x.requires_grad()) {
          auto gx = x.grad_buffer();
          for (int64_t b = 0; b < batch; ++b) {
            const T* src = g.data() + (b * total_c + off) * plane;
            T* dst = gx.data() + b * c * plane;
            for (int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
          }
        }
        off += c;
      }
    });
  }
  return y;
}

#define MCANET_INSTANTIATE(T)                                                              \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> scale<T>(const Tensor<T>&, double);                                   \
  template Tensor<T> add_channelwise<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> mul_channelwise<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> sum<T>(const Tensor<T>&);                                             \
  template Tensor<T> mean<T>(const Tensor<T>&);                                            \
  template Tensor<T> relu<T>(const Tensor<T>&);                                            \
  template Tensor<T> relu_inplace<T>(Tensor<T>&);                                          \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                         \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);

MCANET_INSTANTIATE(float)
MCANET_INSTANTIATE(double)
#undef MCANET_INSTANTIATE

}  // namespace mcanet::ops
