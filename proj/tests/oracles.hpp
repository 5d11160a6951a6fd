// Independent reference implementations used as test oracles. These stay
// deliberately naive (nested loops, O(N^2) DFT) and never share code with the
// library paths they check.
#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "mcanet/ops.hpp"
#include "mcanet/tensor.hpp"

namespace oracles {

// Direct six-loop grouped dilated cross-correlation.
inline mcanet::Tensor<double> conv2d_direct(const mcanet::Tensor<double>& x,
                                            const mcanet::Tensor<double>& w,
                                            const mcanet::Conv2dParams& p) {
  const int64_t batch = x.extent(0), cin = x.extent(1), h = x.extent(2), wid = x.extent(3);
  const int64_t oh = p.out_extent(h), ow = p.out_extent(wid);
  const int64_t cg = cin / p.groups, kg = p.out_channels / p.groups;
  mcanet::Tensor<double> y({batch, p.out_channels, oh, ow});
  auto xd = x.data();
  auto wd = w.data();
  auto yd = y.mutable_data();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t oc = 0; oc < p.out_channels; ++oc) {
      const int64_t g = oc / kg;
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          double acc = 0;
          for (int64_t c = 0; c < cg; ++c)
            for (int64_t ki = 0; ki < p.kernel; ++ki)
              for (int64_t kj = 0; kj < p.kernel; ++kj) {
                const int64_t ih = i * p.stride - p.padding + ki * p.dilation;
                const int64_t iw = j * p.stride - p.padding + kj * p.dilation;
                if (ih < 0 || ih >= h || iw < 0 || iw >= wid) continue;
                const double xv =
                    xd[((b * cin + g * cg + c) * h + ih) * wid + iw];
                const double wv =
                    wd[((oc * cg + c) * p.kernel + ki) * p.kernel + kj];
                acc += xv * wv;
              }
          yd[((b * p.out_channels + oc) * oh + i) * ow + j] = acc;
        }
  return y;
}

// Circular convolution by direct modular-index summation.
inline std::vector<double> circular_conv_direct(const std::vector<double>& x,
                                                const std::vector<double>& h) {
  const int64_t n = static_cast<int64_t>(x.size());
  std::vector<double> y(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < static_cast<int64_t>(h.size()); ++j)
      y[static_cast<size_t>(i)] += h[static_cast<size_t>(j)] * x[static_cast<size_t>(((i - j) % n + n) % n)];
  return y;
}

// Circular convolution through the DFT identity y = IDFT(DFT(x) .* DFT(pad(h))).
inline std::vector<double> circular_conv_dft(const std::vector<double>& x,
                                             const std::vector<double>& h) {
  const size_t n = x.size();
  const double tau = 2.0 * 3.14159265358979323846;
  auto dft = [&](const std::vector<std::complex<double>>& in, bool inverse) {
    std::vector<std::complex<double>> out(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (size_t k = 0; k < n; ++k) {
      std::complex<double> acc(0, 0);
      for (size_t t = 0; t < n; ++t)
        acc += in[t] * std::polar(1.0, sign * tau * static_cast<double>(k * t % n) / static_cast<double>(n));
      out[k] = inverse ? acc / static_cast<double>(n) : acc;
    }
    return out;
  };
  std::vector<std::complex<double>> xc(n), hc(n, {0, 0});
  for (size_t i = 0; i < n; ++i) xc[i] = x[i];
  for (size_t i = 0; i < h.size(); ++i) hc[i] = h[i];
  auto fx = dft(xc, false);
  auto fh = dft(hc, false);
  for (size_t i = 0; i < n; ++i) fx[i] *= fh[i];
  auto yc = dft(fx, true);
  std::vector<double> y(n);
  for (size_t i = 0; i < n; ++i) y[i] = yc[i].real();
  return y;
}

}  // namespace oracles
