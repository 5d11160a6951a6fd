#include <random>

#include "doctest.h"
#include "mcanet/autograd.hpp"
#include "mcanet/common.hpp"
#include "mcanet/ops.hpp"
#include "oracles.hpp"

using namespace mcanet;

namespace {

Tensor<double> rand_tensor(Shape shape, std::mt19937_64& rng) {
  return Tensor<double>::uniform(std::move(shape), -1.0, 1.0, rng);
}

void compare(const Tensor<double>& a, const Tensor<double>& b, double atol) {
  REQUIRE(same_shape(a.shape(), b.shape()));
  auto ad = a.data();
  auto bd = b.data();
  for (size_t i = 0; i < ad.size(); ++i) CHECK(ad[i] == doctest::Approx(bd[i]).epsilon(0).scale(0).epsilon(atol));
}

}  // namespace

TEST_CASE("1x1 conv with a permutation weight permutes channels") {
  Tape<double>::active().reset();
  std::mt19937_64 rng(1);
  auto x = rand_tensor({1, 3, 4, 4}, rng);
  // weight[out][in][0][0]: out 0<-in 2, 1<-in 0, 2<-in 1
  Tensor<double> w({3, 3, 1, 1});
  w.mutable_data()[0 * 3 + 2] = 1.0;
  w.mutable_data()[1 * 3 + 0] = 1.0;
  w.mutable_data()[2 * 3 + 1] = 1.0;
  Conv2dParams p{.in_channels = 3, .out_channels = 3, .kernel = 1, .stride = 1, .dilation = 1, .groups = 1, .padding = 0};
  auto y = ops::conv2d(x, w, p);
  auto xd = x.data();
  auto yd = y.data();
  const int64_t plane = 16;
  for (int64_t s = 0; s < plane; ++s) {
    CHECK(yd[0 * plane + s] == doctest::Approx(xd[2 * plane + s]));
    CHECK(yd[1 * plane + s] == doctest::Approx(xd[0 * plane + s]));
    CHECK(yd[2 * plane + s] == doctest::Approx(xd[1 * plane + s]));
  }
}

TEST_CASE("dilated conv on a constant field is constant in the interior") {
  Tape<double>::active().reset();
  std::mt19937_64 rng(2);
  const double c = 0.35;
  auto x = Tensor<double>::full({1, 2, 9, 9}, c);
  auto w = rand_tensor({2, 2, 3, 3}, rng);
  double sigma_out0 = 0;
  for (int i = 0; i < 18; ++i) sigma_out0 += w.data()[i];
  Conv2dParams p{.in_channels = 2, .out_channels = 2, .kernel = 3, .stride = 1, .dilation = 2, .groups = 1, .padding = 2};
  auto y = ops::conv2d(x, w, p);
  CHECK(y.extent(2) == 9);
  // Interior = taps never hit the zero padding (offset >= dilation).
  auto yd = y.data();
  for (int64_t i = 2; i < 7; ++i)
    for (int64_t j = 2; j < 7; ++j)
      CHECK(yd[(0 * 9 + i) * 9 + j] == doctest::Approx(c * sigma_out0).epsilon(1e-12));
}

TEST_CASE("dilation-3 grouped conv matches direct-loop oracle") {
  Tape<double>::active().reset();
  std::mt19937_64 rng(3);
  auto x = rand_tensor({1, 4, 6, 6}, rng);
  auto w = rand_tensor({4, 2, 3, 3}, rng);
  Conv2dParams p{.in_channels = 4, .out_channels = 4, .kernel = 3, .stride = 1, .dilation = 3, .groups = 2, .padding = 3};
  auto got = ops::conv2d(x, w, p);
  auto want = oracles::conv2d_direct(x, w, p);
  compare(got, want, 1e-10);
}

TEST_CASE("randomized conv2d equals the direct oracle across used configs") {
  Tape<double>::active().reset();
  std::mt19937_64 rng(4);
  struct Combo { int64_t k, s, dil; };
  const Combo combos[] = {{3, 1, 1}, {3, 1, 2}, {3, 1, 3}, {3, 1, 4},
                          {3, 2, 1}, {3, 2, 2}, {3, 2, 3}, {1, 1, 1}, {1, 2, 1}};
  for (const auto& combo : combos) {
    for (int rep = 0; rep < 6; ++rep) {
      const int64_t g = 1 + static_cast<int64_t>(rng() % 2);
      const int64_t cin = g * (1 + static_cast<int64_t>(rng() % 3));
      const int64_t cout = g * (1 + static_cast<int64_t>(rng() % 3));
      const int64_t h = combo.k == 1 ? 3 + static_cast<int64_t>(rng() % 5)
                                     : combo.dil * 2 + 2 + static_cast<int64_t>(rng() % 4);
      const int64_t pad = combo.k == 1 ? 0 : combo.dil;
      Conv2dParams p{.in_channels = cin, .out_channels = cout, .kernel = combo.k,
                     .stride = combo.s, .dilation = combo.dil, .groups = g, .padding = pad};
      auto x = rand_tensor({2, cin, h, h}, rng);
      auto w = rand_tensor({cout, cin / g, combo.k, combo.k}, rng);
      auto got = ops::conv2d(x, w, p);
      auto want = oracles::conv2d_direct(x, w, p);
      compare(got, want, 1e-10);
    }
  }
}

TEST_CASE("grouped conv equals block-diagonal full conv") {
  Tape<double>::active().reset();
  std::mt19937_64 rng(5);
  const int64_t g = 2, cin = 4, cout = 6, k = 3;
  auto x = rand_tensor({2, cin, 5, 5}, rng);
  auto wg = rand_tensor({cout, cin / g, k, k}, rng);
  Conv2dParams pg{.in_channels = cin, .out_channels = cout, .kernel = k, .stride = 1,
                  .dilation = 1, .groups = g, .padding = 1};
  auto y_grouped = ops::conv2d(x, wg, pg);

  // Embed the grouped weights into a zero-padded dense weight tensor.
  Tensor<double> wfull({cout, cin, k, k});
  auto wgd = wg.data();
  auto wfd = wfull.mutable_data();
  const int64_t cg = cin / g, kg = cout / g;
  for (int64_t oc = 0; oc < cout; ++oc) {
    const int64_t grp = oc / kg;
    for (int64_t c = 0; c < cg; ++c)
      for (int64_t i = 0; i < k * k; ++i)
        wfd[((oc * cin) + grp * cg + c) * k * k + i] = wgd[(oc * cg + c) * k * k + i];
  }
  Conv2dParams pf = pg;
  pf.groups = 1;
  auto y_full = ops::conv2d(x, wfull, pf);
  compare(y_grouped, y_full, 1e-12);
}

TEST_CASE("conv2d rejects bad configs") {
  Tape<double>::active().reset();
  std::mt19937_64 rng(6);
  auto x = rand_tensor({1, 4, 6, 6}, rng);
  auto w = rand_tensor({4, 2, 3, 3}, rng);
  SUBCASE("group divisibility") {
    Conv2dParams p{.in_channels = 4, .out_channels = 4, .kernel = 3, .stride = 1, .dilation = 1, .groups = 3, .padding = 1};
    CHECK_THROWS_WITH_AS(ops::conv2d(x, w, p), doctest::Contains("groups"), Error);
  }
  SUBCASE("non-positive output extent") {
    auto small = rand_tensor({1, 4, 2, 2}, rng);
    Conv2dParams p{.in_channels = 4, .out_channels = 4, .kernel = 3, .stride = 1, .dilation = 4, .groups = 2, .padding = 0};
    CHECK_THROWS_WITH_AS(ops::conv2d(small, w, p), doctest::Contains("output extent"), Error);
  }
}

TEST_CASE("conv2d gradients pass finite differences") {
  std::mt19937_64 rng(7);
  struct Case { int64_t k, s, dil, g, pad; };
  const Case cases[] = {{3, 1, 2, 2, 2}, {3, 2, 1, 1, 1}, {1, 1, 1, 1, 0}, {1, 2, 1, 1, 0}};
  for (const auto& c : cases) {
    const int64_t cin = 2 * c.g, cout = 2 * c.g, h = 6;
    Conv2dParams p{.in_channels = cin, .out_channels = cout, .kernel = c.k, .stride = c.s,
                   .dilation = c.dil, .groups = c.g, .padding = c.pad};
    auto x0 = rand_tensor({2, cin, h, h}, rng);
    auto w0 = rand_tensor({cout, cin / c.g, c.k, c.k}, rng);

    double err_w = finite_diff_check<double>(
        [&](Tensor<double>& w) { return ops::sum(ops::conv2d(x0, w, p)); }, w0);
    CHECK(err_w < 1e-6);

    double err_x = finite_diff_check<double>(
        [&](Tensor<double>& x) {
          auto y = ops::conv2d(x, w0, p);
          return ops::sum(ops::mul(y, y));
        },
        x0);
    CHECK(err_x < 1e-6);
  }
}

TEST_CASE("circular conv: spec examples") {
  Tape<double>::active().reset();
  SUBCASE("delta kernel is identity") {
    Tensor<double> x({4}, {1, 2, 3, 4});
    Tensor<double> h({1}, {1});
    auto y = ops::conv1d_circular(x, h);
    for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
  }
  SUBCASE("worked example [1,2,3,4] (*) [1,1,1]") {
    Tensor<double> x({4}, {1, 2, 3, 4});
    Tensor<double> h({3}, {1, 1, 1});
    auto y = ops::conv1d_circular(x, h);
    const std::vector<double> want = oracles::circular_conv_direct({1, 2, 3, 4}, {1, 1, 1});
    CHECK(want[0] == 8);  // oracle agrees with the hand computation
    CHECK(want[1] == 7);
    CHECK(want[2] == 6);
    CHECK(want[3] == 9);
    for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == doctest::Approx(want[i]));
  }
  SUBCASE("zero kernel annihilates") {
    Tensor<double> x({5}, {1, -2, 3, -4, 5});
    Tensor<double> h({3});
    auto y = ops::conv1d_circular(x, h);
    for (int i = 0; i < 5; ++i) CHECK(y.data()[i] == 0.0);
  }
  SUBCASE("kernel longer than signal rejected") {
    Tensor<double> x({2}, {1, 2});
    Tensor<double> h({3}, {1, 1, 1});
    CHECK_THROWS_AS(ops::conv1d_circular(x, h), Error);
  }
}

TEST_CASE("circular conv matches modular-sum and DFT oracles on random inputs") {
  Tape<double>::active().reset();
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 30; ++rep) {
    const int64_t n = 2 + static_cast<int64_t>(rng() % 14);
    const int64_t k = 1 + static_cast<int64_t>(rng() % n);
    auto x = rand_tensor({n}, rng);
    auto h = rand_tensor({k}, rng);
    auto y = ops::conv1d_circular(x, h);
    std::vector<double> xv(x.data().begin(), x.data().end());
    std::vector<double> hv(h.data().begin(), h.data().end());
    auto direct = oracles::circular_conv_direct(xv, hv);
    auto dft = oracles::circular_conv_dft(xv, hv);
    for (int64_t i = 0; i < n; ++i) {
      CHECK(y.data()[static_cast<size_t>(i)] == doctest::Approx(direct[static_cast<size_t>(i)]).epsilon(1e-12));
      CHECK(y.data()[static_cast<size_t>(i)] == doctest::Approx(dft[static_cast<size_t>(i)]).epsilon(1e-9));
    }
  }
}

TEST_CASE("circular conv is circularly equivariant") {
  Tape<double>::active().reset();
  std::mt19937_64 rng(9);
  const int64_t n = 7, k = 3, r = 2;
  auto x = rand_tensor({n}, rng);
  auto h = rand_tensor({k}, rng);
  auto y = ops::conv1d_circular(x, h);
  Tensor<double> xr({n});
  for (int64_t i = 0; i < n; ++i) xr.mutable_data()[(i + r) % n] = x.data()[i];
  auto yr = ops::conv1d_circular(xr, h);
  for (int64_t i = 0; i < n; ++i)
    CHECK(yr.data()[(i + r) % n] == doctest::Approx(y.data()[i]).epsilon(1e-12));
}

TEST_CASE("circular conv gradients (both arguments, batched)") {
  std::mt19937_64 rng(10);
  auto x0 = rand_tensor({3, 6}, rng);
  auto h0 = rand_tensor({4}, rng);
  double err_h = finite_diff_check<double>(
      [&](Tensor<double>& h) { return ops::sum(ops::mul(ops::conv1d_circular(x0, h), x0)); }, h0);
  CHECK(err_h < 1e-7);
  double err_x = finite_diff_check<double>(
      [&](Tensor<double>& x) {
        auto y = ops::conv1d_circular(x, h0);
        return ops::sum(ops::mul(y, y));
      },
      x0);
  CHECK(err_x < 1e-7);
}
