#include <algorithm>
#include <cmath>
#include <vector>

#include "mcanet/autograd.hpp"
#include "mcanet/common.hpp"
#include "mcanet/ops.hpp"

namespace mcanet::ops {

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& labels) {
  MCANET_CHECK(logits.dim() == 2, "softmax_cross_entropy: expected logits [B,K], got ",
               shape_str(logits.shape()));
  const int64_t batch = logits.extent(0);
  const int64_t k = logits.extent(1);
  MCANET_CHECK(static_cast<int64_t>(labels.size()) == batch,
               "softmax_cross_entropy: ", labels.size(), " labels for batch ", batch);
  for (int64_t b = 0; b < batch; ++b)
    MCANET_CHECK(labels[static_cast<size_t>(b)] >= 0 && labels[static_cast<size_t>(b)] < k,
                 "softmax_cross_entropy: label ", labels[static_cast<size_t>(b)],
                 " out of range [0, ", k, ") at row ", b);

  const T* ld = logits.data().data();
  std::vector<T> probs(static_cast<size_t>(batch * k));
  double loss_acc = 0;
  for (int64_t b = 0; b < batch; ++b) {
    const T* row = ld + b * k;
    double mx = static_cast<double>(row[0]);
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    const double log_denom = std::log(denom);
    for (int64_t j = 0; j < k; ++j)
      probs[static_cast<size_t>(b * k + j)] =
          static_cast<T>(std::exp(static_cast<double>(row[j]) - mx) / denom);
    const int64_t lbl = labels[static_cast<size_t>(b)];
    loss_acc += -(static_cast<double>(row[lbl]) - mx - log_denom);
  }
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(loss_acc / static_cast<double>(batch)));

  auto& tape = Tape<T>::active();
  if (tape.grad_enabled({&logits})) {
    tape.record("softmax_cross_entropy", {logits}, {y},
                [logits, y, labels, probs, batch, k]() mutable {
      const T g = y.grad()[0];
      auto gl = logits.grad_buffer();
      const T inv_b = static_cast<T>(1.0 / static_cast<double>(batch));
      for (int64_t b = 0; b < batch; ++b) {
        const int64_t lbl = labels[static_cast<size_t>(b)];
        for (int64_t j = 0; j < k; ++j) {
          T p = probs[static_cast<size_t>(b * k + j)];
          if (j == lbl) p -= T(1);
          gl[static_cast<size_t>(b * k + j)] += g * inv_b * p;
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> weighted_branch_sum(const std::vector<Tensor<T>>& branches,
                              const std::vector<Tensor<T>>& weights) {
  MCANET_CHECK(!branches.empty() && branches.size() == weights.size(),
               "weighted_branch_sum: need matching branch and weight lists, got ",
               branches.size(), " and ", weights.size());
  const Shape& shape = branches[0].shape();
  MCANET_CHECK(branches[0].dim() == 4, "weighted_branch_sum: branches must be [B,C,H,W]");
  const int64_t bc = shape[0] * shape[1];
  const int64_t plane = shape[2] * shape[3];
  for (size_t r = 0; r < branches.size(); ++r) {
    MCANET_CHECK(same_shape(branches[r].shape(), shape), "weighted_branch_sum: branch ", r,
                 " shape ", shape_str(branches[r].shape()), " != ", shape_str(shape));
    MCANET_CHECK(weights[r].dim() == 2 && weights[r].extent(0) == shape[0] &&
                     weights[r].extent(1) == shape[1],
                 "weighted_branch_sum: weight ", r, " shape ", shape_str(weights[r].shape()),
                 " incompatible with branches ", shape_str(shape));
  }

  Tensor<T> y(shape);
  T* yd = y.mutable_data().data();
  for (size_t r = 0; r < branches.size(); ++r) {
    const T* xd = branches[r].data().data();
    const T* wd = weights[r].data().data();
    for (int64_t i = 0; i < bc; ++i) {
      const T a = wd[i];
      const T* src = xd + i * plane;
      T* dst = yd + i * plane;
      for (int64_t s = 0; s < plane; ++s) dst[s] += a * src[s];
    }
  }

  auto& tape = Tape<T>::active();
  bool any = false;
  for (const auto& t : branches)
    if (t.requires_grad()) any = true;
  for (const auto& t : weights)
    if (t.requires_grad()) any = true;
  if (tape.recording() && any) {
    std::vector<Tensor<T>> ins;
    ins.reserve(branches.size() * 2);
    for (const auto& t : branches) ins.push_back(t);
    for (const auto& t : weights) ins.push_back(t);
    const size_t fn = branches.size();
    tape.record("weighted_branch_sum", ins, {y}, [ins, y, fn, bc, plane]() mutable {
      auto g = y.grad();
      for (size_t r = 0; r < fn; ++r) {
        auto& xr = ins[r];
        auto& wr = ins[fn + r];
        const T* xd = xr.data().data();
        const T* wd = wr.data().data();
        if (xr.requires_grad()) {
          auto gx = xr.grad_buffer();
          for (int64_t i = 0; i < bc; ++i) {
            const T a = wd[i];
            const T* gp = g.data() + i * plane;
            T* dst = gx.data() + i * plane;
            for (int64_t s = 0; s < plane; ++s) dst[s] += a * gp[s];
          }
        }
        if (wr.requires_grad()) {
          auto gw = wr.grad_buffer();
          for (int64_t i = 0; i < bc; ++i) {
            const T* gp = g.data() + i * plane;
            const T* src = xd + i * plane;
            T acc = 0;
            for (int64_t s = 0; s < plane; ++s) acc += gp[s] * src[s];
            gw[static_cast<size_t>(i)] += acc;
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
std::vector<double> softmax_rows(const Tensor<T>& logits) {
  MCANET_CHECK(logits.dim() == 2, "softmax_rows: expected [B,K], got ", shape_str(logits.shape()));
  const int64_t batch = logits.extent(0);
  const int64_t k = logits.extent(1);
  const T* ld = logits.data().data();
  std::vector<double> out(static_cast<size_t>(batch * k));
  for (int64_t b = 0; b < batch; ++b) {
    const T* row = ld + b * k;
    double mx = static_cast<double>(row[0]);
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    for (int64_t j = 0; j < k; ++j)
      out[static_cast<size_t>(b * k + j)] = std::exp(static_cast<double>(row[j]) - mx) / denom;
  }
  return out;
}

#define MCANET_INSTANTIATE(T)                                                             \
  template Tensor<T> softmax_cross_entropy<T>(const Tensor<T>&, const std::vector<int64_t>&); \
  template Tensor<T> weighted_branch_sum<T>(const std::vector<Tensor<T>>&,                \
                                            const std::vector<Tensor<T>>&);               \
  template std::vector<double> softmax_rows<T>(const Tensor<T>&);

MCANET_INSTANTIATE(float)
MCANET_INSTANTIATE(double)
#undef MCANET_INSTANTIATE

}  // namespace mcanet::ops
