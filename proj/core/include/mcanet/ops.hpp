#pragma once

#include <cstdint>
#include <vector>

#include "mcanet/tensor.hpp"

namespace mcanet {

// Structural parameters of a 2D convolution. Weights live in the owning
// layer; convolutions carry no bias (a normalization layer always follows).
struct Conv2dParams {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel = 3;    // spatial size, 1 or 3 in this network
  int64_t stride = 1;    // 1 or 2
  int64_t dilation = 1;  // 1..4
  int64_t groups = 1;    // must divide both channel counts
  int64_t padding = 0;

  int64_t out_extent(int64_t in_extent) const {
    return (in_extent + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
  }
  int64_t weight_count() const {
    return out_channels * (in_channels / groups) * kernel * kernel;
  }
  void validate() const;
};

namespace ops {

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, double s);

// Channel broadcast over the spatial plane: v is [B,C], x is [B,C,H,W].
template <typename T> Tensor<T> add_channelwise(const Tensor<T>& x, const Tensor<T>& v);
template <typename T> Tensor<T> mul_channelwise(const Tensor<T>& x, const Tensor<T>& v);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
// In-place variant used between layers: overwrites x's storage. The caller
// must be the sole consumer of x's current value.
template <typename T> Tensor<T> relu_inplace(Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);

// x [B,I] @ weight [O,I]^T + bias [O] -> [B,O]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Grouped, dilated 2D cross-correlation. x [B,Cin,H,W], weight
// [Cout,Cin/g,k,k] -> [B,Cout,H',W'] with H' per Conv2dParams::out_extent.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Conv2dParams& p);

// Circular 1D convolution over the principal interval of length N:
// y(n) = sum_m x(m) * h((n - m) mod N), h zero-extended beyond its k taps.
// x is [N] or [B,N] (rows convolved independently); h is [k], k <= N.
template <typename T> Tensor<T> conv1d_circular(const Tensor<T>& x, const Tensor<T>& h);

// [B,C,H,W] -> [B,C] spatial mean.
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);

// Interleaves fn per-branch statistics [B,C] into [B, fn*C]: output channel
// j*fn + b holds branch b, channel j. channel_regroup is the exact inverse.
template <typename T> Tensor<T> channel_shuffle(const std::vector<Tensor<T>>& stats);
template <typename T> std::vector<Tensor<T>> channel_regroup(const Tensor<T>& x, int64_t fn);

// Concatenation along the channel axis; works on [B,C] and [B,C,H,W].
template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs);

// Batch normalization over the channel axis (dim 1) of [B,C] or [B,C,H,W].
// Training mode normalizes with batch statistics and folds them into the
// running buffers; eval mode uses the running buffers.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum, double eps);

// Mean over the batch of -log softmax(logits)[label], stabilized by
// max-subtraction. logits [B,K].
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& labels);

// sum_b weights[b] (.) branches[b]: per-branch channel gating followed by
// elementwise summation, fused to avoid materializing weighted copies.
// branches are [B,C,H,W], weights are [B,C].
template <typename T>
Tensor<T> weighted_branch_sum(const std::vector<Tensor<T>>& branches,
                              const std::vector<Tensor<T>>& weights);

// Inference helper (off-tape): row-wise softmax of [B,K].
template <typename T> std::vector<double> softmax_rows(const Tensor<T>& logits);

}  // namespace ops
}  // namespace mcanet
