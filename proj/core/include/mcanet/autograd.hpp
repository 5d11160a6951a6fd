#pragma once

#include <functional>
#include <initializer_list>
#include <vector>

#include "mcanet/tensor.hpp"

namespace mcanet {

// Dynamically recorded computation tape (define-by-run). One tape per thread;
// operations append themselves in execution order, which is a topological
// order by construction. backward() consumes the recorded entries, releasing
// captured activations as soon as they are no longer needed.
template <typename T>
class Tape {
 public:
  static Tape& active();

  bool recording() const { return enabled_; }
  void set_recording(bool v) { enabled_ = v; }

  // True when recording is on and at least one input participates in autodiff.
  bool grad_enabled(std::initializer_list<const Tensor<T>*> inputs) const;

  void record(const char* op, std::vector<Tensor<T>> inputs,
              std::vector<Tensor<T>> outputs, std::function<void()> backward);

  // Reverse sweep from a scalar loss. Every leaf that was recorded receives a
  // gradient buffer; leaves the loss does not depend on end up with zeros.
  // Consumes the tape.
  void backward(Tensor<T> loss);

  void reset();
  int64_t size() const { return static_cast<int64_t>(entries_.size()); }

 private:
  struct Entry {
    const char* op = nullptr;
    std::vector<Tensor<T>> inputs;
    std::vector<Tensor<T>> outputs;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  std::vector<Tensor<T>> leaves_;
  int64_t next_node_ = 0;
  bool enabled_ = true;
};

extern template class Tape<float>;
extern template class Tape<double>;

// Suspends recording on both scalar tapes for the current scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool float_was_;
  bool double_was_;
};

// Central finite-difference check of d f / d point against the analytic
// gradient produced by backward(). f must be deterministic and scalar-valued.
// Returns max over coordinates of |analytic - numeric| / max(1, |numeric|).
// Resets the active tape of type T.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>(Tensor<T>&)>& f,
                         const Tensor<T>& point, double eps = 1e-5);

extern template double finite_diff_check<float>(
    const std::function<Tensor<float>(Tensor<float>&)>&, const Tensor<float>&, double);
extern template double finite_diff_check<double>(
    const std::function<Tensor<double>(Tensor<double>&)>&, const Tensor<double>&, double);

}  // namespace mcanet
