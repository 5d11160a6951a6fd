#include "mcanet/autograd.hpp"

#include <cmath>

#include "mcanet/common.hpp"

namespace mcanet {

template <typename T>
Tape<T>& Tape<T>::active() {
  static thread_local Tape<T> instance;
  return instance;
}

template <typename T>
bool Tape<T>::grad_enabled(std::initializer_list<const Tensor<T>*> inputs) const {
  if (!enabled_) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T>
void Tape<T>::record(const char* op, std::vector<Tensor<T>> inputs,
                     std::vector<Tensor<T>> outputs, std::function<void()> backward) {
  if (!enabled_) return;
  for (auto& in : inputs) {
    if (in.requires_grad() && in.node() < 0) {
      in.set_node(next_node_++);
      leaves_.push_back(in);
    }
  }
  for (auto& out : outputs) {
    out.set_requires_grad(true);
    out.set_node(next_node_++);
  }
  entries_.push_back(Entry{op, std::move(inputs), std::move(outputs), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(Tensor<T> loss) {
  MCANET_CHECK(loss.defined() && loss.numel() == 1,
               "backward: loss must be scalar, got shape ",
               loss.defined() ? shape_str(loss.shape()) : "(undefined)");
  loss.grad_buffer()[0] = T(1);

  for (int64_t i = static_cast<int64_t>(entries_.size()) - 1; i >= 0; --i) {
    Entry& e = entries_[static_cast<size_t>(i)];
    bool reached = false;
    for (auto& out : e.outputs)
      if (out.has_grad()) { reached = true; break; }
    if (reached && e.backward) {
      // Outputs the sweep never touched contribute zero.
      for (auto& out : e.outputs) (void)out.grad_buffer();
      e.backward();
    }
    for (auto& out : e.outputs) {
      bool aliases_input = false;
      for (auto& in : e.inputs)
        if (in.impl_ptr() == out.impl_ptr()) { aliases_input = true; break; }
      if (!aliases_input) out.drop_grad();
    }
    e = Entry{};  // release captured activations early
  }
  entries_.clear();

  for (auto& leaf : leaves_) (void)leaf.grad_buffer();
  leaves_.clear();
  next_node_ = 0;
}

template <typename T>
void Tape<T>::reset() {
  entries_.clear();
  leaves_.clear();
  next_node_ = 0;
}

template class Tape<float>;
template class Tape<double>;

NoGradGuard::NoGradGuard() {
  float_was_ = Tape<float>::active().recording();
  double_was_ = Tape<double>::active().recording();
  Tape<float>::active().set_recording(false);
  Tape<double>::active().set_recording(false);
}

NoGradGuard::~NoGradGuard() {
  Tape<float>::active().set_recording(float_was_);
  Tape<double>::active().set_recording(double_was_);
}

template <typename T>
double finite_diff_check(const std::function<Tensor<T>(Tensor<T>&)>& f,
                         const Tensor<T>& point, double eps) {
  auto& tape = Tape<T>::active();
  tape.reset();

  Tensor<T> x = point.clone();
  x.set_requires_grad(true);
  Tensor<T> y = f(x);
  MCANET_CHECK(y.defined() && y.numel() == 1, "finite_diff_check: f must be scalar-valued");
  tape.backward(y);

  std::vector<double> analytic(static_cast<size_t>(point.numel()), 0.0);
  if (x.has_grad()) {
    auto g = x.grad();
    for (size_t i = 0; i < g.size(); ++i) analytic[i] = static_cast<double>(g[i]);
  }
  tape.reset();

  NoGradGuard nograd;
  Tensor<T> probe = point.clone();
  auto values = probe.mutable_data();
  double worst = 0.0;
  for (int64_t i = 0; i < probe.numel(); ++i) {
    const T saved = values[static_cast<size_t>(i)];
    values[static_cast<size_t>(i)] = saved + static_cast<T>(eps);
    const double fp = static_cast<double>(f(probe).item());
    values[static_cast<size_t>(i)] = saved - static_cast<T>(eps);
    const double fm = static_cast<double>(f(probe).item());
    values[static_cast<size_t>(i)] = saved;

    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[static_cast<size_t>(i)];
    MCANET_CHECK(std::isfinite(numeric) && std::isfinite(a),
                 "finite_diff_check: non-finite value at coordinate ", i,
                 " (analytic=", a, ", numeric=", numeric, ")");
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

template double finite_diff_check<float>(
    const std::function<Tensor<float>(Tensor<float>&)>&, const Tensor<float>&, double);
template double finite_diff_check<double>(
    const std::function<Tensor<double>(Tensor<double>&)>&, const Tensor<double>&, double);

}  // namespace mcanet
