#include "mcanet/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mcanet/common.hpp"

namespace mcanet {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

template <typename T>
Tensor<T>::Tensor(Shape shape) {
  for (int64_t e : shape)
    MCANET_CHECK(e > 0, "tensor: non-positive extent in shape ", shape_str(shape));
  impl_ = std::make_shared<TensorImpl<T>>();
  impl_->data.assign(static_cast<size_t>(shape_numel(shape)), T(0));
  impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
  for (int64_t e : shape)
    MCANET_CHECK(e > 0, "tensor: non-positive extent in shape ", shape_str(shape));
  MCANET_CHECK(shape_numel(shape) == static_cast<int64_t>(values.size()),
               "tensor: shape ", shape_str(shape), " wants ", shape_numel(shape),
               " values, got ", values.size());
  impl_ = std::make_shared<TensorImpl<T>>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::uniform(Shape shape, T lo, T hi, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : t.impl_->data) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::normal(Shape shape, T mean, T stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(static_cast<double>(mean), static_cast<double>(stddev));
  for (auto& v : t.impl_->data) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool v) {
  MCANET_CHECK(defined(), "set_requires_grad on undefined tensor");
  impl_->requires_grad = v;
  return *this;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) return {};
  return {impl_->grad.data(), impl_->grad.size()};
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() {
  MCANET_CHECK(defined(), "grad_buffer on undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return {impl_->grad.data(), impl_->grad.size()};
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::drop_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

template <typename T>
Tensor<T> Tensor<T>::grad_clone() const {
  MCANET_CHECK(has_grad(), "grad_clone: tensor has no gradient");
  return Tensor(impl_->shape, impl_->grad);
}

template <typename T>
T Tensor<T>::item() const {
  MCANET_CHECK(defined() && numel() == 1, "item() requires a scalar tensor");
  return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  MCANET_CHECK(defined(), "clone of undefined tensor");
  return Tensor(impl_->shape, impl_->data);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mcanet
