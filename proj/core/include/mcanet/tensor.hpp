#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mcanet {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty = no gradient buffer
  bool requires_grad = false;
  int64_t node = -1;  // id on the recording tape, -1 = not recorded
};

// Dense row-major n-dimensional array. Copies are shallow: they share the
// underlying storage (data, gradient, tape identity). Operations never
// mutate their inputs; the optimizer and initializers write through
// mutable_data() deliberately.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }
  static Tensor scalar(T value) { return Tensor({1}, {value}); }
  static Tensor uniform(Shape shape, T lo, T hi, std::mt19937_64& rng);
  static Tensor normal(Shape shape, T mean, T stddev, std::mt19937_64& rng);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t dim() const { return static_cast<int64_t>(impl_->shape.size()); }
  int64_t extent(int64_t i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::span<const T> data() const { return {impl_->data.data(), impl_->data.size()}; }
  std::span<T> mutable_data() { return {impl_->data.data(), impl_->data.size()}; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool v);

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const T> grad() const;
  // Allocates a zero-filled gradient buffer on first use.
  std::span<T> grad_buffer();
  void zero_grad();
  void drop_grad();
  Tensor grad_clone() const;  // gradient copied into a fresh tensor

  T item() const;

  // Deep copy of the values; the copy is off-tape and carries no gradient.
  Tensor clone() const;

  int64_t node() const { return impl_ ? impl_->node : -1; }
  void set_node(int64_t n) { impl_->node = n; }

  const TensorImpl<T>* impl_ptr() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mcanet
