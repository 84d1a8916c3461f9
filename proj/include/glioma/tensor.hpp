#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "glioma/errors.hpp"

namespace glioma {

namespace detail {

template <class T>
struct NodeT {
  std::array<int64_t, 5> shape{};  // batch, channels, depth, height, width
  std::vector<T> values;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<NodeT>> parents;
  // reads this node's grad, accumulates into the parents' grads
  std::function<void(NodeT&)> backward_fn;

  int64_t numel() const {
    return shape[0] * shape[1] * shape[2] * shape[3] * shape[4];
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
  }
};

}  // namespace detail

// Dense 5-D tensor participating in a reverse-mode autograd tape. Copies are
// shallow; the underlying buffer is shared.
template <class T>
class TensorT {
 public:
  using Shape = std::array<int64_t, 5>;

  TensorT() = default;

  static TensorT zeros(Shape s, bool requires_grad = false) {
    TensorT t;
    t.node_ = std::make_shared<detail::NodeT<T>>();
    t.node_->shape = s;
    t.node_->values.assign(size_t(t.node_->numel()), T(0));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static TensorT from_values(Shape s, std::vector<T> v,
                             bool requires_grad = false) {
    TensorT t = zeros(s, requires_grad);
    if (int64_t(v.size()) != t.numel()) {
      fail(ErrorCode::ShapeMismatch, "value count does not match shape");
    }
    t.node_->values = std::move(v);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  std::vector<T>& values() { return node_->values; }
  const std::vector<T>& values() const { return node_->values; }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->grad.size(), T(0));
  }

  T& at(int64_t b, int64_t c, int64_t z, int64_t y, int64_t x) {
    const Shape& s = node_->shape;
    return node_->values[size_t(
        ((((b * s[1] + c) * s[2]) + z) * s[3] + y) * s[4] + x)];
  }
  T at(int64_t b, int64_t c, int64_t z, int64_t y, int64_t x) const {
    return const_cast<TensorT*>(this)->at(b, c, z, y, x);
  }

  T scalar() const {
    if (numel() != 1) fail(ErrorCode::ShapeMismatch, "not a scalar tensor");
    return node_->values[0];
  }

  std::shared_ptr<detail::NodeT<T>> node() const { return node_; }

 private:
  std::shared_ptr<detail::NodeT<T>> node_;
};

using Tensor5 = TensorT<float>;

// --- the closed operator set ------------------------------------------------

// 3D cross-correlation, stride 1, same padding. weight (Cout,Cin,k,k,k) with
// k odd; bias (1,Cout,1,1,1) or undefined for none.
template <class T>
TensorT<T> conv3d(const TensorT<T>& input, const TensorT<T>& weight,
                  const TensorT<T>& bias);

template <class T>
TensorT<T> relu(const TensorT<T>& t);

// zero mean / unit std per (batch, channel) over spatial voxels
template <class T>
TensorT<T> instance_norm(const TensorT<T>& t, double eps = 1e-5);

// window 2, stride 2; ties break toward the lexicographically first index
template <class T>
TensorT<T> max_pool3d(const TensorT<T>& t);

template <class T>
TensorT<T> upsample_trilinear2(const TensorT<T>& t);

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

template <class T>
TensorT<T> softmax_channels(const TensorT<T>& t);

template <class T>
TensorT<T> sum_all(const TensorT<T>& t);

// (1 - mean foreground soft Dice, smoothing 1.0) + weighted mean voxel
// cross-entropy. probs are post-softmax; target is one-hot.
template <class T>
TensorT<T> dice_ce_loss(const TensorT<T>& probs, const TensorT<T>& target,
                        const std::vector<double>& class_weights);

// scalar combination: sum_i w_i * x_i (each x_i a scalar tensor)
template <class T>
TensorT<T> weighted_sum_scalars(const std::vector<TensorT<T>>& xs,
                                const std::vector<double>& ws);

// 2x2x2 block mean; feeds the half-resolution path
template <class T>
TensorT<T> downsample2(const TensorT<T>& t);

template <class T>
void backward(const TensorT<T>& loss);

}  // namespace glioma
