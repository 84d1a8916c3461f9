#include "glioma/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "glioma/kernels.hpp"

namespace glioma {

namespace {

template <class T>
using NodePtr = std::shared_ptr<detail::NodeT<T>>;

template <class T>
void add_into(std::vector<T>& dst, const std::vector<T>& src) {
  const int64_t n = int64_t(dst.size());
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
  for (int64_t i = 0; i < n; ++i) dst[size_t(i)] += src[size_t(i)];
}

// deterministic reduction: fixed blocks combined in order, parallel over
// blocks when enabled
template <class F>
double block_reduce(int64_t n, F&& f) {
  const int64_t nblocks = (n + kernels::kReduceBlock - 1) / kernels::kReduceBlock;
  std::vector<double> partial(size_t(std::max<int64_t>(nblocks, 1)), 0.0);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
  for (int64_t blk = 0; blk < nblocks; ++blk) {
    double s = 0.0;
    const int64_t end = std::min(n, (blk + 1) * kernels::kReduceBlock);
    for (int64_t i = blk * kernels::kReduceBlock; i < end; ++i) s += f(i);
    partial[size_t(blk)] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

template <class T>
TensorT<T> make_result(typename TensorT<T>::Shape shape,
                       std::vector<NodePtr<T>> parents) {
  TensorT<T> out = TensorT<T>::zeros(shape);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  out.node()->requires_grad = rg;
  if (rg) out.node()->parents = std::move(parents);
  return out;
}

}  // namespace

template <class T>
TensorT<T> conv3d(const TensorT<T>& input, const TensorT<T>& weight,
                  const TensorT<T>& bias) {
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  const int64_t k = ws[2];
  if (ws[2] != ws[3] || ws[3] != ws[4] || k % 2 == 0) {
    fail(ErrorCode::ShapeMismatch, "conv3d kernel must be cubic with odd size");
  }
  if (ws[1] != is[1]) {
    fail(ErrorCode::ShapeMismatch, "conv3d input channels do not match weight");
  }
  if (bias.defined() &&
      (bias.shape()[1] != ws[0] || bias.numel() != ws[0])) {
    fail(ErrorCode::ShapeMismatch, "conv3d bias must be (1,Cout,1,1,1)");
  }
  kernels::Conv3dShape s{is[0], is[1], ws[0], is[2], is[3], is[4], int(k)};

  std::vector<NodePtr<T>> parents{input.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  TensorT<T> out =
      make_result<T>({is[0], ws[0], is[2], is[3], is[4]}, parents);
  kernels::conv3d_forward(input.values().data(), weight.values().data(),
                          bias.defined() ? bias.values().data() : nullptr,
                          out.values().data(), s);

  if (out.requires_grad()) {
    NodePtr<T> in_n = input.node(), w_n = weight.node();
    NodePtr<T> b_n = bias.defined() ? bias.node() : nullptr;
    out.node()->backward_fn = [in_n, w_n, b_n, s](detail::NodeT<T>& self) {
      if (in_n->requires_grad) {
        std::vector<T> tmp(in_n->values.size());
        kernels::conv3d_backward_input(self.grad.data(), w_n->values.data(),
                                       tmp.data(), s);
        in_n->ensure_grad();
        add_into(in_n->grad, tmp);
      }
      if (w_n->requires_grad) {
        std::vector<T> tmp(w_n->values.size());
        kernels::conv3d_backward_weight(self.grad.data(), in_n->values.data(),
                                        tmp.data(), s);
        w_n->ensure_grad();
        add_into(w_n->grad, tmp);
      }
      if (b_n && b_n->requires_grad) {
        std::vector<T> tmp(b_n->values.size());
        kernels::conv3d_backward_bias(self.grad.data(), tmp.data(), s);
        b_n->ensure_grad();
        add_into(b_n->grad, tmp);
      }
    };
  }
  return out;
}

template <class T>
TensorT<T> relu(const TensorT<T>& t) {
  TensorT<T> out = make_result<T>(t.shape(), {t.node()});
  kernels::relu_forward(t.values().data(), out.values().data(), t.numel());
  if (out.requires_grad()) {
    NodePtr<T> in_n = t.node();
    out.node()->backward_fn = [in_n](detail::NodeT<T>& self) {
      std::vector<T> tmp(in_n->values.size());
      kernels::relu_backward(self.grad.data(), in_n->values.data(), tmp.data(),
                             int64_t(tmp.size()));
      in_n->ensure_grad();
      add_into(in_n->grad, tmp);
    };
  }
  return out;
}

template <class T>
TensorT<T> instance_norm(const TensorT<T>& t, double eps) {
  const auto& s = t.shape();
  const int64_t bc = s[0] * s[1];
  const int64_t spatial = s[2] * s[3] * s[4];
  if (spatial < 2) {
    fail(ErrorCode::ShapeMismatch, "instance_norm needs spatial size >= 2");
  }
  TensorT<T> out = make_result<T>(s, {t.node()});
  std::vector<T> mean(static_cast<size_t>(bc)), istd(static_cast<size_t>(bc));
  kernels::instance_norm_forward(t.values().data(), out.values().data(),
                                 mean.data(), istd.data(), bc, spatial, eps);
  if (out.requires_grad()) {
    NodePtr<T> in_n = t.node();
    out.node()->backward_fn = [in_n, istd = std::move(istd), bc,
                               spatial](detail::NodeT<T>& self) {
      std::vector<T> tmp(in_n->values.size());
      kernels::instance_norm_backward(self.grad.data(), self.values.data(),
                                      istd.data(), tmp.data(), bc, spatial);
      in_n->ensure_grad();
      add_into(in_n->grad, tmp);
    };
  }
  return out;
}

template <class T>
TensorT<T> max_pool3d(const TensorT<T>& t) {
  const auto& s = t.shape();
  if (s[2] % 2 || s[3] % 2 || s[4] % 2) {
    fail(ErrorCode::OddDimension, "max_pool3d requires even spatial dims");
  }
  const int64_t bc = s[0] * s[1];
  TensorT<T> out =
      make_result<T>({s[0], s[1], s[2] / 2, s[3] / 2, s[4] / 2}, {t.node()});
  std::vector<int32_t> argmax(size_t(out.numel()));
  kernels::maxpool2_forward(t.values().data(), out.values().data(),
                            argmax.data(), bc, s[2], s[3], s[4]);
  if (out.requires_grad()) {
    NodePtr<T> in_n = t.node();
    out.node()->backward_fn = [in_n, argmax = std::move(argmax), bc,
                               s](detail::NodeT<T>& self) {
      std::vector<T> tmp(in_n->values.size());
      kernels::maxpool2_backward(self.grad.data(), argmax.data(), tmp.data(),
                                 bc, s[2], s[3], s[4]);
      in_n->ensure_grad();
      add_into(in_n->grad, tmp);
    };
  }
  return out;
}

template <class T>
TensorT<T> upsample_trilinear2(const TensorT<T>& t) {
  const auto& s = t.shape();
  const int64_t bc = s[0] * s[1];
  TensorT<T> out =
      make_result<T>({s[0], s[1], s[2] * 2, s[3] * 2, s[4] * 2}, {t.node()});
  kernels::upsample2_forward(t.values().data(), out.values().data(), bc, s[2],
                             s[3], s[4]);
  if (out.requires_grad()) {
    NodePtr<T> in_n = t.node();
    out.node()->backward_fn = [in_n, bc, s](detail::NodeT<T>& self) {
      std::vector<T> tmp(in_n->values.size());
      kernels::upsample2_backward(self.grad.data(), tmp.data(), bc, s[2], s[3],
                                  s[4]);
      in_n->ensure_grad();
      add_into(in_n->grad, tmp);
    };
  }
  return out;
}

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3] || sa[4] != sb[4]) {
    fail(ErrorCode::ShapeMismatch, "concat_channels non-channel dims differ");
  }
  const int64_t spatial = sa[2] * sa[3] * sa[4];
  const int64_t ca = sa[1], cb = sb[1];
  TensorT<T> out =
      make_result<T>({sa[0], ca + cb, sa[2], sa[3], sa[4]},
                     {a.node(), b.node()});
  for (int64_t bb = 0; bb < sa[0]; ++bb) {
    std::copy_n(a.values().data() + bb * ca * spatial, ca * spatial,
                out.values().data() + bb * (ca + cb) * spatial);
    std::copy_n(b.values().data() + bb * cb * spatial, cb * spatial,
                out.values().data() + (bb * (ca + cb) + ca) * spatial);
  }
  if (out.requires_grad()) {
    NodePtr<T> a_n = a.node(), b_n = b.node();
    out.node()->backward_fn = [a_n, b_n, ca, cb, spatial,
                               batch = sa[0]](detail::NodeT<T>& self) {
      if (a_n->requires_grad) {
        a_n->ensure_grad();
        for (int64_t bb = 0; bb < batch; ++bb) {
          const T* g = self.grad.data() + bb * (ca + cb) * spatial;
          T* dst = a_n->grad.data() + bb * ca * spatial;
          for (int64_t i = 0; i < ca * spatial; ++i) dst[i] += g[i];
        }
      }
      if (b_n->requires_grad) {
        b_n->ensure_grad();
        for (int64_t bb = 0; bb < batch; ++bb) {
          const T* g = self.grad.data() + (bb * (ca + cb) + ca) * spatial;
          T* dst = b_n->grad.data() + bb * cb * spatial;
          for (int64_t i = 0; i < cb * spatial; ++i) dst[i] += g[i];
        }
      }
    };
  }
  return out;
}

template <class T>
TensorT<T> softmax_channels(const TensorT<T>& t) {
  const auto& s = t.shape();
  const int64_t spatial = s[2] * s[3] * s[4];
  TensorT<T> out = make_result<T>(s, {t.node()});
  kernels::softmax_channels_forward(t.values().data(), out.values().data(),
                                    s[0], s[1], spatial);
  if (out.requires_grad()) {
    NodePtr<T> in_n = t.node();
    out.node()->backward_fn = [in_n, b = s[0], c = s[1],
                               spatial](detail::NodeT<T>& self) {
      std::vector<T> tmp(in_n->values.size());
      kernels::softmax_channels_backward(self.grad.data(), self.values.data(),
                                         tmp.data(), b, c, spatial);
      in_n->ensure_grad();
      add_into(in_n->grad, tmp);
    };
  }
  return out;
}

template <class T>
TensorT<T> sum_all(const TensorT<T>& t) {
  TensorT<T> out = make_result<T>({1, 1, 1, 1, 1}, {t.node()});
  out.values()[0] = T(kernels::block_sum(t.values().data(), t.numel()));
  if (out.requires_grad()) {
    NodePtr<T> in_n = t.node();
    out.node()->backward_fn = [in_n](detail::NodeT<T>& self) {
      in_n->ensure_grad();
      const T g = self.grad[0];
      for (T& v : in_n->grad) v += g;
    };
  }
  return out;
}

namespace {
constexpr double kProbFloor = 1e-12;
}

template <class T>
TensorT<T> dice_ce_loss(const TensorT<T>& probs, const TensorT<T>& target,
                        const std::vector<double>& class_weights) {
  const auto& s = probs.shape();
  if (s != target.shape()) {
    fail(ErrorCode::ShapeMismatch, "probs and target shapes differ");
  }
  const int64_t B = s[0], C = s[1];
  const int64_t spatial = s[2] * s[3] * s[4];
  if (C < 2) fail(ErrorCode::ShapeMismatch, "need at least 2 classes");
  if (int64_t(class_weights.size()) != C) {
    fail(ErrorCode::BadConfig, "class weight count must equal class count");
  }
  const int64_t nvox = B * spatial;

  const T* p = probs.values().data();
  const T* t = target.values().data();
  std::vector<double> S(size_t(C), 0.0), P(size_t(C), 0.0), Tc(size_t(C), 0.0);
  double ce_sum = 0.0;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t b = 0; b < B; ++b) {
      const T* ps = p + (b * C + c) * spatial;
      const T* ts = t + (b * C + c) * spatial;
      S[size_t(c)] += kernels::block_dot(ps, ts, spatial);
      P[size_t(c)] += kernels::block_sum(ps, spatial);
      Tc[size_t(c)] += kernels::block_sum(ts, spatial);
      ce_sum += class_weights[size_t(c)] *
                block_reduce(spatial, [&](int64_t i) {
                  double tv = double(ts[i]);
                  return tv == 0.0
                             ? 0.0
                             : tv * std::log(std::max(double(ps[i]), kProbFloor));
                });
    }
  }
  double dice_mean = 0.0;
  for (int64_t c = 1; c < C; ++c) {
    double U = P[size_t(c)] + Tc[size_t(c)];
    dice_mean += (2.0 * S[size_t(c)] + 1.0) / (U + 1.0);
  }
  dice_mean /= double(C - 1);
  double loss = (1.0 - dice_mean) - ce_sum / double(nvox);

  TensorT<T> out = make_result<T>({1, 1, 1, 1, 1}, {probs.node()});
  out.values()[0] = T(loss);
  if (out.requires_grad()) {
    NodePtr<T> p_n = probs.node(), t_n = target.node();
    out.node()->backward_fn = [p_n, t_n, S, P, Tc, class_weights, B, C,
                               spatial, nvox](detail::NodeT<T>& self) {
      const double g = double(self.grad[0]);
      p_n->ensure_grad();
      const T* pv = p_n->values.data();
      const T* tv = t_n->values.data();
      T* gp = p_n->grad.data();
      for (int64_t c = 0; c < C; ++c) {
        const double U1 = P[size_t(c)] + Tc[size_t(c)] + 1.0;
        const double Snum = 2.0 * S[size_t(c)] + 1.0;
        const double w = class_weights[size_t(c)];
        const bool fg = c >= 1;
        for (int64_t b = 0; b < B; ++b) {
          const int64_t base = (b * C + c) * spatial;
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
          for (int64_t i = 0; i < spatial; ++i) {
            const double pi = double(pv[base + i]);
            const double ti = double(tv[base + i]);
            double d = 0.0;
            if (fg) {
              // d/dp of -(1/(C-1)) * (2S+1)/(U+1)
              d += -(2.0 * ti * U1 - Snum) / (U1 * U1) / double(C - 1);
            }
            if (ti != 0.0 && pi > kProbFloor) {
              d += -w * ti / (double(nvox) * pi);
            }
            gp[base + i] += T(g * d);
          }
        }
      }
    };
  }
  return out;
}

template <class T>
TensorT<T> weighted_sum_scalars(const std::vector<TensorT<T>>& xs,
                                const std::vector<double>& ws) {
  if (xs.empty() || xs.size() != ws.size()) {
    fail(ErrorCode::BadConfig, "weighted_sum_scalars needs matching terms");
  }
  std::vector<NodePtr<T>> parents;
  double v = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    v += ws[i] * double(xs[i].scalar());
    parents.push_back(xs[i].node());
  }
  TensorT<T> out = make_result<T>({1, 1, 1, 1, 1}, parents);
  out.values()[0] = T(v);
  if (out.requires_grad()) {
    out.node()->backward_fn = [parents, ws](detail::NodeT<T>& self) {
      for (size_t i = 0; i < parents.size(); ++i) {
        if (!parents[i]->requires_grad && !parents[i]->backward_fn) continue;
        parents[i]->ensure_grad();
        parents[i]->grad[0] += T(double(self.grad[0]) * ws[i]);
      }
    };
  }
  return out;
}

template <class T>
TensorT<T> downsample2(const TensorT<T>& t) {
  const auto& s = t.shape();
  if (s[2] % 2 || s[3] % 2 || s[4] % 2) {
    fail(ErrorCode::OddDimension, "downsample2 requires even spatial dims");
  }
  TensorT<T> out =
      make_result<T>({s[0], s[1], s[2] / 2, s[3] / 2, s[4] / 2}, {t.node()});
  kernels::downsample2_mean(t.values().data(), out.values().data(),
                            s[0] * s[1], s[2], s[3], s[4]);
  if (out.requires_grad()) {
    NodePtr<T> in_n = t.node();
    out.node()->backward_fn = [in_n, s](detail::NodeT<T>& self) {
      in_n->ensure_grad();
      const int64_t d = s[2], h = s[3], w = s[4];
      const int64_t oh = h / 2, ow = w / 2;
      const int64_t bc = s[0] * s[1];
      T* gi = in_n->grad.data();
      const T* go = self.grad.data();
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
      for (int64_t c = 0; c < bc; ++c) {
        for (int64_t z = 0; z < d; ++z) {
          for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
              gi[((c * d + z) * h + y) * w + x] +=
                  T(double(go[((c * (d / 2) + z / 2) * oh + y / 2) * ow + x / 2]) /
                    8.0);
            }
          }
        }
      }
    };
  }
  return out;
}

template <class T>
void backward(const TensorT<T>& loss) {
  if (!loss.defined()) fail(ErrorCode::NoGraph, "undefined loss tensor");
  if (loss.numel() != 1) {
    fail(ErrorCode::ShapeMismatch, "backward expects a scalar loss");
  }
  auto root = loss.node();
  if (!root->backward_fn && !root->requires_grad) {
    fail(ErrorCode::NoGraph, "loss has no recorded graph");
  }

  // reverse topological order via iterative post-order DFS
  std::vector<detail::NodeT<T>*> order;
  std::unordered_set<detail::NodeT<T>*> visited;
  struct Frame {
    detail::NodeT<T>* node;
    size_t next_parent;
  };
  std::vector<Frame> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::NodeT<T>* p = f.node->parents[f.next_parent++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::NodeT<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

#define GLIOMA_INSTANTIATE_OPS(T)                                              \
  template TensorT<T> conv3d<T>(const TensorT<T>&, const TensorT<T>&,          \
                                const TensorT<T>&);                            \
  template TensorT<T> relu<T>(const TensorT<T>&);                              \
  template TensorT<T> instance_norm<T>(const TensorT<T>&, double);             \
  template TensorT<T> max_pool3d<T>(const TensorT<T>&);                        \
  template TensorT<T> upsample_trilinear2<T>(const TensorT<T>&);               \
  template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&); \
  template TensorT<T> softmax_channels<T>(const TensorT<T>&);                  \
  template TensorT<T> sum_all<T>(const TensorT<T>&);                           \
  template TensorT<T> dice_ce_loss<T>(const TensorT<T>&, const TensorT<T>&,    \
                                      const std::vector<double>&);             \
  template TensorT<T> weighted_sum_scalars<T>(const std::vector<TensorT<T>>&,  \
                                              const std::vector<double>&);     \
  template TensorT<T> downsample2<T>(const TensorT<T>&);                \
  template void backward<T>(const TensorT<T>&);

GLIOMA_INSTANTIATE_OPS(float)
GLIOMA_INSTANTIATE_OPS(double)

}  // namespace glioma
