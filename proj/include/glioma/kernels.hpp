#pragma once

#include <cstdint>

namespace glioma::kernels {

// Every kernel exists twice: a plain serial reference in kernels::serial and
// an OpenMP version in kernels::par. The parallel versions distribute
// independent output elements and keep each element's reduction order
// identical to the reference, so the two produce equal results and runs are
// reproducible at any thread count. The unqualified functions dispatch on
// the process-wide flag below.
bool parallel_enabled();
void set_parallel(bool enabled);

// 3D cross-correlation, stride 1, same padding (pad = k/2), k odd.
// Layouts: in (B,Cin,D,H,W), w (Cout,Cin,k,k,k), bias (Cout), out (B,Cout,D,H,W).
struct Conv3dShape {
  int64_t batch, cin, cout, depth, height, width;
  int kernel;
};

// trilinear x2 upsampling: per-axis source indices and weights for one
// output coordinate; shared by both implementations and by the backward
// gather
inline void upsample2_axis(int64_t i, int64_t n, int64_t& lo, int64_t& hi,
                           double& w_hi) {
  double src = (double(i) + 0.5) / 2.0 - 0.5;
  if (src <= 0) {
    lo = hi = 0;
    w_hi = 0;
  } else if (src >= double(n - 1)) {
    lo = hi = n - 1;
    w_hi = 0;
  } else {
    lo = int64_t(src);
    hi = lo + 1;
    w_hi = src - double(lo);
  }
}

inline constexpr int64_t kReduceBlock = 4096;

#define GLIOMA_KERNEL_DECLS                                                    \
  template <class T>                                                           \
  void conv3d_forward(const T* in, const T* w, const T* bias, T* out,          \
                      const Conv3dShape& s);                                   \
  template <class T>                                                           \
  void conv3d_backward_input(const T* gout, const T* w, T* gin,                \
                             const Conv3dShape& s);                            \
  template <class T>                                                           \
  void conv3d_backward_weight(const T* gout, const T* in, T* gw,               \
                              const Conv3dShape& s);                           \
  template <class T>                                                           \
  void conv3d_backward_bias(const T* gout, T* gb, const Conv3dShape& s);       \
  template <class T>                                                           \
  void relu_forward(const T* in, T* out, int64_t n);                           \
  template <class T>                                                           \
  void relu_backward(const T* gout, const T* in, T* gin, int64_t n);           \
  /* per (b,c) over spatial size S: out = (x-mean)*istd, istd = 1/sqrt(var+eps) */ \
  template <class T>                                                           \
  void instance_norm_forward(const T* in, T* out, T* mean, T* istd,            \
                             int64_t bc, int64_t spatial, double eps);         \
  template <class T>                                                           \
  void instance_norm_backward(const T* gout, const T* xhat, const T* istd,     \
                              T* gin, int64_t bc, int64_t spatial);            \
  /* window 2 stride 2; ties go to the lexicographically first index */       \
  template <class T>                                                           \
  void maxpool2_forward(const T* in, T* out, int32_t* argmax, int64_t bc,      \
                        int64_t d, int64_t h, int64_t w);                      \
  template <class T>                                                           \
  void maxpool2_backward(const T* gout, const int32_t* argmax, T* gin,         \
                         int64_t bc, int64_t d, int64_t h, int64_t w);         \
  /* trilinear x2; dims are the input dims */                                  \
  template <class T>                                                           \
  void upsample2_forward(const T* in, T* out, int64_t bc, int64_t d,           \
                         int64_t h, int64_t w);                                \
  template <class T>                                                           \
  void upsample2_backward(const T* gout, T* gin, int64_t bc, int64_t d,        \
                          int64_t h, int64_t w);                               \
  /* 2x2x2 block mean; dims are the input dims (must be even) */               \
  template <class T>                                                           \
  void downsample2_mean(const T* in, T* out, int64_t bc, int64_t d,            \
                        int64_t h, int64_t w);                                 \
  /* softmax over the channel axis, values laid out (B,C,S) */                 \
  template <class T>                                                           \
  void softmax_channels_forward(const T* in, T* out, int64_t b, int64_t c,     \
                                int64_t spatial);                              \
  template <class T>                                                           \
  void softmax_channels_backward(const T* gout, const T* soft, T* gin,         \
                                 int64_t b, int64_t c, int64_t spatial);       \
  /* deterministic sum: fixed 4096-element blocks combined in order */        \
  template <class T>                                                           \
  double block_sum(const T* v, int64_t n);                                     \
  /* sum of f(p,t) per element; used by the dice/CE reductions */              \
  template <class T>                                                           \
  double block_dot(const T* a, const T* b, int64_t n);

namespace serial {
GLIOMA_KERNEL_DECLS
}
namespace par {
GLIOMA_KERNEL_DECLS
}

// dispatchers
template <class T>
void conv3d_forward(const T* in, const T* w, const T* bias, T* out,
                    const Conv3dShape& s) {
  parallel_enabled() ? par::conv3d_forward(in, w, bias, out, s)
                     : serial::conv3d_forward(in, w, bias, out, s);
}
template <class T>
void conv3d_backward_input(const T* gout, const T* w, T* gin,
                           const Conv3dShape& s) {
  parallel_enabled() ? par::conv3d_backward_input(gout, w, gin, s)
                     : serial::conv3d_backward_input(gout, w, gin, s);
}
template <class T>
void conv3d_backward_weight(const T* gout, const T* in, T* gw,
                            const Conv3dShape& s) {
  parallel_enabled() ? par::conv3d_backward_weight(gout, in, gw, s)
                     : serial::conv3d_backward_weight(gout, in, gw, s);
}
template <class T>
void conv3d_backward_bias(const T* gout, T* gb, const Conv3dShape& s) {
  parallel_enabled() ? par::conv3d_backward_bias(gout, gb, s)
                     : serial::conv3d_backward_bias(gout, gb, s);
}
template <class T>
void relu_forward(const T* in, T* out, int64_t n) {
  parallel_enabled() ? par::relu_forward(in, out, n)
                     : serial::relu_forward(in, out, n);
}
template <class T>
void relu_backward(const T* gout, const T* in, T* gin, int64_t n) {
  parallel_enabled() ? par::relu_backward(gout, in, gin, n)
                     : serial::relu_backward(gout, in, gin, n);
}
template <class T>
void instance_norm_forward(const T* in, T* out, T* mean, T* istd, int64_t bc,
                           int64_t spatial, double eps) {
  parallel_enabled() ? par::instance_norm_forward(in, out, mean, istd, bc, spatial, eps)
                     : serial::instance_norm_forward(in, out, mean, istd, bc, spatial, eps);
}
template <class T>
void instance_norm_backward(const T* gout, const T* xhat, const T* istd,
                            T* gin, int64_t bc, int64_t spatial) {
  parallel_enabled() ? par::instance_norm_backward(gout, xhat, istd, gin, bc, spatial)
                     : serial::instance_norm_backward(gout, xhat, istd, gin, bc, spatial);
}
template <class T>
void maxpool2_forward(const T* in, T* out, int32_t* argmax, int64_t bc,
                      int64_t d, int64_t h, int64_t w) {
  parallel_enabled() ? par::maxpool2_forward(in, out, argmax, bc, d, h, w)
                     : serial::maxpool2_forward(in, out, argmax, bc, d, h, w);
}
template <class T>
void maxpool2_backward(const T* gout, const int32_t* argmax, T* gin,
                       int64_t bc, int64_t d, int64_t h, int64_t w) {
  parallel_enabled() ? par::maxpool2_backward(gout, argmax, gin, bc, d, h, w)
                     : serial::maxpool2_backward(gout, argmax, gin, bc, d, h, w);
}
template <class T>
void upsample2_forward(const T* in, T* out, int64_t bc, int64_t d, int64_t h,
                       int64_t w) {
  parallel_enabled() ? par::upsample2_forward(in, out, bc, d, h, w)
                     : serial::upsample2_forward(in, out, bc, d, h, w);
}
template <class T>
void upsample2_backward(const T* gout, T* gin, int64_t bc, int64_t d,
                        int64_t h, int64_t w) {
  parallel_enabled() ? par::upsample2_backward(gout, gin, bc, d, h, w)
                     : serial::upsample2_backward(gout, gin, bc, d, h, w);
}
template <class T>
void downsample2_mean(const T* in, T* out, int64_t bc, int64_t d, int64_t h,
                      int64_t w) {
  parallel_enabled() ? par::downsample2_mean(in, out, bc, d, h, w)
                     : serial::downsample2_mean(in, out, bc, d, h, w);
}
template <class T>
void softmax_channels_forward(const T* in, T* out, int64_t b, int64_t c,
                              int64_t spatial) {
  parallel_enabled() ? par::softmax_channels_forward(in, out, b, c, spatial)
                     : serial::softmax_channels_forward(in, out, b, c, spatial);
}
template <class T>
void softmax_channels_backward(const T* gout, const T* soft, T* gin, int64_t b,
                               int64_t c, int64_t spatial) {
  parallel_enabled() ? par::softmax_channels_backward(gout, soft, gin, b, c, spatial)
                     : serial::softmax_channels_backward(gout, soft, gin, b, c, spatial);
}
template <class T>
double block_sum(const T* v, int64_t n) {
  return parallel_enabled() ? par::block_sum(v, n) : serial::block_sum(v, n);
}
template <class T>
double block_dot(const T* a, const T* b, int64_t n) {
  return parallel_enabled() ? par::block_dot(a, b, n)
                            : serial::block_dot(a, b, n);
}

}  // namespace glioma::kernels
