#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#include "glioma/kernels.hpp"

// Reference kernels: straightforward loops, one output element at a time,
// 64-bit accumulators. The OpenMP versions must reproduce these bit for bit.

namespace glioma::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool enabled) {
  g_parallel.store(enabled, std::memory_order_relaxed);
}

namespace serial {

template <class T>
void conv3d_forward(const T* in, const T* w, const T* bias, T* out,
                    const Conv3dShape& s) {
  const int64_t D = s.depth, H = s.height, W = s.width;
  const int k = s.kernel, pad = s.kernel / 2;
  for (int64_t b = 0; b < s.batch; ++b) {
    for (int64_t co = 0; co < s.cout; ++co) {
      T* o = out + ((b * s.cout + co) * D) * H * W;
      for (int64_t z = 0; z < D; ++z) {
        for (int64_t y = 0; y < H; ++y) {
          for (int64_t x = 0; x < W; ++x) {
            double acc = bias ? double(bias[co]) : 0.0;
            for (int64_t ci = 0; ci < s.cin; ++ci) {
              const T* ip = in + ((b * s.cin + ci) * D) * H * W;
              const T* wp = w + ((co * s.cin + ci) * k) * k * k;
              for (int kz = 0; kz < k; ++kz) {
                int64_t iz = z + kz - pad;
                if (iz < 0 || iz >= D) continue;
                for (int ky = 0; ky < k; ++ky) {
                  int64_t iy = y + ky - pad;
                  if (iy < 0 || iy >= H) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    int64_t ix = x + kx - pad;
                    if (ix < 0 || ix >= W) continue;
                    acc += double(wp[(kz * k + ky) * k + kx]) *
                           double(ip[(iz * H + iy) * W + ix]);
                  }
                }
              }
            }
            o[(z * H + y) * W + x] = T(acc);
          }
        }
      }
    }
  }
}

template <class T>
void conv3d_backward_input(const T* gout, const T* w, T* gin,
                           const Conv3dShape& s) {
  const int64_t D = s.depth, H = s.height, W = s.width;
  const int k = s.kernel, pad = s.kernel / 2;
  for (int64_t b = 0; b < s.batch; ++b) {
    for (int64_t ci = 0; ci < s.cin; ++ci) {
      T* gi = gin + ((b * s.cin + ci) * D) * H * W;
      for (int64_t z = 0; z < D; ++z) {
        for (int64_t y = 0; y < H; ++y) {
          for (int64_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int64_t co = 0; co < s.cout; ++co) {
              const T* go = gout + ((b * s.cout + co) * D) * H * W;
              const T* wp = w + ((co * s.cin + ci) * k) * k * k;
              for (int kz = 0; kz < k; ++kz) {
                int64_t oz = z - (kz - pad);
                if (oz < 0 || oz >= D) continue;
                for (int ky = 0; ky < k; ++ky) {
                  int64_t oy = y - (ky - pad);
                  if (oy < 0 || oy >= H) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    int64_t ox = x - (kx - pad);
                    if (ox < 0 || ox >= W) continue;
                    acc += double(wp[(kz * k + ky) * k + kx]) *
                           double(go[(oz * H + oy) * W + ox]);
                  }
                }
              }
            }
            gi[(z * H + y) * W + x] = T(acc);
          }
        }
      }
    }
  }
}

template <class T>
void conv3d_backward_weight(const T* gout, const T* in, T* gw,
                            const Conv3dShape& s) {
  const int64_t D = s.depth, H = s.height, W = s.width;
  const int k = s.kernel, pad = s.kernel / 2;
  for (int64_t co = 0; co < s.cout; ++co) {
    for (int64_t ci = 0; ci < s.cin; ++ci) {
      for (int kz = 0; kz < k; ++kz) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            for (int64_t b = 0; b < s.batch; ++b) {
              const T* go = gout + ((b * s.cout + co) * D) * H * W;
              const T* ip = in + ((b * s.cin + ci) * D) * H * W;
              for (int64_t z = 0; z < D; ++z) {
                int64_t iz = z + kz - pad;
                if (iz < 0 || iz >= D) continue;
                for (int64_t y = 0; y < H; ++y) {
                  int64_t iy = y + ky - pad;
                  if (iy < 0 || iy >= H) continue;
                  for (int64_t x = 0; x < W; ++x) {
                    int64_t ix = x + kx - pad;
                    if (ix < 0 || ix >= W) continue;
                    acc += double(go[(z * H + y) * W + x]) *
                           double(ip[(iz * H + iy) * W + ix]);
                  }
                }
              }
            }
            gw[(((co * s.cin + ci) * k + kz) * k + ky) * k + kx] = T(acc);
          }
        }
      }
    }
  }
}

template <class T>
void conv3d_backward_bias(const T* gout, T* gb, const Conv3dShape& s) {
  const int64_t spatial = s.depth * s.height * s.width;
  for (int64_t co = 0; co < s.cout; ++co) {
    double acc = 0.0;
    for (int64_t b = 0; b < s.batch; ++b) {
      const T* go = gout + (b * s.cout + co) * spatial;
      for (int64_t i = 0; i < spatial; ++i) acc += double(go[i]);
    }
    gb[co] = T(acc);
  }
}

template <class T>
void relu_forward(const T* in, T* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <class T>
void relu_backward(const T* gout, const T* in, T* gin, int64_t n) {
  for (int64_t i = 0; i < n; ++i) gin[i] = in[i] > T(0) ? gout[i] : T(0);
}

template <class T>
void instance_norm_forward(const T* in, T* out, T* mean, T* istd, int64_t bc,
                           int64_t spatial, double eps) {
  for (int64_t c = 0; c < bc; ++c) {
    const T* x = in + c * spatial;
    T* o = out + c * spatial;
    double sum = 0.0;
    for (int64_t i = 0; i < spatial; ++i) sum += double(x[i]);
    double m = sum / double(spatial);
    double ss = 0.0;
    for (int64_t i = 0; i < spatial; ++i) {
      double d = double(x[i]) - m;
      ss += d * d;
    }
    double inv = 1.0 / std::sqrt(ss / double(spatial) + eps);
    mean[c] = T(m);
    istd[c] = T(inv);
    for (int64_t i = 0; i < spatial; ++i) o[i] = T((double(x[i]) - m) * inv);
  }
}

template <class T>
void instance_norm_backward(const T* gout, const T* xhat, const T* istd,
                            T* gin, int64_t bc, int64_t spatial) {
  for (int64_t c = 0; c < bc; ++c) {
    const T* g = gout + c * spatial;
    const T* y = xhat + c * spatial;
    T* gi = gin + c * spatial;
    double s1 = 0.0, s2 = 0.0;
    for (int64_t i = 0; i < spatial; ++i) {
      s1 += double(g[i]);
      s2 += double(g[i]) * double(y[i]);
    }
    double m1 = s1 / double(spatial), m2 = s2 / double(spatial);
    double inv = double(istd[c]);
    for (int64_t i = 0; i < spatial; ++i) {
      gi[i] = T(inv * (double(g[i]) - m1 - double(y[i]) * m2));
    }
  }
}

template <class T>
void maxpool2_forward(const T* in, T* out, int32_t* argmax, int64_t bc,
                      int64_t d, int64_t h, int64_t w) {
  const int64_t od = d / 2, oh = h / 2, ow = w / 2;
  for (int64_t c = 0; c < bc; ++c) {
    const T* x = in + c * d * h * w;
    T* o = out + c * od * oh * ow;
    int32_t* am = argmax + c * od * oh * ow;
    for (int64_t z = 0; z < od; ++z) {
      for (int64_t y = 0; y < oh; ++y) {
        for (int64_t xx = 0; xx < ow; ++xx) {
          T best{};
          int64_t best_idx = -1;
          for (int dz = 0; dz < 2; ++dz) {
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                int64_t idx =
                    ((2 * z + dz) * h + 2 * y + dy) * w + 2 * xx + dx;
                if (best_idx < 0 || x[idx] > best) {
                  best = x[idx];
                  best_idx = idx;
                }
              }
            }
          }
          o[(z * oh + y) * ow + xx] = best;
          am[(z * oh + y) * ow + xx] = int32_t(best_idx);
        }
      }
    }
  }
}

template <class T>
void maxpool2_backward(const T* gout, const int32_t* argmax, T* gin,
                       int64_t bc, int64_t d, int64_t h, int64_t w) {
  const int64_t od = d / 2, oh = h / 2, ow = w / 2;
  for (int64_t c = 0; c < bc; ++c) {
    const T* go = gout + c * od * oh * ow;
    const int32_t* am = argmax + c * od * oh * ow;
    T* gi = gin + c * d * h * w;
    for (int64_t z = 0; z < d; ++z) {
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t xx = 0; xx < w; ++xx) {
          int64_t in_idx = (z * h + y) * w + xx;
          int64_t out_idx = ((z / 2) * oh + y / 2) * ow + xx / 2;
          gi[in_idx] = am[out_idx] == int32_t(in_idx) ? go[out_idx] : T(0);
        }
      }
    }
  }
}

template <class T>
void upsample2_forward(const T* in, T* out, int64_t bc, int64_t d, int64_t h,
                       int64_t w) {
  const int64_t od = 2 * d, oh = 2 * h, ow = 2 * w;
  for (int64_t c = 0; c < bc; ++c) {
    const T* x = in + c * d * h * w;
    T* o = out + c * od * oh * ow;
    for (int64_t z = 0; z < od; ++z) {
      int64_t z0, z1;
      double wz;
      upsample2_axis(z, d, z0, z1, wz);
      for (int64_t y = 0; y < oh; ++y) {
        int64_t y0, y1;
        double wy;
        upsample2_axis(y, h, y0, y1, wy);
        for (int64_t xx = 0; xx < ow; ++xx) {
          int64_t x0, x1;
          double wx;
          upsample2_axis(xx, w, x0, x1, wx);
          auto at = [&](int64_t a, int64_t b2, int64_t c2) {
            return double(x[(c2 * h + b2) * w + a]);
          };
          double v = (1 - wz) * ((1 - wy) * ((1 - wx) * at(x0, y0, z0) +
                                             wx * at(x1, y0, z0)) +
                                 wy * ((1 - wx) * at(x0, y1, z0) +
                                       wx * at(x1, y1, z0))) +
                     wz * ((1 - wy) * ((1 - wx) * at(x0, y0, z1) +
                                       wx * at(x1, y0, z1)) +
                           wy * ((1 - wx) * at(x0, y1, z1) +
                                 wx * at(x1, y1, z1)));
          o[(z * oh + y) * ow + xx] = T(v);
        }
      }
    }
  }
}

// gather form: every input voxel sums the output voxels it fed, in fixed
// (z,y,x) candidate order, so the scatter-free version is deterministic
template <class T>
void upsample2_backward(const T* gout, T* gin, int64_t bc, int64_t d,
                        int64_t h, int64_t w) {
  const int64_t od = 2 * d, oh = 2 * h, ow = 2 * w;
  for (int64_t c = 0; c < bc; ++c) {
    const T* go = gout + c * od * oh * ow;
    T* gi = gin + c * d * h * w;
    for (int64_t z = 0; z < d; ++z) {
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (int64_t oz = std::max<int64_t>(0, 2 * z - 2);
               oz <= std::min(od - 1, 2 * z + 3); ++oz) {
            int64_t z0, z1;
            double wz;
            upsample2_axis(oz, d, z0, z1, wz);
            double fz = (z0 == z ? 1 - wz : 0) + (z1 == z ? wz : 0);
            if (fz == 0) continue;
            for (int64_t oy = std::max<int64_t>(0, 2 * y - 2);
                 oy <= std::min(oh - 1, 2 * y + 3); ++oy) {
              int64_t y0, y1;
              double wy;
              upsample2_axis(oy, h, y0, y1, wy);
              double fy = (y0 == y ? 1 - wy : 0) + (y1 == y ? wy : 0);
              if (fy == 0) continue;
              for (int64_t ox = std::max<int64_t>(0, 2 * xx - 2);
                   ox <= std::min(ow - 1, 2 * xx + 3); ++ox) {
                int64_t x0, x1;
                double wx;
                upsample2_axis(ox, w, x0, x1, wx);
                double fx = (x0 == xx ? 1 - wx : 0) + (x1 == xx ? wx : 0);
                if (fx == 0) continue;
                acc += fz * fy * fx * double(go[(oz * oh + oy) * ow + ox]);
              }
            }
          }
          gi[(z * h + y) * w + xx] = T(acc);
        }
      }
    }
  }
}

template <class T>
void downsample2_mean(const T* in, T* out, int64_t bc, int64_t d, int64_t h,
                      int64_t w) {
  const int64_t od = d / 2, oh = h / 2, ow = w / 2;
  for (int64_t c = 0; c < bc; ++c) {
    const T* x = in + c * d * h * w;
    T* o = out + c * od * oh * ow;
    for (int64_t z = 0; z < od; ++z) {
      for (int64_t y = 0; y < oh; ++y) {
        for (int64_t xx = 0; xx < ow; ++xx) {
          double s = 0.0;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                s += double(x[((2 * z + dz) * h + 2 * y + dy) * w + 2 * xx + dx]);
          o[(z * oh + y) * ow + xx] = T(s / 8.0);
        }
      }
    }
  }
}

template <class T>
void softmax_channels_forward(const T* in, T* out, int64_t b, int64_t c,
                              int64_t spatial) {
  for (int64_t bb = 0; bb < b; ++bb) {
    const T* x = in + bb * c * spatial;
    T* o = out + bb * c * spatial;
    for (int64_t i = 0; i < spatial; ++i) {
      double mx = double(x[i]);
      for (int64_t ch = 1; ch < c; ++ch) {
        mx = std::max(mx, double(x[ch * spatial + i]));
      }
      double sum = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) {
        sum += std::exp(double(x[ch * spatial + i]) - mx);
      }
      for (int64_t ch = 0; ch < c; ++ch) {
        o[ch * spatial + i] =
            T(std::exp(double(x[ch * spatial + i]) - mx) / sum);
      }
    }
  }
}

template <class T>
void softmax_channels_backward(const T* gout, const T* soft, T* gin, int64_t b,
                               int64_t c, int64_t spatial) {
  for (int64_t bb = 0; bb < b; ++bb) {
    const T* g = gout + bb * c * spatial;
    const T* s = soft + bb * c * spatial;
    T* gi = gin + bb * c * spatial;
    for (int64_t i = 0; i < spatial; ++i) {
      double dot = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) {
        dot += double(g[ch * spatial + i]) * double(s[ch * spatial + i]);
      }
      for (int64_t ch = 0; ch < c; ++ch) {
        gi[ch * spatial + i] = T(double(s[ch * spatial + i]) *
                                 (double(g[ch * spatial + i]) - dot));
      }
    }
  }
}

template <class T>
double block_sum(const T* v, int64_t n) {
  int64_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
  std::vector<double> partial(size_t(std::max<int64_t>(nblocks, 1)), 0.0);
  for (int64_t blk = 0; blk < nblocks; ++blk) {
    double s = 0.0;
    int64_t end = std::min(n, (blk + 1) * kReduceBlock);
    for (int64_t i = blk * kReduceBlock; i < end; ++i) s += double(v[i]);
    partial[size_t(blk)] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

template <class T>
double block_dot(const T* a, const T* b, int64_t n) {
  int64_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
  std::vector<double> partial(size_t(std::max<int64_t>(nblocks, 1)), 0.0);
  for (int64_t blk = 0; blk < nblocks; ++blk) {
    double s = 0.0;
    int64_t end = std::min(n, (blk + 1) * kReduceBlock);
    for (int64_t i = blk * kReduceBlock; i < end; ++i) {
      s += double(a[i]) * double(b[i]);
    }
    partial[size_t(blk)] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

#define GLIOMA_INSTANTIATE_KERNELS(T)                                          \
  template void conv3d_forward<T>(const T*, const T*, const T*, T*,            \
                                  const Conv3dShape&);                         \
  template void conv3d_backward_input<T>(const T*, const T*, T*,               \
                                         const Conv3dShape&);                  \
  template void conv3d_backward_weight<T>(const T*, const T*, T*,              \
                                          const Conv3dShape&);                 \
  template void conv3d_backward_bias<T>(const T*, T*, const Conv3dShape&);     \
  template void relu_forward<T>(const T*, T*, int64_t);                        \
  template void relu_backward<T>(const T*, const T*, T*, int64_t);             \
  template void instance_norm_forward<T>(const T*, T*, T*, T*, int64_t,        \
                                         int64_t, double);                     \
  template void instance_norm_backward<T>(const T*, const T*, const T*, T*,    \
                                          int64_t, int64_t);                   \
  template void maxpool2_forward<T>(const T*, T*, int32_t*, int64_t, int64_t,  \
                                    int64_t, int64_t);                         \
  template void maxpool2_backward<T>(const T*, const int32_t*, T*, int64_t,    \
                                     int64_t, int64_t, int64_t);               \
  template void upsample2_forward<T>(const T*, T*, int64_t, int64_t, int64_t,  \
                                     int64_t);                                 \
  template void upsample2_backward<T>(const T*, T*, int64_t, int64_t,          \
                                      int64_t, int64_t);                       \
  template void downsample2_mean<T>(const T*, T*, int64_t, int64_t, int64_t,   \
                                    int64_t);                                  \
  template void softmax_channels_forward<T>(const T*, T*, int64_t, int64_t,    \
                                            int64_t);                          \
  template void softmax_channels_backward<T>(const T*, const T*, T*, int64_t,  \
                                             int64_t, int64_t);                \
  template double block_sum<T>(const T*, int64_t);                             \
  template double block_dot<T>(const T*, const T*, int64_t);

GLIOMA_INSTANTIATE_KERNELS(float)
GLIOMA_INSTANTIATE_KERNELS(double)

}  // namespace serial
}  // namespace glioma::kernels
