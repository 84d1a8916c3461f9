#include <algorithm>
#include <cmath>
#include <vector>

#include "glioma/kernels.hpp"

// OpenMP kernels. Work is split over independent output elements only; each
// element's reduction runs serially in the same order as the reference
// kernel, so results match the serial versions bit for bit at any thread
// count.

namespace glioma::kernels::par {

template <class T>
void conv3d_forward(const T* in, const T* w, const T* bias, T* out,
                    const Conv3dShape& s) {
  const int64_t D = s.depth, H = s.height, W = s.width;
  const int k = s.kernel, pad = s.kernel / 2;
  const int64_t planes = s.batch * s.cout * D;
#pragma omp parallel
  {
    std::vector<double> acc(static_cast<size_t>(W));
#pragma omp for schedule(static)
    for (int64_t plane = 0; plane < planes; ++plane) {
      const int64_t z = plane % D;
      const int64_t co = (plane / D) % s.cout;
      const int64_t b = plane / (D * s.cout);
      T* o = out + ((b * s.cout + co) * D + z) * H * W;
      for (int64_t y = 0; y < H; ++y) {
        std::fill(acc.begin(), acc.end(), bias ? double(bias[co]) : 0.0);
        for (int64_t ci = 0; ci < s.cin; ++ci) {
          const T* ip = in + ((b * s.cin + ci) * D) * H * W;
          const T* wp = w + ((co * s.cin + ci) * k) * k * k;
          for (int kz = 0; kz < k; ++kz) {
            const int64_t iz = z + kz - pad;
            if (iz < 0 || iz >= D) continue;
            for (int ky = 0; ky < k; ++ky) {
              const int64_t iy = y + ky - pad;
              if (iy < 0 || iy >= H) continue;
              const T* row = ip + (iz * H + iy) * W;
              if (k == 3) {
                // one pass; each element still sees kx = 0,1,2 in order
                const double w0 = double(wp[(kz * 3 + ky) * 3]);
                const double w1 = double(wp[(kz * 3 + ky) * 3 + 1]);
                const double w2 = double(wp[(kz * 3 + ky) * 3 + 2]);
                acc[0] += w1 * double(row[0]);
                if (W > 1) acc[0] += w2 * double(row[1]);
                for (int64_t x = 1; x < W - 1; ++x) {
                  double a = acc[size_t(x)];
                  a += w0 * double(row[x - 1]);
                  a += w1 * double(row[x]);
                  a += w2 * double(row[x + 1]);
                  acc[size_t(x)] = a;
                }
                if (W > 1) {
                  acc[size_t(W - 1)] += w0 * double(row[W - 2]);
                  acc[size_t(W - 1)] += w1 * double(row[W - 1]);
                }
              } else {
                for (int kx = 0; kx < k; ++kx) {
                  const double wv = double(wp[(kz * k + ky) * k + kx]);
                  const int64_t off = kx - pad;
                  const int64_t xlo = std::max<int64_t>(0, -off);
                  const int64_t xhi = std::min<int64_t>(W, W - off);
                  const T* r = row + off;
                  for (int64_t x = xlo; x < xhi; ++x) {
                    acc[size_t(x)] += wv * double(r[x]);
                  }
                }
              }
            }
          }
        }
        T* orow = o + y * W;
        for (int64_t x = 0; x < W; ++x) orow[x] = T(acc[size_t(x)]);
      }
    }
  }
}

template <class T>
void conv3d_backward_input(const T* gout, const T* w, T* gin,
                           const Conv3dShape& s) {
  const int64_t D = s.depth, H = s.height, W = s.width;
  const int k = s.kernel, pad = s.kernel / 2;
  const int64_t planes = s.batch * s.cin * D;
#pragma omp parallel
  {
    std::vector<double> acc(static_cast<size_t>(W));
#pragma omp for schedule(static)
    for (int64_t plane = 0; plane < planes; ++plane) {
      const int64_t z = plane % D;
      const int64_t ci = (plane / D) % s.cin;
      const int64_t b = plane / (D * s.cin);
      T* gi = gin + ((b * s.cin + ci) * D + z) * H * W;
      for (int64_t y = 0; y < H; ++y) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int64_t co = 0; co < s.cout; ++co) {
          const T* go = gout + ((b * s.cout + co) * D) * H * W;
          const T* wp = w + ((co * s.cin + ci) * k) * k * k;
          for (int kz = 0; kz < k; ++kz) {
            const int64_t oz = z - (kz - pad);
            if (oz < 0 || oz >= D) continue;
            for (int ky = 0; ky < k; ++ky) {
              const int64_t oy = y - (ky - pad);
              if (oy < 0 || oy >= H) continue;
              const T* row = go + (oz * H + oy) * W;
              if (k == 3) {
                // ox = x - (kx - 1); kx order 0,1,2 per element
                const double w0 = double(wp[(kz * 3 + ky) * 3]);
                const double w1 = double(wp[(kz * 3 + ky) * 3 + 1]);
                const double w2 = double(wp[(kz * 3 + ky) * 3 + 2]);
                if (W > 1) acc[0] += w0 * double(row[1]);
                acc[0] += w1 * double(row[0]);
                for (int64_t x = 1; x < W - 1; ++x) {
                  double a = acc[size_t(x)];
                  a += w0 * double(row[x + 1]);
                  a += w1 * double(row[x]);
                  a += w2 * double(row[x - 1]);
                  acc[size_t(x)] = a;
                }
                if (W > 1) {
                  acc[size_t(W - 1)] += w1 * double(row[W - 1]);
                  acc[size_t(W - 1)] += w2 * double(row[W - 2]);
                }
              } else {
                for (int kx = 0; kx < k; ++kx) {
                  const double wv = double(wp[(kz * k + ky) * k + kx]);
                  const int64_t off = kx - pad;  // ox = x - off
                  const int64_t xlo = std::max<int64_t>(0, off);
                  const int64_t xhi = std::min<int64_t>(W, W + off);
                  const T* r = row - off;
                  for (int64_t x = xlo; x < xhi; ++x) {
                    acc[size_t(x)] += wv * double(r[x]);
                  }
                }
              }
            }
          }
        }
        T* grow = gi + y * W;
        for (int64_t x = 0; x < W; ++x) grow[x] = T(acc[size_t(x)]);
      }
    }
  }
}

template <class T>
void conv3d_backward_weight(const T* gout, const T* in, T* gw,
                            const Conv3dShape& s) {
  const int64_t D = s.depth, H = s.height, W = s.width;
  const int k = s.kernel, pad = s.kernel / 2;
  const int64_t pairs = s.cout * s.cin;
  const int kk = k * k * k;
#pragma omp parallel for schedule(static)
  for (int64_t pair = 0; pair < pairs; ++pair) {
    const int64_t co = pair / s.cin;
    const int64_t ci = pair % s.cin;
    std::vector<double> acc(size_t(kk), 0.0);
    for (int64_t b = 0; b < s.batch; ++b) {
      const T* go = gout + ((b * s.cout + co) * D) * H * W;
      const T* ip = in + ((b * s.cin + ci) * D) * H * W;
      for (int kz = 0; kz < k; ++kz) {
        const int64_t zlo = std::max<int64_t>(0, pad - kz);
        const int64_t zhi = std::min<int64_t>(D, D + pad - kz);
        for (int64_t z = zlo; z < zhi; ++z) {
          const int64_t iz = z + kz - pad;
          for (int ky = 0; ky < k; ++ky) {
            const int64_t ylo = std::max<int64_t>(0, pad - ky);
            const int64_t yhi = std::min<int64_t>(H, H + pad - ky);
            for (int64_t y = ylo; y < yhi; ++y) {
              const int64_t iy = y + ky - pad;
              const T* grow = go + (z * H + y) * W;
              const T* irow = ip + (iz * H + iy) * W;
              if (k == 3) {
                // three running dots in one pass; each accumulator still
                // sees x in ascending order
                double d0 = acc[size_t((kz * 3 + ky) * 3)];
                double d1 = acc[size_t((kz * 3 + ky) * 3 + 1)];
                double d2 = acc[size_t((kz * 3 + ky) * 3 + 2)];
                d1 += double(grow[0]) * double(irow[0]);
                if (W > 1) d2 += double(grow[0]) * double(irow[1]);
                for (int64_t x = 1; x < W - 1; ++x) {
                  const double g = double(grow[x]);
                  d0 += g * double(irow[x - 1]);
                  d1 += g * double(irow[x]);
                  d2 += g * double(irow[x + 1]);
                }
                if (W > 1) {
                  const double g = double(grow[W - 1]);
                  d0 += g * double(irow[W - 2]);
                  d1 += g * double(irow[W - 1]);
                }
                acc[size_t((kz * 3 + ky) * 3)] = d0;
                acc[size_t((kz * 3 + ky) * 3 + 1)] = d1;
                acc[size_t((kz * 3 + ky) * 3 + 2)] = d2;
              } else {
                for (int kx = 0; kx < k; ++kx) {
                  const int64_t off = kx - pad;
                  const int64_t xlo = std::max<int64_t>(0, -off);
                  const int64_t xhi = std::min<int64_t>(W, W - off);
                  double dot = acc[size_t((kz * k + ky) * k + kx)];
                  const T* ir = irow + off;
                  for (int64_t x = xlo; x < xhi; ++x) {
                    dot += double(grow[x]) * double(ir[x]);
                  }
                  acc[size_t((kz * k + ky) * k + kx)] = dot;
                }
              }
            }
          }
        }
      }
    }
    T* gwp = gw + pair * kk;
    for (int i = 0; i < kk; ++i) gwp[i] = T(acc[size_t(i)]);
  }
}

template <class T>
void conv3d_backward_bias(const T* gout, T* gb, const Conv3dShape& s) {
  const int64_t spatial = s.depth * s.height * s.width;
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <class T>
void relu_backward(const T* gout, const T* in, T* gin, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) gin[i] = in[i] > T(0) ? gout[i] : T(0);
}

template <class T>
void instance_norm_forward(const T* in, T* out, T* mean, T* istd, int64_t bc,
                           int64_t spatial, double eps) {
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for schedule(static)
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
  const int64_t planes = bc * od;
#pragma omp parallel for schedule(static)
  for (int64_t plane = 0; plane < planes; ++plane) {
    const int64_t z = plane % od;
    const int64_t c = plane / od;
    const T* x = in + c * d * h * w;
    T* o = out + c * od * oh * ow;
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

template <class T>
void upsample2_backward(const T* gout, T* gin, int64_t bc, int64_t d,
                        int64_t h, int64_t w) {
  const int64_t od = 2 * d, oh = 2 * h, ow = 2 * w;
  const int64_t planes = bc * d;
#pragma omp parallel for schedule(static)
  for (int64_t plane = 0; plane < planes; ++plane) {
    const int64_t z = plane % d;
    const int64_t c = plane / d;
    const T* go = gout + c * od * oh * ow;
    T* gi = gin + c * d * h * w;
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

template <class T>
void downsample2_mean(const T* in, T* out, int64_t bc, int64_t d, int64_t h,
                      int64_t w) {
  const int64_t od = d / 2, oh = h / 2, ow = w / 2;
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for schedule(static)
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
        o[ch * spatial + i] = T(std::exp(double(x[ch * spatial + i]) - mx) / sum);
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
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for schedule(static)
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

}  // namespace glioma::kernels::par
