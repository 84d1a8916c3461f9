#include "glioma/optim.hpp"

#include <cmath>

#include "glioma/kernels.hpp"

namespace glioma {

template <class T>
void adam_step(const std::vector<ParameterT<T>*>& params,
               const AdamConfig& cfg) {
  for (ParameterT<T>* p : params) {
    p->step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(p->step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(p->step));
    auto& vals = p->tensor.values();
    auto& grad = p->tensor.grad();  // allocates zeros if no backward ran
    const int64_t n = int64_t(vals.size());
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (int64_t i = 0; i < n; ++i) {
      const double g = double(grad[size_t(i)]);
      const double m = cfg.beta1 * double(p->moment1[size_t(i)]) +
                       (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * double(p->moment2[size_t(i)]) +
                       (1.0 - cfg.beta2) * g * g;
      p->moment1[size_t(i)] = T(m);
      p->moment2[size_t(i)] = T(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      vals[size_t(i)] =
          T(double(vals[size_t(i)]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
    p->tensor.zero_grad();
  }
}

template void adam_step<float>(const std::vector<ParameterT<float>*>&,
                               const AdamConfig&);
template void adam_step<double>(const std::vector<ParameterT<double>*>&,
                                const AdamConfig&);

}  // namespace glioma
