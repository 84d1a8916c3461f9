#pragma once

#include <string>
#include <vector>

#include "glioma/tensor.hpp"

namespace glioma {

template <class T>
struct ParameterT {
  std::string name;
  TensorT<T> tensor;  // leaf, requires_grad
  std::vector<T> moment1, moment2;
  int64_t step = 0;

  static ParameterT make(std::string name, typename TensorT<T>::Shape shape) {
    ParameterT p;
    p.name = std::move(name);
    p.tensor = TensorT<T>::zeros(shape, /*requires_grad=*/true);
    p.moment1.assign(p.tensor.values().size(), T(0));
    p.moment2.assign(p.tensor.values().size(), T(0));
    return p;
  }
};

using Parameter = ParameterT<float>;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update; gradients are cleared after the step.
template <class T>
void adam_step(const std::vector<ParameterT<T>*>& params,
               const AdamConfig& cfg);

}  // namespace glioma
