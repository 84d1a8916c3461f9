#pragma once

#include <cstdint>
#include <vector>

#include "glioma/optim.hpp"
#include "glioma/tensor.hpp"

namespace glioma {

enum class InputResolution { Original, Half };

struct PathConfig {
  int levels = 3;
  int base_channels = 8;
  InputResolution input_resolution = InputResolution::Original;
};

enum class FusionMode { ConcatConv, Average };

// two (conv3 -> instance_norm -> relu) blocks per level
template <class T>
struct ConvBlockT {
  ParameterT<T> weight, bias;
};

template <class T>
struct UNetPathT {
  PathConfig cfg;
  int in_channels = 4;
  int out_channels = 4;
  std::vector<std::array<ConvBlockT<T>, 2>> encoder;  // levels entries
  std::vector<std::array<ConvBlockT<T>, 2>> decoder;  // levels-1 entries
  ParameterT<T> head_weight, head_bias;               // 1x1x1 conv to classes

  int level_channels(int level) const {
    return cfg.base_channels << level;
  }
};

// Two U-shaped paths: one at original resolution for fine boundaries, one on
// the 2x-downsampled volume for a doubled field of view. Their 4-channel
// logits (the global path's upsampled back) are merged by a 1x1x1 fusion
// convolution; FusionMode::Average freezes that convolution at
// plain averaging for path-ablation comparisons.
template <class T>
struct DualPathModelT {
  PathConfig local_cfg, global_cfg;
  int class_count = 4;
  FusionMode fusion = FusionMode::ConcatConv;
  uint64_t seed = 0;
  int64_t trained_steps = 0;

  UNetPathT<T> local_path, global_path;
  ParameterT<T> fusion_weight, fusion_bias;

  // trainable parameters in a stable order (fusion excluded in Average mode)
  std::vector<ParameterT<T>*> parameters();
  // every parameter including a frozen fusion stage; checkpoint order
  std::vector<ParameterT<T>*> all_parameters();
  int64_t parameter_count();

  // input dims must be divisible by this
  int dims_multiple() const {
    int local_need = 1 << (local_cfg.levels - 1);
    int global_need = 1 << global_cfg.levels;
    return local_need > global_need ? local_need : global_need;
  }
};

using DualPathModel = DualPathModelT<float>;

template <class T>
DualPathModelT<T> build_model(const PathConfig& local,
                              const PathConfig& global_cfg,
                              uint64_t seed = 0,
                              FusionMode fusion = FusionMode::ConcatConv,
                              int in_channels = 4, int class_count = 4);

template <class T>
struct ForwardResultT {
  TensorT<T> fused_logits;
  TensorT<T> local_logits;
  TensorT<T> global_logits;  // upsampled back to original resolution
};

template <class T>
ForwardResultT<T> forward(DualPathModelT<T>& model, const TensorT<T>& input);

// the fusion stage alone, on two logit tensors at the same resolution
template <class T>
TensorT<T> fuse_logits(DualPathModelT<T>& model, const TensorT<T>& local_logits,
                       const TensorT<T>& global_logits);

}  // namespace glioma
