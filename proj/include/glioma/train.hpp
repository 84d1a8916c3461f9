#pragma once

#include <filesystem>

#include "glioma/model.hpp"
#include "glioma/preprocess.hpp"
#include "glioma/voxel_grid.hpp"

namespace glioma {

struct TrainConfig {
  int epochs = 30;
  double lr = 1e-3;
  uint64_t seed = 1;
  std::array<double, 4> class_weights{1.0, 1.0, 1.0, 1.0};
  std::array<int32_t, 3> volume_dims{64, 64, 64};
  int checkpoint_cadence = 0;   // epochs between checkpoints, 0 = final only
  double aux_loss_weight = 0.5; // weight of each single-path loss
  double early_stop_loss = 0.0; // stop once epoch mean loss drops below, 0 = off
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean loss per epoch
};

// internal class indices {0,1,2,3} <-> BraTS labels {0,1,2,4}
inline int label_to_class(uint8_t label) { return label == 4 ? 3 : label; }
inline uint8_t class_to_label(int cls) { return cls == 3 ? 4 : uint8_t(cls); }

Tensor5 case_to_tensor(const MultimodalCase& c, std::array<int32_t, 3> dims,
                       CropPadOffset* offset_out = nullptr);
Tensor5 labels_to_onehot(const LabelVolume& labels, std::array<int32_t, 3> dims,
                         int class_count);

// Joint training of both paths and the fusion head: loss on fused softmax
// plus aux_loss_weight times each path's own loss.
TrainResult train(DualPathModel& model, const std::vector<MultimodalCase>& dataset,
                  const TrainConfig& cfg,
                  const std::filesystem::path& checkpoint_dir = {});

enum class PathSelector { Fused, LocalOnly, GlobalOnly };

// Pads the case up to the model's dims multiple, takes the per-voxel argmax
// (ties to the lowest class), maps classes back to BraTS labels, and inverts
// the padding so the output matches the input dims.
LabelVolume predict_labels(DualPathModel& model, const MultimodalCase& c,
                           PathSelector selector = PathSelector::Fused);

}  // namespace glioma
