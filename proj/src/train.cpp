#include "glioma/train.hpp"

#include <cmath>

#include "glioma/checkpoint.hpp"
#include "glioma/volume_io.hpp"

namespace glioma {

Tensor5 case_to_tensor(const MultimodalCase& c, std::array<int32_t, 3> dims,
                       CropPadOffset* offset_out) {
  Tensor5 t = Tensor5::zeros({1, kModalityCount, dims[2], dims[1], dims[0]});
  for (int m = 0; m < kModalityCount; ++m) {
    auto [grid, off] = crop_pad_to_shape(c.modality(m), dims);
    std::copy(grid.values.begin(), grid.values.end(),
              t.values().begin() + size_t(m) * size_t(grid.numel()));
    if (offset_out) *offset_out = off;
  }
  return t;
}

Tensor5 labels_to_onehot(const LabelVolume& labels,
                         std::array<int32_t, 3> dims, int class_count) {
  VoxelGrid as_grid = labels_to_grid(labels);
  auto [grid, off] = crop_pad_to_shape(as_grid, dims);
  int64_t n = grid.numel();
  Tensor5 t = Tensor5::zeros({1, class_count, dims[2], dims[1], dims[0]});
  for (int64_t i = 0; i < n; ++i) {
    int cls = label_to_class(uint8_t(grid.values[size_t(i)]));
    t.values()[size_t(cls) * size_t(n) + size_t(i)] = 1.0f;
  }
  return t;
}

TrainResult train(DualPathModel& model,
                  const std::vector<MultimodalCase>& dataset,
                  const TrainConfig& cfg,
                  const std::filesystem::path& checkpoint_dir) {
  if (dataset.empty()) fail(ErrorCode::EmptyDataset, "no training cases");
  for (const auto& c : dataset) {
    if (!c.labels) {
      fail(ErrorCode::DataError, "training case " + c.case_id + " has no labels");
    }
  }
  const int m = model.dims_multiple();
  for (int a = 0; a < 3; ++a) {
    if (cfg.volume_dims[a] % m) {
      fail(ErrorCode::BadConfig, "volume dims must be divisible by " +
                                     std::to_string(m));
    }
  }

  std::vector<Tensor5> inputs, targets;
  inputs.reserve(dataset.size());
  targets.reserve(dataset.size());
  for (const auto& c : dataset) {
    inputs.push_back(case_to_tensor(c, cfg.volume_dims));
    targets.push_back(
        labels_to_onehot(*c.labels, cfg.volume_dims, model.class_count));
  }

  std::vector<double> weights(cfg.class_weights.begin(),
                              cfg.class_weights.end());
  weights.resize(size_t(model.class_count), 1.0);
  auto params = model.parameters();
  AdamConfig adam{cfg.lr};

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
      ForwardResultT<float> fw = forward(model, inputs[i]);
      Tensor5 fused_loss =
          dice_ce_loss(softmax_channels(fw.fused_logits), targets[i], weights);
      Tensor5 local_loss =
          dice_ce_loss(softmax_channels(fw.local_logits), targets[i], weights);
      Tensor5 global_loss =
          dice_ce_loss(softmax_channels(fw.global_logits), targets[i], weights);
      Tensor5 total = weighted_sum_scalars<float>(
          {fused_loss, local_loss, global_loss},
          {1.0, cfg.aux_loss_weight, cfg.aux_loss_weight});
      double lv = double(total.scalar());
      if (!std::isfinite(lv)) {
        fail(ErrorCode::NonFiniteLoss,
             "loss became non-finite at epoch " + std::to_string(epoch) +
                 ", case " + dataset[i].case_id);
      }
      backward(total);
      adam_step(params, adam);
      model.trained_steps += 1;
      loss_sum += lv;
    }
    double epoch_mean = loss_sum / double(inputs.size());
    result.epoch_loss.push_back(epoch_mean);
    if (!checkpoint_dir.empty() && cfg.checkpoint_cadence > 0 &&
        epoch % cfg.checkpoint_cadence == 0) {
      save_checkpoint(checkpoint_dir /
                          ("checkpoint_epoch_" + std::to_string(epoch) + ".ckpt"),
                      model);
    }
    if (cfg.early_stop_loss > 0.0 && epoch_mean < cfg.early_stop_loss) break;
  }
  if (!checkpoint_dir.empty()) {
    save_checkpoint(checkpoint_dir / "checkpoint_final.ckpt", model);
  }
  return result;
}

LabelVolume predict_labels(DualPathModel& model, const MultimodalCase& c,
                           PathSelector selector) {
  const int m = model.dims_multiple();
  std::array<int32_t, 3> dims = c.dims();
  std::array<int32_t, 3> padded;
  for (int a = 0; a < 3; ++a) {
    padded[a] = int32_t((dims[a] + m - 1) / m * m);
  }
  CropPadOffset off;
  Tensor5 input = case_to_tensor(c, padded, &off);
  ForwardResultT<float> fw = forward(model, input);
  const Tensor5& logits = selector == PathSelector::Fused ? fw.fused_logits
                          : selector == PathSelector::LocalOnly
                              ? fw.local_logits
                              : fw.global_logits;

  const int64_t spatial = int64_t(padded[0]) * padded[1] * padded[2];
  const int C = model.class_count;
  LabelVolume out;
  out.dims = padded;
  out.spacing = c.flair.header.spacing;
  out.values.resize(size_t(spatial));
  const float* v = logits.values().data();
  for (int64_t i = 0; i < spatial; ++i) {
    int best = 0;
    float best_v = v[i];
    for (int cls = 1; cls < C; ++cls) {
      float cv = v[size_t(cls) * size_t(spatial) + size_t(i)];
      if (cv > best_v) {  // ties keep the lowest class index
        best_v = cv;
        best = cls;
      }
    }
    out.values[size_t(i)] = class_to_label(best);
  }
  return uncrop_labels(out, off);
}

}  // namespace glioma
