#include "glioma/model.hpp"

#include <cmath>

#include "glioma/rng.hpp"

namespace glioma {

namespace {

template <class T>
void he_init(ParameterT<T>& p, int64_t fan_in, Rng& rng) {
  double std = std::sqrt(2.0 / double(fan_in));
  for (T& v : p.tensor.values()) v = T(rng.normal() * std);
}

template <class T>
ConvBlockT<T> make_block(const std::string& name, int cin, int cout, int k,
                         Rng& rng) {
  ConvBlockT<T> b;
  b.weight = ParameterT<T>::make(name + ".w", {cout, cin, k, k, k});
  b.bias = ParameterT<T>::make(name + ".b", {1, cout, 1, 1, 1});
  he_init(b.weight, int64_t(cin) * k * k * k, rng);
  return b;
}

template <class T>
UNetPathT<T> build_path(const std::string& name, const PathConfig& cfg,
                        int in_channels, int out_channels, Rng& rng) {
  if (cfg.levels < 2) fail(ErrorCode::BadConfig, name + ": levels must be >= 2");
  if (cfg.base_channels < 4) {
    fail(ErrorCode::BadConfig, name + ": base_channels must be >= 4");
  }
  UNetPathT<T> p;
  p.cfg = cfg;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  for (int l = 0; l < cfg.levels; ++l) {
    int ch = p.level_channels(l);
    int cin = l == 0 ? in_channels : p.level_channels(l - 1);
    p.encoder.push_back(
        {make_block<T>(name + ".enc" + std::to_string(l) + ".0", cin, ch, 3, rng),
         make_block<T>(name + ".enc" + std::to_string(l) + ".1", ch, ch, 3, rng)});
  }
  for (int l = cfg.levels - 2; l >= 0; --l) {
    int ch = p.level_channels(l);
    int cin = ch + p.level_channels(l + 1);  // skip + upsampled
    p.decoder.insert(
        p.decoder.begin(),
        {make_block<T>(name + ".dec" + std::to_string(l) + ".0", cin, ch, 3, rng),
         make_block<T>(name + ".dec" + std::to_string(l) + ".1", ch, ch, 3, rng)});
  }
  int top = p.level_channels(0);
  p.head_weight =
      ParameterT<T>::make(name + ".head.w", {out_channels, top, 1, 1, 1});
  p.head_bias = ParameterT<T>::make(name + ".head.b", {1, out_channels, 1, 1, 1});
  he_init(p.head_weight, top, rng);
  return p;
}

template <class T>
void collect_path_params(UNetPathT<T>& p, std::vector<ParameterT<T>*>& out) {
  for (auto& level : p.encoder) {
    for (auto& blk : level) {
      out.push_back(&blk.weight);
      out.push_back(&blk.bias);
    }
  }
  for (auto& level : p.decoder) {
    for (auto& blk : level) {
      out.push_back(&blk.weight);
      out.push_back(&blk.bias);
    }
  }
  out.push_back(&p.head_weight);
  out.push_back(&p.head_bias);
}

template <class T>
TensorT<T> conv_in_relu(const TensorT<T>& x, ConvBlockT<T>& blk) {
  return relu(instance_norm(conv3d(x, blk.weight.tensor, blk.bias.tensor)));
}

template <class T>
TensorT<T> run_path(UNetPathT<T>& p, const TensorT<T>& input) {
  std::vector<TensorT<T>> skips;
  TensorT<T> feats = input;
  for (int l = 0; l < p.cfg.levels; ++l) {
    if (l > 0) feats = max_pool3d(feats);
    feats = conv_in_relu(feats, p.encoder[size_t(l)][0]);
    feats = conv_in_relu(feats, p.encoder[size_t(l)][1]);
    if (l < p.cfg.levels - 1) skips.push_back(feats);
  }
  for (int l = p.cfg.levels - 2; l >= 0; --l) {
    feats = upsample_trilinear2(feats);
    feats = concat_channels(skips[size_t(l)], feats);
    feats = conv_in_relu(feats, p.decoder[size_t(l)][0]);
    feats = conv_in_relu(feats, p.decoder[size_t(l)][1]);
  }
  return conv3d(feats, p.head_weight.tensor, p.head_bias.tensor);
}

}  // namespace

template <class T>
std::vector<ParameterT<T>*> DualPathModelT<T>::parameters() {
  std::vector<ParameterT<T>*> out;
  collect_path_params(local_path, out);
  collect_path_params(global_path, out);
  if (fusion == FusionMode::ConcatConv) {
    out.push_back(&fusion_weight);
    out.push_back(&fusion_bias);
  }
  return out;
}

template <class T>
std::vector<ParameterT<T>*> DualPathModelT<T>::all_parameters() {
  std::vector<ParameterT<T>*> out;
  collect_path_params(local_path, out);
  collect_path_params(global_path, out);
  out.push_back(&fusion_weight);
  out.push_back(&fusion_bias);
  return out;
}

template <class T>
int64_t DualPathModelT<T>::parameter_count() {
  int64_t n = 0;
  for (auto* p : parameters()) n += p->tensor.numel();
  return n;
}

template <class T>
DualPathModelT<T> build_model(const PathConfig& local,
                              const PathConfig& global_cfg, uint64_t seed,
                              FusionMode fusion, int in_channels,
                              int class_count) {
  if (class_count < 2) fail(ErrorCode::BadConfig, "class_count must be >= 2");
  DualPathModelT<T> m;
  m.local_cfg = local;
  m.local_cfg.input_resolution = InputResolution::Original;
  m.global_cfg = global_cfg;
  m.global_cfg.input_resolution = InputResolution::Half;
  m.class_count = class_count;
  m.fusion = fusion;
  m.seed = seed;
  Rng rng(Rng::derive(seed, 0x6d6f64656cULL));
  m.local_path = build_path<T>("local", m.local_cfg, in_channels, class_count, rng);
  m.global_path =
      build_path<T>("global", m.global_cfg, in_channels, class_count, rng);
  m.fusion_weight = ParameterT<T>::make("fusion.w",
                                        {class_count, 2 * class_count, 1, 1, 1});
  m.fusion_bias = ParameterT<T>::make("fusion.b", {1, class_count, 1, 1, 1});
  // start as plain averaging of the two paths; Average mode keeps it frozen
  for (int c = 0; c < class_count; ++c) {
    m.fusion_weight.tensor.at(c, c, 0, 0, 0) = T(0.5);
    m.fusion_weight.tensor.at(c, class_count + c, 0, 0, 0) = T(0.5);
  }
  return m;
}

template <class T>
TensorT<T> fuse_logits(DualPathModelT<T>& model, const TensorT<T>& local_logits,
                       const TensorT<T>& global_logits) {
  TensorT<T> both = concat_channels(local_logits, global_logits);
  return conv3d(both, model.fusion_weight.tensor, model.fusion_bias.tensor);
}

template <class T>
ForwardResultT<T> forward(DualPathModelT<T>& model, const TensorT<T>& input) {
  const auto& s = input.shape();
  const int m = model.dims_multiple();
  if (s[2] % m || s[3] % m || s[4] % m) {
    fail(ErrorCode::ShapeMismatch,
         "input dims must be divisible by " + std::to_string(m));
  }
  ForwardResultT<T> r;
  r.local_logits = run_path(model.local_path, input);
  TensorT<T> half = downsample2(input);
  r.global_logits = upsample_trilinear2(run_path(model.global_path, half));
  r.fused_logits = fuse_logits(model, r.local_logits, r.global_logits);
  return r;
}

template std::vector<ParameterT<float>*> DualPathModelT<float>::parameters();
template std::vector<ParameterT<double>*> DualPathModelT<double>::parameters();
template std::vector<ParameterT<float>*> DualPathModelT<float>::all_parameters();
template std::vector<ParameterT<double>*> DualPathModelT<double>::all_parameters();
template int64_t DualPathModelT<float>::parameter_count();
template int64_t DualPathModelT<double>::parameter_count();
template DualPathModelT<float> build_model<float>(const PathConfig&,
                                                  const PathConfig&, uint64_t,
                                                  FusionMode, int, int);
template DualPathModelT<double> build_model<double>(const PathConfig&,
                                                    const PathConfig&, uint64_t,
                                                    FusionMode, int, int);
template ForwardResultT<float> forward<float>(DualPathModelT<float>&,
                                              const TensorT<float>&);
template ForwardResultT<double> forward<double>(DualPathModelT<double>&,
                                                const TensorT<double>&);
template TensorT<float> fuse_logits<float>(DualPathModelT<float>&,
                                           const TensorT<float>&,
                                           const TensorT<float>&);
template TensorT<double> fuse_logits<double>(DualPathModelT<double>&,
                                             const TensorT<double>&,
                                             const TensorT<double>&);

}  // namespace glioma
