#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "glioma/checkpoint.hpp"
#include "glioma/metrics.hpp"
#include "glioma/phantom.hpp"
#include "glioma/rng.hpp"
#include "glioma/train.hpp"
#include "glioma/volume_io.hpp"

using namespace glioma;
namespace fs = std::filesystem;

namespace {

// closed-form parameter total for one U-shaped path
int64_t path_param_count(int levels, int base, int in_ch, int classes) {
  auto ch = [&](int l) { return int64_t(base) << l; };
  int64_t total = 0;
  for (int l = 0; l < levels; ++l) {
    int64_t cin = l == 0 ? in_ch : ch(l - 1);
    total += ch(l) * cin * 27 + ch(l);    // first conv + bias
    total += ch(l) * ch(l) * 27 + ch(l);  // second conv + bias
  }
  for (int l = 0; l < levels - 1; ++l) {
    int64_t cin = ch(l) + ch(l + 1);
    total += ch(l) * cin * 27 + ch(l);
    total += ch(l) * ch(l) * 27 + ch(l);
  }
  total += int64_t(classes) * ch(0) + classes;  // 1x1x1 head
  return total;
}

std::vector<MultimodalCase> phantom_cases(int n, std::array<int32_t, 3> dims,
                                          double rmin, double rmax,
                                          uint64_t seed = 0) {
  PhantomSpec spec;
  spec.dims = dims;
  spec.seed = seed;
  spec.tumor_radius_min = rmin;
  spec.tumor_radius_max = rmax;
  std::vector<MultimodalCase> cases;
  for (int i = 0; i < n; ++i) {
    PhantomCase pc = generate_case(spec, i);
    MultimodalCase prepped =
        preprocess_case(pc.data, pc.data,
                        {pc.data.case_id, 256, 3, false, false});
    prepped.labels = pc.data.labels;
    cases.push_back(std::move(prepped));
  }
  return cases;
}

double wt_dice(const LabelVolume& pred, const LabelVolume& truth) {
  return overlap_metrics(derive_region_mask(pred, Region::WT),
                         derive_region_mask(truth, Region::WT))
      .dice;
}

}  // namespace

TEST_CASE("build_model validates its configuration") {
  PathConfig ok{3, 8, InputResolution::Original};
  PathConfig global_ok{2, 8, InputResolution::Half};
  CHECK_NOTHROW(build_model<float>(ok, global_ok));

  SUBCASE("zero base channels") {
    PathConfig bad{3, 0, InputResolution::Original};
    try {
      build_model<float>(bad, global_ok);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadConfig);
    }
  }
  SUBCASE("single level") {
    PathConfig bad{1, 8, InputResolution::Original};
    CHECK_THROWS_AS(build_model<float>(bad, global_ok), Error);
  }
}

TEST_CASE("parameter count matches the closed-form sum") {
  DualPathModel model = build_model<float>({3, 8, InputResolution::Original},
                                           {2, 8, InputResolution::Half});
  int64_t expected = path_param_count(3, 8, 4, 4) +
                     path_param_count(2, 8, 4, 4) +
                     (4 * 8 + 4);  // fusion conv over 8 concatenated channels
  CHECK(model.parameter_count() == expected);

  SUBCASE("Average fusion freezes the fusion parameters") {
    DualPathModel avg =
        build_model<float>({3, 8, InputResolution::Original},
                           {2, 8, InputResolution::Half}, 0, FusionMode::Average);
    CHECK(avg.parameter_count() == expected - (4 * 8 + 4));
    CHECK(avg.all_parameters().size() == avg.parameters().size() + 2);
  }
}

TEST_CASE("desk-scale forward produces 4-channel logits at input resolution") {
  DualPathModel model = build_model<float>({3, 8, InputResolution::Original},
                                           {2, 8, InputResolution::Half}, 7);
  Tensor5 input = Tensor5::zeros({1, 4, 64, 64, 64});
  ForwardResultT<float> fw = forward(model, input);
  CHECK(fw.fused_logits.shape() == Tensor5::Shape{1, 4, 64, 64, 64});
  CHECK(fw.local_logits.shape() == Tensor5::Shape{1, 4, 64, 64, 64});
  CHECK(fw.global_logits.shape() == Tensor5::Shape{1, 4, 64, 64, 64});
}

TEST_CASE("zero input with zero-initialized biases ties every class") {
  DualPathModel model = build_model<float>({2, 4, InputResolution::Original},
                                           {2, 4, InputResolution::Half}, 3);
  Tensor5 input = Tensor5::zeros({1, 4, 8, 8, 8});
  ForwardResultT<float> fw = forward(model, input);
  for (float v : fw.fused_logits.values()) CHECK(v == 0.0f);

  // through predict_labels the tie resolves to class 0 everywhere
  MultimodalCase c;
  c.case_id = "ZERO";
  for (int m = 0; m < kModalityCount; ++m) c.modality(m) = make_grid({8, 8, 8});
  LabelVolume pred = predict_labels(model, c);
  for (uint8_t v : pred.values) CHECK(v == 0);
}

TEST_CASE("class indices map back to BraTS labels") {
  // zero every parameter, then push fused channel 3: every voxel must come
  // out as label 4
  DualPathModel model = build_model<float>({2, 4, InputResolution::Original},
                                           {2, 4, InputResolution::Half}, 1);
  for (auto* p : model.all_parameters()) {
    std::fill(p->tensor.values().begin(), p->tensor.values().end(), 0.0f);
  }
  model.fusion_bias.tensor.at(0, 3, 0, 0, 0) = 5.0f;
  MultimodalCase c;
  c.case_id = "BIAS";
  for (int m = 0; m < kModalityCount; ++m) c.modality(m) = make_grid({8, 8, 8});
  LabelVolume pred = predict_labels(model, c);
  for (uint8_t v : pred.values) CHECK(v == 4);
}

TEST_CASE("fusion with averaging weights reproduces identical path logits") {
  DualPathModel model = build_model<float>({2, 4, InputResolution::Original},
                                           {2, 4, InputResolution::Half}, 5);
  // fresh models start with exact 0.5/0.5 fusion weights
  Rng rng(9);
  Tensor5 logits = Tensor5::zeros({1, 4, 4, 4, 4});
  for (auto& v : logits.values()) v = float(rng.normal());
  Tensor5 fused = fuse_logits(model, logits, logits);
  CHECK(std::memcmp(fused.values().data(), logits.values().data(),
                    logits.values().size() * 4) == 0);
}

TEST_CASE("forward rejects dims the paths cannot pool") {
  DualPathModel model = build_model<float>({3, 8, InputResolution::Original},
                                           {2, 8, InputResolution::Half});
  Tensor5 bad = Tensor5::zeros({1, 4, 6, 8, 8});
  CHECK_THROWS_AS(forward(model, bad), Error);
}

TEST_CASE("training requires labelled, nonempty datasets") {
  DualPathModel model = build_model<float>({2, 4, InputResolution::Original},
                                           {2, 4, InputResolution::Half});
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.volume_dims = {16, 16, 16};
  SUBCASE("empty dataset") {
    std::vector<MultimodalCase> empty;
    try {
      train(model, empty, cfg);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyDataset);
    }
  }
  SUBCASE("missing labels") {
    auto cases = phantom_cases(1, {16, 16, 16}, 2.0, 3.0);
    cases[0].labels.reset();
    CHECK_THROWS_AS(train(model, cases, cfg), Error);
  }
}

TEST_CASE("loss decreases over training and curves are reproducible") {
  auto cases = phantom_cases(2, {16, 16, 16}, 2.0, 3.0, 21);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.volume_dims = {16, 16, 16};
  cfg.seed = 5;

  auto run = [&] {
    DualPathModel model = build_model<float>(
        {2, 4, InputResolution::Original}, {2, 4, InputResolution::Half},
        cfg.seed);
    return train(model, cases, cfg).epoch_loss;
  };
  std::vector<double> a = run();
  REQUIRE(a.size() == 4);
  CHECK(a.back() < a.front());
  std::vector<double> b = run();
  CHECK(a == b);  // bit-identical under a fixed seed
}

TEST_CASE("a single phantom is memorized") {
  auto cases = phantom_cases(1, {32, 32, 32}, 4.5, 5.5, 33);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.lr = 1e-2;  // 30 whole-volume steps total, so take big ones
  cfg.volume_dims = {32, 32, 32};
  cfg.seed = 11;
  DualPathModel model = build_model<float>({3, 8, InputResolution::Original},
                                           {2, 8, InputResolution::Half},
                                           cfg.seed);
  train(model, cases, cfg);
  LabelVolume pred = predict_labels(model, cases[0]);
  CHECK(wt_dice(pred, *cases[0].labels) > 0.95);
}

TEST_CASE("prediction inverts padding for arbitrary dims") {
  DualPathModel model = build_model<float>({2, 4, InputResolution::Original},
                                           {2, 4, InputResolution::Half}, 17);
  PhantomSpec spec;
  spec.dims = {18, 14, 10};
  spec.tumor_radius_min = 1.5;
  spec.tumor_radius_max = 2.0;
  PhantomCase pc = generate_case(spec, 0);
  LabelVolume pred = predict_labels(model, pc.data);
  CHECK(pred.dims == pc.data.dims());
}

TEST_CASE("checkpoints round-trip the model") {
  fs::path dir = fs::temp_directory_path() / "glioma_ckpt_test";
  fs::create_directories(dir);
  fs::path path = dir / "model.ckpt";

  DualPathModel model = build_model<float>({2, 4, InputResolution::Original},
                                           {2, 4, InputResolution::Half}, 23);
  model.trained_steps = 17;
  save_checkpoint(path, model);
  DualPathModel back = load_checkpoint(path);
  CHECK(back.seed == model.seed);
  CHECK(back.trained_steps == 17);
  auto pa = model.all_parameters();
  auto pb = back.all_parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->tensor.values() == pb[i]->tensor.values());
  }

  SUBCASE("a missing version tag is rejected") {
    auto bytes = read_file_bytes(path);
    // manifest begins after magic+length; corrupt the version key
    std::string needle = "\"version\"";
    auto it = std::search(bytes.begin(), bytes.end(), needle.begin(), needle.end());
    REQUIRE(it != bytes.end());
    *(it + 1) = 'x';
    write_file_bytes(path, bytes);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
  }
  fs::remove_all(dir);
}
