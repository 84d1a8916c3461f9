#include "glioma/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "glioma/png_io.hpp"
#include "glioma/volume_io.hpp"

namespace glioma {

void write_evaluation_csv(const std::filesystem::path& path,
                          const std::vector<CaseEvaluation>& cases) {
  std::ostringstream out;
  out << "case_id,region,dice,sensitivity,specificity,hd95,hd95_sentinel\n";
  out.precision(17);
  for (const auto& c : cases) {
    for (const auto& r : c.report.regions) {
      out << c.case_id << "," << region_name(r.region) << "," << r.dice << ","
          << r.sensitivity << "," << r.specificity << "," << r.hd95 << ","
          << (r.hd95_sentinel ? 1 : 0) << "\n";
    }
  }
  std::string s = out.str();
  write_file_bytes(path, std::vector<uint8_t>(s.begin(), s.end()));
}

std::vector<CaseEvaluation> read_evaluation_csv(
    const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<CaseEvaluation> out;
  std::string line;
  bool header = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::stringstream ss(line);
    std::string id, region, cell;
    std::getline(ss, id, ',');
    std::getline(ss, region, ',');
    RegionReport r;
    r.region = region == "WT"   ? Region::WT
               : region == "TC" ? Region::TC
                                : Region::ET;
    try {
      std::getline(ss, cell, ',');
      r.dice = std::stod(cell);
      std::getline(ss, cell, ',');
      r.sensitivity = std::stod(cell);
      std::getline(ss, cell, ',');
      r.specificity = std::stod(cell);
      std::getline(ss, cell, ',');
      r.hd95 = std::stod(cell);
      std::getline(ss, cell, ',');
      r.hd95_sentinel = cell == "1";
    } catch (const std::exception&) {
      fail(ErrorCode::DataError, "bad row in " + path.string());
    }
    if (out.empty() || out.back().case_id != id) {
      out.push_back({id, {}});
    }
    for (auto& slot : out.back().report.regions) {
      if (slot.region == r.region) slot = r;
    }
  }
  return out;
}

namespace {

struct MeanStd {
  double mean = 0, std = 0;
  int n = 0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  m.n = int(v.size());
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= double(v.size());
  for (double x : v) m.std += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(m.std / double(v.size()));
  return m;
}

struct RegionAggregate {
  MeanStd dice, sensitivity, specificity, hd95;
  int hd95_sentinel_count = 0;
};

RegionAggregate aggregate_region(const std::vector<CaseEvaluation>& cases,
                                 Region region) {
  std::vector<double> dice, sens, spec, hd;
  RegionAggregate agg;
  for (const auto& c : cases) {
    for (const auto& r : c.report.regions) {
      if (r.region != region) continue;
      dice.push_back(r.dice);
      sens.push_back(r.sensitivity);
      spec.push_back(r.specificity);
      if (r.hd95_sentinel) {
        agg.hd95_sentinel_count += 1;
      } else {
        hd.push_back(r.hd95);
      }
    }
  }
  agg.dice = mean_std(dice);
  agg.sensitivity = mean_std(sens);
  agg.specificity = mean_std(spec);
  agg.hd95 = mean_std(hd);
  return agg;
}

}  // namespace

void write_evaluation_json(const std::filesystem::path& path,
                           const std::vector<CaseEvaluation>& cases) {
  nlohmann::json j;
  j["cases"] = cases.size();
  for (Region region : {Region::ET, Region::WT, Region::TC}) {
    RegionAggregate agg = aggregate_region(cases, region);
    nlohmann::json r;
    r["dice"] = {{"mean", agg.dice.mean}, {"std", agg.dice.std}};
    r["sensitivity"] = {{"mean", agg.sensitivity.mean},
                        {"std", agg.sensitivity.std}};
    r["specificity"] = {{"mean", agg.specificity.mean},
                        {"std", agg.specificity.std}};
    // sentinel rows are excluded from the hd95 aggregate and counted apart
    r["hd95"] = {{"mean", agg.hd95.mean},
                 {"std", agg.hd95.std},
                 {"finite_cases", agg.hd95.n},
                 {"sentinel_count", agg.hd95_sentinel_count}};
    j["regions"][region_name(region)] = r;
  }
  std::string s = j.dump(2);
  s.push_back('\n');
  write_file_bytes(path, std::vector<uint8_t>(s.begin(), s.end()));
}

std::string render_segmentation_table(
    const std::vector<CaseEvaluation>& cases) {
  std::ostringstream out;
  out << "Segmentation results (" << cases.size() << " cases)\n";
  out << "            Dice                Sensitivity         Specificity         Hausdorff (95%)\n";
  out << "            ET     WT     TC    ET     WT     TC    ET     WT     TC    ET       WT       TC\n";
  const Region order[3] = {Region::ET, Region::WT, Region::TC};
  char buf[64];
  for (bool std_row : {false, true}) {
    out << (std_row ? "  STD     " : "  Mean    ");
    for (auto metric : {0, 1, 2, 3}) {
      for (Region region : order) {
        RegionAggregate agg = aggregate_region(cases, region);
        MeanStd m = metric == 0   ? agg.dice
                    : metric == 1 ? agg.sensitivity
                    : metric == 2 ? agg.specificity
                                  : agg.hd95;
        double v = std_row ? m.std : m.mean;
        std::snprintf(buf, sizeof(buf), metric == 3 ? "%-9.2f" : "%-7.3f", v);
        out << buf;
      }
    }
    out << "\n";
  }
  return out.str();
}

std::string render_survival_table(const SurvivalReport& report) {
  std::ostringstream out;
  out << "Survival prediction results (" << report.cases << " cases)\n";
  out << "  Accuracy  MSE         Median SE   STD SE      Spearman R\n";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "  %-9.3f %-11.1f %-11.1f %-11.1f %-9.3f\n",
                report.accuracy, report.mse, report.median_se, report.std_se,
                report.spearman_r);
  out << buf;
  return out.str();
}

namespace {

struct Rgb {
  uint8_t r, g, b;
};

// Fig. 3 palette: light blue necrosis/non-enhancing, green edema, red
// enhancing
Rgb label_color(uint8_t label) {
  switch (label) {
    case 1: return {110, 205, 255};
    case 2: return {40, 200, 70};
    case 4: return {230, 45, 45};
    default: return {0, 0, 0};
  }
}

std::array<int64_t, 3> tumor_centroid(const LabelVolume& labels) {
  const int64_t W = labels.dims[0], H = labels.dims[1], D = labels.dims[2];
  double sx = 0, sy = 0, sz = 0;
  int64_t n = 0;
  int64_t idx = 0;
  for (int64_t z = 0; z < D; ++z) {
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x, ++idx) {
        if (labels.values[size_t(idx)]) {
          sx += double(x);
          sy += double(y);
          sz += double(z);
          ++n;
        }
      }
    }
  }
  if (n == 0) return {W / 2, H / 2, D / 2};
  return {int64_t(sx / double(n)), int64_t(sy / double(n)),
          int64_t(sz / double(n))};
}

}  // namespace

void write_overlay_pngs(const MultimodalCase& c, const LabelVolume& labels,
                        const std::filesystem::path& out_dir,
                        const std::string& tag) {
  if (labels.dims != c.dims()) {
    fail(ErrorCode::ShapeMismatch, "labels dims disagree with case");
  }
  const VoxelGrid& bg = c.t2;
  const int64_t W = bg.width(), H = bg.height(), D = bg.depth();

  // window the background to its 1st..99th percentile
  std::vector<float> sorted = bg.values;
  std::sort(sorted.begin(), sorted.end());
  float lo = sorted[size_t(double(sorted.size() - 1) * 0.01)];
  float hi = sorted[size_t(double(sorted.size() - 1) * 0.99)];
  if (hi <= lo) hi = lo + 1.0f;
  auto shade = [&](float v) {
    double t = (double(v) - lo) / (double(hi) - lo);
    t = std::clamp(t, 0.0, 1.0);
    return uint8_t(t * 255.0);
  };

  auto centroid = tumor_centroid(labels);
  const double alpha = 0.55;
  auto blend = [&](uint8_t base, uint8_t over) {
    return uint8_t((1.0 - alpha) * double(base) + alpha * double(over));
  };

  struct View {
    const char* name;
    int64_t width, height;
  };
  const View views[3] = {{"axial", W, H}, {"sagittal", H, D}, {"coronal", W, D}};
  for (int v = 0; v < 3; ++v) {
    const View& view = views[v];
    std::vector<uint8_t> img(size_t(view.width) * size_t(view.height) * 3);
    for (int64_t row = 0; row < view.height; ++row) {
      for (int64_t col = 0; col < view.width; ++col) {
        int64_t x, y, z;
        if (v == 0) {  // axial: x-y plane at centroid z
          x = col; y = row; z = centroid[2];
        } else if (v == 1) {  // sagittal: y-z plane at centroid x
          x = centroid[0]; y = col; z = row;
        } else {  // coronal: x-z plane at centroid y
          x = col; y = centroid[1]; z = row;
        }
        uint8_t g = shade(bg.at(x, y, z));
        Rgb px{g, g, g};
        uint8_t lab = labels.values[size_t((z * H + y) * W + x)];
        if (lab) {
          Rgb col_rgb = label_color(lab);
          px = {blend(g, col_rgb.r), blend(g, col_rgb.g), blend(g, col_rgb.b)};
        }
        size_t off = (size_t(row) * size_t(view.width) + size_t(col)) * 3;
        img[off] = px.r;
        img[off + 1] = px.g;
        img[off + 2] = px.b;
      }
    }
    write_png_rgb(out_dir / (tag + "_" + view.name + ".png"), int(view.width),
                  int(view.height), img);
  }
}

}  // namespace glioma
