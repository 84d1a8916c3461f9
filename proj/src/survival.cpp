#include "glioma/survival.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "glioma/metrics.hpp"
#include "glioma/volume_io.hpp"

namespace glioma {

std::vector<double> SurvivalFeatures::vector() const {
  std::vector<double> v{norm_vol_wt, norm_vol_tc, norm_vol_et};
  for (int t = 0; t < kTissueCount; ++t) {
    for (int m = 0; m < kModalityCount; ++m) {
      v.push_back(mean_intensity[size_t(t)][size_t(m)]);
    }
  }
  return v;
}

std::vector<std::string> SurvivalFeatures::feature_names() {
  std::vector<std::string> names{"norm_vol_wt", "norm_vol_tc", "norm_vol_et"};
  const char* tissue[kTissueCount] = {"necrotic", "edema", "enhancing"};
  for (int t = 0; t < kTissueCount; ++t) {
    for (int m = 0; m < kModalityCount; ++m) {
      names.push_back(std::string("mean_") + tissue[t] + "_" +
                      kModalityNames[m]);
    }
  }
  return names;
}

const char* survival_class_name(SurvivalClass c) {
  switch (c) {
    case SurvivalClass::Short: return "short";
    case SurvivalClass::Medium: return "medium";
    case SurvivalClass::Long: return "long";
  }
  return "?";
}

SurvivalClass bucketize_days(double days) {
  if (days < 0) fail(ErrorCode::NegativeDays, "negative survival days");
  if (days < kShortMediumDays) return SurvivalClass::Short;
  if (days > kMediumLongDays) return SurvivalClass::Long;
  return SurvivalClass::Medium;
}

SurvivalFeatures extract_features(const MultimodalCase& c,
                                  const LabelVolume& labels,
                                  const BrainMask& brain) {
  if (labels.dims != c.dims() || brain.dims != c.dims()) {
    fail(ErrorCode::ShapeMismatch, "labels/brain dims disagree with case");
  }
  const int64_t brain_count = brain.count();
  if (brain_count == 0) fail(ErrorCode::EmptyBrainMask, "empty brain mask");

  const int64_t n = labels.numel();
  int64_t wt = 0, tc = 0, et = 0;
  std::array<int64_t, kTissueCount> tissue_count{0, 0, 0};
  std::array<std::array<double, kModalityCount>, kTissueCount> sums{};
  for (int64_t i = 0; i < n; ++i) {
    uint8_t v = labels.values[size_t(i)];
    if (v == 0) continue;
    wt += 1;
    tc += (v == 1 || v == 4);
    et += (v == 4);
    int t = v == 1 ? 0 : v == 2 ? 1 : 2;
    tissue_count[size_t(t)] += 1;
    for (int m = 0; m < kModalityCount; ++m) {
      sums[size_t(t)][size_t(m)] += double(c.modality(m).values[size_t(i)]);
    }
  }
  SurvivalFeatures f;
  f.norm_vol_wt = double(wt) / double(brain_count);
  f.norm_vol_tc = double(tc) / double(brain_count);
  f.norm_vol_et = double(et) / double(brain_count);
  for (int t = 0; t < kTissueCount; ++t) {
    f.tissue_present[size_t(t)] = tissue_count[size_t(t)] > 0;
    for (int m = 0; m < kModalityCount; ++m) {
      f.mean_intensity[size_t(t)][size_t(m)] =
          f.tissue_present[size_t(t)]
              ? sums[size_t(t)][size_t(m)] / double(tissue_count[size_t(t)])
              : 0.0;
    }
  }
  return f;
}

ForestModel train_survival(const std::vector<SurvivalTrainRecord>& records,
                           ForestConfig config) {
  if (records.size() < 10) {
    fail(ErrorCode::TooFewRecords, "need at least 10 survival records");
  }
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (const auto& r : records) {
    X.push_back(r.features.vector());
    y.push_back(r.true_days);
  }
  return fit_forest(X, y, config);
}

SurvivalReport evaluate_survival(const std::vector<SurvivalRecord>& records) {
  std::vector<double> pred, truth;
  int correct = 0;
  for (const auto& r : records) {
    if (!r.true_days) continue;
    pred.push_back(r.predicted_days);
    truth.push_back(*r.true_days);
    correct += bucketize_days(r.predicted_days) == bucketize_days(*r.true_days);
  }
  if (pred.size() < 2) {
    fail(ErrorCode::TooFewRecords, "need at least 2 records with truth");
  }
  SurvivalReport rep;
  rep.cases = int(pred.size());
  rep.accuracy = double(correct) / double(pred.size());
  SeSummary se = squared_error_summary(pred, truth);
  rep.mse = se.mse;
  rep.median_se = se.median_se;
  rep.std_se = se.std_se;
  rep.spearman_r = glioma::spearman_r(pred, truth);
  return rep;
}

CvScorer bucket_accuracy_scorer() {
  return [](std::span<const double> pred, std::span<const double> truth) {
    if (pred.empty()) return 0.0;
    int correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
      correct += bucketize_days(pred[i]) == bucketize_days(truth[i]);
    }
    return double(correct) / double(pred.size());
  };
}

// --- file formats -----------------------------------------------------------

void write_features_csv(const std::filesystem::path& path,
                        const std::vector<SurvivalTrainRecord>& records,
                        bool with_days) {
  std::ostringstream out;
  out << "case_id";
  for (const auto& n : SurvivalFeatures::feature_names()) out << "," << n;
  out << ",present_necrotic,present_edema,present_enhancing";
  if (with_days) out << ",days";
  out << "\n";
  out.precision(17);
  for (const auto& r : records) {
    out << r.case_id;
    for (double v : r.features.vector()) out << "," << v;
    for (int t = 0; t < kTissueCount; ++t) {
      out << "," << (r.features.tissue_present[size_t(t)] ? 1 : 0);
    }
    if (with_days) out << "," << r.true_days;
    out << "\n";
  }
  std::string s = out.str();
  write_file_bytes(path, std::vector<uint8_t>(s.begin(), s.end()));
}

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<SurvivalRecord>& records) {
  std::ostringstream out;
  out << "case_id,predicted_days\n";
  out.precision(17);
  for (const auto& r : records) {
    out << r.case_id << "," << r.predicted_days << "\n";
  }
  std::string s = out.str();
  write_file_bytes(path, std::vector<uint8_t>(s.begin(), s.end()));
}

namespace {

std::vector<std::vector<std::string>> read_csv(
    const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s, const std::string& context) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::DataError, "bad number '" + s + "' in " + context);
  }
}

}  // namespace

std::vector<SurvivalRecord> read_predictions_csv(
    const std::filesystem::path& path) {
  auto rows = read_csv(path);
  std::vector<SurvivalRecord> out;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (i == 0 && !rows[i].empty() && rows[i][0] == "case_id") continue;
    if (rows[i].size() < 2) {
      fail(ErrorCode::DataError, "short row in " + path.string());
    }
    SurvivalRecord r;
    r.case_id = rows[i][0];
    r.predicted_days = parse_double(rows[i][1], path.string());
    r.predicted_class = bucketize_days(r.predicted_days);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::pair<std::string, double>> read_truth_csv(
    const std::filesystem::path& path) {
  auto rows = read_csv(path);
  std::vector<std::pair<std::string, double>> out;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (i == 0 && !rows[i].empty() && rows[i][0] == "case_id") continue;
    if (rows[i].size() < 2) {
      fail(ErrorCode::DataError, "short row in " + path.string());
    }
    out.emplace_back(rows[i][0], parse_double(rows[i][1], path.string()));
  }
  return out;
}

void write_truth_csv(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, double>>& rows) {
  std::ostringstream out;
  out << "case_id,days\n";
  out.precision(17);
  for (const auto& [id, days] : rows) out << id << "," << days << "\n";
  std::string s = out.str();
  write_file_bytes(path, std::vector<uint8_t>(s.begin(), s.end()));
}

void write_survival_report_json(const std::filesystem::path& path,
                                const SurvivalReport& report) {
  nlohmann::json j;
  j["cases"] = report.cases;
  j["accuracy"] = report.accuracy;
  j["mse"] = report.mse;
  j["median_se"] = report.median_se;
  j["std_se"] = report.std_se;
  j["spearman_r"] = report.spearman_r;
  std::string s = j.dump(2);
  s.push_back('\n');
  write_file_bytes(path, std::vector<uint8_t>(s.begin(), s.end()));
}

}  // namespace glioma
