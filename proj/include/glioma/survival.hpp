#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "glioma/forest.hpp"
#include "glioma/preprocess.hpp"
#include "glioma/voxel_grid.hpp"

namespace glioma {

inline constexpr double kDaysPerMonth = 30.4375;  // mean Gregorian month
inline constexpr double kShortMediumDays = 10 * kDaysPerMonth;   // 304.375
inline constexpr double kMediumLongDays = 15 * kDaysPerMonth;    // 456.5625

inline constexpr int kTissueCount = 3;  // labels 1, 2, 4
inline constexpr uint8_t kTissueLabels[kTissueCount] = {1, 2, 4};

// 3 normalized volumes + 12 per-tissue per-modality mean intensities
struct SurvivalFeatures {
  double norm_vol_wt = 0, norm_vol_tc = 0, norm_vol_et = 0;
  std::array<std::array<double, kModalityCount>, kTissueCount> mean_intensity{};
  std::array<bool, kTissueCount> tissue_present{false, false, false};

  std::vector<double> vector() const;  // the 15 forest inputs
  static std::vector<std::string> feature_names();
};

enum class SurvivalClass { Short, Medium, Long };
const char* survival_class_name(SurvivalClass c);

// short < 10 months, long > 15 months, boundaries belong to medium
SurvivalClass bucketize_days(double days);

SurvivalFeatures extract_features(const MultimodalCase& c,
                                  const LabelVolume& labels,
                                  const BrainMask& brain);

struct SurvivalTrainRecord {
  std::string case_id;
  SurvivalFeatures features;
  double true_days = 0;
};

ForestModel train_survival(const std::vector<SurvivalTrainRecord>& records,
                           ForestConfig config = {});

struct SurvivalRecord {
  std::string case_id;
  std::optional<double> true_days;
  double predicted_days = 0;
  SurvivalClass predicted_class = SurvivalClass::Short;
};

struct SurvivalReport {
  int cases = 0;
  double accuracy = 0;
  double mse = 0, median_se = 0, std_se = 0;
  double spearman_r = 0;
};

SurvivalReport evaluate_survival(const std::vector<SurvivalRecord>& records);

// scorer for forest.cross_validate: fraction of matching survival buckets
CvScorer bucket_accuracy_scorer();

// --- file formats -----------------------------------------------------------

void write_features_csv(const std::filesystem::path& path,
                        const std::vector<SurvivalTrainRecord>& records,
                        bool with_days);
void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<SurvivalRecord>& records);
std::vector<SurvivalRecord> read_predictions_csv(
    const std::filesystem::path& path);
// case_id,days
std::vector<std::pair<std::string, double>> read_truth_csv(
    const std::filesystem::path& path);
void write_truth_csv(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, double>>& rows);
void write_survival_report_json(const std::filesystem::path& path,
                                const SurvivalReport& report);

}  // namespace glioma
