#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "glioma/metrics.hpp"
#include "glioma/survival.hpp"
#include "glioma/voxel_grid.hpp"

namespace glioma {

struct CaseEvaluation {
  std::string case_id;
  OverlapReport report;
};

// one row per (case, region): case_id,region,dice,sensitivity,specificity,hd95
void write_evaluation_csv(const std::filesystem::path& path,
                          const std::vector<CaseEvaluation>& cases);
std::vector<CaseEvaluation> read_evaluation_csv(
    const std::filesystem::path& path);

// aggregate mean/std per metric per region; sentinel hd95 rows counted
// separately
void write_evaluation_json(const std::filesystem::path& path,
                           const std::vector<CaseEvaluation>& cases);

std::string render_segmentation_table(const std::vector<CaseEvaluation>& cases);
std::string render_survival_table(const SurvivalReport& report);

// Axial/sagittal/coronal slices through the tumor, labels overlaid on the T2
// background. Light blue: necrosis/non-enhancing, green: edema, red:
// enhancing.
void write_overlay_pngs(const MultimodalCase& c, const LabelVolume& labels,
                        const std::filesystem::path& out_dir,
                        const std::string& tag);

}  // namespace glioma
