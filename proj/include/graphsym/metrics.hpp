#pragma once

/// \file metrics.hpp
/// \brief Relative mean absolute error and design-level evaluation summaries.

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graphsym/error.hpp"

namespace graphsym {

/// mean(|pred_i - gt_i| / gt_i). `ids` (optional) names designs in error messages.
inline double mae(const std::vector<double>& pred, const std::vector<double>& gt,
                  const std::vector<std::string>& ids = {}) {
  if (pred.size() != gt.size()) fail(ErrorKind::Domain, "mae: prediction and ground-truth lengths differ");
  if (gt.empty()) fail(ErrorKind::Domain, "mae: no designs");
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0.0)
      fail(ErrorKind::Domain, "mae: zero ground truth for design " + (i < ids.size() ? ids[i] : std::to_string(i)));
    sum += std::abs(pred[i] - gt[i]) / std::abs(gt[i]);
  }
  return sum / static_cast<double>(gt.size());
}

struct DesignResult {
  std::string id;
  double pred_delay = 0.0, gt_delay = 0.0, base_delay = 0.0;
  double pred_area = 0.0, gt_area = 0.0, base_area = 0.0;
};

/*! Model and pre-synthesis baseline errors over one design set.

  Inference timing is kept out of this record so that it stays a pure
  function of the inputs; stage manifests carry wall-clock figures.
*/
struct EvalSummary {
  std::vector<DesignResult> designs;
  double delay_mae = 0.0, area_mae = 0.0;
  double baseline_delay_mae = 0.0, baseline_area_mae = 0.0;

  static EvalSummary from(std::vector<DesignResult> designs) {
    EvalSummary s;
    s.designs = std::move(designs);
    std::vector<double> pd, gd, bd, pa, ga, ba;
    std::vector<std::string> ids;
    for (const auto& d : s.designs) {
      pd.push_back(d.pred_delay);
      gd.push_back(d.gt_delay);
      bd.push_back(d.base_delay);
      pa.push_back(d.pred_area);
      ga.push_back(d.gt_area);
      ba.push_back(d.base_area);
      ids.push_back(d.id);
    }
    s.delay_mae = mae(pd, gd, ids);
    s.area_mae = mae(pa, ga, ids);
    s.baseline_delay_mae = mae(bd, gd, ids);
    s.baseline_area_mae = mae(ba, ga, ids);
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& d : designs)
      rows.push_back({{"id", d.id},
                      {"pred_delay", d.pred_delay},
                      {"gt_delay", d.gt_delay},
                      {"base_delay", d.base_delay},
                      {"pred_area", d.pred_area},
                      {"gt_area", d.gt_area},
                      {"base_area", d.base_area}});
    return {{"num_designs", designs.size()},
            {"delay_mae", delay_mae},
            {"area_mae", area_mae},
            {"baseline_delay_mae", baseline_delay_mae},
            {"baseline_area_mae", baseline_area_mae},
            {"designs", rows}};
  }
};

}  // namespace graphsym
