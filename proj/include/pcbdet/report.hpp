#pragma once

#include <span>
#include <string>
#include <vector>

#include "pcbdet/evaluate.hpp"

namespace pcbdet {

inline constexpr const char* kReportHeader = "Class\tImages\tInstances\tP\tR\tmAP50\tmAP50-95";

/// Tab-separated table: header, an "all" row, then one row per class that
/// has ground truth. Metrics use two decimals.
std::string report_table(const EvalReport& report);

/// Full-precision JSON. `extra` (a JSON object text, may be empty) is merged
/// at the top level, e.g. for run stamps.
std::string report_to_json(const EvalReport& report, const std::string& extra = "");
EvalReport report_from_json(const std::string& text);

struct EpochLosses {
  int epoch = 0;
  std::string split;
  double box = 0.0;
  double cls = 0.0;
  double dfl = 0.0;

  friend bool operator==(const EpochLosses&, const EpochLosses&) = default;
};

inline constexpr const char* kCurvesHeader = "epoch,split,box_loss,cls_loss,dfl_loss";

/// One row per entry, shortest round-trip formatting.
std::string curves_csv(std::span<const EpochLosses> rows);
std::vector<EpochLosses> parse_curves_csv(const std::string& text);

}  // namespace pcbdet
