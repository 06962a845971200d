#pragma once

#include <span>
#include <vector>

namespace wpcm {

struct FitScore {
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;  // ratio, zero-actual entries excluded
  std::size_t mape_count = 0;
};

// Throws DomainError on empty or mismatched inputs.
FitScore fit_score(std::span<const double> pred, std::span<const double> actual);

struct DetectionScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  bool precision_undefined = false;  // no alarms raised
  bool recall_undefined = false;     // no degraded segments
};

DetectionScore detection_score(const std::vector<bool>& alarms,
                               const std::vector<bool>& truth);

}  // namespace wpcm
