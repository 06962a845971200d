#include "wpcm/metrics.hpp"

#include <cmath>

#include "wpcm/errors.hpp"

namespace wpcm {

FitScore fit_score(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size()) {
    throw DomainError("prediction and actual lengths differ");
  }
  if (pred.empty()) {
    throw DomainError("fit score needs at least one value");
  }
  FitScore s;
  double sq = 0.0;
  double ab = 0.0;
  double rel = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - actual[i];
    sq += e * e;
    ab += std::abs(e);
    if (actual[i] != 0.0) {
      rel += std::abs(e / actual[i]);
      ++s.mape_count;
    }
  }
  const double n = static_cast<double>(pred.size());
  s.rmse = std::sqrt(sq / n);
  s.mae = ab / n;
  s.mape = s.mape_count > 0 ? rel / static_cast<double>(s.mape_count) : 0.0;
  return s;
}

DetectionScore detection_score(const std::vector<bool>& alarms,
                               const std::vector<bool>& truth) {
  if (alarms.size() != truth.size()) {
    throw DomainError("alarm and truth lengths differ");
  }
  DetectionScore s;
  for (std::size_t i = 0; i < alarms.size(); ++i) {
    if (alarms[i] && truth[i]) ++s.tp;
    else if (alarms[i]) ++s.fp;
    else if (truth[i]) ++s.fn;
    else ++s.tn;
  }
  s.precision_undefined = s.tp + s.fp == 0;
  s.recall_undefined = s.tp + s.fn == 0;
  s.precision = s.precision_undefined ? 0.0 : double(s.tp) / double(s.tp + s.fp);
  s.recall = s.recall_undefined ? 0.0 : double(s.tp) / double(s.tp + s.fn);
  if (s.precision > 0.0 && s.recall > 0.0) {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

}  // namespace wpcm
