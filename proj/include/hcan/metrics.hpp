#pragma once

#include <vector>

#include "hcan/model.hpp"

namespace hcan {

struct Metrics {
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<double> per_class_f1;
  std::vector<long> support;                  // gold count per class
  std::vector<std::vector<long>> confusion;   // [gold][pred]
  long total = 0;
};

// Per-class precision/recall/F1 with the 0/0 := 0 convention; weighted F1
// is the support-weighted mean.
Metrics compute_metrics(const std::vector<int>& gold, const std::vector<int>& pred,
                        int num_classes);

Metrics evaluate(HcanModel& model, const std::vector<Conversation>& conversations);

}  // namespace hcan
