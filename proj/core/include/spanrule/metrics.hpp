#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace spanrule {

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n = 0;

  bool operator==(const ClassificationMetrics&) const = default;
};

/// Binary tasks score class 1 as positive; with more classes precision,
/// recall and f1 are macro-averaged. Undefined ratios (0/0) count as 0.
ClassificationMetrics classification_metrics(std::span<const int> predicted,
                                             std::span<const int> gold, int n_classes);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> p);

nlohmann::json to_json(const ClassificationMetrics& m);

}  // namespace spanrule
