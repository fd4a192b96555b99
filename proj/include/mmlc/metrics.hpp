#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "mmlc/bilevel.hpp"
#include "mmlc/network.hpp"

namespace mmlc {

// Three-class evaluation summary. confusion(true, predicted) holds counts;
// macro scores average per-class values, with 0 substituted when a class's
// denominator is empty (never predicted / never present).
struct Metrics {
  double accuracy = 0.0;
  double precision_macro = 0.0;
  double f1_macro = 0.0;
  Eigen::Matrix<std::int64_t, kClasses, kClasses> confusion =
      Eigen::Matrix<std::int64_t, kClasses, kClasses>::Zero();
};

// Argmax prediction with ties broken toward the lower class index.
int predict_class(const SoftLabel& probs);

Metrics metrics_from_confusion(
    const Eigen::Matrix<std::int64_t, kClasses, kClasses>& confusion);

Metrics evaluate(const ClassifierSpec& spec, const VectorXd& w,
                 const std::vector<CleanExample>& test_set);

}  // namespace mmlc
