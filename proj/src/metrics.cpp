#include "mmlc/metrics.hpp"

namespace mmlc {

int predict_class(const SoftLabel& probs) {
  int best = 0;
  for (int c = 1; c < kClasses; ++c)
    if (probs[c] > probs[best]) best = c;
  return best;
}

Metrics metrics_from_confusion(
    const Eigen::Matrix<std::int64_t, kClasses, kClasses>& confusion) {
  const std::int64_t total = confusion.sum();
  if (total == 0) throw ConfigError("metrics: empty confusion matrix");

  Metrics m;
  m.confusion = confusion;
  m.accuracy = double(confusion.trace()) / double(total);

  double precision_sum = 0.0;
  double f1_sum = 0.0;
  for (int c = 0; c < kClasses; ++c) {
    const auto tp = double(confusion(c, c));
    const auto predicted = double(confusion.col(c).sum());
    const auto actual = double(confusion.row(c).sum());
    const double precision = predicted > 0.0 ? tp / predicted : 0.0;
    const double recall = actual > 0.0 ? tp / actual : 0.0;
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    precision_sum += precision;
    f1_sum += f1;
  }
  m.precision_macro = precision_sum / double(kClasses);
  m.f1_macro = f1_sum / double(kClasses);
  return m;
}

Metrics evaluate(const ClassifierSpec& spec, const VectorXd& w,
                 const std::vector<CleanExample>& test_set) {
  if (test_set.empty()) throw ConfigError("evaluate: empty test set");
  Eigen::Matrix<std::int64_t, kClasses, kClasses> confusion =
      Eigen::Matrix<std::int64_t, kClasses, kClasses>::Zero();
  for (const CleanExample& ex : test_set) {
    const int predicted = predict_class(forward_classifier(spec, w, ex.x_image));
    confusion(static_cast<int>(ex.label), predicted) += 1;
  }
  return metrics_from_confusion(confusion);
}

}  // namespace mmlc
