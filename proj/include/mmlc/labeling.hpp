#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mmlc/series.hpp"

namespace mmlc {

// Three-class trend label. The integer values are load-bearing: they index
// confusion matrices, one-hot targets, and the label CSV column.
enum class TrendLabel : int { Fall = 0, Stationary = 1, Rise = 2 };

constexpr int kClasses = 3;

const char* label_name(TrendLabel label);
TrendLabel parse_label(const std::string& name);

struct LabelRuleConfig {
  double omega = 1.0;          // scale on the compound-rate benchmark
  double rate = 0.005;         // per-step reference rate
  double barrier_theta = 0.02; // symmetric relative barrier level
};

enum class LabelSource { Agreement, Fallback };

// Result of reconciling the mean-ratio label with the triple-barrier label.
// agreed == true exactly when source == Agreement.
struct CleanLabelOutcome {
  TrendLabel label = TrendLabel::Stationary;
  bool agreed = false;
  LabelSource source = LabelSource::Fallback;
};

// b = omega * (((1+rate)^(H+1) - (1+rate)) / (rate*H) - 1): the mean relative
// return a steady compounding at `rate` would produce over the horizon.
double baseline_threshold(const LabelRuleConfig& cfg, int horizon);

// Compares mean(ratios) against the band [-b, b]; the band is closed, so a
// mean exactly at either edge counts as stationary.
TrendLabel mean_ratio_label(const Eigen::VectorXd& ratios, double baseline);

// First passage of the horizon path through anchor*(1 +/- theta); earlier hit
// wins, no hit within the horizon means stationary.
TrendLabel triple_barrier_label(const SampleWindow& sample, const LabelRuleConfig& cfg);

// Agreement between the two rules yields a clean label; disagreement falls
// back to the mean-ratio label, flagged for review.
CleanLabelOutcome clean_label_resolve(TrendLabel mean_ratio, TrendLabel triple_barrier);

// Each label is independently replaced, with probability rho, by a uniformly
// random *different* class.
std::vector<TrendLabel> inject_label_noise(const std::vector<TrendLabel>& labels,
                                           double rho, std::uint64_t seed);

struct ClassDistribution {
  std::array<std::int64_t, kClasses> counts{};
  std::array<double, kClasses> proportions{};
};

ClassDistribution class_distribution(const std::vector<TrendLabel>& labels);

}  // namespace mmlc
