#include "mmlc/labeling.hpp"

#include <cmath>

#include "mmlc/errors.hpp"
#include "mmlc/rng.hpp"

namespace mmlc {

const char* label_name(TrendLabel label) {
  switch (label) {
    case TrendLabel::Fall: return "fall";
    case TrendLabel::Stationary: return "stationary";
    case TrendLabel::Rise: return "rise";
  }
  throw ConfigError("unknown label value");
}

TrendLabel parse_label(const std::string& name) {
  if (name == "fall" || name == "0") return TrendLabel::Fall;
  if (name == "stationary" || name == "1") return TrendLabel::Stationary;
  if (name == "rise" || name == "2") return TrendLabel::Rise;
  throw ConfigError("unknown label: " + name);
}

double baseline_threshold(const LabelRuleConfig& cfg, int horizon) {
  if (horizon < 1) throw ConfigError("baseline_threshold: horizon must be >= 1");
  if (!(cfg.omega > 0.0)) throw ConfigError("baseline_threshold: omega must be positive");
  if (!(cfg.rate > 0.0)) throw ConfigError("baseline_threshold: rate must be positive");
  const double g = 1.0 + cfg.rate;
  return cfg.omega * ((std::pow(g, horizon + 1) - g) / (cfg.rate * horizon) - 1.0);
}

TrendLabel mean_ratio_label(const Eigen::VectorXd& ratios, double baseline) {
  if (ratios.size() == 0) throw ConfigError("mean_ratio_label: empty ratio vector");
  if (!(baseline > 0.0)) throw ConfigError("mean_ratio_label: baseline must be positive");
  const double m = ratios.mean();
  if (m < -baseline) return TrendLabel::Fall;
  if (m > baseline) return TrendLabel::Rise;
  return TrendLabel::Stationary;
}

TrendLabel triple_barrier_label(const SampleWindow& sample, const LabelRuleConfig& cfg) {
  if (!(sample.anchor > 0.0))
    throw ConfigError("triple_barrier_label: anchor must be positive");
  if (!(cfg.barrier_theta > 0.0))
    throw ConfigError("triple_barrier_label: theta must be positive");
  if (sample.horizon.size() == 0)
    throw ConfigError("triple_barrier_label: empty horizon");
  const double upper = sample.anchor * (1.0 + cfg.barrier_theta);
  const double lower = sample.anchor * (1.0 - cfg.barrier_theta);
  for (Eigen::Index h = 0; h < sample.horizon.size(); ++h) {
    if (sample.horizon[h] >= upper) return TrendLabel::Rise;
    if (sample.horizon[h] <= lower) return TrendLabel::Fall;
  }
  return TrendLabel::Stationary;
}

CleanLabelOutcome clean_label_resolve(TrendLabel mean_ratio, TrendLabel triple_barrier) {
  CleanLabelOutcome out;
  out.label = mean_ratio;
  out.agreed = mean_ratio == triple_barrier;
  out.source = out.agreed ? LabelSource::Agreement : LabelSource::Fallback;
  return out;
}

std::vector<TrendLabel> inject_label_noise(const std::vector<TrendLabel>& labels,
                                           double rho, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw ConfigError("inject_label_noise: rho outside [0, 1]");
  std::mt19937_64 rng(seed);
  std::vector<TrendLabel> out = labels;
  for (auto& label : out) {
    if (uniform01(rng) >= rho) continue;
    // Pick uniformly among the two classes that differ from the original.
    const auto shift = 1 + static_cast<int>(uniform_index(rng, 2));
    label = static_cast<TrendLabel>((static_cast<int>(label) + shift) % kClasses);
  }
  return out;
}

ClassDistribution class_distribution(const std::vector<TrendLabel>& labels) {
  if (labels.empty()) throw ConfigError("class_distribution: empty label set");
  ClassDistribution dist;
  for (TrendLabel label : labels) ++dist.counts[static_cast<std::size_t>(label)];
  for (int c = 0; c < kClasses; ++c)
    dist.proportions[static_cast<std::size_t>(c)] =
        double(dist.counts[static_cast<std::size_t>(c)]) / double(labels.size());
  return dist;
}

}  // namespace mmlc
