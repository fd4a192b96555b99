#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mmlc/errors.hpp"

namespace mmlc {

// Dated close-price sequence. Dates are ISO-8601 (YYYY-MM-DD), strictly
// increasing; closes are positive and finite.
struct PriceSeries {
  std::string ticker;
  std::vector<std::string> dates;
  Eigen::VectorXd closes;

  Eigen::Index size() const { return closes.size(); }
};

// One (history window, prediction horizon) pair cut at offset k.
// history = closes[k .. k+n-1], horizon = closes[k+n .. k+n+H-1],
// anchor = closes[k+n-1] (last history value).
struct SampleWindow {
  int k = 0;
  Eigen::VectorXd history;
  Eigen::VectorXd horizon;
  double anchor = 0.0;
};

// Window after affine min-max mapping onto [-1, 1]. Constant windows map to
// all zeros and keep scale_lo == scale_hi.
struct ScaledWindow {
  Eigen::VectorXd values;
  double scale_lo = 0.0;
  double scale_hi = 0.0;
};

// Contiguous, disjoint time split: noisy | clean | test. Samples are
// enumerated inside each segment independently, so no window straddles a cut.
struct DatasetSplit {
  std::vector<SampleWindow> noisy;
  std::vector<SampleWindow> clean;
  std::vector<SampleWindow> test;
  Eigen::Index cut_noisy_clean = 0;  // first index of the clean segment
  Eigen::Index cut_clean_test = 0;   // first index of the test segment
};

enum class SynthRegime { PiecewiseTrend, MeanReverting };

// Synthetic price generator settings. piecewise-trend lays out one linear
// segment per slope (equal lengths, remainder absorbed by the last) starting
// at price 100, then adds i.i.d. Gaussian noise of sd noise_sd around that
// trend line. mean-reverting runs an Ornstein-Uhlenbeck walk around 100
// (reversion 0.05 per step); trend_slopes is ignored there.
struct SynthSpec {
  int length = 0;
  SynthRegime regime = SynthRegime::PiecewiseTrend;
  std::vector<double> trend_slopes;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
};

// Number of (window, horizon) samples a stretch of n_points closes yields.
inline Eigen::Index sample_count(Eigen::Index n_points, int n, int horizon) {
  return n_points - n - horizon + 2;
}

// Parses a `date,close` CSV (header required). Rows are sorted by date;
// duplicate dates or non-positive closes are rejected with the line number.
// The ticker is the file stem.
PriceSeries load_price_csv(const std::string& path);

void write_price_csv(const PriceSeries& series, const std::string& path);

// Cuts every sample window the series supports. The walk runs one step past
// an exact fit, so the final sample's last horizon entry repeats the series'
// last close; all earlier samples read genuine data only.
std::vector<SampleWindow> enumerate_samples(const Eigen::VectorXd& closes, int n,
                                            int horizon);
std::vector<SampleWindow> enumerate_samples(const PriceSeries& series, int n,
                                            int horizon);

ScaledWindow scale_window(const Eigen::VectorXd& history);

DatasetSplit split_dataset(const PriceSeries& series, int n, int horizon,
                           const std::array<double, 3>& ratios = {0.6, 0.2, 0.2});

PriceSeries synth_series(const SynthSpec& spec);

const char* regime_name(SynthRegime regime);
SynthRegime parse_regime(const std::string& name);

}  // namespace mmlc
