#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mmlc/errors.hpp"
#include "mmlc/series.hpp"

namespace mmlc {

enum class EncoderKind { Gaf, Sgaf, Rp, Srp, Rrp };

const char* encoder_name(EncoderKind kind);
EncoderKind parse_encoder(const std::string& name);

// Real image matrix plus where it came from. GAF/SGAF entries lie in [-1, 1],
// RP in {0, 1}, SRP in {-1, 0, 1}; RRP rasters are one-hot per column.
struct EncodedImage {
  Eigen::MatrixXd matrix;
  EncoderKind encoder = EncoderKind::Gaf;
  int sample_index = 0;
};

// Endpoint-slope sign of the raw (unscaled) history; exactly flat windows
// count as rising.
struct TrendSign {
  int value = 1;
};

struct RpConfig {
  double quantile = 0.10;
};

struct RasterConfig {
  int rows = 32;      // P
  double clip = 0.1;  // r_max, symmetric relative-return clip
};

// G(i,j) = x_i x_j - sqrt(1-x_i^2) sqrt(1-x_j^2) for a [-1,1]-scaled window;
// symmetric with entries in [-1, 1].
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gaf_matrix(
    const Eigen::MatrixBase<Derived>& scaled_window) {
  using Scalar = typename Derived::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Vector x = scaled_window;
  if (x.size() == 0) throw ConfigError("gaf_matrix: empty window");
  if (!x.allFinite() || x.cwiseAbs().maxCoeff() > Scalar(1) + Scalar(1e-12))
    throw NumericError("gaf_matrix: input must be scaled into [-1, 1]");
  // cwiseMax guards the sqrt against tiny negative round-off at |x| = 1.
  const Vector s =
      (Scalar(1) - x.array().square()).cwiseMax(Scalar(0)).sqrt().matrix();
  return x * x.transpose() - s * s.transpose();
}

template <typename Derived>
TrendSign trend_sign(const Eigen::MatrixBase<Derived>& history) {
  if (history.size() < 2) throw ConfigError("trend_sign: window needs >= 2 points");
  const auto slope = (history[history.size() - 1] - history[0]) /
                     typename Derived::Scalar(history.size() - 1);
  return TrendSign{slope >= 0 ? 1 : -1};
}

// Signed GAF of a raw history window: min-max scale into [-1, 1], take the
// GAF, multiply by the window's trend sign.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> sgaf(
    const Eigen::MatrixBase<Derived>& history) {
  using Scalar = typename Derived::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Vector x = history;
  if (x.size() < 2) throw ConfigError("sgaf: window needs >= 2 points");
  const Scalar lo = x.minCoeff();
  const Scalar hi = x.maxCoeff();
  const Vector scaled =
      lo == hi ? Vector::Zero(x.size())
               : Vector((Scalar(2) * (x.array() - lo) / (hi - lo) - Scalar(1)).matrix());
  return Scalar(trend_sign(x).value) * gaf_matrix(scaled);
}

// Nearest-rank-lower q-quantile of the n(n-1) off-diagonal pairwise absolute
// differences: sorted[floor(q * (M - 1))].
template <typename Derived>
typename Derived::Scalar rp_threshold(const Eigen::MatrixBase<Derived>& history,
                                      const RpConfig& cfg = {}) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = history.size();
  if (n < 2) throw ConfigError("rp_threshold: window needs >= 2 points");
  if (cfg.quantile <= 0.0 || cfg.quantile >= 1.0)
    throw ConfigError("rp_threshold: quantile outside (0, 1)");
  std::vector<Scalar> dist;
  dist.reserve(static_cast<std::size_t>(n * (n - 1)));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) dist.push_back(std::abs(history[i] - history[j]));
  std::sort(dist.begin(), dist.end());
  const auto rank = static_cast<std::size_t>(
      std::floor(cfg.quantile * double(dist.size() - 1)));
  return dist[rank];
}

// R(i,j) = 1 iff |x_i - x_j| <= eps; symmetric, unit diagonal.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> rp_matrix(
    const Eigen::MatrixBase<Derived>& history, typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (eps < Scalar(0)) throw ConfigError("rp_matrix: negative threshold");
  const Vector x = history;
  const Eigen::Index n = x.size();
  Matrix recurrence(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    recurrence.col(j) =
        ((x.array() - x[j]).abs() <= eps).template cast<Scalar>().matrix();
  return recurrence;
}

// Signed recurrence plot: trend sign times the thresholded RP.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> srp(
    const Eigen::MatrixBase<Derived>& history, const RpConfig& cfg = {}) {
  using Scalar = typename Derived::Scalar;
  return Scalar(trend_sign(history).value) *
         rp_matrix(history, rp_threshold(history, cfg));
}

// ratio(h) = x_{n+k+h} / x_{n+k} - 1 for h = 1..H.
Eigen::VectorXd rrp_ratios(const SampleWindow& sample);

// P x H raster: column h is one-hot at the row the clipped ratio quantizes to
// (row 0 = -clip, row P-1 = +clip).
Eigen::MatrixXd rasterize_rrp(const Eigen::VectorXd& ratios, int rows, double clip);

// Block-mean pooling to side x side; blocks are near-equal integer spans, so
// any (input, side) pair works and side == input is the identity.
Eigen::MatrixXd downsample(const Eigen::MatrixXd& image, int side);

enum class ExportFormat { Csv, Pgm };

// CSV: raw reals, row-major. PGM (P2): [min,max] mapped affinely onto 0..255,
// constant images to 0.
void export_matrix(const EncodedImage& image, const std::string& path,
                   ExportFormat format);
Eigen::MatrixXd import_matrix_csv(const std::string& path);

// Full per-sample encoding as the training pipeline consumes it: the history
// image for GAF/SGAF/RP/SRP kinds, the horizon raster for RRP.
EncodedImage encode_window(const SampleWindow& sample, EncoderKind kind,
                           const RpConfig& rp_cfg = {},
                           const RasterConfig& raster_cfg = {});

}  // namespace mmlc
