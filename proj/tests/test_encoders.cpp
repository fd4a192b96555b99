#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mmlc/encoders.hpp"
#include "mmlc/rng.hpp"

using namespace mmlc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd reverse_both_axes(const MatrixXd& m) {
  return m.colwise().reverse().rowwise().reverse();
}

}  // namespace

TEST_CASE("gaf_matrix pinned values") {
  Eigen::Vector3d x(-1, 0, 1);
  MatrixXd expected(3, 3);
  expected << 1, 0, -1, 0, -1, 0, -1, 0, 1;
  CHECK((gaf_matrix(x) - expected).cwiseAbs().maxCoeff() < 1e-12);

  // Constant windows scale to the extremes of the angular map.
  CHECK(gaf_matrix(Eigen::Vector2d(1, 1)).isApprox(MatrixXd::Ones(2, 2)));
  CHECK(gaf_matrix(Eigen::Vector2d(0, 0)).isApprox(-MatrixXd::Ones(2, 2)));

  CHECK_THROWS_AS(gaf_matrix(Eigen::Vector2d(1.1, 0)), NumericError);
  CHECK_THROWS_AS(gaf_matrix(VectorXd()), ConfigError);
}

TEST_CASE("gaf_matrix is symmetric with entries in [-1, 1]") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + int(uniform_index(rng, 30));
    VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = 2.0 * uniform01(rng) - 1.0;
    const MatrixXd g = gaf_matrix(x);
    CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.maxCoeff() <= 1.0 + 1e-12);
    CHECK(g.minCoeff() >= -1.0 - 1e-12);
  }
}

TEST_CASE("trend_sign follows the endpoint slope") {
  CHECK(trend_sign(Eigen::Vector3d(2, 9, 2)).value == 1);  // flat endpoints count as rising
  CHECK(trend_sign(Eigen::Vector2d(3, 1)).value == -1);
  CHECK(trend_sign(Eigen::Vector3d(5, 5, 5)).value == 1);
  CHECK_THROWS_AS(trend_sign(VectorXd::Ones(1)), ConfigError);
}

TEST_CASE("sgaf scales internally and signs by trend") {
  // Constant history: scaled to zeros, G = -1 everywhere, rising sign.
  CHECK(sgaf(Eigen::Vector3d(5, 5, 5)).isApprox(-MatrixXd::Ones(3, 3)));

  // A falling window is the negated GAF of its scaled values.
  Eigen::VectorXd down(5);
  down << 5, 4, 3, 2, 1;
  Eigen::VectorXd scaled(5);
  scaled << 1, 0.5, 0, -0.5, -1;
  CHECK(sgaf(down).isApprox(-gaf_matrix(scaled), 1e-14));

  // |SGAF| == |GAF| everywhere.
  Eigen::VectorXd up(4);
  up << 1, 3, 2, 4;
  CHECK(sgaf(up).cwiseAbs().isApprox(gaf_matrix(scale_window(up).values).cwiseAbs(),
                                     1e-14));
}

TEST_CASE("reversal antisymmetry for sgaf and srp") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 4 + int(uniform_index(rng, 61 - 4));
    VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = 50.0 + 20.0 * uniform01(rng);
    if (w[0] == w[n - 1]) continue;  // property needs a nonzero endpoint slope
    const VectorXd rev = w.reverse();

    CHECK(trend_sign(rev).value == -trend_sign(w).value);
    CHECK((sgaf(rev) + reverse_both_axes(sgaf(w))).cwiseAbs().maxCoeff() < 1e-12);
    const MatrixXd s = srp(w), sr = srp(rev);
    CHECK((sr + reverse_both_axes(s)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(sr.cwiseAbs().isApprox(reverse_both_axes(s.cwiseAbs())));
  }
}

TEST_CASE("rp_threshold pinned quantiles") {
  Eigen::Vector3d a(0, 10, 11);
  CHECK(rp_threshold(a, RpConfig{0.10}) == 1.0);
  Eigen::Vector3d b(0, 1, 2);
  CHECK(rp_threshold(b, RpConfig{0.5}) == 1.0);
  CHECK_THROWS_AS(rp_threshold(a, RpConfig{0.0}), ConfigError);
  CHECK_THROWS_AS(rp_threshold(a, RpConfig{1.0}), ConfigError);
}

TEST_CASE("rp_matrix thresholds pairwise distances") {
  Eigen::Vector3d x(0, 10, 11);
  MatrixXd expected(3, 3);
  expected << 1, 0, 0, 0, 1, 1, 0, 1, 1;
  CHECK(rp_matrix(x, 1.0) == expected);
  CHECK_THROWS_AS(rp_matrix(x, -0.5), ConfigError);
}

TEST_CASE("rp quantile bounds the strictly-closer fraction") {
  std::mt19937_64 rng(21);
  for (double q : {0.05, 0.10, 0.25, 0.5}) {
    for (int trial = 0; trial < 25; ++trial) {
      const int n = 4 + int(uniform_index(rng, 40));
      VectorXd x(n);
      for (int i = 0; i < n; ++i) x[i] = uniform01(rng) * 100.0;
      const double eps = rp_threshold(x, RpConfig{q});
      int below = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j && std::abs(x[i] - x[j]) < eps) ++below;
      CHECK(double(below) <= q * double(n * (n - 1)));
    }
  }
}

TEST_CASE("srp values and structure") {
  Eigen::VectorXd up(4);
  up << 1, 2, 3, 10;
  const MatrixXd s = srp(up);
  CHECK(s.diagonal().isApprox(VectorXd::Ones(4)));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK((s(i, j) == 0.0 || s(i, j) == 1.0));

  Eigen::VectorXd dn(4);
  dn << 10, 3, 2, 1;
  const MatrixXd sd = srp(dn);
  CHECK(sd.diagonal().isApprox(-VectorXd::Ones(4)));
  CHECK(sd.minCoeff() >= -1.0);
  CHECK(sd.maxCoeff() <= 0.0);
}

TEST_CASE("rrp_ratios relative returns off the anchor") {
  SampleWindow s;
  s.anchor = 100.0;
  s.horizon = Eigen::Vector3d(101, 103, 99);
  const VectorXd r = rrp_ratios(s);
  CHECK(r.isApprox(Eigen::Vector3d(0.01, 0.03, -0.01), 1e-14));

  s.anchor = 0.0;
  CHECK_THROWS_AS(rrp_ratios(s), ConfigError);
  s.anchor = 100.0;
  s.horizon = VectorXd();
  CHECK_THROWS_AS(rrp_ratios(s), ConfigError);
}

TEST_CASE("rasterize_rrp one-hot columns") {
  // Zero ratio lands on the centre row for odd P.
  const MatrixXd center = rasterize_rrp(VectorXd::Zero(1), 5, 0.1);
  CHECK(center.col(0).transpose() == Eigen::RowVectorXd::Unit(5, 2));

  // Extremes hit the bottom and top rows; clipping holds beyond them.
  Eigen::Vector3d r(-0.1, 0.1, 0.5);
  const MatrixXd m = rasterize_rrp(r, 4, 0.1);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(3, 1) == 1.0);
  CHECK(m(3, 2) == 1.0);

  // A linear sweep walks the anti-diagonal.
  const int p = 6;
  const VectorXd sweep = VectorXd::LinSpaced(p, -0.1, 0.1);
  const MatrixXd diag = rasterize_rrp(sweep, p, 0.1);
  for (int h = 0; h < p; ++h) CHECK(diag(h, h) == 1.0);

  // Exactly one nonzero per column, and it is 1.
  std::mt19937_64 rng(5);
  VectorXd rnd(17);
  for (int i = 0; i < 17; ++i) rnd[i] = 0.4 * uniform01(rng) - 0.2;
  const MatrixXd img = rasterize_rrp(rnd, 9, 0.1);
  for (int h = 0; h < 17; ++h) {
    CHECK(img.col(h).sum() == 1.0);
    CHECK(img.col(h).maxCoeff() == 1.0);
  }

  CHECK_THROWS_AS(rasterize_rrp(r, 2, 0.1), ConfigError);
  CHECK_THROWS_AS(rasterize_rrp(r, 5, 0.0), ConfigError);
}

TEST_CASE("downsample block means") {
  MatrixXd m(2, 2);
  m << 1, -1, -1, 1;
  CHECK(downsample(m, 1)(0, 0) == 0.0);
  CHECK(downsample(m, 2) == m);  // identity when sides match

  // 4x4 -> 2x2 averages disjoint 2x2 blocks.
  MatrixXd big(4, 4);
  big << 1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4;
  MatrixXd small = downsample(big, 2);
  MatrixXd expected(2, 2);
  expected << 1, 2, 3, 4;
  CHECK(small == expected);

  // Upsampling duplicates entries.
  const MatrixXd up = downsample(expected, 4);
  CHECK(up == big);

  CHECK_THROWS_AS(downsample(m, 0), ConfigError);
}

TEST_CASE("export csv round-trips and pgm is exact") {
  EncodedImage img;
  img.encoder = EncoderKind::Gaf;
  img.sample_index = 0;
  img.matrix.resize(2, 2);
  img.matrix << -1.0, 0.25, 1.0 / 3.0, 1.0;

  const auto dir = std::filesystem::temp_directory_path();
  const std::string csv = (dir / "img.csv").string();
  export_matrix(img, csv, ExportFormat::Csv);
  CHECK(import_matrix_csv(csv) == img.matrix);

  const std::string pgm = (dir / "img.pgm").string();
  export_matrix(img, pgm, ExportFormat::Pgm);
  std::ifstream in(pgm);
  std::stringstream ss;
  ss << in.rdbuf();
  // [-1, 1] maps affinely to 0..255; 0.25 -> round(159.375), 1/3 -> round(170).
  CHECK(ss.str() == "P2\n2 2\n255\n0 159\n170 255\n");

  img.matrix = MatrixXd::Constant(2, 2, 3.14);
  export_matrix(img, pgm, ExportFormat::Pgm);
  std::ifstream in2(pgm);
  std::stringstream ss2;
  ss2 << in2.rdbuf();
  CHECK(ss2.str() == "P2\n2 2\n255\n0 0\n0 0\n");

  CHECK_THROWS_AS(import_matrix_csv((dir / "missing_img.csv").string()), IoError);
  std::ofstream ragged(dir / "ragged.csv");
  ragged << "1,2\n3\n";
  ragged.close();
  CHECK_THROWS_AS(import_matrix_csv((dir / "ragged.csv").string()), IoError);
}

TEST_CASE("encode_window dispatches on kind") {
  SampleWindow s;
  s.k = 7;
  s.history = VectorXd::LinSpaced(10, 100.0, 109.0);
  s.horizon = VectorXd::Constant(4, 110.0);
  s.anchor = s.history[9];

  const EncodedImage g = encode_window(s, EncoderKind::Sgaf);
  CHECK(g.matrix.rows() == 10);
  CHECK(g.matrix.cols() == 10);
  CHECK(g.sample_index == 7);
  CHECK(g.encoder == EncoderKind::Sgaf);

  const EncodedImage rp = encode_window(s, EncoderKind::Srp, RpConfig{0.25});
  CHECK(rp.matrix.rows() == 10);
  CHECK(rp.matrix.diagonal().isApprox(VectorXd::Ones(10)));

  const EncodedImage rrp = encode_window(s, EncoderKind::Rrp, {}, RasterConfig{8, 0.05});
  CHECK(rrp.matrix.rows() == 8);
  CHECK(rrp.matrix.cols() == 4);

  const EncodedImage plain = encode_window(s, EncoderKind::Gaf);
  CHECK(plain.matrix.isApprox(gaf_matrix(scale_window(s.history).values)));
}

TEST_CASE("encoder names round-trip") {
  for (EncoderKind k : {EncoderKind::Gaf, EncoderKind::Sgaf, EncoderKind::Rp,
                        EncoderKind::Srp, EncoderKind::Rrp})
    CHECK(parse_encoder(encoder_name(k)) == k);
  CHECK_THROWS_AS(parse_encoder("mtf"), ConfigError);
}
