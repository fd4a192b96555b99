#include "mmlc/encoders.hpp"

#include <fstream>
#include <sstream>

namespace mmlc {

const char* encoder_name(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::Gaf: return "gaf";
    case EncoderKind::Sgaf: return "sgaf";
    case EncoderKind::Rp: return "rp";
    case EncoderKind::Srp: return "srp";
    case EncoderKind::Rrp: return "rrp";
  }
  throw ConfigError("unknown encoder kind");
}

EncoderKind parse_encoder(const std::string& name) {
  if (name == "gaf") return EncoderKind::Gaf;
  if (name == "sgaf") return EncoderKind::Sgaf;
  if (name == "rp") return EncoderKind::Rp;
  if (name == "srp") return EncoderKind::Srp;
  if (name == "rrp") return EncoderKind::Rrp;
  throw ConfigError("unknown encoder: " + name);
}

Eigen::VectorXd rrp_ratios(const SampleWindow& sample) {
  if (!(sample.anchor > 0.0)) throw ConfigError("rrp_ratios: anchor must be positive");
  if (sample.horizon.size() == 0) throw ConfigError("rrp_ratios: empty horizon");
  return (sample.horizon.array() / sample.anchor - 1.0).matrix();
}

Eigen::MatrixXd rasterize_rrp(const Eigen::VectorXd& ratios, int rows, double clip) {
  if (rows < 3) throw ConfigError("rasterize_rrp: need at least 3 rows");
  if (!(clip > 0.0)) throw ConfigError("rasterize_rrp: clip must be positive");
  if (ratios.size() == 0) throw ConfigError("rasterize_rrp: empty ratio vector");
  Eigen::MatrixXd raster = Eigen::MatrixXd::Zero(rows, ratios.size());
  for (Eigen::Index h = 0; h < ratios.size(); ++h) {
    const double clipped = std::clamp(ratios[h], -clip, clip);
    const auto row = static_cast<Eigen::Index>(
        std::llround((clipped + clip) / (2.0 * clip) * double(rows - 1)));
    raster(row, h) = 1.0;
  }
  return raster;
}

Eigen::MatrixXd downsample(const Eigen::MatrixXd& image, int side) {
  if (side < 1) throw ConfigError("downsample: side must be >= 1");
  const Eigen::Index in_rows = image.rows();
  const Eigen::Index in_cols = image.cols();
  if (in_rows == 0 || in_cols == 0) throw ConfigError("downsample: empty image");
  if (in_rows == side && in_cols == side) return image;

  // Integer block edges floor(i * in / side); blocks tile the input exactly
  // and collapse to single repeated cells when upsampling.
  auto edge = [side](Eigen::Index i, Eigen::Index extent) {
    return (i * extent) / side;
  };
  Eigen::MatrixXd out(side, side);
  for (Eigen::Index r = 0; r < side; ++r) {
    const Eigen::Index r0 = edge(r, in_rows);
    const Eigen::Index r1 = std::max(r0 + 1, edge(r + 1, in_rows));
    for (Eigen::Index c = 0; c < side; ++c) {
      const Eigen::Index c0 = edge(c, in_cols);
      const Eigen::Index c1 = std::max(c0 + 1, edge(c + 1, in_cols));
      out(r, c) = image.block(r0, c0, r1 - r0, c1 - c0).mean();
    }
  }
  return out;
}

void export_matrix(const EncodedImage& image, const std::string& path,
                   ExportFormat format) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write image file: " + path);
  const Eigen::MatrixXd& m = image.matrix;
  if (format == ExportFormat::Csv) {
    out.precision(17);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c) out << ',';
        out << m(r, c);
      }
      out << '\n';
    }
  } else {
    const double lo = m.minCoeff();
    const double hi = m.maxCoeff();
    out << "P2\n" << m.cols() << ' ' << m.rows() << "\n255\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const int pixel =
            hi == lo ? 0
                     : static_cast<int>(std::llround((m(r, c) - lo) / (hi - lo) * 255.0));
        out << pixel << (c + 1 == m.cols() ? '\n' : ' ');
      }
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

Eigen::MatrixXd import_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open image file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("ragged matrix CSV: " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty matrix CSV: " + path);
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

EncodedImage encode_window(const SampleWindow& sample, EncoderKind kind,
                           const RpConfig& rp_cfg, const RasterConfig& raster_cfg) {
  EncodedImage image;
  image.encoder = kind;
  image.sample_index = sample.k;
  switch (kind) {
    case EncoderKind::Gaf:
      image.matrix = gaf_matrix(scale_window(sample.history).values);
      break;
    case EncoderKind::Sgaf:
      image.matrix = sgaf(sample.history);
      break;
    case EncoderKind::Rp:
      image.matrix = rp_matrix(sample.history, rp_threshold(sample.history, rp_cfg));
      break;
    case EncoderKind::Srp:
      image.matrix = srp(sample.history, rp_cfg);
      break;
    case EncoderKind::Rrp:
      image.matrix = rasterize_rrp(rrp_ratios(sample), raster_cfg.rows, raster_cfg.clip);
      break;
  }
  return image;
}

}  // namespace mmlc
