#include "mmlc/series.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mmlc/rng.hpp"

namespace mmlc {
namespace {

constexpr double kPriceFloor = 0.01;

bool parse_iso_date(const std::string& text, std::chrono::sys_days& out) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return false;
  int y = 0, m = 0, d = 0;
  auto num = [&](std::size_t pos, std::size_t len, int& val) {
    auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, val);
    return ec == std::errc{} && p == text.data() + pos + len;
  };
  if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return false;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(m)},
                                        std::chrono::day{unsigned(d)}};
  if (!ymd.ok()) return false;
  out = std::chrono::sys_days{ymd};
  return true;
}

std::string format_iso_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

}  // namespace

PriceSeries load_price_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open price CSV: " + path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("empty price CSV: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "date,close")
    throw IoError("expected header 'date,close' in " + path + ", got '" + line + "'");

  struct Row {
    std::chrono::sys_days day;
    std::string date;
    double close;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw IoError("malformed row at line " + std::to_string(line_no) + " in " + path);
    Row row;
    row.date = line.substr(0, comma);
    if (!parse_iso_date(row.date, row.day))
      throw IoError("bad date '" + row.date + "' at line " + std::to_string(line_no) +
                    " in " + path);
    const std::string close_text = line.substr(comma + 1);
    try {
      std::size_t used = 0;
      row.close = std::stod(close_text, &used);
      if (used != close_text.size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw IoError("bad close '" + close_text + "' at line " + std::to_string(line_no) +
                    " in " + path);
    }
    if (!std::isfinite(row.close) || row.close <= 0.0)
      throw IoError("non-positive price at line " + std::to_string(line_no) + " in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("no data rows in " + path);

  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.day < b.day; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].day == rows[i - 1].day)
      throw IoError("duplicate date " + rows[i].date + " in " + path);

  PriceSeries series;
  series.ticker = std::filesystem::path(path).stem().string();
  series.dates.reserve(rows.size());
  series.closes.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    series.dates.push_back(rows[i].date);
    series.closes[static_cast<Eigen::Index>(i)] = rows[i].close;
  }
  return series;
}

void write_price_csv(const PriceSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write price CSV: " + path);
  out << "date,close\n";
  out.precision(12);
  for (Eigen::Index i = 0; i < series.size(); ++i)
    out << series.dates[static_cast<std::size_t>(i)] << ',' << series.closes[i] << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<SampleWindow> enumerate_samples(const Eigen::VectorXd& closes, int n,
                                            int horizon) {
  if (n < 2) throw ConfigError("window length n must be at least 2");
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  const Eigen::Index total = closes.size();
  if (total < n + horizon) throw ConfigError("series too short: need at least " +
                                             std::to_string(n + horizon) + " points, have " +
                                             std::to_string(total));

  const Eigen::Index count = sample_count(total, n, horizon);
  std::vector<SampleWindow> samples;
  samples.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index k = 0; k < count; ++k) {
    SampleWindow s;
    s.k = static_cast<int>(k);
    s.history = closes.segment(k, n);
    s.anchor = closes[k + n - 1];
    s.horizon.resize(horizon);
    for (Eigen::Index h = 0; h < horizon; ++h)
      s.horizon[h] = closes[std::min(k + n + h, total - 1)];
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<SampleWindow> enumerate_samples(const PriceSeries& series, int n, int horizon) {
  return enumerate_samples(series.closes, n, horizon);
}

ScaledWindow scale_window(const Eigen::VectorXd& history) {
  if (history.size() == 0) throw ConfigError("scale_window: empty window");
  if (!history.allFinite()) throw NumericError("scale_window: non-finite input");
  ScaledWindow out;
  out.scale_lo = history.minCoeff();
  out.scale_hi = history.maxCoeff();
  if (out.scale_lo == out.scale_hi) {
    out.values = Eigen::VectorXd::Zero(history.size());
  } else {
    const double span = out.scale_hi - out.scale_lo;
    out.values = (2.0 * (history.array() - out.scale_lo) / span - 1.0).matrix();
  }
  return out;
}

DatasetSplit split_dataset(const PriceSeries& series, int n, int horizon,
                           const std::array<double, 3>& ratios) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  for (double r : ratios)
    if (r <= 0.0) throw ConfigError("split ratios must be positive");

  const Eigen::Index total = series.size();
  const auto c1 = static_cast<Eigen::Index>(std::floor(ratios[0] * double(total)));
  const auto c2 = static_cast<Eigen::Index>(std::floor((ratios[0] + ratios[1]) * double(total)));
  const std::array<std::pair<Eigen::Index, Eigen::Index>, 3> segments{
      {{0, c1}, {c1, c2}, {c2, total}}};
  static const char* names[] = {"noisy", "clean", "test"};

  DatasetSplit split;
  split.cut_noisy_clean = c1;
  split.cut_clean_test = c2;
  std::vector<SampleWindow>* outs[] = {&split.noisy, &split.clean, &split.test};
  for (int s = 0; s < 3; ++s) {
    const auto [lo, hi] = segments[static_cast<std::size_t>(s)];
    const Eigen::Index len = hi - lo;
    if (len < n + horizon)
      throw ConfigError(std::string(names[s]) + " segment too short: " + std::to_string(len) +
                        " points for n+H = " + std::to_string(n + horizon));
    *outs[s] = enumerate_samples(Eigen::VectorXd(series.closes.segment(lo, len)), n, horizon);
  }
  return split;
}

PriceSeries synth_series(const SynthSpec& spec) {
  if (spec.length < 100) throw ConfigError("synthetic series length must be >= 100");
  if (!std::isfinite(spec.noise_sd) || spec.noise_sd < 0.0)
    throw ConfigError("noise_sd must be finite and >= 0");
  if (spec.regime == SynthRegime::PiecewiseTrend && spec.trend_slopes.empty())
    throw ConfigError("piecewise-trend regime needs at least one slope");

  const double start = 100.0;
  Eigen::VectorXd closes(spec.length);
  NormalSampler normal(spec.seed);

  if (spec.regime == SynthRegime::PiecewiseTrend) {
    const auto n_seg = static_cast<int>(spec.trend_slopes.size());
    const int seg_len = spec.length / n_seg;
    double trend = start;
    for (int t = 0; t < spec.length; ++t) {
      if (t > 0) {
        const int seg = std::min((t - 1) / seg_len, n_seg - 1);
        trend += spec.trend_slopes[static_cast<std::size_t>(seg)];
      }
      closes[t] = std::max(trend + spec.noise_sd * normal(), kPriceFloor);
    }
  } else {
    const double kappa = 0.05;
    double level = start;
    for (int t = 0; t < spec.length; ++t) {
      if (t > 0) level += kappa * (start - level) + spec.noise_sd * normal();
      level = std::max(level, kPriceFloor);
      closes[t] = level;
    }
  }

  PriceSeries series;
  series.ticker = "SYNTH";
  series.closes = std::move(closes);
  series.dates.reserve(static_cast<std::size_t>(spec.length));
  const std::chrono::sys_days start_day{std::chrono::year{2000} / 1 / 1};
  for (int t = 0; t < spec.length; ++t)
    series.dates.push_back(format_iso_date(start_day + std::chrono::days{t}));
  return series;
}

const char* regime_name(SynthRegime regime) {
  return regime == SynthRegime::PiecewiseTrend ? "piecewise-trend" : "mean-reverting";
}

SynthRegime parse_regime(const std::string& name) {
  if (name == "piecewise-trend") return SynthRegime::PiecewiseTrend;
  if (name == "mean-reverting") return SynthRegime::MeanReverting;
  throw ConfigError("unknown synthetic regime: " + name);
}

}  // namespace mmlc
