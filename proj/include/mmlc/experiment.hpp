#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmlc/bilevel.hpp"
#include "mmlc/encoders.hpp"
#include "mmlc/labeling.hpp"
#include "mmlc/metrics.hpp"
#include "mmlc/series.hpp"

namespace mmlc {

// Where the prices come from: exactly one of csv_path / synth is set.
struct DataSource {
  std::string csv_path;
  std::optional<SynthSpec> synth;
};

struct ExperimentConfig {
  DataSource data;
  int n = 30;
  std::vector<int> horizons{10, 13, 15};
  EncoderKind encoder = EncoderKind::Sgaf;  // X' encoder; Y' is always the RRP raster
  LabelRuleConfig label;
  double noise_rho = 0.0;  // synthetic sources only
  ClassifierSpec classifier;
  LcnSpec lcn;
  TrainConfig train;
  RasterConfig raster;
  RpConfig rp;
  std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
  std::string out_dir = "mmlc-out";
};

// Strict parser: unknown keys are config errors, so typos cannot silently
// fall back to defaults. out_dir is run plumbing and not part of the echoed
// config (reports from identical experiments must be byte-identical).
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::ordered_json experiment_config_json(const ExperimentConfig& cfg);

PriceSeries load_series(const ExperimentConfig& cfg);

// Everything run_experiment derives per horizon before training starts.
struct TaskData {
  TaskSpec spec;  // noisy image pairs + clean labeled images
  std::vector<TrendLabel> noisy_rule_labels;  // resolved labels, pre-injection
  std::vector<TrendLabel> noisy_labels;       // post-injection (baseline targets)
  std::vector<CleanExample> test;
  double clean_agreement_rate = 0.0;  // two-rule agreement on the clean segment
  ClassDistribution clean_dist;
  ClassDistribution test_dist;
};

TaskData build_task_data(const PriceSeries& series, const ExperimentConfig& cfg,
                         int horizon, int task_index);

struct Report {
  nlohmann::ordered_json body;
};

// Split -> encode -> label -> train -> evaluate. Writes report.json,
// history.jsonl and checkpoint.bin (alpha + per-task weights) into
// cfg.out_dir and returns the report.
Report run_experiment(const ExperimentConfig& cfg, int threads = 1);

// Same data and schedule, two trainings: the classifier alone on noisy hard
// labels, and full MMLC — identical inits, batches, eta and step count.
// Writes report.json (mode "compare") into cfg.out_dir.
Report compare_baseline(const ExperimentConfig& cfg, int threads = 1);

// Re-evaluates a saved checkpoint on freshly rebuilt test data.
Report evaluate_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path);

std::string run_id_for(const nlohmann::ordered_json& config_echo);

}  // namespace mmlc
