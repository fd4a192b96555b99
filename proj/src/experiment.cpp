#include "mmlc/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mmlc/checkpoint.hpp"
#include "mmlc/rng.hpp"

namespace mmlc {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_keys(const json& j, const char* context,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(context) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* name : allowed)
      if (key == name) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError(std::string("unknown key '") + key + "' in " + context);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

SynthSpec parse_synth(const json& j) {
  check_keys(j, "data.synth", {"length", "regime", "trend_slopes", "noise_sd", "seed"});
  SynthSpec spec;
  spec.length = get_or<int>(j, "length", 0);
  spec.regime = parse_regime(get_or<std::string>(j, "regime", "piecewise-trend"));
  spec.trend_slopes = get_or<std::vector<double>>(j, "trend_slopes", {});
  spec.noise_sd = get_or<double>(j, "noise_sd", 0.0);
  spec.seed = get_or<std::uint64_t>(j, "seed", 0);
  return spec;
}

CleanLabelOutcome resolve_sample_label(const SampleWindow& sample,
                                       const LabelRuleConfig& rule) {
  const double b = baseline_threshold(rule, static_cast<int>(sample.horizon.size()));
  const TrendLabel by_mean = mean_ratio_label(rrp_ratios(sample), b);
  const TrendLabel by_barrier = triple_barrier_label(sample, rule);
  return clean_label_resolve(by_mean, by_barrier);
}

ordered_json distribution_json(const ClassDistribution& dist) {
  ordered_json j;
  j["counts"] = dist.counts;
  j["proportions"] = dist.proportions;
  return j;
}

ordered_json metrics_json(const Metrics& m) {
  ordered_json j;
  j["accuracy"] = m.accuracy;
  j["precision_macro"] = m.precision_macro;
  j["f1_macro"] = m.f1_macro;
  ordered_json confusion = ordered_json::array();
  for (int r = 0; r < kClasses; ++r) {
    ordered_json row = ordered_json::array();
    for (int c = 0; c < kClasses; ++c) row.push_back(m.confusion(r, c));
    confusion.push_back(row);
  }
  j["confusion"] = confusion;
  return j;
}

ordered_json task_base_json(const TaskData& data, const TaskSpec& task) {
  ordered_json t;
  t["task_id"] = task.task_id;
  t["horizon"] = task.horizon;
  t["samples"] = {{"noisy", task.noisy.size()},
                  {"clean", task.clean.size()},
                  {"test", data.test.size()}};
  t["clean_rule_agreement"] = data.clean_agreement_rate;
  t["clean_distribution"] = distribution_json(data.clean_dist);
  t["test_distribution"] = distribution_json(data.test_dist);
  return t;
}

double lcn_agreement(const ModelSpecs& models, const VectorXd& alpha, const TaskSpec& task,
                     const std::vector<TrendLabel>& reference) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < task.noisy.size(); ++i) {
    const SoftLabel corrected =
        forward_lcn(models.lcn, alpha, task.noisy[i].x_image, task.noisy[i].y_image);
    if (predict_class(corrected) == static_cast<int>(reference[i])) ++hits;
  }
  return double(hits) / double(task.noisy.size());
}

struct PreparedRun {
  PriceSeries series;
  std::vector<TaskData> data;
  std::vector<TaskSpec> tasks;
  ModelSpecs models;
  std::vector<std::vector<StepPlan>> schedule;
  std::vector<VectorXd> w_init;
  VectorXd alpha_init;
};

PreparedRun prepare_run(const ExperimentConfig& cfg) {
  PreparedRun run;
  run.series = load_series(cfg);
  const std::size_t n_tasks = cfg.horizons.size();
  run.data.reserve(n_tasks);
  run.tasks.reserve(n_tasks);
  for (std::size_t i = 0; i < n_tasks; ++i) {
    run.data.push_back(build_task_data(run.series, cfg, cfg.horizons[i],
                                       static_cast<int>(i)));
    run.tasks.push_back(std::move(run.data.back().spec));
  }
  run.models = {cfg.classifier, cfg.lcn};
  run.schedule = make_schedule(run.tasks, cfg.train);
  run.w_init = default_task_inits(run.models, n_tasks, cfg.train);
  run.alpha_init = default_alpha_init(run.models, cfg.train);
  return run;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

void write_run_artifacts(const ExperimentConfig& cfg, const ordered_json& report,
                         const TrainedState& trained) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output dir " + cfg.out_dir + ": " + ec.message());

  write_text(cfg.out_dir + "/report.json", report.dump(2) + "\n");

  std::string history;
  for (const MetaStepLog& log : trained.history) {
    ordered_json line;
    line["step"] = log.step;
    line["inner_loss"] = log.inner_loss;
    line["clean_loss"] = log.clean_loss;
    line["meta_grad_norm"] = log.meta_grad_norm;
    history += line.dump() + "\n";
  }
  write_text(cfg.out_dir + "/history.jsonl", history);

  std::vector<std::pair<std::string, ParamVector>> parts;
  parts.emplace_back("alpha", trained.alpha);
  for (std::size_t i = 0; i < trained.task_weights.size(); ++i)
    parts.emplace_back("task" + std::to_string(i), trained.task_weights[i]);
  save_checkpoint(cfg.out_dir + "/checkpoint.bin", concat_params(parts));
}

double elapsed_sec(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Classifier trained directly on noisy hard labels with the same init, the
// same batch schedule, the same eta and the same total step count as the
// MMLC inner loops it is compared against.
VectorXd train_baseline_task(const ModelSpecs& models, const TaskSpec& task,
                             const std::vector<TrendLabel>& noisy_labels,
                             const std::vector<StepPlan>& schedule, const VectorXd& w0,
                             double eta) {
  VectorXd w = w0;
  for (const StepPlan& plan : schedule) {
    for (const Batch& indices : plan.inner) {
      ImageBatch batch;
      batch.images.reserve(indices.size());
      batch.targets.reserve(indices.size());
      for (int idx : indices) {
        batch.images.push_back(&task.noisy[static_cast<std::size_t>(idx)].x_image);
        batch.targets.push_back(one_hot(noisy_labels[static_cast<std::size_t>(idx)]));
      }
      double loss = 0.0;
      const VectorXd grad = backward_classifier(models.classifier, w, batch, &loss);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw NumericError("baseline training diverged in task " +
                           std::to_string(task.task_id));
      w -= eta * grad;
    }
  }
  return w;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j) {
  check_keys(j, "config",
             {"data", "n", "horizons", "encoder", "label", "noise_rho", "classifier",
              "lcn", "train", "raster", "rp_quantile", "split_ratios", "out_dir"});
  ExperimentConfig cfg;

  if (!j.contains("data")) throw ConfigError("config needs a 'data' section");
  const json& data = j.at("data");
  check_keys(data, "data", {"csv", "synth"});
  const bool has_csv = data.contains("csv");
  const bool has_synth = data.contains("synth");
  if (has_csv == has_synth)
    throw ConfigError("data must set exactly one of 'csv' or 'synth'");
  if (has_csv) cfg.data.csv_path = data.at("csv").get<std::string>();
  if (has_synth) cfg.data.synth = parse_synth(data.at("synth"));

  cfg.n = get_or<int>(j, "n", cfg.n);
  cfg.horizons = get_or<std::vector<int>>(j, "horizons", cfg.horizons);
  cfg.encoder = parse_encoder(get_or<std::string>(j, "encoder", "sgaf"));

  if (j.contains("label")) {
    const json& label = j.at("label");
    check_keys(label, "label", {"omega", "rate", "theta"});
    cfg.label.omega = get_or<double>(label, "omega", cfg.label.omega);
    cfg.label.rate = get_or<double>(label, "rate", cfg.label.rate);
    cfg.label.barrier_theta = get_or<double>(label, "theta", cfg.label.barrier_theta);
  }
  cfg.noise_rho = get_or<double>(j, "noise_rho", cfg.noise_rho);

  if (j.contains("classifier")) {
    const json& clf = j.at("classifier");
    check_keys(clf, "classifier", {"input_side", "hidden_sizes", "activation"});
    cfg.classifier.input_side = get_or<int>(clf, "input_side", cfg.classifier.input_side);
    cfg.classifier.hidden_sizes =
        get_or<std::vector<int>>(clf, "hidden_sizes", cfg.classifier.hidden_sizes);
    cfg.classifier.activation =
        parse_activation(get_or<std::string>(clf, "activation", "tanh"));
  }
  if (j.contains("lcn")) {
    const json& lcn = j.at("lcn");
    check_keys(lcn, "lcn", {"input_side", "branch_hidden", "fusion_hidden"});
    cfg.lcn.input_side = get_or<int>(lcn, "input_side", cfg.lcn.input_side);
    cfg.lcn.branch_hidden = get_or<int>(lcn, "branch_hidden", cfg.lcn.branch_hidden);
    cfg.lcn.fusion_hidden = get_or<int>(lcn, "fusion_hidden", cfg.lcn.fusion_hidden);
  }
  if (j.contains("train")) {
    const json& train = j.at("train");
    check_keys(train, "train",
               {"inner_steps", "eta", "mu", "fd_epsilon_scale", "batch_noisy",
                "batch_clean", "meta_steps", "hessian_mode",
                "reset_inner_each_meta_step", "seed", "init_scale"});
    cfg.train.inner_steps = get_or<int>(train, "inner_steps", cfg.train.inner_steps);
    cfg.train.eta = get_or<double>(train, "eta", cfg.train.eta);
    cfg.train.mu = get_or<double>(train, "mu", cfg.train.mu);
    cfg.train.fd_epsilon_scale =
        get_or<double>(train, "fd_epsilon_scale", cfg.train.fd_epsilon_scale);
    cfg.train.batch_noisy = get_or<int>(train, "batch_noisy", cfg.train.batch_noisy);
    cfg.train.batch_clean = get_or<int>(train, "batch_clean", cfg.train.batch_clean);
    cfg.train.meta_steps = get_or<int>(train, "meta_steps", cfg.train.meta_steps);
    cfg.train.hessian_mode =
        parse_hessian_mode(get_or<std::string>(train, "hessian_mode", "fd"));
    cfg.train.reset_inner_each_meta_step = get_or<bool>(
        train, "reset_inner_each_meta_step", cfg.train.reset_inner_each_meta_step);
    cfg.train.seed = get_or<std::uint64_t>(train, "seed", cfg.train.seed);
    cfg.train.init_scale = get_or<double>(train, "init_scale", cfg.train.init_scale);
  }
  if (j.contains("raster")) {
    const json& raster = j.at("raster");
    check_keys(raster, "raster", {"rows", "clip"});
    cfg.raster.rows = get_or<int>(raster, "rows", cfg.raster.rows);
    cfg.raster.clip = get_or<double>(raster, "clip", cfg.raster.clip);
  }
  cfg.rp.quantile = get_or<double>(j, "rp_quantile", cfg.rp.quantile);
  cfg.split_ratios = get_or<std::array<double, 3>>(j, "split_ratios", cfg.split_ratios);
  cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);

  // Cross-field checks.
  if (cfg.n < 2) throw ConfigError("n must be >= 2");
  if (cfg.horizons.empty()) throw ConfigError("horizons must be non-empty");
  for (int h : cfg.horizons)
    if (h < 1) throw ConfigError("every horizon must be >= 1");
  if (cfg.encoder != EncoderKind::Sgaf && cfg.encoder != EncoderKind::Srp)
    throw ConfigError("experiment encoder must be 'sgaf' or 'srp'");
  if (!(cfg.noise_rho >= 0.0 && cfg.noise_rho <= 1.0))
    throw ConfigError("noise_rho outside [0, 1]");
  if (cfg.noise_rho > 0.0 && !cfg.data.synth)
    throw ConfigError("noise_rho applies to synthetic data sources only");
  if (cfg.classifier.input_side != cfg.lcn.input_side)
    throw ConfigError("classifier and LCN must share input_side (X' feeds both)");
  validate_train_config(cfg.train);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON (" + path + "): " + e.what());
  }
  return parse_experiment_config(j);
}

nlohmann::ordered_json experiment_config_json(const ExperimentConfig& cfg) {
  ordered_json j;
  ordered_json data;
  if (cfg.data.synth) {
    const SynthSpec& s = *cfg.data.synth;
    data["synth"] = {{"length", s.length},
                     {"regime", regime_name(s.regime)},
                     {"trend_slopes", s.trend_slopes},
                     {"noise_sd", s.noise_sd},
                     {"seed", s.seed}};
  } else {
    data["csv"] = cfg.data.csv_path;
  }
  j["data"] = data;
  j["n"] = cfg.n;
  j["horizons"] = cfg.horizons;
  j["encoder"] = encoder_name(cfg.encoder);
  j["label"] = {{"omega", cfg.label.omega},
                {"rate", cfg.label.rate},
                {"theta", cfg.label.barrier_theta}};
  j["noise_rho"] = cfg.noise_rho;
  j["classifier"] = {{"input_side", cfg.classifier.input_side},
                     {"hidden_sizes", cfg.classifier.hidden_sizes},
                     {"activation", activation_name(cfg.classifier.activation)}};
  j["lcn"] = {{"input_side", cfg.lcn.input_side},
              {"branch_hidden", cfg.lcn.branch_hidden},
              {"fusion_hidden", cfg.lcn.fusion_hidden}};
  j["train"] = {{"inner_steps", cfg.train.inner_steps},
                {"eta", cfg.train.eta},
                {"mu", cfg.train.mu},
                {"fd_epsilon_scale", cfg.train.fd_epsilon_scale},
                {"batch_noisy", cfg.train.batch_noisy},
                {"batch_clean", cfg.train.batch_clean},
                {"meta_steps", cfg.train.meta_steps},
                {"hessian_mode", hessian_mode_name(cfg.train.hessian_mode)},
                {"reset_inner_each_meta_step", cfg.train.reset_inner_each_meta_step},
                {"seed", cfg.train.seed},
                {"init_scale", cfg.train.init_scale}};
  j["raster"] = {{"rows", cfg.raster.rows}, {"clip", cfg.raster.clip}};
  j["rp_quantile"] = cfg.rp.quantile;
  j["split_ratios"] = cfg.split_ratios;
  return j;
}

PriceSeries load_series(const ExperimentConfig& cfg) {
  if (cfg.data.synth) return synth_series(*cfg.data.synth);
  return load_price_csv(cfg.data.csv_path);
}

TaskData build_task_data(const PriceSeries& series, const ExperimentConfig& cfg,
                         int horizon, int task_index) {
  const DatasetSplit split = split_dataset(series, cfg.n, horizon, cfg.split_ratios);

  TaskData td;
  td.spec.task_id = task_index;
  td.spec.horizon = horizon;

  auto x_image = [&](const SampleWindow& s) {
    return downsample(encode_window(s, cfg.encoder, cfg.rp, cfg.raster).matrix,
                      cfg.classifier.input_side);
  };
  auto y_image = [&](const SampleWindow& s) {
    return downsample(encode_window(s, EncoderKind::Rrp, cfg.rp, cfg.raster).matrix,
                      cfg.lcn.input_side);
  };

  td.spec.noisy.reserve(split.noisy.size());
  td.noisy_rule_labels.reserve(split.noisy.size());
  for (const SampleWindow& s : split.noisy) {
    td.spec.noisy.push_back({x_image(s), y_image(s)});
    td.noisy_rule_labels.push_back(resolve_sample_label(s, cfg.label).label);
  }
  td.noisy_labels =
      cfg.noise_rho > 0.0
          ? inject_label_noise(td.noisy_rule_labels, cfg.noise_rho,
                               derive_seed(cfg.train.seed,
                                           0x4E00Ull + static_cast<std::uint64_t>(task_index)))
          : td.noisy_rule_labels;

  std::vector<TrendLabel> clean_labels;
  clean_labels.reserve(split.clean.size());
  std::size_t agreed = 0;
  td.spec.clean.reserve(split.clean.size());
  for (const SampleWindow& s : split.clean) {
    const CleanLabelOutcome outcome = resolve_sample_label(s, cfg.label);
    agreed += outcome.agreed ? 1 : 0;
    td.spec.clean.push_back({x_image(s), outcome.label});
    clean_labels.push_back(outcome.label);
  }
  td.clean_agreement_rate = double(agreed) / double(split.clean.size());

  std::vector<TrendLabel> test_labels;
  test_labels.reserve(split.test.size());
  td.test.reserve(split.test.size());
  for (const SampleWindow& s : split.test) {
    const CleanLabelOutcome outcome = resolve_sample_label(s, cfg.label);
    td.test.push_back({x_image(s), outcome.label});
    test_labels.push_back(outcome.label);
  }

  td.clean_dist = class_distribution(clean_labels);
  td.test_dist = class_distribution(test_labels);
  return td;
}

std::string run_id_for(const nlohmann::ordered_json& config_echo) {
  const std::string text = config_echo.dump();
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

Report run_experiment(const ExperimentConfig& cfg, int threads) {
  const auto start = std::chrono::steady_clock::now();
  PreparedRun run = prepare_run(cfg);
  const TrainedState trained = train_mmlc(run.models, run.tasks, cfg.train, run.schedule,
                                          run.w_init, run.alpha_init, threads);

  const ordered_json config_echo = experiment_config_json(cfg);
  ordered_json report;
  report["schema"] = "mmlc-report/1";
  report["run_id"] = run_id_for(config_echo);
  report["mode"] = "train";
  report["config"] = config_echo;
  report["tasks"] = ordered_json::array();
  for (std::size_t i = 0; i < run.tasks.size(); ++i) {
    ordered_json t = task_base_json(run.data[i], run.tasks[i]);
    t["metrics"] = metrics_json(
        evaluate(cfg.classifier, trained.task_weights[i].values, run.data[i].test));
    t["corrected_label_agreement"] = lcn_agreement(run.models, trained.alpha.values,
                                                   run.tasks[i], run.data[i].noisy_rule_labels);
    if (!trained.history.empty())
      t["final_clean_loss"] = trained.history.back().clean_loss[i];
    report["tasks"].push_back(std::move(t));
  }
  report["wall_clock_sec"] = elapsed_sec(start);

  write_run_artifacts(cfg, report, trained);
  return {report};
}

Report compare_baseline(const ExperimentConfig& cfg, int threads) {
  const auto start = std::chrono::steady_clock::now();
  PreparedRun run = prepare_run(cfg);
  const TrainedState trained = train_mmlc(run.models, run.tasks, cfg.train, run.schedule,
                                          run.w_init, run.alpha_init, threads);

  const ordered_json config_echo = experiment_config_json(cfg);
  ordered_json report;
  report["schema"] = "mmlc-report/1";
  report["run_id"] = run_id_for(config_echo);
  report["mode"] = "compare";
  report["config"] = config_echo;
  report["tasks"] = ordered_json::array();
  for (std::size_t i = 0; i < run.tasks.size(); ++i) {
    const VectorXd baseline_w =
        train_baseline_task(run.models, run.tasks[i], run.data[i].noisy_labels,
                            run.schedule[i], run.w_init[i], cfg.train.eta);
    const Metrics baseline_m = evaluate(cfg.classifier, baseline_w, run.data[i].test);
    const Metrics mmlc_m =
        evaluate(cfg.classifier, trained.task_weights[i].values, run.data[i].test);

    ordered_json t = task_base_json(run.data[i], run.tasks[i]);
    t["baseline"] = metrics_json(baseline_m);
    t["mmlc"] = metrics_json(mmlc_m);
    t["delta_accuracy"] = mmlc_m.accuracy - baseline_m.accuracy;
    t["corrected_label_agreement"] = lcn_agreement(run.models, trained.alpha.values,
                                                   run.tasks[i], run.data[i].noisy_rule_labels);
    report["tasks"].push_back(std::move(t));
  }
  report["wall_clock_sec"] = elapsed_sec(start);

  write_run_artifacts(cfg, report, trained);
  return {report};
}

Report evaluate_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  const auto start = std::chrono::steady_clock::now();
  const ParamVector combined = load_checkpoint(checkpoint_path);
  const PriceSeries series = load_series(cfg);

  const ordered_json config_echo = experiment_config_json(cfg);
  ordered_json report;
  report["schema"] = "mmlc-report/1";
  report["run_id"] = run_id_for(config_echo);
  report["mode"] = "eval";
  report["config"] = config_echo;
  report["tasks"] = ordered_json::array();
  for (std::size_t i = 0; i < cfg.horizons.size(); ++i) {
    TaskData data = build_task_data(series, cfg, cfg.horizons[i], static_cast<int>(i));
    const ParamVector w = extract_params(combined, "task" + std::to_string(i));
    if (w.layout.total() != cfg.classifier.layout().total())
      throw ConfigError("checkpoint task" + std::to_string(i) +
                        " does not match the configured classifier");
    ordered_json t = task_base_json(data, data.spec);
    t["metrics"] = metrics_json(evaluate(cfg.classifier, w.values, data.test));
    report["tasks"].push_back(std::move(t));
  }
  report["wall_clock_sec"] = elapsed_sec(start);
  return {report};
}

}  // namespace mmlc
