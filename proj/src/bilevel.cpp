#include "mmlc/bilevel.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <thread>

#include "mmlc/rng.hpp"

namespace mmlc {
namespace {

Batch sample_batch(std::mt19937_64& rng, std::size_t set_size, int batch_size) {
  const auto draw = std::min<std::size_t>(static_cast<std::size_t>(batch_size), set_size);
  Batch batch(draw);
  for (auto& idx : batch) idx = static_cast<int>(uniform_index(rng, set_size));
  return batch;
}

// Soft targets y^c = g_alpha(X', Y') for the indexed noisy examples.
ImageBatch make_corrected_batch(const ModelSpecs& specs, const TaskSpec& task,
                                const VectorXd& alpha, const Batch& indices) {
  ImageBatch batch;
  batch.images.reserve(indices.size());
  batch.targets.reserve(indices.size());
  for (int idx : indices) {
    const NoisyExample& ex = task.noisy[static_cast<std::size_t>(idx)];
    batch.images.push_back(&ex.x_image);
    batch.targets.push_back(forward_lcn(specs.lcn, alpha, ex.x_image, ex.y_image));
  }
  return batch;
}

PairBatch make_pair_batch(const TaskSpec& task, const Batch& indices) {
  PairBatch batch;
  batch.x_images.reserve(indices.size());
  batch.y_images.reserve(indices.size());
  for (int idx : indices) {
    const NoisyExample& ex = task.noisy[static_cast<std::size_t>(idx)];
    batch.x_images.push_back(&ex.x_image);
    batch.y_images.push_back(&ex.y_image);
  }
  return batch;
}

Batch full_range(std::size_t size) {
  Batch all(size);
  for (std::size_t i = 0; i < size; ++i) all[i] = static_cast<int>(i);
  return all;
}

}  // namespace

const char* hessian_mode_name(HessianMode mode) {
  return mode == HessianMode::Identity ? "identity" : "fd";
}

HessianMode parse_hessian_mode(const std::string& name) {
  if (name == "identity") return HessianMode::Identity;
  if (name == "fd") return HessianMode::Fd;
  throw ConfigError("unknown hessian mode: " + name);
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.inner_steps < 1) throw ConfigError("inner_steps (K) must be >= 1");
  if (!(cfg.eta > 0.0)) throw ConfigError("eta must be positive");
  if (!(cfg.mu > 0.0)) throw ConfigError("mu must be positive");
  if (!(cfg.fd_epsilon_scale > 0.0)) throw ConfigError("fd_epsilon_scale must be positive");
  if (cfg.batch_noisy < 1 || cfg.batch_clean < 1)
    throw ConfigError("batch sizes must be >= 1");
  if (cfg.meta_steps < 0) throw ConfigError("meta_steps must be >= 0");
  if (!(cfg.init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
}

std::vector<std::vector<StepPlan>> make_schedule(const std::vector<TaskSpec>& tasks,
                                                 const TrainConfig& cfg) {
  validate_train_config(cfg);
  std::vector<std::vector<StepPlan>> schedule(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskSpec& task = tasks[i];
    if (task.noisy.empty())
      throw ConfigError("task " + std::to_string(task.task_id) + " has no noisy examples");
    if (task.clean.empty())
      throw ConfigError("task " + std::to_string(task.task_id) + " has no clean examples");
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x6261Ull + i));
    schedule[i].reserve(static_cast<std::size_t>(cfg.meta_steps));
    for (int step = 0; step < cfg.meta_steps; ++step) {
      StepPlan plan;
      plan.inner.reserve(static_cast<std::size_t>(cfg.inner_steps));
      for (int k = 0; k < cfg.inner_steps; ++k)
        plan.inner.push_back(sample_batch(rng, task.noisy.size(), cfg.batch_noisy));
      plan.clean = sample_batch(rng, task.clean.size(), cfg.batch_clean);
      schedule[i].push_back(std::move(plan));
    }
  }
  return schedule;
}

InnerState inner_loop(const ModelSpecs& specs, const TaskSpec& task, const VectorXd& alpha,
                      const VectorXd& w0, const TrainConfig& cfg,
                      std::span<const Batch> batches) {
  if (task.noisy.empty()) throw ConfigError("inner_loop: task has no noisy examples");
  if (batches.empty()) throw ConfigError("inner_loop: needs at least one batch");

  InnerState state;
  state.w_final = w0;
  state.w_prev = w0;
  for (const Batch& indices : batches) {
    const ImageBatch batch = make_corrected_batch(specs, task, alpha, indices);
    double loss = 0.0;
    const VectorXd grad = backward_classifier(specs.classifier, state.w_final, batch, &loss);
    if (!std::isfinite(loss) || !grad.allFinite())
      throw NumericError("inner loop diverged in task " + std::to_string(task.task_id) +
                         " (non-finite loss; eta may be too large)");
    state.w_prev = state.w_final;
    state.w_final -= cfg.eta * grad;
    state.last_loss = loss;
    state.last_batch = indices;
  }
  return state;
}

ImageBatch make_clean_batch(const TaskSpec& task, const Batch& indices) {
  ImageBatch batch;
  batch.images.reserve(indices.size());
  batch.targets.reserve(indices.size());
  for (int idx : indices) {
    const CleanExample& ex = task.clean[static_cast<std::size_t>(idx)];
    batch.images.push_back(&ex.x_image);
    batch.targets.push_back(one_hot(ex.label));
  }
  return batch;
}

double clean_loss(const ModelSpecs& specs, const TaskSpec& task, const VectorXd& w,
                  const Batch& indices) {
  return batch_loss_classifier(specs.classifier, w, make_clean_batch(task, indices));
}

VectorXd clean_gradient(const ModelSpecs& specs, const TaskSpec& task, const VectorXd& w,
                        const Batch& indices, double* loss) {
  return backward_classifier(specs.classifier, w, make_clean_batch(task, indices), loss);
}

VectorXd fd_hvp_ww(const ModelSpecs& specs, const TaskSpec& task, const VectorXd& alpha,
                   const VectorXd& w, const VectorXd& v, const Batch& batch,
                   double eps_scale) {
  // The corrected targets depend on alpha only, so they are fixed across the
  // two probe points — exactly the pairing the central difference requires.
  const ImageBatch fixed = make_corrected_batch(specs, task, alpha, batch);
  bool degenerate = false;
  VectorXd hvp = directional_fd(
      [&](const VectorXd& point) {
        return backward_classifier(specs.classifier, point, fixed);
      },
      w, v, eps_scale, &degenerate);
  if (degenerate)
    std::cerr << "[mmlc] fd_hvp_ww: zero direction vector, returning zeros\n";
  return hvp;
}

VectorXd fd_cross_grad_alpha(const ModelSpecs& specs, const TaskSpec& task,
                             const VectorXd& alpha, const VectorXd& w, const VectorXd& v,
                             const Batch& batch, double eps_scale) {
  const PairBatch pairs = make_pair_batch(task, batch);
  bool degenerate = false;
  VectorXd grad = directional_fd(
      [&](const VectorXd& point) {
        return backward_lcn_through_target(specs.lcn, alpha, specs.classifier, point, pairs);
      },
      w, v, eps_scale, &degenerate);
  if (degenerate)
    std::cerr << "[mmlc] fd_cross_grad_alpha: zero direction vector, returning zeros\n";
  return grad;
}

VectorXd meta_gradient(const ModelSpecs& specs, std::span<const TaskMetaInput> inputs,
                       const VectorXd& alpha, const TrainConfig& cfg) {
  if (inputs.empty()) throw ConfigError("meta_gradient: no task inputs");
  VectorXd total = VectorXd::Zero(alpha.size());
  for (const TaskMetaInput& in : inputs) {
    const TaskSpec& task = *in.task;
    const InnerState& state = *in.state;

    const VectorXd g_wp = clean_gradient(specs, task, state.w_final, *in.clean_batch);
    VectorXd task_grad =
        -cfg.eta * fd_cross_grad_alpha(specs, task, alpha, state.w_prev, g_wp,
                                       state.last_batch, cfg.fd_epsilon_scale);
    if (cfg.hessian_mode == HessianMode::Fd) {
      const VectorXd g_w = clean_gradient(specs, task, state.w_prev, *in.clean_batch);
      const double denom = g_w.squaredNorm();
      if (denom > 0.0) {
        const VectorXd hvp = fd_hvp_ww(specs, task, alpha, state.w_prev, g_wp,
                                       state.last_batch, cfg.fd_epsilon_scale);
        const double factor = (g_wp - cfg.eta * hvp).dot(g_w) / denom;
        task_grad *= 1.0 + factor;
      }
    }
    if (!task_grad.allFinite())
      throw NumericError("non-finite meta gradient in task " + std::to_string(task.task_id));
    total += task_grad;
  }
  return total;
}

VectorXd meta_step(const VectorXd& alpha, const VectorXd& grad, double mu) {
  if (alpha.size() != grad.size()) throw ConfigError("meta_step: size mismatch");
  return alpha - mu * grad;
}

std::vector<VectorXd> default_task_inits(const ModelSpecs& specs, std::size_t n_tasks,
                                         const TrainConfig& cfg) {
  std::vector<VectorXd> inits;
  inits.reserve(n_tasks);
  for (std::size_t i = 0; i < n_tasks; ++i)
    inits.push_back(
        init_params(specs.classifier.layout(), derive_seed(cfg.seed, 0xC0Ull + i),
                    cfg.init_scale)
            .values);
  return inits;
}

VectorXd default_alpha_init(const ModelSpecs& specs, const TrainConfig& cfg) {
  return init_params(specs.lcn.layout(), derive_seed(cfg.seed, 0xA1Ull), cfg.init_scale)
      .values;
}

TrainedState train_mmlc(const ModelSpecs& specs, const std::vector<TaskSpec>& tasks,
                        const TrainConfig& cfg,
                        const std::vector<std::vector<StepPlan>>& schedule,
                        const std::vector<VectorXd>& w_init, const VectorXd& alpha_init,
                        int threads) {
  validate_train_config(cfg);
  if (tasks.empty()) throw ConfigError("train_mmlc: need at least one task");
  if (schedule.size() != tasks.size() || w_init.size() != tasks.size())
    throw ConfigError("train_mmlc: schedule/init count must match task count");

  const std::size_t n_tasks = tasks.size();
  std::vector<VectorXd> w = w_init;
  VectorXd alpha = alpha_init;
  TrainedState out;
  out.history.reserve(static_cast<std::size_t>(cfg.meta_steps));

  std::vector<Batch> full_clean(n_tasks);
  for (std::size_t i = 0; i < n_tasks; ++i) full_clean[i] = full_range(tasks[i].clean.size());

  const int workers =
      std::max(1, std::min<int>(threads, static_cast<int>(n_tasks)));

  for (int step = 0; step < cfg.meta_steps; ++step) {
    std::vector<InnerState> states(n_tasks);
    auto run_task = [&](std::size_t i) {
      const VectorXd& start = cfg.reset_inner_each_meta_step ? w_init[i] : w[i];
      states[i] = inner_loop(specs, tasks[i], alpha, start, cfg,
                             schedule[i][static_cast<std::size_t>(step)].inner);
    };
    if (workers == 1) {
      for (std::size_t i = 0; i < n_tasks; ++i) run_task(i);
    } else {
      // Tasks are independent; results land in distinct slots, and every
      // reduction below walks tasks in index order, so the outcome matches
      // the single-threaded schedule bitwise.
      std::vector<std::thread> pool;
      std::atomic<std::size_t> next{0};
      for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
          for (std::size_t i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1))
            run_task(i);
        });
      for (auto& th : pool) th.join();
    }

    std::vector<TaskMetaInput> inputs(n_tasks);
    for (std::size_t i = 0; i < n_tasks; ++i)
      inputs[i] = {&tasks[i], &states[i],
                   &schedule[i][static_cast<std::size_t>(step)].clean};
    const VectorXd grad = meta_gradient(specs, inputs, alpha, cfg);
    alpha = meta_step(alpha, grad, cfg.mu);

    MetaStepLog log;
    log.step = step;
    log.meta_grad_norm = grad.norm();
    for (std::size_t i = 0; i < n_tasks; ++i) {
      w[i] = states[i].w_final;
      log.inner_loss.push_back(states[i].last_loss);
      log.clean_loss.push_back(clean_loss(specs, tasks[i], w[i], full_clean[i]));
    }
    out.history.push_back(std::move(log));
  }

  out.alpha = {alpha, specs.lcn.layout()};
  out.task_weights.reserve(n_tasks);
  for (std::size_t i = 0; i < n_tasks; ++i)
    out.task_weights.push_back({w[i], specs.classifier.layout()});
  return out;
}

TrainedState train_mmlc(const ModelSpecs& specs, const std::vector<TaskSpec>& tasks,
                        const TrainConfig& cfg, int threads) {
  return train_mmlc(specs, tasks, cfg, make_schedule(tasks, cfg),
                    default_task_inits(specs, tasks.size(), cfg),
                    default_alpha_init(specs, cfg), threads);
}

VectorXd bilevel_fd_oracle(const ModelSpecs& specs, const TaskSpec& task,
                           const VectorXd& alpha, const VectorXd& w0,
                           const TrainConfig& cfg, const StepPlan& plan, double delta) {
  if (alpha.size() > 512)
    throw ConfigError("bilevel_fd_oracle: guarded to <= 512 alpha coordinates, got " +
                      std::to_string(alpha.size()));
  if (!(delta > 0.0)) throw ConfigError("bilevel_fd_oracle: delta must be positive");

  const ImageBatch clean = make_clean_batch(task, plan.clean);
  auto loss_after_inner = [&](const VectorXd& probe) {
    const InnerState state = inner_loop(specs, task, probe, w0, cfg, plan.inner);
    return batch_loss_classifier(specs.classifier, state.w_final, clean);
  };

  VectorXd grad(alpha.size());
  VectorXd probe = alpha;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    probe[j] = alpha[j] + delta;
    const double up = loss_after_inner(probe);
    probe[j] = alpha[j] - delta;
    const double down = loss_after_inner(probe);
    probe[j] = alpha[j];
    grad[j] = (up - down) / (2.0 * delta);
  }
  return grad;
}

}  // namespace mmlc
