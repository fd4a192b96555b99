#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "mmlc/network.hpp"

namespace mmlc {

// One noisy-domain sample: history image X' and horizon raster Y'. No label —
// the optimizer never sees noisy hard labels, only these two images.
struct NoisyExample {
  MatrixXd x_image;
  MatrixXd y_image;
};

// One clean-domain sample: history image plus agreement-verified hard label.
struct CleanExample {
  MatrixXd x_image;
  TrendLabel label = TrendLabel::Stationary;
};

// A prediction task, distinguished solely by its horizon.
struct TaskSpec {
  int task_id = 0;
  int horizon = 0;
  std::vector<NoisyExample> noisy;
  std::vector<CleanExample> clean;
};

// identity: drop the curvature correction (the one-step estimator alone).
// fd: apply the one-step correction using a finite-difference Hessian-vector
// product and the g_w / ||g_w||^2 projection, recursion depth 1.
enum class HessianMode { Identity, Fd };

const char* hessian_mode_name(HessianMode mode);
HessianMode parse_hessian_mode(const std::string& name);

struct TrainConfig {
  int inner_steps = 1;             // K: SGD steps per meta step
  double eta = 3e-5;               // inner learning rate
  double mu = 3e-4;                // meta learning rate
  double fd_epsilon_scale = 0.01;  // eps_fd = scale / ||direction||
  int batch_noisy = 32;
  int batch_clean = 32;
  int meta_steps = 100;
  HessianMode hessian_mode = HessianMode::Fd;
  bool reset_inner_each_meta_step = false;
  std::uint64_t seed = 0;
  double init_scale = 0.05;
};

void validate_train_config(const TrainConfig& cfg);

struct ModelSpecs {
  ClassifierSpec classifier;
  LcnSpec lcn;
};

// Minibatch = indices into a task's noisy or clean set.
using Batch = std::vector<int>;

// Pre-drawn batches for one meta step: K noisy batches for the inner loop and
// the clean batch the meta gradient uses. Pre-generating the whole schedule
// keeps runs replayable and lets the baseline train on the very same batches.
struct StepPlan {
  std::vector<Batch> inner;
  Batch clean;
};

// schedule[task][meta_step]
std::vector<std::vector<StepPlan>> make_schedule(const std::vector<TaskSpec>& tasks,
                                                 const TrainConfig& cfg);

struct InnerState {
  VectorXd w_final;            // w_K
  VectorXd w_prev;             // w_{K-1}
  Batch last_batch;            // the step-K minibatch (replay: w_K = w_{K-1} - eta*grad)
  double last_loss = 0.0;      // mean corrected-target loss at w_{K-1} on that batch
};

// K steps of SGD on the corrected-target loss: targets are g_alpha(X', Y')
// recomputed per batch, gradients through the classifier only.
InnerState inner_loop(const ModelSpecs& specs, const TaskSpec& task, const VectorXd& alpha,
                      const VectorXd& w0, const TrainConfig& cfg,
                      std::span<const Batch> batches);

// Mean clean-set cross-entropy (one-hot targets) and its gradient at w.
ImageBatch make_clean_batch(const TaskSpec& task, const Batch& indices);
double clean_loss(const ModelSpecs& specs, const TaskSpec& task, const VectorXd& w,
                  const Batch& indices);
VectorXd clean_gradient(const ModelSpecs& specs, const TaskSpec& task, const VectorXd& w,
                        const Batch& indices, double* loss = nullptr);

// Central difference of a gradient map along direction v, step scale/||v||.
// grad_fn may return a vector of any fixed dimension (it need not match the
// perturbed point's). v = 0 is degenerate: returns zeros and sets the flag.
template <typename GradFn>
VectorXd directional_fd(GradFn&& grad_fn, const VectorXd& at, const VectorXd& v,
                        double eps_scale, bool* degenerate = nullptr) {
  if (!(eps_scale > 0.0)) throw ConfigError("directional_fd: eps scale must be positive");
  if (degenerate) *degenerate = false;
  const double norm = v.norm();
  if (norm == 0.0) {
    if (degenerate) *degenerate = true;
    return VectorXd::Zero(grad_fn(at).size());
  }
  const double eps = eps_scale / norm;
  const VectorXd plus = grad_fn(at + eps * v);
  const VectorXd minus = grad_fn(at - eps * v);
  return (plus - minus) / (2.0 * eps);
}

// Hessian-vector product H_ww * v of the inner loss at (alpha, w), by central
// differences of the w-gradient. Exact for quadratics at any step size.
VectorXd fd_hvp_ww(const ModelSpecs& specs, const TaskSpec& task, const VectorXd& alpha,
                   const VectorXd& w, const VectorXd& v, const Batch& batch,
                   double eps_scale);

// d/d_eps of grad_alpha L_inner(alpha, w + eps*v) at 0: the mixed-derivative
// contraction the one-step hypergradient needs. Caller multiplies by -eta.
VectorXd fd_cross_grad_alpha(const ModelSpecs& specs, const TaskSpec& task,
                             const VectorXd& alpha, const VectorXd& w, const VectorXd& v,
                             const Batch& batch, double eps_scale);

struct TaskMetaInput {
  const TaskSpec* task = nullptr;
  const InnerState* state = nullptr;
  const Batch* clean_batch = nullptr;
};

// Hypergradient of the summed clean losses w.r.t. alpha. Per task:
//   g_w' = clean gradient at w_K;
//   base = -eta * fd_cross_grad_alpha(alpha, w_{K-1}, g_w', last batch);
//   identity mode: the base alone;
//   fd mode: scale the base by (1 + (g_w' - eta*H*g_w') . g_w / ||g_w||^2),
//   where g_w is the clean gradient at w_{K-1} (zero g_w skips the factor).
VectorXd meta_gradient(const ModelSpecs& specs, std::span<const TaskMetaInput> inputs,
                       const VectorXd& alpha, const TrainConfig& cfg);

VectorXd meta_step(const VectorXd& alpha, const VectorXd& grad, double mu);

struct MetaStepLog {
  int step = 0;
  std::vector<double> inner_loss;  // per task, last inner batch
  std::vector<double> clean_loss;  // per task, full clean set after the step
  double meta_grad_norm = 0.0;
};

struct TrainedState {
  ParamVector alpha;
  std::vector<ParamVector> task_weights;
  std::vector<MetaStepLog> history;
};

// Full optimizer. The explicit-schedule overload is the deterministic core;
// the short overload derives schedule and initial parameters from cfg.seed.
TrainedState train_mmlc(const ModelSpecs& specs, const std::vector<TaskSpec>& tasks,
                        const TrainConfig& cfg,
                        const std::vector<std::vector<StepPlan>>& schedule,
                        const std::vector<VectorXd>& w_init, const VectorXd& alpha_init,
                        int threads = 1);
TrainedState train_mmlc(const ModelSpecs& specs, const std::vector<TaskSpec>& tasks,
                        const TrainConfig& cfg, int threads = 1);

std::vector<VectorXd> default_task_inits(const ModelSpecs& specs, std::size_t n_tasks,
                                         const TrainConfig& cfg);
VectorXd default_alpha_init(const ModelSpecs& specs, const TrainConfig& cfg);

// Ground-truth hypergradient by per-coordinate central differences over alpha:
// rerun the inner loop from the same w0 and batches at alpha +/- delta and
// difference the clean-batch loss at w_K. Guarded to small alphas.
VectorXd bilevel_fd_oracle(const ModelSpecs& specs, const TaskSpec& task,
                           const VectorXd& alpha, const VectorXd& w0,
                           const TrainConfig& cfg, const StepPlan& plan, double delta);

}  // namespace mmlc
