#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "mmlc/errors.hpp"
#include "mmlc/labeling.hpp"

namespace mmlc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Probability distribution over the three trend classes.
using SoftLabel = Eigen::Vector3d;

// Floor added inside every log so saturated softmax outputs cannot emit -inf.
// Gradients account for the floor exactly, so finite-difference checks see
// the same function the analytic path differentiates.
constexpr double kLogFloor = 1e-12;

enum class Activation { Tanh, Relu };

const char* activation_name(Activation act);
Activation parse_activation(const std::string& name);

// One named block of a flat parameter vector. Bias blocks are single columns
// named with a ".bias" suffix; init_params leaves them zero.
struct LayerShape {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  bool is_bias() const {
    return name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
  }
  bool operator==(const LayerShape&) const = default;
};

// Maps a flat vector onto named weight/bias matrices (column-major blocks in
// declaration order).
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<LayerShape> entries);

  Eigen::Index total() const { return total_; }
  const std::vector<LayerShape>& entries() const { return entries_; }
  Eigen::Index offset(std::size_t i) const { return offsets_[i]; }

  Eigen::Map<const MatrixXd> view(const VectorXd& flat, std::size_t i) const;
  Eigen::Map<MatrixXd> view(VectorXd& flat, std::size_t i) const;

  bool operator==(const ParamLayout& other) const { return entries_ == other.entries_; }

 private:
  std::vector<LayerShape> entries_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index total_ = 0;
};

// Flat parameter vector plus the layout that interprets it. Used for task
// weights w, meta weights alpha, and their gradients alike.
struct ParamVector {
  VectorXd values;
  ParamLayout layout;
};

// Per-task trend classifier f_w: flattened image -> dense stack -> 3-way
// softmax.
struct ClassifierSpec {
  int input_side = 16;
  std::vector<int> hidden_sizes{64, 32};
  Activation activation = Activation::Tanh;

  ParamLayout layout() const;
};

// Label-correction network g_alpha: two dense branches (history image X',
// horizon raster Y', not weight-tied), tanh embeddings, concatenated into a
// relu fusion layer and a 3-way softmax head.
struct LcnSpec {
  int input_side = 16;
  int branch_hidden = 64;
  int fusion_hidden = 32;

  ParamLayout layout() const;
};

// Weights ~ N(0, scale^2) via the pinned Box-Muller sampler, biases zero.
ParamVector init_params(const ParamLayout& layout, std::uint64_t seed,
                        double scale = 0.05);

SoftLabel softmax3(const Eigen::Vector3d& logits);

// -sum_c target_c * log(pred_c + floor). Targets may be soft.
double soft_cross_entropy(const SoftLabel& target, const SoftLabel& pred);

// dL/dlogits given dL/dprobs, through the softmax Jacobian.
Eigen::Vector3d softmax3_backprop(const SoftLabel& probs, const Eigen::Vector3d& dprobs);

struct ClassifierCache {
  std::vector<VectorXd> acts;  // acts[0] = flattened input, then hidden activations
  Eigen::Vector3d logits;
  SoftLabel probs;
};

SoftLabel forward_classifier(const ClassifierSpec& spec, const VectorXd& w,
                             const MatrixXd& image, ClassifierCache* cache = nullptr);

struct LcnCache {
  VectorXd x_in, y_in;    // flattened branch inputs
  VectorXd x_act, y_act;  // tanh branch embeddings
  VectorXd joint;         // [x_act; y_act]
  VectorXd fused;         // relu fusion activation
  Eigen::Vector3d logits;
  SoftLabel probs;
};

SoftLabel forward_lcn(const LcnSpec& spec, const VectorXd& alpha, const MatrixXd& x_image,
                      const MatrixXd& y_image, LcnCache* cache = nullptr);

// Batches hold pointers into caller-owned image storage; no copies.
struct ImageBatch {
  std::vector<const MatrixXd*> images;
  std::vector<SoftLabel> targets;

  std::size_t size() const { return images.size(); }
};

struct PairBatch {
  std::vector<const MatrixXd*> x_images;
  std::vector<const MatrixXd*> y_images;

  std::size_t size() const { return x_images.size(); }
};

double batch_loss_classifier(const ClassifierSpec& spec, const VectorXd& w,
                             const ImageBatch& batch);

// Exact gradient of the mean soft cross-entropy over the batch w.r.t. w.
VectorXd backward_classifier(const ClassifierSpec& spec, const VectorXd& w,
                             const ImageBatch& batch, double* mean_loss = nullptr);

double batch_loss_lcn_target(const LcnSpec& lcn, const VectorXd& alpha,
                             const ClassifierSpec& clf, const VectorXd& w,
                             const PairBatch& batch);

// Exact gradient w.r.t. alpha of mean ell(g_alpha(X', Y'), f_w(X')) with w
// held fixed: alpha reaches the loss only through the target side, whose
// partial is -log(pred_c + floor).
VectorXd backward_lcn_through_target(const LcnSpec& lcn, const VectorXd& alpha,
                                     const ClassifierSpec& clf, const VectorXd& w,
                                     const PairBatch& batch, double* mean_loss = nullptr);

SoftLabel one_hot(TrendLabel label);

}  // namespace mmlc
