#include "mmlc/network.hpp"

#include <cmath>

#include "mmlc/rng.hpp"

namespace mmlc {
namespace {

Eigen::Map<const VectorXd> flatten(const MatrixXd& image) {
  return {image.data(), image.size()};
}

VectorXd activate(const VectorXd& z, Activation act) {
  if (act == Activation::Tanh) return z.array().tanh().matrix();
  return z.cwiseMax(0.0);
}

// Derivative expressed through the activation value (both choices allow it).
VectorXd activate_grad(const VectorXd& a, Activation act) {
  if (act == Activation::Tanh) return (1.0 - a.array().square()).matrix();
  return (a.array() > 0.0).cast<double>().matrix();
}

void check_size(const char* who, Eigen::Index have, Eigen::Index want) {
  if (have != want)
    throw ConfigError(std::string(who) + ": parameter/input size mismatch, have " +
                      std::to_string(have) + ", want " + std::to_string(want));
}

}  // namespace

const char* activation_name(Activation act) {
  return act == Activation::Tanh ? "tanh" : "relu";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation: " + name);
}

ParamLayout::ParamLayout(std::vector<LayerShape> entries) : entries_(std::move(entries)) {
  offsets_.reserve(entries_.size());
  for (const LayerShape& e : entries_) {
    if (e.rows < 1 || e.cols < 1)
      throw ConfigError("layout entry '" + e.name + "' has empty shape");
    offsets_.push_back(total_);
    total_ += e.rows * e.cols;
  }
}

Eigen::Map<const MatrixXd> ParamLayout::view(const VectorXd& flat, std::size_t i) const {
  check_size("ParamLayout::view", flat.size(), total_);
  const LayerShape& e = entries_[i];
  return {flat.data() + offsets_[i], e.rows, e.cols};
}

Eigen::Map<MatrixXd> ParamLayout::view(VectorXd& flat, std::size_t i) const {
  check_size("ParamLayout::view", flat.size(), total_);
  const LayerShape& e = entries_[i];
  return {flat.data() + offsets_[i], e.rows, e.cols};
}

ParamLayout ClassifierSpec::layout() const {
  if (input_side < 1) throw ConfigError("classifier input_side must be >= 1");
  if (hidden_sizes.empty()) throw ConfigError("classifier needs at least one hidden layer");
  std::vector<LayerShape> entries;
  Eigen::Index in = Eigen::Index(input_side) * input_side;
  for (std::size_t i = 0; i < hidden_sizes.size(); ++i) {
    const auto width = Eigen::Index(hidden_sizes[i]);
    if (width < 1) throw ConfigError("hidden layer width must be >= 1");
    const std::string base = "dense" + std::to_string(i);
    entries.push_back({base + ".weight", width, in});
    entries.push_back({base + ".bias", width, 1});
    in = width;
  }
  entries.push_back({"out.weight", kClasses, in});
  entries.push_back({"out.bias", kClasses, 1});
  return ParamLayout(std::move(entries));
}

ParamLayout LcnSpec::layout() const {
  if (input_side < 1) throw ConfigError("lcn input_side must be >= 1");
  if (branch_hidden < 1 || fusion_hidden < 1)
    throw ConfigError("lcn hidden widths must be >= 1");
  const Eigen::Index in = Eigen::Index(input_side) * input_side;
  const Eigen::Index bh = branch_hidden;
  const Eigen::Index fh = fusion_hidden;
  return ParamLayout({{"branch_x.weight", bh, in},
                      {"branch_x.bias", bh, 1},
                      {"branch_y.weight", bh, in},
                      {"branch_y.bias", bh, 1},
                      {"fusion.weight", fh, 2 * bh},
                      {"fusion.bias", fh, 1},
                      {"head.weight", kClasses, fh},
                      {"head.bias", kClasses, 1}});
}

ParamVector init_params(const ParamLayout& layout, std::uint64_t seed, double scale) {
  if (!(scale >= 0.0)) throw ConfigError("init scale must be >= 0");
  ParamVector pv;
  pv.layout = layout;
  pv.values = VectorXd::Zero(layout.total());
  NormalSampler normal(seed);
  for (std::size_t i = 0; i < layout.entries().size(); ++i) {
    if (layout.entries()[i].is_bias()) continue;
    auto block = layout.view(pv.values, i);
    for (Eigen::Index c = 0; c < block.cols(); ++c)
      for (Eigen::Index r = 0; r < block.rows(); ++r) block(r, c) = scale * normal();
  }
  return pv;
}

SoftLabel softmax3(const Eigen::Vector3d& logits) {
  const Eigen::Vector3d shifted = logits.array() - logits.maxCoeff();
  const Eigen::Vector3d e = shifted.array().exp();
  return e / e.sum();
}

double soft_cross_entropy(const SoftLabel& target, const SoftLabel& pred) {
  if ((pred.array() < -1e-9).any() || std::abs(pred.sum() - 1.0) > 1e-9)
    throw NumericError("soft_cross_entropy: prediction is not a distribution");
  return -(target.array() * (pred.array() + kLogFloor).log()).sum();
}

Eigen::Vector3d softmax3_backprop(const SoftLabel& probs, const Eigen::Vector3d& dprobs) {
  return (probs.array() * (dprobs.array() - dprobs.dot(probs))).matrix();
}

SoftLabel forward_classifier(const ClassifierSpec& spec, const VectorXd& w,
                             const MatrixXd& image, ClassifierCache* cache) {
  const ParamLayout layout = spec.layout();
  check_size("forward_classifier", w.size(), layout.total());
  check_size("forward_classifier input", image.size(),
             Eigen::Index(spec.input_side) * spec.input_side);

  ClassifierCache local;
  ClassifierCache& c = cache ? *cache : local;
  c.acts.clear();
  c.acts.push_back(flatten(image));
  const std::size_t n_hidden = spec.hidden_sizes.size();
  for (std::size_t i = 0; i < n_hidden; ++i) {
    const auto weight = layout.view(w, 2 * i);
    const auto bias = layout.view(w, 2 * i + 1);
    c.acts.push_back(activate(weight * c.acts.back() + bias.col(0), spec.activation));
  }
  const auto out_weight = layout.view(w, 2 * n_hidden);
  const auto out_bias = layout.view(w, 2 * n_hidden + 1);
  c.logits = out_weight * c.acts.back() + out_bias.col(0);
  c.probs = softmax3(c.logits);
  return c.probs;
}

SoftLabel forward_lcn(const LcnSpec& spec, const VectorXd& alpha, const MatrixXd& x_image,
                      const MatrixXd& y_image, LcnCache* cache) {
  const ParamLayout layout = spec.layout();
  check_size("forward_lcn", alpha.size(), layout.total());
  const Eigen::Index in = Eigen::Index(spec.input_side) * spec.input_side;
  check_size("forward_lcn X' input", x_image.size(), in);
  check_size("forward_lcn Y' input", y_image.size(), in);

  LcnCache local;
  LcnCache& c = cache ? *cache : local;
  c.x_in = flatten(x_image);
  c.y_in = flatten(y_image);
  c.x_act = activate(layout.view(alpha, 0) * c.x_in + layout.view(alpha, 1).col(0),
                     Activation::Tanh);
  c.y_act = activate(layout.view(alpha, 2) * c.y_in + layout.view(alpha, 3).col(0),
                     Activation::Tanh);
  c.joint.resize(c.x_act.size() + c.y_act.size());
  c.joint << c.x_act, c.y_act;
  c.fused = activate(layout.view(alpha, 4) * c.joint + layout.view(alpha, 5).col(0),
                     Activation::Relu);
  c.logits = layout.view(alpha, 6) * c.fused + layout.view(alpha, 7).col(0);
  c.probs = softmax3(c.logits);
  return c.probs;
}

double batch_loss_classifier(const ClassifierSpec& spec, const VectorXd& w,
                             const ImageBatch& batch) {
  if (batch.size() == 0) throw ConfigError("batch_loss_classifier: empty batch");
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b)
    loss += soft_cross_entropy(batch.targets[b], forward_classifier(spec, w, *batch.images[b]));
  return loss / double(batch.size());
}

VectorXd backward_classifier(const ClassifierSpec& spec, const VectorXd& w,
                             const ImageBatch& batch, double* mean_loss) {
  if (batch.size() == 0) throw ConfigError("backward_classifier: empty batch");
  if (batch.targets.size() != batch.size())
    throw ConfigError("backward_classifier: image/target count mismatch");
  const ParamLayout layout = spec.layout();
  VectorXd grad = VectorXd::Zero(layout.total());
  const std::size_t n_hidden = spec.hidden_sizes.size();
  double loss = 0.0;

  ClassifierCache cache;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    forward_classifier(spec, w, *batch.images[b], &cache);
    const SoftLabel& target = batch.targets[b];
    loss += soft_cross_entropy(target, cache.probs);

    // dL/dp_c = -t_c / (p_c + floor), then through the softmax Jacobian.
    const Eigen::Vector3d dprobs =
        (-target.array() / (cache.probs.array() + kLogFloor)).matrix();
    VectorXd delta = softmax3_backprop(cache.probs, dprobs);

    for (std::size_t l = n_hidden + 1; l-- > 0;) {
      layout.view(grad, 2 * l).noalias() += delta * cache.acts[l].transpose();
      layout.view(grad, 2 * l + 1).col(0) += delta;
      if (l > 0) {
        const auto weight = layout.view(w, 2 * l);
        delta = (weight.transpose() * delta)
                    .cwiseProduct(activate_grad(cache.acts[l], spec.activation));
      }
    }
  }
  grad /= double(batch.size());
  if (mean_loss) *mean_loss = loss / double(batch.size());
  return grad;
}

double batch_loss_lcn_target(const LcnSpec& lcn, const VectorXd& alpha,
                             const ClassifierSpec& clf, const VectorXd& w,
                             const PairBatch& batch) {
  if (batch.size() == 0) throw ConfigError("batch_loss_lcn_target: empty batch");
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const SoftLabel target = forward_lcn(lcn, alpha, *batch.x_images[b], *batch.y_images[b]);
    const SoftLabel pred = forward_classifier(clf, w, *batch.x_images[b]);
    loss += soft_cross_entropy(target, pred);
  }
  return loss / double(batch.size());
}

VectorXd backward_lcn_through_target(const LcnSpec& lcn, const VectorXd& alpha,
                                     const ClassifierSpec& clf, const VectorXd& w,
                                     const PairBatch& batch, double* mean_loss) {
  if (batch.size() == 0) throw ConfigError("backward_lcn_through_target: empty batch");
  if (batch.y_images.size() != batch.size())
    throw ConfigError("backward_lcn_through_target: X'/Y' count mismatch");
  const ParamLayout layout = lcn.layout();
  VectorXd grad = VectorXd::Zero(layout.total());
  double loss = 0.0;

  LcnCache cache;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const SoftLabel pred = forward_classifier(clf, w, *batch.x_images[b]);
    forward_lcn(lcn, alpha, *batch.x_images[b], *batch.y_images[b], &cache);
    loss += soft_cross_entropy(cache.probs, pred);

    // The loss sees alpha only via the target: dL/dtarget_c = -log(pred_c + floor).
    const Eigen::Vector3d dtarget = (-(pred.array() + kLogFloor).log()).matrix();
    const Eigen::Vector3d dlogits = softmax3_backprop(cache.probs, dtarget);

    layout.view(grad, 6).noalias() += dlogits * cache.fused.transpose();
    layout.view(grad, 7).col(0) += dlogits;

    VectorXd dfused = (layout.view(alpha, 6).transpose() * dlogits)
                          .cwiseProduct(activate_grad(cache.fused, Activation::Relu));
    layout.view(grad, 4).noalias() += dfused * cache.joint.transpose();
    layout.view(grad, 5).col(0) += dfused;

    const auto fusion_weight = layout.view(alpha, 4);
    const Eigen::Index bh = cache.x_act.size();
    const VectorXd djoint = fusion_weight.transpose() * dfused;
    const VectorXd dx = djoint.head(bh).cwiseProduct(activate_grad(cache.x_act, Activation::Tanh));
    const VectorXd dy = djoint.tail(bh).cwiseProduct(activate_grad(cache.y_act, Activation::Tanh));

    layout.view(grad, 0).noalias() += dx * cache.x_in.transpose();
    layout.view(grad, 1).col(0) += dx;
    layout.view(grad, 2).noalias() += dy * cache.y_in.transpose();
    layout.view(grad, 3).col(0) += dy;
  }
  grad /= double(batch.size());
  if (mean_loss) *mean_loss = loss / double(batch.size());
  return grad;
}

SoftLabel one_hot(TrendLabel label) {
  SoftLabel t = SoftLabel::Zero();
  t[static_cast<int>(label)] = 1.0;
  return t;
}

}  // namespace mmlc
