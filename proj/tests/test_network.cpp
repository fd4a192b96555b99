#include <doctest.h>

#include <cmath>
#include <random>

#include "mmlc/network.hpp"
#include "mmlc/rng.hpp"

using namespace mmlc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_image(int side, NormalSampler& noise) {
  MatrixXd img(side, side);
  for (Eigen::Index r = 0; r < side; ++r)
    for (Eigen::Index c = 0; c < side; ++c) img(r, c) = noise();
  return img;
}

// Worst per-coordinate relative error of the analytic gradient against a
// central finite difference of the loss.
template <typename LossFn>
double fd_worst_rel_err(LossFn&& loss, const VectorXd& at, const VectorXd& analytic,
                        double h = 1e-5) {
  double worst = 0.0;
  VectorXd probe = at;
  for (Eigen::Index j = 0; j < at.size(); ++j) {
    probe[j] = at[j] + h;
    const double up = loss(probe);
    probe[j] = at[j] - h;
    const double dn = loss(probe);
    probe[j] = at[j];
    const double fd = (up - dn) / (2.0 * h);
    const double scale = std::max({1e-8, std::abs(fd), std::abs(analytic[j])});
    worst = std::max(worst, std::abs(fd - analytic[j]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("layouts size the flat vector") {
  ClassifierSpec clf;  // 16 -> 64 -> 32 -> 3
  CHECK(clf.layout().total() == 256 * 64 + 64 + 64 * 32 + 32 + 32 * 3 + 3);

  LcnSpec lcn;  // branches 256 -> 64 each, fusion 128 -> 32, head 3
  CHECK(lcn.layout().total() ==
        2 * (256 * 64 + 64) + 32 * 128 + 32 + 32 * 3 + 3);

  ClassifierSpec tiny;
  tiny.input_side = 2;
  tiny.hidden_sizes = {3};
  const ParamLayout layout = tiny.layout();
  REQUIRE(layout.entries().size() == 4);
  CHECK(layout.entries()[0].name == "dense0.weight");
  CHECK(layout.entries()[1].name == "dense0.bias");
  CHECK(layout.entries()[1].is_bias());
  CHECK(layout.entries()[2].name == "out.weight");
  CHECK(layout.total() == 4 * 3 + 3 + 3 * 3 + 3);

  // Views are column-major blocks in declaration order.
  VectorXd flat = VectorXd::LinSpaced(layout.total(), 0.0, double(layout.total() - 1));
  const auto w0 = layout.view(flat, 0);
  CHECK(w0(0, 0) == 0.0);
  CHECK(w0(1, 0) == 1.0);  // column-major: next value walks down the column
  CHECK(w0(0, 1) == 3.0);
  const auto b0 = layout.view(flat, 1);
  CHECK(b0(0, 0) == 12.0);
}

TEST_CASE("init_params leaves biases at zero and scales weights") {
  ClassifierSpec clf;
  const ParamLayout layout = clf.layout();
  const ParamVector w = init_params(layout, 42, 0.05);
  REQUIRE(w.values.size() == layout.total());

  const auto bias0 = layout.view(w.values, 1);
  CHECK(bias0.isZero(0.0));
  const auto out_bias = layout.view(w.values, 5);
  CHECK(out_bias.isZero(0.0));

  // Weight blocks are N(0, scale^2): check the first (largest) block's moments.
  const auto w0 = layout.view(w.values, 0);
  const double sd = std::sqrt(w0.array().square().mean());
  CHECK(sd == doctest::Approx(0.05).epsilon(0.05));
  CHECK(std::abs(w0.mean()) < 0.002);

  CHECK(init_params(layout, 42, 0.05).values == w.values);  // bitwise determinism
  CHECK(init_params(layout, 43, 0.05).values != w.values);
  CHECK(init_params(layout, 42, 0.0).values.isZero(0.0));
}

TEST_CASE("softmax3 normalises and shifts") {
  const SoftLabel uniform = softmax3(Eigen::Vector3d::Zero());
  CHECK(uniform.isApprox(SoftLabel::Constant(1.0 / 3.0)));

  const Eigen::Vector3d z(0.3, -1.2, 2.0);
  const SoftLabel p = softmax3(z);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(softmax3((z.array() + 500.0).matrix()).isApprox(p, 1e-9));  // shift invariance
  CHECK(softmax3(Eigen::Vector3d(4000, 0, -4000))[0] == doctest::Approx(1.0));
}

TEST_CASE("soft_cross_entropy pinned values") {
  const SoftLabel uniform = SoftLabel::Constant(1.0 / 3.0);
  CHECK(soft_cross_entropy(uniform, uniform) ==
        doctest::Approx(1.0986122886681098).epsilon(1e-10));

  const SoftLabel onehot = one_hot(TrendLabel::Rise);
  const SoftLabel pred(0.2, 0.3, 0.5);
  CHECK(soft_cross_entropy(onehot, pred) ==
        doctest::Approx(-std::log(0.5 + 1e-12)).epsilon(1e-12));

  CHECK_THROWS_AS(soft_cross_entropy(onehot, SoftLabel(0.5, 0.6, -0.1)), NumericError);
  CHECK_THROWS_AS(soft_cross_entropy(onehot, SoftLabel(0.2, 0.2, 0.2)), NumericError);
}

TEST_CASE("zero weights produce uniform class probabilities") {
  ClassifierSpec clf;
  clf.input_side = 4;
  clf.hidden_sizes = {6};
  NormalSampler noise(1);
  const MatrixXd img = random_image(4, noise);
  const SoftLabel p = forward_classifier(clf, VectorXd::Zero(clf.layout().total()), img);
  CHECK(p.isApprox(SoftLabel::Constant(1.0 / 3.0)));

  LcnSpec lcn;
  lcn.input_side = 4;
  lcn.branch_hidden = 5;
  lcn.fusion_hidden = 4;
  const SoftLabel q =
      forward_lcn(lcn, VectorXd::Zero(lcn.layout().total()), img, random_image(4, noise));
  CHECK(q.isApprox(SoftLabel::Constant(1.0 / 3.0)));
}

TEST_CASE("forward_classifier validates sizes") {
  ClassifierSpec clf;
  clf.input_side = 4;
  clf.hidden_sizes = {6};
  NormalSampler noise(2);
  const ParamVector w = init_params(clf.layout(), 3, 0.1);
  CHECK_THROWS_AS(forward_classifier(clf, w.values.head(10).eval(), random_image(4, noise)),
                  ConfigError);
  CHECK_THROWS_AS(forward_classifier(clf, w.values, random_image(5, noise)), ConfigError);
}

TEST_CASE("classifier gradient matches finite differences") {
  for (Activation act : {Activation::Tanh, Activation::Relu}) {
    ClassifierSpec clf;
    clf.input_side = 3;
    clf.hidden_sizes = {5, 4};
    clf.activation = act;
    const ParamVector w = init_params(clf.layout(), 7, 0.5);

    NormalSampler noise(11);
    std::vector<MatrixXd> store;
    for (int i = 0; i < 4; ++i) store.push_back(random_image(3, noise));
    ImageBatch batch;
    for (int i = 0; i < 4; ++i) {
      batch.images.push_back(&store[i]);
      SoftLabel t = SoftLabel::Zero();
      t[i % 3] = 1.0;
      if (i == 3) t = SoftLabel(0.2, 0.5, 0.3);  // soft target in the mix
      batch.targets.push_back(t);
    }

    double mean_loss = 0.0;
    const VectorXd grad = backward_classifier(clf, w.values, batch, &mean_loss);
    CHECK(mean_loss == doctest::Approx(batch_loss_classifier(clf, w.values, batch)));
    const double err = fd_worst_rel_err(
        [&](const VectorXd& v) { return batch_loss_classifier(clf, v, batch); }, w.values,
        grad);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("zero input pushes gradient onto the output bias only") {
  ClassifierSpec clf;
  clf.input_side = 3;
  clf.hidden_sizes = {4};
  const ParamLayout layout = clf.layout();
  const ParamVector w = init_params(layout, 5, 0.3);  // biases zero

  const MatrixXd img = MatrixXd::Zero(3, 3);
  ImageBatch batch;
  batch.images.push_back(&img);
  batch.targets.push_back(one_hot(TrendLabel::Fall));

  const VectorXd grad = backward_classifier(clf, w.values, batch);
  // Zero input, zero biases: activations vanish, so every weight gradient is
  // zero and dL/dlogits = probs - target lands on out.bias alone.
  CHECK(layout.view(grad, 0).isZero(0.0));
  CHECK(layout.view(grad, 2).isZero(0.0));
  // probs - target, up to the ~1e-12 log-floor inside the cross entropy.
  const SoftLabel expected = SoftLabel::Constant(1.0 / 3.0) - one_hot(TrendLabel::Fall);
  CHECK(layout.view(grad, 3).col(0).isApprox(expected, 1e-9));
}

TEST_CASE("batch duplication leaves mean loss and gradient unchanged") {
  ClassifierSpec clf;
  clf.input_side = 3;
  clf.hidden_sizes = {4};
  const ParamVector w = init_params(clf.layout(), 9, 0.4);
  NormalSampler noise(13);
  const MatrixXd img = random_image(3, noise);

  ImageBatch once, twice;
  once.images = {&img};
  once.targets = {SoftLabel(0.1, 0.3, 0.6)};
  twice.images = {&img, &img};
  twice.targets = {once.targets[0], once.targets[0]};

  CHECK(batch_loss_classifier(clf, w.values, once) ==
        doctest::Approx(batch_loss_classifier(clf, w.values, twice)).epsilon(1e-14));
  CHECK(backward_classifier(clf, w.values, once)
            .isApprox(backward_classifier(clf, w.values, twice), 1e-13));
}

TEST_CASE("lcn forward uses both branches") {
  LcnSpec lcn;
  lcn.input_side = 3;
  lcn.branch_hidden = 5;
  lcn.fusion_hidden = 4;
  const ParamVector alpha = init_params(lcn.layout(), 15, 0.4);
  NormalSampler noise(17);
  const MatrixXd x = random_image(3, noise);
  const MatrixXd y1 = random_image(3, noise);
  const MatrixXd y2 = random_image(3, noise);

  const SoftLabel p1 = forward_lcn(lcn, alpha.values, x, y1);
  const SoftLabel p2 = forward_lcn(lcn, alpha.values, x, y2);
  CHECK(p1.sum() == doctest::Approx(1.0));
  CHECK_FALSE(p1.isApprox(p2));  // the y image matters

  LcnCache cache;
  forward_lcn(lcn, alpha.values, x, y1, &cache);
  CHECK(cache.joint.size() == 10);
  CHECK(cache.fused.minCoeff() >= 0.0);  // relu fusion
}

TEST_CASE("lcn target-side gradient matches finite differences") {
  LcnSpec lcn;
  lcn.input_side = 3;
  lcn.branch_hidden = 4;
  lcn.fusion_hidden = 4;
  ClassifierSpec clf;
  clf.input_side = 3;
  clf.hidden_sizes = {5};
  const ParamVector alpha = init_params(lcn.layout(), 19, 0.5);
  const ParamVector w = init_params(clf.layout(), 20, 0.5);

  NormalSampler noise(21);
  std::vector<MatrixXd> xs, ys;
  for (int i = 0; i < 3; ++i) {
    xs.push_back(random_image(3, noise));
    ys.push_back(random_image(3, noise));
  }
  PairBatch batch;
  for (int i = 0; i < 3; ++i) {
    batch.x_images.push_back(&xs[i]);
    batch.y_images.push_back(&ys[i]);
  }

  double mean_loss = 0.0;
  const VectorXd grad =
      backward_lcn_through_target(lcn, alpha.values, clf, w.values, batch, &mean_loss);
  CHECK(mean_loss ==
        doctest::Approx(batch_loss_lcn_target(lcn, alpha.values, clf, w.values, batch)));
  const double err = fd_worst_rel_err(
      [&](const VectorXd& a) { return batch_loss_lcn_target(lcn, a, clf, w.values, batch); },
      alpha.values, grad);
  CHECK(err < 1e-4);
}

TEST_CASE("one_hot basics") {
  CHECK(one_hot(TrendLabel::Fall) == SoftLabel(1, 0, 0));
  CHECK(one_hot(TrendLabel::Stationary) == SoftLabel(0, 1, 0));
  CHECK(one_hot(TrendLabel::Rise) == SoftLabel(0, 0, 1));
}

TEST_CASE("activation names round-trip") {
  CHECK(parse_activation("tanh") == Activation::Tanh);
  CHECK(parse_activation("relu") == Activation::Relu);
  CHECK(parse_activation(activation_name(Activation::Relu)) == Activation::Relu);
  CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
}
