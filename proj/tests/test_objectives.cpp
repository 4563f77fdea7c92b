#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ltcl/gradcheck.hpp"
#include "ltcl/objectives.hpp"

using namespace ltcl;

namespace {

Model head_only(HeadKind kind, const Eigen::MatrixXd& weights, double scale = 10.0) {
  Model m;
  m.head.kind = kind;
  m.head.weights = weights;
  m.head.scale = scale;
  if (kind == HeadKind::kLinear) m.head.bias = Eigen::VectorXd::Zero(weights.rows());
  return m;
}

Batch batch_of(const Eigen::MatrixXd& inputs, std::vector<int> labels) {
  return {inputs, std::move(labels)};
}

// Fourth-order central stencil, truncation O(h^4).
Eigen::VectorXd five_point_gradient(const std::function<double(const Model&)>& f, const Model& m,
                                    double h) {
  const Eigen::VectorXd theta = flatten(m);
  Eigen::VectorXd grad(theta.size());
  Model probe = m;
  auto at = [&](Index i, double delta) {
    Eigen::VectorXd shifted = theta;
    shifted(i) += delta;
    unflatten(probe, shifted);
    return f(probe);
  };
  for (Index i = 0; i < theta.size(); ++i) {
    grad(i) = (-at(i, 2 * h) + 8 * at(i, h) - 8 * at(i, -h) + at(i, -2 * h)) / (12 * h);
  }
  return grad;
}

}  // namespace

TEST_CASE("mce_loss examples") {
  LossConfig cfg;
  const Model flat = head_only(HeadKind::kCosine, Eigen::MatrixXd::Ones(4, 3));
  const Batch b = batch_of(Eigen::Vector3d(0.2, 0.5, 0.1), {2});
  CHECK(mce_loss(flat, b, cfg, {0, 1, 2, 3}) == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  Eigen::MatrixXd w(2, 1);
  w << 1.0, 0.0;
  const Model gap = head_only(HeadKind::kLinear, w);
  const double tiny = mce_loss(gap, batch_of(Eigen::MatrixXd::Constant(1, 1, 200.0), {0}), cfg, {0, 1});
  CHECK(tiny >= 0.0);
  CHECK(tiny < 1e-12);

  Rng rng(3);
  ModelSpec spec;
  spec.input_dim = 3;
  spec.hidden = {6};
  spec.num_classes = 3;
  const Model m = init_model(spec, rng);
  const Eigen::Vector3d x(0.4, -0.2, 1.0);
  const double one = mce_loss(m, batch_of(x, {1}), cfg, {0, 1, 2});
  Eigen::MatrixXd rep(3, 4);
  rep << x, x, x, x;
  CHECK(mce_loss(m, batch_of(rep, {1, 1, 1, 1}), cfg, {0, 1, 2}) ==
        doctest::Approx(one).epsilon(1e-14));
  CHECK_THROWS_AS(mce_loss(m, batch_of(x, {5}), cfg, {0, 1, 2}), ParameterError);
}

TEST_CASE("mce_loss is invariant under class relabelling") {
  Rng rng(9);
  ModelSpec spec;
  spec.input_dim = 4;
  spec.hidden = {10};
  spec.num_classes = 5;
  Model m = init_model(spec, rng);
  for (auto& l : m.encoder) l.bias.setConstant(0.1);
  std::normal_distribution<double> g;
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(4, 7, [&]() { return g(rng); });
  const std::vector<int> y = {0, 1, 2, 3, 4, 2, 0};
  const std::vector<int> perm = {3, 0, 4, 1, 2};
  Model relabelled = m;
  for (int c = 0; c < 5; ++c) relabelled.head.weights.row(perm[c]) = m.head.weights.row(c);
  std::vector<int> y2;
  for (int label : y) y2.push_back(perm[label]);
  LossConfig cfg;
  const std::vector<int> all = {0, 1, 2, 3, 4};
  CHECK(mce_loss(relabelled, batch_of(x, y2), cfg, all) ==
        doctest::Approx(mce_loss(m, batch_of(x, y), cfg, all)).epsilon(1e-13));
}

TEST_CASE("kd_boundary_loss examples") {
  LossConfig cfg;
  cfg.tau2 = 2.0;
  // softmax(z / 2) = (0.6, 0.4) for z0 - z1 = 2 ln 1.5.
  Eigen::MatrixXd w(2, 1);
  w << 2.0 * std::log(1.5), 0.0;
  const Model m = head_only(HeadKind::kLinear, w);
  const TeacherSnapshot teacher(m, 0);
  const Batch buffer = batch_of(Eigen::MatrixXd::Ones(1, 3), {0, 1, 0});
  const double kd = kd_boundary_loss(teacher, m, buffer, cfg, {{0, 1}, {0, 1}});
  CHECK(std::abs(kd - 0.6730116670092565) < 1e-14);

  Eigen::MatrixXd w3(3, 1);
  w3 << -1000.0, 0.0, 1000.0;
  const Model far = head_only(HeadKind::kLinear, w3);
  const double none = kd_boundary_loss(TeacherSnapshot(far, 0), far, buffer, cfg, {{0, 1, 2}, {0}});
  CHECK(none >= 0.0);
  CHECK(none < 1e-200);

  CHECK_THROWS_AS(kd_boundary_loss(teacher, m, buffer, cfg, {{0, 1}, {}}), ContractViolation);
  CHECK_THROWS_AS(kd_boundary_loss(teacher, m, Batch{Eigen::MatrixXd(1, 0), {}}, cfg, {{0, 1}, {0}}),
                  ContractViolation);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GradCheckProblem p = random_gradcheck_problem(seed);
    CHECK(kd_boundary_loss(p.teacher, p.model, p.buffer, p.config, p.scope) >= 0.0);
  }
}

TEST_CASE("prototype_distill_loss examples") {
  Eigen::MatrixXd w(2, 2);
  w << 1.0, 0.0, 0.5, 0.5;
  Eigen::MatrixXd w_star(2, 2);
  w_star << 0.0, 1.0, 0.5, 0.5;
  const Model student = head_only(HeadKind::kCosine, w);
  const TeacherSnapshot teacher(head_only(HeadKind::kCosine, w_star), 0);
  CHECK(prototype_distill_loss(student, teacher, {0}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(prototype_distill_loss(student, TeacherSnapshot(student, 0), {0, 1}) == 0.0);

  Model rescaled = student;
  rescaled.head.weights.row(0) *= 7.5;
  rescaled.head.weights.row(1) *= 0.01;
  CHECK(prototype_distill_loss(rescaled, teacher, {0, 1}) ==
        doctest::Approx(prototype_distill_loss(student, teacher, {0, 1})).epsilon(1e-14));

  const TeacherSnapshot wide(head_only(HeadKind::kCosine, Eigen::MatrixXd::Ones(2, 3)), 0);
  CHECK_THROWS_AS(prototype_distill_loss(student, wide, {0}), ShapeError);
}

TEST_CASE("total_loss composition") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GradCheckProblem p = random_gradcheck_problem(seed);
    const ObjectiveResult r = total_loss(p.model, &p.teacher, p.incoming, p.buffer, p.config,
                                         p.scope, &p.mask);
    CHECK(r.loss.total == r.loss.mce + p.config.alpha_kd * r.loss.kd + p.config.beta_proto * r.loss.proto);
    CHECK(r.loss.mce >= 0.0);
    CHECK(r.loss.kd >= 0.0);
    CHECK(r.loss.proto >= 0.0);
    CHECK(std::isfinite(r.loss.total));

    const ObjectiveResult first = total_loss(p.model, nullptr, p.incoming, p.buffer, p.config,
                                             p.scope, &p.mask);
    CHECK(first.loss.kd == 0.0);
    CHECK(first.loss.proto == 0.0);
    CHECK(first.loss.total == first.loss.mce);

    p.config.alpha_kd = 0.0;
    p.config.beta_proto = 0.0;
    const ObjectiveResult plain = total_loss(p.model, &p.teacher, p.incoming, p.buffer, p.config,
                                             p.scope, &p.mask);
    CHECK(plain.loss.total == plain.loss.mce);
  }
}

TEST_CASE("training never touches the teacher") {
  const GradCheckProblem p = random_gradcheck_problem(4);
  const std::uint64_t before = parameter_hash(p.teacher.model());
  Model student = p.model;
  for (int step = 0; step < 5; ++step) {
    const ObjectiveResult r = total_loss(student, &p.teacher, p.incoming, p.buffer, p.config,
                                         p.scope, &p.mask);
    CHECK(flatten(r.gradients).size() == flatten(student).size());
    apply_sgd(student, r.gradients, 0.03);
  }
  CHECK(parameter_hash(p.teacher.model()) == before);
  CHECK(parameter_hash(student) != parameter_hash(p.model));
}

TEST_CASE("analytic gradients match central differences") {
  for (HeadKind head : {HeadKind::kCosine, HeadKind::kLinear}) {
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
      const GradCheckProblem p = random_gradcheck_problem(seed, head);
      for (LossTerm term : {LossTerm::kMce, LossTerm::kKd, LossTerm::kProto, LossTerm::kTotal}) {
        if (term == LossTerm::kProto && head == HeadKind::kLinear) continue;
        CAPTURE(seed);
        CAPTURE(to_string(term));
        CHECK(check_loss_term(term, p, 1e-5).max_relative_error < 1e-4);
      }
    }
  }
}

// Central differences at eps = 1e-5 carry O(eps^2) truncation error that
// grows with (s / tau1)^3; a fourth-order stencil separates that from errors
// in the analytic gradient.
TEST_CASE("analytic gradients match a fourth-order stencil") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const GradCheckProblem p = random_gradcheck_problem(seed);
    const Batch joint = concat(p.incoming, p.buffer);
    const ObjectiveResult r = evaluate_objective(p.model, &p.teacher, p.incoming, p.buffer,
                                                 p.config, p.scope, {1.0, 0.0, 0.0}, &p.mask);
    const auto f = [&](const Model& m) { return mce_loss(m, joint, p.config, p.scope.seen, &p.mask); };
    const Eigen::VectorXd numeric = five_point_gradient(f, p.model, 2e-5);
    const Eigen::VectorXd analytic = flatten(r.gradients);
    CAPTURE(seed);
    CHECK((numeric - analytic).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, analytic.cwiseAbs().maxCoeff()));
  }
}
