#include "ltcl/gradcheck.hpp"

#include <random>

namespace ltcl {

std::string to_string(LossTerm term) {
  switch (term) {
    case LossTerm::kMce: return "mce";
    case LossTerm::kKd: return "kd";
    case LossTerm::kProto: return "proto";
    case LossTerm::kTotal: return "total";
  }
  return "?";
}

GradCheckProblem random_gradcheck_problem(std::uint64_t seed, HeadKind head) {
  Rng rng(seed);
  std::uniform_int_distribution<int> small(3, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  ModelSpec spec;
  spec.input_dim = small(rng);
  spec.hidden = {small(rng) + 6, small(rng) + 6};
  spec.num_classes = small(rng);
  spec.head = head;
  spec.dropout_rate = 0.25;
  LossConfig config;
  config.scale = 1.0 + 9.0 * unit(rng);
  config.tau1 = 0.1 + 0.9 * unit(rng);
  config.tau2 = 0.5 + 2.5 * unit(rng);
  config.alpha_kd = 0.1 + unit(rng);
  config.beta_proto = 0.1 + unit(rng);
  spec.scale = config.scale;

  Model model = init_model(spec, rng);
  // Biases away from zero so no rectifier sits on its kink.
  for (auto& layer : model.encoder) {
    layer.bias = Eigen::VectorXd::NullaryExpr(layer.bias.size(), [&] { return 0.1 * normal(rng); });
  }
  Model frozen = model;
  Eigen::VectorXd params = flatten(frozen);
  params += 0.3 * Eigen::VectorXd::NullaryExpr(params.size(), [&] { return normal(rng); });
  unflatten(frozen, params);

  ClassScope scope;
  const int num_classes = static_cast<int>(spec.num_classes);
  const int seen = std::uniform_int_distribution<int>(2, num_classes)(rng);
  const int old = std::uniform_int_distribution<int>(1, seen - 1)(rng);
  for (int c = 0; c < seen; ++c) scope.seen.push_back(c);
  for (int c = 0; c < old; ++c) scope.old.push_back(c);

  auto make_batch = [&](int n, int lo, int hi) {
    Batch b;
    b.inputs = Eigen::MatrixXd::NullaryExpr(spec.input_dim, n, [&] { return normal(rng); });
    std::uniform_int_distribution<int> label(lo, hi);
    for (int i = 0; i < n; ++i) b.labels.push_back(label(rng));
    return b;
  };
  Batch incoming = make_batch(small(rng) - 1, 0, seen - 1);
  Batch buffer = make_batch(small(rng) - 1, 0, old - 1);
  // Resample until every column keeps a clearly nonzero feature vector,
  // for the masked student and for the teacher.
  auto features_ok = [](const Model& m, const Eigen::MatrixXd& x, const DropoutMask* mk) {
    Model probe = m;
    probe.head.kind = HeadKind::kLinear;
    probe.head.bias = Eigen::VectorXd::Zero(m.num_classes());
    return (forward_batch(probe, x, mk).features().colwise().norm().array() > 1e-3).all();
  };
  const Batch joint = concat(incoming, buffer);
  DropoutMask mask;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 100) throw Error("could not draw a usable gradient-check problem");
    mask = sample_dropout_mask(model, joint.size(), rng);
    if (!features_ok(frozen, buffer.inputs, nullptr)) {
      for (auto& layer : frozen.encoder) layer.bias.array() += 0.1;
      continue;
    }
    if (features_ok(model, joint.inputs, &mask)) break;
  }
  return {std::move(model), TeacherSnapshot(std::move(frozen), 0), std::move(incoming),
          std::move(buffer), std::move(mask), config, std::move(scope)};
}

GradCheckReport check_loss_term(LossTerm term, const GradCheckProblem& p, double epsilon) {
  LossWeights weights;
  switch (term) {
    case LossTerm::kMce: weights = {1.0, 0.0, 0.0}; break;
    case LossTerm::kKd: weights = {0.0, 1.0, 0.0}; break;
    case LossTerm::kProto: weights = {0.0, 0.0, 1.0}; break;
    case LossTerm::kTotal: weights = {1.0, p.config.alpha_kd, p.config.beta_proto}; break;
  }
  const ObjectiveResult analytic = evaluate_objective(p.model, &p.teacher, p.incoming, p.buffer,
                                                      p.config, p.scope, weights, &p.mask);
  // The oracle evaluates the loss values through the standalone functions,
  // not through evaluate_objective.
  const Batch joint = concat(p.incoming, p.buffer);
  DropoutMask buffer_mask;
  buffer_mask.keep_probability = p.mask.keep_probability;
  for (const auto& k : p.mask.keep) buffer_mask.keep.push_back(k.rightCols(p.buffer.size()));
  auto value = [&](const Model& m) {
    double v = 0.0;
    if (weights.mce != 0.0) v += weights.mce * mce_loss(m, joint, p.config, p.scope.seen, &p.mask);
    if (weights.kd != 0.0) {
      v += weights.kd * kd_boundary_loss(p.teacher, m, p.buffer, p.config, p.scope, &buffer_mask);
    }
    if (weights.proto != 0.0 && m.head.kind == HeadKind::kCosine) {
      v += weights.proto * prototype_distill_loss(m, p.teacher, p.scope.old);
    }
    return v;
  };
  return finite_difference_check(value, p.model, analytic.gradients, epsilon);
}

}  // namespace ltcl
