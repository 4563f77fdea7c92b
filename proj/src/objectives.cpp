#include "ltcl/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "ltcl/uncertainty.hpp"

namespace ltcl {

namespace {

void check_scope(const Model& model, const ClassScope& scope) {
  if (scope.seen.empty()) throw ParameterError("no classes in scope");
  for (int c : scope.seen) {
    if (c < 0 || c >= model.num_classes()) {
      throw ParameterError("class " + std::to_string(c) + " outside the classifier");
    }
  }
  for (int c : scope.old) {
    if (std::find(scope.seen.begin(), scope.seen.end(), c) == scope.seen.end()) {
      throw ParameterError("old class " + std::to_string(c) + " is not in the seen set");
    }
  }
}

int position_of(const std::vector<int>& seen, int label) {
  const auto it = std::find(seen.begin(), seen.end(), label);
  if (it == seen.end()) {
    throw ParameterError("label " + std::to_string(label) + " outside the seen classes");
  }
  return static_cast<int>(it - seen.begin());
}

void check_teacher(const Model& model, const TeacherSnapshot& teacher) {
  const Model& t = teacher.model();
  if (t.num_classes() != model.num_classes() || t.input_dim() != model.input_dim()) {
    throw ShapeError("teacher and student disagree on shape");
  }
}

// Returns the mean MCE; adds weight * its logit gradient into `grads`.
double accumulate_mce(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                      const std::vector<int>& seen, double tau, double weight,
                      Eigen::MatrixXd* grads) {
  const Index n = logits.cols();
  double loss = 0.0;
  for (Index b = 0; b < n; ++b) {
    const int target = position_of(seen, labels[static_cast<std::size_t>(b)]);
    const Eigen::VectorXd z = gather(logits.col(b), seen);
    const Eigen::VectorXd log_p = log_softmax_temp(z, tau);
    loss -= log_p(target);
    if (grads != nullptr && weight != 0.0) {
      Eigen::VectorXd g = log_p.array().exp().matrix();
      g(target) -= 1.0;
      g *= weight / (tau * static_cast<double>(n));
      for (std::size_t k = 0; k < seen.size(); ++k) (*grads)(seen[k], b) += g(static_cast<Index>(k));
    }
  }
  return loss / static_cast<double>(n);
}

double accumulate_kd(const Eigen::MatrixXd& student_logits, const Eigen::MatrixXd& teacher_logits,
                     const ClassScope& scope, double tau, double weight,
                     Eigen::MatrixXd* grads) {
  const Index n = student_logits.cols();
  std::vector<bool> is_old(scope.seen.size(), false);
  for (std::size_t k = 0; k < scope.seen.size(); ++k) {
    is_old[k] = std::find(scope.old.begin(), scope.old.end(), scope.seen[k]) != scope.old.end();
  }
  double loss = 0.0;
  for (Index b = 0; b < n; ++b) {
    const Eigen::VectorXd log_q = log_softmax_temp(gather(student_logits.col(b), scope.seen), tau);
    const Eigen::VectorXd p = softmax_temp(gather(teacher_logits.col(b), scope.seen), tau);
    double old_mass = 0.0;
    for (std::size_t k = 0; k < is_old.size(); ++k) {
      if (!is_old[k]) continue;
      loss -= p(static_cast<Index>(k)) * log_q(static_cast<Index>(k));
      old_mass += p(static_cast<Index>(k));
    }
    if (grads != nullptr && weight != 0.0) {
      const double factor = weight / (tau * static_cast<double>(n));
      for (std::size_t k = 0; k < is_old.size(); ++k) {
        const auto kk = static_cast<Index>(k);
        const double g = old_mass * std::exp(log_q(kk)) - (is_old[k] ? p(kk) : 0.0);
        (*grads)(scope.seen[k], b) += factor * g;
      }
    }
  }
  return loss / static_cast<double>(n);
}

double accumulate_proto(const Model& model, const Model& teacher, const std::vector<int>& old,
                        double weight, Eigen::MatrixXd* head_grads) {
  if (model.head.kind != HeadKind::kCosine || teacher.head.kind != HeadKind::kCosine) {
    throw ContractViolation("prototype distillation needs cosine heads");
  }
  if (model.head.weights.cols() != teacher.head.weights.cols() ||
      model.head.weights.rows() != teacher.head.weights.rows()) {
    throw ShapeError("prototype dimensions differ between student and teacher");
  }
  double loss = 0.0;
  for (int c : old) {
    const Eigen::VectorXd w = model.head.weights.row(c).transpose();
    const double w_norm = w.norm();
    const Eigen::VectorXd u = normalize(w);
    const Eigen::VectorXd u_star = normalize(teacher.head.weights.row(c).transpose());
    const Eigen::VectorXd diff = u - u_star;
    const double dist = diff.norm();
    loss += dist;
    // Non-differentiable at dist = 0; the zero subgradient is used there.
    if (head_grads != nullptr && weight != 0.0 && dist > kNormTolerance) {
      const Eigen::VectorXd gu = diff / dist;
      head_grads->row(c) += (weight * (gu - gu.dot(u) * u) / w_norm).transpose();
    }
  }
  return loss;
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha_kd >= 0.0) || !(beta_proto >= 0.0)) throw ParameterError("loss weights must be >= 0");
  if (!(tau1 > 0.0) || !(tau2 > 0.0)) throw ParameterError("temperatures must be positive");
  if (!(scale > 0.0)) throw ParameterError("cosine scale must be positive");
}

Batch Batch::from_samples(const std::vector<Sample>& samples) {
  Batch batch;
  batch.inputs = stack_inputs(samples);
  for (const auto& s : samples) batch.labels.push_back(s.y);
  return batch;
}

Batch Batch::from_entries(const std::vector<BufferEntry>& entries) {
  Batch batch;
  if (entries.empty()) return batch;
  batch.inputs.resize(entries.front().x.size(), static_cast<Index>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    batch.inputs.col(static_cast<Index>(i)) = entries[i].x;
    batch.labels.push_back(entries[i].y);
  }
  return batch;
}

Batch concat(const Batch& a, const Batch& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.inputs.rows() != b.inputs.rows()) throw ShapeError("batch dimensions differ");
  Batch out;
  out.inputs.resize(a.inputs.rows(), a.size() + b.size());
  out.inputs << a.inputs, b.inputs;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

double mce_loss(const Model& model, const Batch& batch, const LossConfig& config,
                const std::vector<int>& seen, const DropoutMask* mask) {
  if (batch.size() == 0) throw ParameterError("empty batch");
  check_scope(model, {seen, {}});
  const Activations acts = forward_batch(model, batch.inputs, mask);
  return accumulate_mce(acts.logits, batch.labels, seen, head_temperature(model, config.tau1), 0.0,
                        nullptr);
}

double kd_boundary_loss(const TeacherSnapshot& teacher, const Model& model, const Batch& buffer,
                        const LossConfig& config, const ClassScope& scope,
                        const DropoutMask* mask) {
  if (scope.old.empty()) throw ContractViolation("boundary distillation needs old classes");
  if (buffer.size() == 0) throw ContractViolation("boundary distillation needs buffer samples");
  check_scope(model, scope);
  check_teacher(model, teacher);
  const Activations student = forward_batch(model, buffer.inputs, mask);
  const Activations frozen = forward_batch(teacher.model(), buffer.inputs);
  return accumulate_kd(student.logits, frozen.logits, scope, config.tau2, 0.0, nullptr);
}

double prototype_distill_loss(const Model& model, const TeacherSnapshot& teacher,
                              const std::vector<int>& old) {
  return accumulate_proto(model, teacher.model(), old, 0.0, nullptr);
}

ObjectiveResult evaluate_objective(const Model& model, const TeacherSnapshot* teacher,
                                   const Batch& incoming, const Batch& buffer,
                                   const LossConfig& config, const ClassScope& scope,
                                   const LossWeights& weights, const DropoutMask* mask) {
  config.validate();
  if (incoming.size() == 0) throw ParameterError("incoming batch is empty");
  check_scope(model, scope);
  const Batch joint = concat(incoming, buffer);
  const Activations acts = forward_batch(model, joint.inputs, mask);
  Eigen::MatrixXd logit_grads = Eigen::MatrixXd::Zero(acts.logits.rows(), acts.logits.cols());

  ObjectiveResult out;
  out.loss.mce = accumulate_mce(acts.logits, joint.labels, scope.seen,
                                head_temperature(model, config.tau1), weights.mce, &logit_grads);

  const bool distill = teacher != nullptr && !scope.old.empty();
  if (distill) check_teacher(model, *teacher);
  if (distill && buffer.size() > 0) {
    const Activations frozen = forward_batch(teacher->model(), buffer.inputs);
    Eigen::MatrixXd kd_grads = Eigen::MatrixXd::Zero(logit_grads.rows(), buffer.size());
    out.loss.kd = accumulate_kd(acts.logits.rightCols(buffer.size()), frozen.logits, scope,
                                config.tau2, weights.kd, &kd_grads);
    logit_grads.rightCols(buffer.size()) += kd_grads;
  }
  out.gradients = backward(model, acts, logit_grads, mask);

  if (distill && model.head.kind == HeadKind::kCosine &&
      teacher->model().head.kind == HeadKind::kCosine) {
    out.loss.proto = accumulate_proto(model, teacher->model(), scope.old, weights.proto,
                                      &out.gradients.head.weights);
  }
  out.loss.total = out.loss.mce + config.alpha_kd * out.loss.kd + config.beta_proto * out.loss.proto;
  out.value = weights.mce * out.loss.mce + weights.kd * out.loss.kd + weights.proto * out.loss.proto;
  return out;
}

ObjectiveResult total_loss(const Model& model, const TeacherSnapshot* teacher,
                           const Batch& incoming, const Batch& buffer, const LossConfig& config,
                           const ClassScope& scope, const DropoutMask* mask) {
  return evaluate_objective(model, teacher, incoming, buffer, config, scope,
                            {1.0, config.alpha_kd, config.beta_proto}, mask);
}

GradCheckReport finite_difference_check(const std::function<double(const Model&)>& loss,
                                        const Model& model, const Model& analytic,
                                        double epsilon, double floor) {
  const Eigen::VectorXd theta = flatten(model);
  const Eigen::VectorXd g = flatten(analytic);
  if (g.size() != theta.size()) throw ShapeError("gradient does not match model");
  GradCheckReport report;
  report.parameters = static_cast<std::size_t>(theta.size());
  Model probe = model;
  Eigen::VectorXd shifted = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    shifted(i) = theta(i) + epsilon;
    unflatten(probe, shifted);
    const double up = loss(probe);
    shifted(i) = theta(i) - epsilon;
    unflatten(probe, shifted);
    const double down = loss(probe);
    shifted(i) = theta(i);
    const double numeric = (up - down) / (2.0 * epsilon);
    const double abs_err = std::abs(numeric - g(i));
    const double denom = std::max({std::abs(numeric), std::abs(g(i)), floor});
    report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
    report.max_relative_error = std::max(report.max_relative_error, abs_err / denom);
  }
  return report;
}

}  // namespace ltcl
