#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "ltcl/net.hpp"
#include "ltcl/replay.hpp"
#include "ltcl/stream.hpp"

namespace ltcl {

struct LossConfig {
  double alpha_kd = 0.5;
  double beta_proto = 0.1;
  double tau1 = 0.1;
  double tau2 = 2.0;
  double scale = 10.0;

  void validate() const;
};

/// total = mce + alpha_kd * kd + beta_proto * proto.
struct LossBreakdown {
  double mce = 0.0;
  double kd = 0.0;
  double proto = 0.0;
  double total = 0.0;
};

/// Frozen copy of the model taken when a task completes.
class TeacherSnapshot {
 public:
  TeacherSnapshot(Model model, int snapshot_task)
      : model_(std::move(model)), snapshot_task_(snapshot_task) {}

  const Model& model() const { return model_; }
  int snapshot_task() const { return snapshot_task_; }

 private:
  Model model_;
  int snapshot_task_;
};

/// Classes visible to the softmax (`seen`) and the subset learned before the
/// current task (`old`).
struct ClassScope {
  std::vector<int> seen;
  std::vector<int> old;
};

struct Batch {
  Eigen::MatrixXd inputs;  // dim x n
  std::vector<int> labels;

  Index size() const { return inputs.cols(); }
  static Batch from_samples(const std::vector<Sample>& samples);
  static Batch from_entries(const std::vector<BufferEntry>& entries);
};

Batch concat(const Batch& a, const Batch& b);

/// Mean of -ln softmax(logits / T)[y] over the batch, T = tau1 for a cosine
/// head and 1 for a linear head. The softmax runs over `seen`.
double mce_loss(const Model& model, const Batch& batch, const LossConfig& config,
                const std::vector<int>& seen, const DropoutMask* mask = nullptr);

/// Mean over the batch of -sum_{i in old} p_i^teacher ln p_i^student, both
/// softmax(logits / tau2) over all seen classes. The teacher runs without
/// dropout.
double kd_boundary_loss(const TeacherSnapshot& teacher, const Model& model, const Batch& buffer,
                        const LossConfig& config, const ClassScope& scope,
                        const DropoutMask* mask = nullptr);

/// Sum over old classes of |w_i/|w_i| - w*_i/|w*_i||.
double prototype_distill_loss(const Model& model, const TeacherSnapshot& teacher,
                              const std::vector<int>& old);

/// Per-term multipliers of an objective; total_loss uses (1, alpha_kd, beta_proto).
struct LossWeights {
  double mce = 1.0;
  double kd = 0.0;
  double proto = 0.0;
};

struct ObjectiveResult {
  LossBreakdown loss;
  Model gradients;
  double value = 0.0;  // weights.mce * mce + weights.kd * kd + weights.proto * proto
};

/// Weighted objective and its gradient w.r.t. the student. MCE runs over
/// incoming and buffer samples together, KD over the buffer only, the
/// prototype term over old classes. KD and prototype terms vanish without a
/// teacher; the prototype term also vanishes for linear heads. `mask`, if
/// given, covers the incoming columns followed by the buffer columns.
ObjectiveResult evaluate_objective(const Model& model, const TeacherSnapshot* teacher,
                                   const Batch& incoming, const Batch& buffer,
                                   const LossConfig& config, const ClassScope& scope,
                                   const LossWeights& weights, const DropoutMask* mask = nullptr);

ObjectiveResult total_loss(const Model& model, const TeacherSnapshot* teacher,
                           const Batch& incoming, const Batch& buffer, const LossConfig& config,
                           const ClassScope& scope, const DropoutMask* mask = nullptr);

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t parameters = 0;
};

/// Compares `analytic` with central differences of `loss` over every
/// parameter. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport finite_difference_check(const std::function<double(const Model&)>& loss,
                                        const Model& model, const Model& analytic,
                                        double epsilon = 1e-5, double floor = 1e-6);

}  // namespace ltcl
