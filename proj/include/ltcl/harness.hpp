#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ltcl/config.hpp"
#include "ltcl/net.hpp"
#include "ltcl/objectives.hpp"
#include "ltcl/replay.hpp"
#include "ltcl/stream.hpp"
#include "ltcl/uncertainty.hpp"

namespace ltcl {

/// Row j holds the accuracies (percent) on tasks 0..j measured right after
/// task j was learned.
using AccuracyMatrix = std::vector<std::vector<double>>;

struct AccBwt {
  double acc = 0.0;
  double bwt = 0.0;
};

/// Final average accuracy and mean backward transfer; BWT is 0 for a single
/// task. Throws ContractViolation if R is not complete lower-triangular.
AccBwt acc_bwt(const AccuracyMatrix& R);

/// F_i = max_j R[j][i] - R[T-1][i]; zero for the last task.
std::vector<double> forgetting(const AccuracyMatrix& R);

struct ModeMetrics {
  EvalMode mode = EvalMode::kClassIL;
  AccuracyMatrix R;
  double acc = 0.0;
  double bwt = 0.0;
  std::vector<double> forgetting;
};

struct RunRecord {
  std::vector<ModeMetrics> modes;
  std::vector<std::size_t> task_sizes;
  std::vector<std::vector<int>> class_sets;
  std::vector<std::pair<std::string, std::string>> config;
  int teacher_snapshots = 0;
  double wall_clock_seconds = 0.0;

  const ModeMetrics& mode(EvalMode m) const;
};

struct StepLog {
  int task_id = 0;
  int epoch = 0;
  int step = 0;
  LossBreakdown loss;
};

struct MetricRow {
  int after_task = 0;
  int eval_task = 0;
  EvalMode mode = EvalMode::kClassIL;
  double accuracy = 0.0;
};

struct WeightNormRow {
  int after_task = 0;
  WeightMagnitude magnitude;
};

struct TaskScores {
  int task_id = 0;
  std::vector<ScoredSample> scored;
};

struct RunOutput {
  RunRecord record;
  std::vector<StepLog> losses;
  std::vector<AuditRecord> audit;
  std::vector<MetricRow> metrics;
  std::vector<WeightNormRow> weight_norms;
  std::vector<TaskScores> scores;
};

struct ExperimentData {
  std::vector<TaskDataset> train;
  std::vector<TaskDataset> test;
  Index dim = 0;
  int label_space = 0;
};

/// Builds the long-tailed training stream and its balanced held-out test
/// tasks from the configured pool.
ExperimentData prepare_data(const ExperimentConfig& config);

/// Seen classes are those of tasks 0..task, old classes those of 0..task-1.
ClassScope scope_for_task(const std::vector<TaskDataset>& stream, int task);

/// Runs epochs * ceil(|task| / batch_size) SGD steps on the combined
/// objective, each with a fresh incoming slice, a buffer batch and dropout
/// masks. Updates `model` in place.
std::vector<StepLog> train_task(Model& model, const TeacherSnapshot* teacher,
                                const TaskDataset& task, const BufferState& buffer,
                                const ExperimentConfig& config, const ClassScope& scope);

struct EndTaskResult {
  TeacherSnapshot teacher;
  std::vector<AuditRecord> audit;
  std::vector<ScoredSample> scores;
};

/// Updates the buffer with the finished task (uncertainty-guided or vanilla
/// reservoir) and then freezes the teacher.
EndTaskResult end_task(const Model& model, BufferState& buffer, const TaskDataset& task,
                       const ExperimentConfig& config, const ClassScope& scope,
                       bool always_score = false);

/// Accuracy in percent on a single test task. Dropout is off.
double evaluate_task(const Model& model, const TaskDataset& test, EvalMode mode,
                     const std::vector<int>& seen);

/// One accuracy per test task, in task order.
std::vector<double> evaluate(const Model& model, const std::vector<TaskDataset>& tests,
                             EvalMode mode, const std::vector<int>& seen, int threads = 1);

/// Full stream: train, update the buffer, snapshot and evaluate after every
/// task. Deterministic given config.seed.
RunOutput run_experiment(const ExperimentConfig& config, bool always_score = false);

}  // namespace ltcl
