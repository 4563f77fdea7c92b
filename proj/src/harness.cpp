#include "ltcl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>

#include "ltcl/seed.hpp"

namespace ltcl {

namespace {

constexpr std::uint64_t kDataKey = 0x64617461;     // "data"
constexpr std::uint64_t kHoldoutKey = 0x686f6c64;  // "hold"
constexpr std::uint64_t kInitKey = 0x696e6974;     // "init"
constexpr std::uint64_t kTrainKey = 0x74726169;    // "trai"
constexpr std::uint64_t kShuffleKey = 0x73687566;  // "shuf"
constexpr std::uint64_t kBufferKey = 0x62756666;   // "buff"

double round_percent(double v) { return std::round(v * 100.0) / 100.0; }

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error("stage " + name + " failed: " + e.what());
  }
}

}  // namespace

AccBwt acc_bwt(const AccuracyMatrix& R) {
  const std::size_t T = R.size();
  if (T == 0) throw ContractViolation("empty accuracy matrix");
  for (std::size_t j = 0; j < T; ++j) {
    if (R[j].size() != j + 1) throw ContractViolation("accuracy matrix is not lower-triangular");
  }
  AccBwt out;
  const auto& last = R[T - 1];
  out.acc = std::accumulate(last.begin(), last.end(), 0.0) / static_cast<double>(T);
  if (T > 1) {
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < T; ++i) sum += last[i] - R[i][i];
    out.bwt = sum / static_cast<double>(T - 1);
  }
  return out;
}

std::vector<double> forgetting(const AccuracyMatrix& R) {
  acc_bwt(R);
  const std::size_t T = R.size();
  std::vector<double> f(T, 0.0);
  for (std::size_t i = 0; i + 1 < T; ++i) {
    double best = R[i][i];
    for (std::size_t j = i; j < T; ++j) best = std::max(best, R[j][i]);
    f[i] = best - R[T - 1][i];
  }
  return f;
}

const ModeMetrics& RunRecord::mode(EvalMode m) const {
  for (const auto& mm : modes) {
    if (mm.mode == m) return mm;
  }
  throw ParameterError("evaluation mode " + to_string(m) + " was not recorded");
}

ExperimentData prepare_data(const ExperimentConfig& config) {
  SamplePool pool;
  if (config.data_path.empty()) {
    pool = synth_gaussians(config.stream.n_tasks * config.stream.classes_per_task, config.dim,
                           config.separation, config.pool_per_class,
                           derive_seed(config.seed, {kDataKey}));
  } else {
    pool = load_pool(config.data_path);
  }
  auto [train_pool, test_pool] =
      split_holdout(pool, config.test_per_class, derive_seed(config.seed, {kHoldoutKey}));
  ExperimentData data;
  data.train = build_stream(train_pool, config.stream);
  data.test = build_test_stream(test_pool, data.train);
  data.dim = pool.dim;
  data.label_space = pool.label_space();
  return data;
}

ClassScope scope_for_task(const std::vector<TaskDataset>& stream, int task) {
  ClassScope scope;
  for (int t = 0; t <= task; ++t) {
    const auto& classes = stream.at(static_cast<std::size_t>(t)).class_set;
    scope.seen.insert(scope.seen.end(), classes.begin(), classes.end());
    if (t < task) scope.old.insert(scope.old.end(), classes.begin(), classes.end());
  }
  return scope;
}

std::vector<StepLog> train_task(Model& model, const TeacherSnapshot* teacher,
                                const TaskDataset& task, const BufferState& buffer,
                                const ExperimentConfig& config, const ClassScope& scope) {
  if (task.size() == 0) throw ParameterError("cannot train on an empty task");
  const auto task_key = static_cast<std::uint64_t>(task.task_id);
  Rng rng = make_rng(config.seed, {kTrainKey, task_key});
  const std::size_t batch = config.batch_size;
  const std::size_t steps = (task.size() + batch - 1) / batch;
  const bool replay = config.buffer_policy != BufferPolicy::kNone;

  std::vector<StepLog> log;
  std::vector<std::size_t> order(task.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = make_rng(config.seed, {kShuffleKey, task_key, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<Sample> slice;
      for (std::size_t k = step * batch; k < std::min(task.size(), (step + 1) * batch); ++k) {
        slice.push_back(task.samples[order[k]]);
      }
      const Batch incoming = Batch::from_samples(slice);
      const Batch memory =
          replay ? Batch::from_entries(sample_batch(buffer, batch, rng)) : Batch{};
      const DropoutMask mask = sample_dropout_mask(model, incoming.size() + memory.size(), rng);
      const ObjectiveResult result =
          total_loss(model, teacher, incoming, memory, config.loss, scope, &mask);
      apply_sgd(model, result.gradients, config.learning_rate);
      log.push_back({task.task_id, epoch, static_cast<int>(step), result.loss});
    }
  }
  return log;
}

EndTaskResult end_task(const Model& model, BufferState& buffer, const TaskDataset& task,
                       const ExperimentConfig& config, const ClassScope& scope,
                       bool always_score) {
  std::vector<AuditRecord> audit;
  std::vector<ScoredSample> scores;
  Rng rng = make_rng(config.seed, {kBufferKey, static_cast<std::uint64_t>(task.task_id)});
  if (always_score || buffer.policy == BufferPolicy::kUncertainty) {
    scores = score_and_sort(model, task, config.mc, scope.seen);
  }
  if (buffer.policy == BufferPolicy::kUncertainty) {
    audit = task_end_update(buffer, task, scores, rng, config.candidate_order);
  } else if (buffer.policy == BufferPolicy::kVanilla) {
    audit = reservoir_update(buffer, task, rng);
  }
  return {TeacherSnapshot(model, task.task_id), std::move(audit), std::move(scores)};
}

double evaluate_task(const Model& model, const TaskDataset& test, EvalMode mode,
                     const std::vector<int>& seen) {
  if (test.size() == 0) throw ParameterError("empty test task");
  for (int label : test.class_set) {
    if (std::find(seen.begin(), seen.end(), label) == seen.end()) {
      throw ParameterError("test class " + std::to_string(label) + " has not been seen");
    }
  }
  const std::vector<int>& allowed = mode == EvalMode::kClassIL ? seen : test.class_set;
  const Activations acts = forward_batch(model, stack_inputs(test.samples));
  std::size_t correct = 0;
  for (std::size_t b = 0; b < test.size(); ++b) {
    if (std::find(seen.begin(), seen.end(), test.samples[b].y) == seen.end()) {
      throw ParameterError("test label " + std::to_string(test.samples[b].y) + " not seen");
    }
    Index best = 0;
    gather(acts.logits.col(static_cast<Index>(b)), allowed).maxCoeff(&best);
    if (allowed[static_cast<std::size_t>(best)] == test.samples[b].y) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<double> evaluate(const Model& model, const std::vector<TaskDataset>& tests,
                             EvalMode mode, const std::vector<int>& seen, int threads) {
  std::vector<double> row(tests.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < tests.size(); ++i) row[i] = evaluate_task(model, tests[i], mode, seen);
    return row;
  }
  std::vector<std::future<double>> pending;
  for (const auto& test : tests) {
    pending.push_back(std::async(std::launch::async, [&model, &test, mode, &seen] {
      return evaluate_task(model, test, mode, seen);
    }));
  }
  for (std::size_t i = 0; i < pending.size(); ++i) row[i] = pending[i].get();
  return row;
}

RunOutput run_experiment(const ExperimentConfig& config, bool always_score) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  RunOutput out;
  const ExperimentData data = run_stage("prepare_data", [&] { return prepare_data(config); });

  ModelSpec spec;
  spec.input_dim = data.dim;
  spec.hidden = config.hidden;
  spec.num_classes = data.label_space;
  spec.head = config.head;
  spec.scale = config.loss.scale;
  spec.dropout_rate = config.dropout_rate;
  Rng init_rng = make_rng(config.seed, {kInitKey});
  Model model = init_model(spec, init_rng);

  BufferState buffer;
  buffer.capacity = config.buffer_policy == BufferPolicy::kNone ? 0 : config.buffer_capacity;
  buffer.policy = config.buffer_policy;
  std::optional<TeacherSnapshot> teacher;

  for (const auto mode : config.eval_modes) out.record.modes.push_back({mode, {}, 0.0, 0.0, {}});

  for (std::size_t t = 0; t < data.train.size(); ++t) {
    const auto& task = data.train[t];
    const std::string where = " (task " + std::to_string(t) + ")";
    const ClassScope scope = scope_for_task(data.train, static_cast<int>(t));

    auto losses = run_stage("train_task" + where, [&] {
      return train_task(model, teacher ? &*teacher : nullptr, task, buffer, config, scope);
    });
    out.losses.insert(out.losses.end(), losses.begin(), losses.end());

    EndTaskResult ended = run_stage("end_task" + where, [&] {
      return end_task(model, buffer, task, config, scope, always_score);
    });
    teacher.emplace(std::move(ended.teacher));
    ++out.record.teacher_snapshots;
    out.audit.insert(out.audit.end(), ended.audit.begin(), ended.audit.end());
    if (!ended.scores.empty()) out.scores.push_back({task.task_id, std::move(ended.scores)});

    const std::vector<TaskDataset> seen_tests(data.test.begin(),
                                              data.test.begin() + static_cast<std::ptrdiff_t>(t + 1));
    const std::uint64_t before = parameter_hash(model);
    for (auto& mm : out.record.modes) {
      std::vector<double> row = run_stage("evaluate" + where, [&] {
        return evaluate(model, seen_tests, mm.mode, scope.seen, config.threads);
      });
      for (std::size_t i = 0; i < row.size(); ++i) {
        row[i] = round_percent(row[i]);
        out.metrics.push_back({static_cast<int>(t), static_cast<int>(i), mm.mode, row[i]});
      }
      mm.R.push_back(std::move(row));
    }
    if (parameter_hash(model) != before) throw ContractViolation("evaluation mutated the model");

    for (const auto& w : weight_magnitude_report(model)) {
      out.weight_norms.push_back({static_cast<int>(t), w});
    }
  }

  for (auto& mm : out.record.modes) {
    const AccBwt ab = acc_bwt(mm.R);
    mm.acc = ab.acc;
    mm.bwt = ab.bwt;
    mm.forgetting = forgetting(mm.R);
  }
  for (const auto& task : data.train) {
    out.record.task_sizes.push_back(task.size());
    out.record.class_sets.push_back(task.class_set);
  }
  out.record.config = config_echo(config);
  out.record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

}  // namespace ltcl
