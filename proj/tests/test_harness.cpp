#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ltcl/harness.hpp"
#include "ltcl/persist.hpp"

using namespace ltcl;

namespace {

ExperimentConfig small_config(std::uint64_t seed = 3) {
  ExperimentConfig c;
  c.stream.n_tasks = 3;
  c.stream.classes_per_task = 2;
  c.stream.base_count = 80;
  c.stream.alpha_stream = 0.5;
  c.buffer_capacity = 30;
  c.epochs = 2;
  c.batch_size = 16;
  c.mc.passes = 3;
  c.hidden = {32, 32};
  c.dim = 8;
  c.pool_per_class = 120;
  c.test_per_class = 30;
  c.reseed(seed);
  return c;
}

}  // namespace

TEST_CASE("acc_bwt") {
  const AccBwt two = acc_bwt({{60.0}, {50.0, 70.0}});
  CHECK(two.acc == 60.0);
  CHECK(two.bwt == -10.0);

  const AccBwt single = acc_bwt({{83.5}});
  CHECK(single.acc == 83.5);
  CHECK(single.bwt == 0.0);

  const AccBwt none = acc_bwt({{90.0}, {90.0, 80.0}, {90.0, 80.0, 70.0}});
  CHECK(none.bwt == 0.0);
  CHECK(none.acc == 80.0);

  CHECK_THROWS_AS(acc_bwt({}), ContractViolation);
  CHECK_THROWS_AS(acc_bwt({{60.0}, {50.0}}), ContractViolation);
}

TEST_CASE("acc is invariant under a consistent task permutation") {
  // Reordering which task is evaluated in which column leaves the final-row
  // mean unchanged.
  const AccuracyMatrix r = {{70.0}, {40.0, 80.0}, {30.0, 60.0, 90.0}};
  const AccuracyMatrix swapped = {{70.0}, {40.0, 80.0}, {90.0, 60.0, 30.0}};
  CHECK(acc_bwt(r).acc == acc_bwt(swapped).acc);
}

TEST_CASE("forgetting") {
  const auto f = forgetting({{70.0}, {40.0, 80.0}, {50.0, 60.0, 90.0}});
  REQUIRE(f.size() == 3);
  CHECK(f[0] == 20.0);
  CHECK(f[1] == 20.0);
  CHECK(f[2] == 0.0);
}

TEST_CASE("evaluate") {
  const ExperimentConfig cfg = small_config();
  const ExperimentData data = prepare_data(cfg);
  ModelSpec spec;
  spec.input_dim = data.dim;
  spec.hidden = cfg.hidden;
  spec.num_classes = data.label_space;
  Rng rng(1);
  const Model m = init_model(spec, rng);
  const std::vector<int> seen = {0, 1, 2, 3, 4, 5};
  for (const auto& task : data.test) {
    CHECK(evaluate_task(m, task, EvalMode::kTaskIL, seen) >=
          evaluate_task(m, task, EvalMode::kClassIL, seen));
  }
  CHECK_THROWS_AS(evaluate_task(m, data.test[2], EvalMode::kClassIL, {0, 1, 2, 3}), ParameterError);

  TaskDataset single;
  single.class_set = {4};
  for (const auto& s : data.test[2].samples) {
    if (s.y == 4) single.samples.push_back(s);
  }
  CHECK(evaluate_task(m, single, EvalMode::kTaskIL, seen) == 100.0);

  const auto parallel = evaluate(m, data.test, EvalMode::kClassIL, seen, 3);
  CHECK(parallel == evaluate(m, data.test, EvalMode::kClassIL, seen, 1));
}

TEST_CASE("a random model on class-independent inputs scores chance level") {
  const SamplePool pool = synth_gaussians(10, 8, 0.0, 400, 12);
  TaskDataset all;
  for (std::size_t k = 0; k < 10; ++k) {
    all.class_set.push_back(pool.labels[k]);
    for (const auto& x : pool.per_class[k]) all.samples.push_back({x, pool.labels[k]});
  }
  ModelSpec spec;
  spec.input_dim = 8;
  spec.num_classes = 10;
  Rng rng(13);
  const Model m = init_model(spec, rng);
  const double acc = evaluate_task(m, all, EvalMode::kClassIL, all.class_set);
  // 4000 samples: standard error sqrt(0.1 * 0.9 / 4000) = 0.47 points.
  CHECK(std::abs(acc - 10.0) < 4 * 0.47);
}

TEST_CASE("train_task step count") {
  ExperimentConfig cfg = small_config();
  cfg.epochs = 1;
  cfg.batch_size = 32;
  cfg.buffer_policy = BufferPolicy::kNone;
  const ExperimentData data = prepare_data(cfg);
  TaskDataset task = data.train[0];
  REQUIRE(task.size() >= 33);
  task.samples.resize(32);
  ModelSpec spec;
  spec.input_dim = data.dim;
  spec.hidden = cfg.hidden;
  spec.num_classes = data.label_space;
  spec.dropout_rate = cfg.dropout_rate;
  Rng rng(2);
  Model m = init_model(spec, rng);
  BufferState buffer;
  buffer.capacity = cfg.buffer_capacity;
  const auto logs = train_task(m, nullptr, task, buffer, cfg, scope_for_task(data.train, 0));
  REQUIRE(logs.size() == 1);
  CHECK(logs[0].loss.kd == 0.0);
  CHECK(logs[0].loss.proto == 0.0);

  cfg.epochs = 3;
  task.samples.push_back(data.train[0].samples[32]);
  CHECK(train_task(m, nullptr, task, buffer, cfg, scope_for_task(data.train, 0)).size() == 6);
}

TEST_CASE("end_task fills the buffer and snapshots the final model") {
  const ExperimentConfig cfg = small_config();
  const ExperimentData data = prepare_data(cfg);
  ModelSpec spec;
  spec.input_dim = data.dim;
  spec.hidden = cfg.hidden;
  spec.num_classes = data.label_space;
  spec.dropout_rate = cfg.dropout_rate;
  Rng rng(5);
  const Model m = init_model(spec, rng);
  for (std::size_t capacity : {std::size_t{30}, std::size_t{500}}) {
    BufferState buffer;
    buffer.capacity = capacity;
    buffer.policy = cfg.buffer_policy;
    const EndTaskResult r = end_task(m, buffer, data.train[0], cfg, scope_for_task(data.train, 0));
    CHECK(buffer.entries.size() == std::min(capacity, data.train[0].size()));
    CHECK(parameter_hash(r.teacher.model()) == parameter_hash(m));
    CHECK(r.teacher.snapshot_task() == 0);
  }
}

TEST_CASE("run_experiment records") {
  const ExperimentConfig cfg = small_config();
  const RunOutput a = run_experiment(cfg);
  const RunOutput b = run_experiment(cfg);
  CHECK(summary_json(a.record) == summary_json(b.record));
  CHECK(a.record.teacher_snapshots == 3);

  for (const auto& mode : a.record.modes) {
    REQUIRE(mode.R.size() == 3);
    for (std::size_t j = 0; j < 3; ++j) {
      REQUIRE(mode.R[j].size() == j + 1);
      for (double r : mode.R[j]) {
        CHECK(r >= 0.0);
        CHECK(r <= 100.0);
      }
    }
  }
  const auto& cil = a.record.mode(EvalMode::kClassIL);
  const auto& til = a.record.mode(EvalMode::kTaskIL);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t i = 0; i <= j; ++i) CHECK(til.R[j][i] >= cil.R[j][i]);
  }

  // Scalars persisted in the summary are recomputable from its matrix.
  const auto summary = nlohmann::json::parse(summary_json(a.record));
  for (const auto& [name, metrics] : summary["metrics"].items()) {
    const auto R = metrics["R"].get<AccuracyMatrix>();
    const AccBwt expect = acc_bwt(R);
    CHECK(metrics["ACC"].get<double>() == expect.acc);
    CHECK(metrics["BWT"].get<double>() == expect.bwt);
    CHECK(metrics["forgetting"].get<std::vector<double>>() == forgetting(R));
  }
  CHECK(a.metrics.size() == 2 * 6);
  CHECK_FALSE(a.losses.empty());
  CHECK(a.weight_norms.size() == 3 * 6);
}

TEST_CASE("single task run") {
  ExperimentConfig cfg = small_config();
  cfg.stream.n_tasks = 1;
  const RunOutput r = run_experiment(cfg);
  const auto& m = r.record.mode(EvalMode::kClassIL);
  CHECK(m.acc == m.R[0][0]);
  CHECK(m.bwt == 0.0);
}

TEST_CASE("ablation grid runs to completion") {
  int runs = 0;
  for (HeadKind head : {HeadKind::kLinear, HeadKind::kCosine}) {
    for (BufferPolicy policy : {BufferPolicy::kNone, BufferPolicy::kVanilla, BufferPolicy::kUncertainty}) {
      ExperimentConfig cfg = small_config(9);
      cfg.head = head;
      cfg.buffer_policy = policy;
      const RunOutput r = run_experiment(cfg);
      CHECK(r.record.modes.size() == 2);
      if (policy == BufferPolicy::kNone) CHECK(r.audit.empty());
      ++runs;
    }
  }
  CHECK(runs == 6);
}

TEST_CASE("write_run artifacts") {
  const RunOutput r = run_experiment(small_config());
  const auto dir = std::filesystem::temp_directory_path() / "ltcl_test_write_run";
  std::filesystem::remove_all(dir);
  write_run(r, dir);
  auto header = [&](const char* name) {
    std::ifstream in(dir / name);
    std::string line;
    std::getline(in, line);
    return line;
  };
  CHECK(header("metrics.csv") == "after_task,eval_task,mode,accuracy");
  CHECK(header("losses.csv") == "task_id,epoch,step,mce,kd,proto,total");
  CHECK(header("buffer_audit.csv") == "task_id,iter,candidate_id,P,accepted,evicted_id");
  CHECK(header("weight_norms.csv") == "after_task,class,norm,bias");
  CHECK(std::filesystem::exists(dir / "summary.json"));
  std::filesystem::remove_all(dir);
}
