#include "ltcl/persist.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "json.hpp"

namespace ltcl {

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

std::string summary_json(const RunRecord& record) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [k, v] : record.config) config[k] = v;
  j["config"] = config;
  j["task_sizes"] = record.task_sizes;
  j["class_sets"] = record.class_sets;
  j["teacher_snapshots"] = record.teacher_snapshots;
  nlohmann::ordered_json modes = nlohmann::ordered_json::object();
  for (const auto& mm : record.modes) {
    nlohmann::ordered_json m;
    m["R"] = mm.R;
    m["ACC"] = mm.acc;
    m["BWT"] = mm.bwt;
    m["forgetting"] = mm.forgetting;
    modes[to_string(mm.mode)] = m;
  }
  j["metrics"] = modes;
  return j.dump(2) + "\n";
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "after_task,eval_task,mode,accuracy\n";
  char acc[32];
  for (const auto& r : rows) {
    std::snprintf(acc, sizeof(acc), "%.2f", r.accuracy);
    out << r.after_task << ',' << r.eval_task << ',' << to_string(r.mode) << ',' << acc << '\n';
  }
}

void write_losses_csv(std::ostream& out, const std::vector<StepLog>& rows) {
  out << "task_id,epoch,step,mce,kd,proto,total\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%d,%d,%d,%.9g,%.9g,%.9g,%.9g\n", r.task_id, r.epoch, r.step,
                  r.loss.mce, r.loss.kd, r.loss.proto, r.loss.total);
    out << line;
  }
}

void write_weight_norms_csv(std::ostream& out, const std::vector<WeightNormRow>& rows) {
  out << "after_task,class,norm,bias\n";
  char num[64];
  for (const auto& r : rows) {
    std::snprintf(num, sizeof(num), "%.9g", r.magnitude.norm);
    out << r.after_task << ',' << r.magnitude.cls << ',' << num << ',';
    if (r.magnitude.bias) {
      std::snprintf(num, sizeof(num), "%.9g", *r.magnitude.bias);
      out << num;
    }
    out << '\n';
  }
}

void write_scores_csv(std::ostream& out, const std::vector<TaskScores>& scores) {
  out << "task_id,sample_index,H,expected_H,MI\n";
  for (const auto& s : scores) write_score_dump(out, s.task_id, s.scored);
}

void write_run(const RunOutput& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_for_write(dir / "summary.json");
    out << summary_json(run.record);
  }
  {
    auto out = open_for_write(dir / "metrics.csv");
    write_metrics_csv(out, run.metrics);
  }
  {
    auto out = open_for_write(dir / "losses.csv");
    write_losses_csv(out, run.losses);
  }
  {
    auto out = open_for_write(dir / "buffer_audit.csv");
    write_audit_header(out);
    write_audit(out, run.audit);
  }
  {
    auto out = open_for_write(dir / "weight_norms.csv");
    write_weight_norms_csv(out, run.weight_norms);
  }
  {
    auto out = open_for_write(dir / "timing.json");
    out << nlohmann::json{{"wall_clock_seconds", run.record.wall_clock_seconds}}.dump() << "\n";
  }
}

}  // namespace ltcl
