#include "ltcl/replay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace ltcl {

std::string to_string(BufferPolicy policy) {
  switch (policy) {
    case BufferPolicy::kNone: return "none";
    case BufferPolicy::kVanilla: return "random";
    case BufferPolicy::kUncertainty: return "uncertainty";
  }
  return "?";
}

BufferPolicy parse_buffer_policy(const std::string& name) {
  if (name == "none") return BufferPolicy::kNone;
  if (name == "random" || name == "vanilla" || name == "reservoir") return BufferPolicy::kVanilla;
  if (name == "uncertainty") return BufferPolicy::kUncertainty;
  throw ParameterError("unknown buffer policy '" + name + "'");
}

std::string to_string(CandidateOrder order) {
  return order == CandidateOrder::kMaxMi ? "max_mi" : "min_mi";
}

CandidateOrder parse_candidate_order(const std::string& name) {
  if (name == "max_mi") return CandidateOrder::kMaxMi;
  if (name == "min_mi") return CandidateOrder::kMinMi;
  throw ParameterError("unknown candidate order '" + name + "'");
}

bool BufferState::contains(std::uint64_t unique_id) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const BufferEntry& e) { return e.unique_id == unique_id; });
}

double sample_in_probability(const BufferState& state) {
  if (state.capacity == 0) return 0.0;
  double weighted = 0.0;
  if (!state.prev_task_sizes.empty()) {
    // softmax(-s) with max-subtraction: exp(-(s_i - s_min)).
    const double s_min = static_cast<double>(
        *std::min_element(state.prev_task_sizes.begin(), state.prev_task_sizes.end()));
    double norm = 0.0;
    for (std::size_t s : state.prev_task_sizes) norm += std::exp(-(static_cast<double>(s) - s_min));
    for (std::size_t s : state.prev_task_sizes) {
      const double w = std::exp(-(static_cast<double>(s) - s_min)) / norm;
      weighted += static_cast<double>(s) * w;
    }
  }
  const double denominator = static_cast<double>(state.iteration) + weighted;
  if (!(denominator > 0.0)) return 1.0;
  return std::clamp(static_cast<double>(state.capacity) / denominator, 0.0, 1.0);
}

std::optional<std::size_t> next_candidate(const std::vector<ScoredSample>& sorted,
                                          const BufferState& state, int task_id,
                                          std::size_t& cursor, CandidateOrder order) {
  while (cursor < sorted.size()) {
    const std::size_t pos =
        order == CandidateOrder::kMaxMi ? cursor : sorted.size() - 1 - cursor;
    ++cursor;
    if (!state.contains(sample_uid(task_id, sorted[pos].index))) return pos;
  }
  return std::nullopt;
}

std::vector<AuditRecord> task_end_update(BufferState& state, const TaskDataset& task,
                                         const std::vector<ScoredSample>& sorted, Rng& rng,
                                         CandidateOrder order) {
  if (sorted.size() != task.size()) throw ContractViolation("scores do not cover the task");
  std::vector<AuditRecord> log;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  state.iteration = 0;
  std::size_t cursor = 0;
  for (std::size_t iter = 0; iter < task.size(); ++iter) {
    const auto pos = next_candidate(sorted, state, task.task_id, cursor, order);
    if (!pos) break;
    const ScoredSample& cand = sorted[*pos];
    AuditRecord rec;
    rec.task_id = task.task_id;
    rec.iteration = iter;
    rec.candidate_id = sample_uid(task.task_id, cand.index);
    rec.probability = sample_in_probability(state);
    rec.accepted = unit(rng) < rec.probability;
    if (rec.accepted) {
      const Sample& s = task.samples[cand.index];
      BufferEntry entry{s.x, s.y, task.task_id, cand.score.mutual_information, rec.candidate_id};
      if (state.full()) {
        std::uniform_int_distribution<std::size_t> slot(0, state.entries.size() - 1);
        const std::size_t victim = slot(rng);
        rec.evicted_id = state.entries[victim].unique_id;
        state.entries[victim] = std::move(entry);
      } else {
        state.entries.push_back(std::move(entry));
      }
    }
    ++state.iteration;
    log.push_back(rec);
  }
  state.prev_task_sizes.push_back(task.size());
  state.iteration = 0;
  return log;
}

std::optional<std::uint64_t> vanilla_reservoir_insert(BufferState& state, BufferEntry entry,
                                                      std::uint64_t stream_index, Rng& rng,
                                                      bool* kept) {
  if (stream_index < 1) throw ParameterError("stream_index is 1-based");
  if (kept != nullptr) *kept = false;
  if (state.capacity == 0) return std::nullopt;
  if (!state.full()) {
    state.entries.push_back(std::move(entry));
    if (kept != nullptr) *kept = true;
    return std::nullopt;
  }
  std::uniform_int_distribution<std::uint64_t> draw(0, stream_index - 1);
  const std::uint64_t j = draw(rng);
  if (j >= state.capacity) return std::nullopt;
  auto& slot = state.entries[static_cast<std::size_t>(j)];
  const std::uint64_t evicted = slot.unique_id;
  slot = std::move(entry);
  if (kept != nullptr) *kept = true;
  return evicted;
}

std::vector<AuditRecord> reservoir_update(BufferState& state, const TaskDataset& task, Rng& rng) {
  std::vector<AuditRecord> log;
  for (std::size_t i = 0; i < task.size(); ++i) {
    const Sample& s = task.samples[i];
    const std::uint64_t index = ++state.stream_seen;
    AuditRecord rec;
    rec.task_id = task.task_id;
    rec.iteration = i;
    rec.candidate_id = sample_uid(task.task_id, i);
    rec.probability =
        std::min(1.0, static_cast<double>(state.capacity) / static_cast<double>(index));
    bool kept = false;
    rec.evicted_id = vanilla_reservoir_insert(
        state, BufferEntry{s.x, s.y, task.task_id, 0.0, rec.candidate_id}, index, rng, &kept);
    rec.accepted = kept;
    log.push_back(rec);
  }
  state.prev_task_sizes.push_back(task.size());
  return log;
}

std::vector<BufferEntry> sample_batch(const BufferState& state, std::size_t batch_size, Rng& rng) {
  const std::size_t n = std::min(batch_size, state.entries.size());
  std::vector<std::size_t> idx(state.entries.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<BufferEntry> batch;
  batch.reserve(n);
  for (std::size_t i = 0; i < n; ++i) batch.push_back(state.entries[idx[i]]);
  return batch;
}

void write_audit_header(std::ostream& out) {
  out << "task_id,iter,candidate_id,P,accepted,evicted_id\n";
}

void write_audit(std::ostream& out, const std::vector<AuditRecord>& records) {
  char p[32];
  for (const auto& r : records) {
    std::snprintf(p, sizeof(p), "%.6f", r.probability);
    out << r.task_id << ',' << r.iteration << ',' << r.candidate_id << ',' << p << ','
        << (r.accepted ? 1 : 0) << ',';
    if (r.evicted_id) out << *r.evicted_id;
    out << '\n';
  }
}

}  // namespace ltcl
