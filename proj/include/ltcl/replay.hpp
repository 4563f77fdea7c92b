#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ltcl/seed.hpp"
#include "ltcl/stream.hpp"
#include "ltcl/uncertainty.hpp"

namespace ltcl {

enum class BufferPolicy { kNone, kVanilla, kUncertainty };
enum class CandidateOrder { kMaxMi, kMinMi };

std::string to_string(BufferPolicy policy);
BufferPolicy parse_buffer_policy(const std::string& name);
std::string to_string(CandidateOrder order);
CandidateOrder parse_candidate_order(const std::string& name);

/// Identifier of sample `index` of task `task_id`, unique across a stream.
constexpr std::uint64_t sample_uid(int task_id, std::size_t index) {
  return (static_cast<std::uint64_t>(task_id) << 32) | static_cast<std::uint64_t>(index);
}

struct BufferEntry {
  Eigen::VectorXd x;
  int y = 0;
  int task_id = 0;
  double mi_at_insert = 0.0;
  std::uint64_t unique_id = 0;
};

/// Fixed-capacity episodic memory. `iteration` is the sampling-iteration
/// counter of the current task-end phase; `prev_task_sizes` lists the sizes
/// of completed tasks; `stream_seen` counts items offered to the vanilla
/// reservoir.
struct BufferState {
  std::size_t capacity = 0;
  std::vector<BufferEntry> entries;
  std::size_t iteration = 0;
  std::vector<std::size_t> prev_task_sizes;
  std::uint64_t stream_seen = 0;
  BufferPolicy policy = BufferPolicy::kUncertainty;

  bool full() const { return entries.size() >= capacity; }
  bool contains(std::uint64_t unique_id) const;
};

/// capacity / (iteration + sum_i s_i w_i) with w = softmax(-s) over completed
/// tasks, clamped to [0, 1]. An empty denominator yields 1.
double sample_in_probability(const BufferState& state);

/// Walks a score-sorted list for the next sample that is neither buffered nor
/// already consumed. `cursor` tracks consumption across calls and starts at 0.
std::optional<std::size_t> next_candidate(const std::vector<ScoredSample>& sorted,
                                          const BufferState& state, int task_id,
                                          std::size_t& cursor,
                                          CandidateOrder order = CandidateOrder::kMaxMi);

struct AuditRecord {
  int task_id = 0;
  std::size_t iteration = 0;
  std::uint64_t candidate_id = 0;
  double probability = 0.0;
  bool accepted = false;
  std::optional<std::uint64_t> evicted_id;
};

/// Uncertainty-guided update run once at the end of a task: for up to |task|
/// iterations draw a candidate, admit it with sample_in_probability and, when
/// the memory is full, evict a uniformly chosen entry first.
std::vector<AuditRecord> task_end_update(BufferState& state, const TaskDataset& task,
                                         const std::vector<ScoredSample>& sorted, Rng& rng,
                                         CandidateOrder order = CandidateOrder::kMaxMi);

/// Classic reservoir step (Algorithm R). `stream_index` is 1-based. Returns
/// the evicted entry's id when a replacement happens.
std::optional<std::uint64_t> vanilla_reservoir_insert(BufferState& state, BufferEntry entry,
                                                      std::uint64_t stream_index, Rng& rng,
                                                      bool* kept = nullptr);

/// Streams a task through vanilla_reservoir_insert in sample order.
std::vector<AuditRecord> reservoir_update(BufferState& state, const TaskDataset& task, Rng& rng);

/// Uniform sample without replacement, at most `batch_size` entries.
std::vector<BufferEntry> sample_batch(const BufferState& state, std::size_t batch_size, Rng& rng);

void write_audit_header(std::ostream& out);
void write_audit(std::ostream& out, const std::vector<AuditRecord>& records);

}  // namespace ltcl
