#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ltcl/errors.hpp"

namespace ltcl {

enum class Ordering { kOrdered, kShuffled };

std::string to_string(Ordering ordering);
Ordering parse_ordering(const std::string& name);

/// Settings of a long-tailed task stream. Task t holds about
/// base_count * alpha^t samples; alpha is either given directly or derived
/// from the imbalance ratio between the last and first task.
struct StreamConfig {
  int n_tasks = 5;
  int classes_per_task = 2;
  long base_count = 500;
  std::optional<double> alpha_stream;
  std::optional<double> imbalance_ratio;
  Ordering ordering = Ordering::kOrdered;
  std::uint64_t seed = 0;

  void validate() const;
  /// Per-task decay factor; throws ParameterError when undefined.
  double alpha() const;
};

struct Sample {
  Eigen::VectorXd x;
  int y = 0;
};

struct TaskDataset {
  int task_id = 0;
  std::vector<int> class_set;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool contains_class(int label) const;
};

/// Labelled samples grouped per class. `labels` is sorted ascending and
/// `per_class[k]` holds the samples of `labels[k]`.
struct SamplePool {
  Eigen::Index dim = 0;
  std::vector<int> labels;
  std::vector<std::vector<Eigen::VectorXd>> per_class;

  int num_classes() const { return static_cast<int>(labels.size()); }
  std::size_t size() const;
  /// One past the largest label; the classifier width needed for this pool.
  int label_space() const { return labels.empty() ? 0 : labels.back() + 1; }
  const std::vector<Eigen::VectorXd>& samples_of(int label) const;
};

/// s_t = max(1, floor(C * alpha^t)).
std::vector<std::size_t> longtail_sizes(const StreamConfig& config);

/// Class labels assigned to each task: label order when ordered, a seeded
/// permutation when shuffled.
std::vector<std::vector<int>> assign_task_classes(const SamplePool& pool,
                                                  const StreamConfig& config);

/// Per-class sample counts. The first n_tasks * classes_per_task labels take
/// the long-tail task sizes in label order, each task size split evenly over
/// its classes with the remainder going to the lowest labels. A class keeps
/// its quota under either ordering.
std::map<int, std::size_t> class_quotas(const SamplePool& pool, const StreamConfig& config);

/// Draws each task's samples without replacement. Ordered streams give task t
/// the t-th block of labels, so task sizes follow the power law; shuffled
/// streams assign whole classes to tasks by a seeded permutation.
std::vector<TaskDataset> build_stream(const SamplePool& pool, const StreamConfig& config);

/// Every sample of `test_pool` grouped into the class sets of `stream`.
std::vector<TaskDataset> build_test_stream(const SamplePool& test_pool,
                                           const std::vector<TaskDataset>& stream);

/// Splits `per_class` samples of every class into a held-out pool.
/// Returns (train, test).
std::pair<SamplePool, SamplePool> split_holdout(const SamplePool& pool, std::size_t per_class,
                                                std::uint64_t seed);

/// Isotropic unit-variance Gaussian clusters, each centred on a seeded
/// random direction at distance `separation` from the origin.
SamplePool synth_gaussians(int n_classes, Eigen::Index dim, double separation,
                           std::size_t pool_per_class, std::uint64_t seed);

/// Reads `label,f0,...,f{d-1}` CSV. Throws ParseError with the line number.
SamplePool parse_pool(std::istream& in);
SamplePool load_pool(const std::string& path);

/// Writes the pool in the CSV format read by parse_pool, with shortest
/// round-trip decimal representations.
void write_pool(const SamplePool& pool, std::ostream& out);

/// Stacks sample inputs as columns.
Eigen::MatrixXd stack_inputs(const std::vector<Sample>& samples);

}  // namespace ltcl
