#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ltcl/net.hpp"
#include "ltcl/stream.hpp"

namespace ltcl {

/// Monte-Carlo dropout settings: number of stochastic passes, softmax
/// temperature and base seed for the dropout masks.
struct MCConfig {
  int passes = 10;
  double tau1 = 0.1;
  std::uint64_t seed = 0;
};

/// Entropies are in nats. mutual_information = entropy - expected_entropy.
struct UncertaintyScore {
  Eigen::VectorXd mean_probs;
  double entropy = 0.0;
  double expected_entropy = 0.0;
  double mutual_information = 0.0;
};

struct Posterior {
  Eigen::VectorXd mean_probs;
  std::vector<Eigen::VectorXd> pass_probs;
};

/// Temperature applied to the head's logits: tau1 for the cosine head, 1 for
/// the linear head (plain softmax).
double head_temperature(const Model& model, double tau1);

/// Averages softmax(logits / T) over `mc.passes` dropout masks. Pass k draws
/// its mask from derive_seed(mc.seed, {task_id, sample_index, k}). When
/// `classes` is nonempty the distribution is restricted to those classes.
Posterior mc_posterior(const Model& model, const Eigen::VectorXd& x, const MCConfig& mc,
                       const std::vector<int>& classes = {}, std::uint64_t task_id = 0,
                       std::uint64_t sample_index = 0);

/// -sum p ln p with 0 ln 0 = 0.
double predictive_entropy(const Eigen::VectorXd& p);

/// Entropy of the mean minus the mean entropy, accumulated in one pass.
/// Jensen violations down to -1e-9 are clamped to zero; larger ones throw.
UncertaintyScore mutual_information(const std::vector<Eigen::VectorXd>& pass_probs);

struct ScoredSample {
  std::size_t index = 0;  // position in the task's sample list
  UncertaintyScore score;
};

/// Scores every sample of the task and sorts by mutual information,
/// descending, ties by index.
std::vector<ScoredSample> score_and_sort(const Model& model, const TaskDataset& task,
                                         const MCConfig& mc, const std::vector<int>& classes = {});

/// `task_id,sample_index,H,expected_H,MI` lines with 9 significant digits.
void write_score_dump(std::ostream& out, int task_id, const std::vector<ScoredSample>& scored);

}  // namespace ltcl
