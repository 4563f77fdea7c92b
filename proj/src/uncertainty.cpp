#include "ltcl/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace ltcl {

namespace {

constexpr double kJensenSlack = 1e-9;
constexpr double kSumTolerance = 1e-9;

}  // namespace

double head_temperature(const Model& model, double tau1) {
  return model.head.kind == HeadKind::kCosine ? tau1 : 1.0;
}

Posterior mc_posterior(const Model& model, const Eigen::VectorXd& x, const MCConfig& mc,
                       const std::vector<int>& classes, std::uint64_t task_id,
                       std::uint64_t sample_index) {
  if (mc.passes < 1) throw ParameterError("MC dropout needs at least one pass");
  const Index passes = mc.passes;

  // All passes run as one batch; column k carries pass k's mask.
  DropoutMask mask = identity_mask(model, passes);
  mask.keep_probability = 1.0 - model.dropout_rate;
  for (Index k = 0; k < passes; ++k) {
    Rng rng = make_rng(mc.seed, {task_id, sample_index, static_cast<std::uint64_t>(k)});
    DropoutMask single = sample_dropout_mask(model, 1, rng);
    for (std::size_t l = 0; l < mask.keep.size(); ++l) mask.keep[l].col(k) = single.keep[l].col(0);
  }
  const Activations acts = forward_batch(model, x.replicate(1, passes), &mask);
  const double tau = head_temperature(model, mc.tau1);

  Posterior post;
  for (Index k = 0; k < passes; ++k) {
    const Eigen::VectorXd logits =
        classes.empty() ? Eigen::VectorXd(acts.logits.col(k)) : gather(acts.logits.col(k), classes);
    post.pass_probs.push_back(softmax_temp(logits, tau));
  }
  post.mean_probs = Eigen::VectorXd::Zero(post.pass_probs.front().size());
  for (const auto& p : post.pass_probs) post.mean_probs += p;
  post.mean_probs /= static_cast<double>(passes);
  return post;
}

double predictive_entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  double total = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    if (!(p(i) >= 0.0)) throw ParameterError("probability entries must be non-negative");
    total += p(i);
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  }
  if (std::abs(total - 1.0) > kSumTolerance) throw ParameterError("probabilities must sum to 1");
  return h;
}

UncertaintyScore mutual_information(const std::vector<Eigen::VectorXd>& pass_probs) {
  if (pass_probs.empty()) throw ParameterError("mutual information needs at least one pass");
  const Index classes = pass_probs.front().size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(classes);
  double entropy_sum = 0.0;
  for (const auto& p : pass_probs) {
    if (p.size() != classes) throw ShapeError("passes disagree on the number of classes");
    sum += p;
    entropy_sum += predictive_entropy(p);
  }
  const auto n = static_cast<double>(pass_probs.size());
  UncertaintyScore score;
  score.mean_probs = sum / n;
  score.entropy = predictive_entropy(score.mean_probs);
  score.expected_entropy = entropy_sum / n;
  double mi = score.entropy - score.expected_entropy;
  if (mi < 0.0) {
    if (mi < -kJensenSlack) {
      throw ParameterError("mutual information " + std::to_string(mi) + " violates Jensen bound");
    }
    mi = 0.0;
    score.expected_entropy = score.entropy;
  }
  score.mutual_information = mi;
  return score;
}

std::vector<ScoredSample> score_and_sort(const Model& model, const TaskDataset& task,
                                         const MCConfig& mc, const std::vector<int>& classes) {
  std::vector<ScoredSample> scored;
  scored.reserve(task.size());
  for (std::size_t i = 0; i < task.size(); ++i) {
    const Posterior post = mc_posterior(model, task.samples[i].x, mc, classes,
                                        static_cast<std::uint64_t>(task.task_id), i);
    scored.push_back({i, mutual_information(post.pass_probs)});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const ScoredSample& a, const ScoredSample& b) {
    return a.score.mutual_information > b.score.mutual_information;
  });
  return scored;
}

void write_score_dump(std::ostream& out, int task_id, const std::vector<ScoredSample>& scored) {
  char line[160];
  for (const auto& s : scored) {
    std::snprintf(line, sizeof(line), "%d,%zu,%.9g,%.9g,%.9g\n", task_id, s.index, s.score.entropy,
                  s.score.expected_entropy, s.score.mutual_information);
    out << line;
  }
}

}  // namespace ltcl
