#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltcl/errors.hpp"
#include "ltcl/seed.hpp"

namespace ltcl {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Norms at or below this are treated as zero.
inline constexpr double kNormTolerance = 1e-12;

/// Unit-norm copy of `v`. Throws DegenerateNormError for (near) zero vectors.
template <typename Derived>
Vector<typename Derived::Scalar> normalize(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar n = v.norm();
  if (!(n > Scalar(kNormTolerance))) {
    throw DegenerateNormError("cannot normalize vector with norm " + std::to_string(double(n)));
  }
  return v / n;
}

/// exp(z/tau) normalized, evaluated with max-subtraction.
template <typename Derived>
Vector<typename Derived::Scalar> softmax_temp(const Eigen::MatrixBase<Derived>& logits,
                                              typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  if (!(tau > Scalar(0))) throw ParameterError("softmax temperature must be positive");
  if (logits.size() == 0) throw ShapeError("softmax of an empty vector");
  Vector<Scalar> e = ((logits.array() - logits.maxCoeff()) / tau).exp().matrix();
  return e / e.sum();
}

/// log of softmax_temp, via log-sum-exp.
template <typename Derived>
Vector<typename Derived::Scalar> log_softmax_temp(const Eigen::MatrixBase<Derived>& logits,
                                                  typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  if (!(tau > Scalar(0))) throw ParameterError("softmax temperature must be positive");
  if (logits.size() == 0) throw ShapeError("softmax of an empty vector");
  Vector<Scalar> shifted = ((logits.array() - logits.maxCoeff()) / tau).matrix();
  const Scalar lse = std::log(shifted.array().exp().sum());
  return (shifted.array() - lse).matrix();
}

/// Gathers `v[idx[k]]` for every k.
template <typename Derived>
Vector<typename Derived::Scalar> gather(const Eigen::MatrixBase<Derived>& v,
                                        const std::vector<int>& idx) {
  Vector<typename Derived::Scalar> out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = v(idx[k]);
  return out;
}

enum class HeadKind { kLinear, kCosine };

std::string to_string(HeadKind kind);
HeadKind parse_head_kind(const std::string& name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Classifier on top of the encoder features. Linear heads compute
/// w_i.f + b_i; cosine heads compute s * cos(w_i, f) and carry no bias.
/// Prototypes (rows of `weights`) are stored unnormalized.
struct ClassifierHead {
  HeadKind kind = HeadKind::kCosine;
  Eigen::MatrixXd weights;  // num_classes x feature_dim
  Eigen::VectorXd bias;     // num_classes for linear, empty for cosine
  double scale = 10.0;
};

/// Fully connected rectifier encoder followed by a classifier head. Dropout
/// follows every encoder activation.
struct Model {
  std::vector<DenseLayer> encoder;
  ClassifierHead head;
  double dropout_rate = 0.0;

  Index input_dim() const;
  Index feature_dim() const;
  Index num_classes() const { return head.weights.rows(); }

  /// Throws ShapeError / ParameterError if the layers do not chain.
  void validate() const;
};

struct ModelSpec {
  Index input_dim = 2;
  std::vector<Index> hidden = {64, 64};
  Index num_classes = 2;
  HeadKind head = HeadKind::kCosine;
  double scale = 10.0;
  double dropout_rate = 0.2;
};

/// He-normal encoder weights, N(0, 1/d) head weights, zero biases.
Model init_model(const ModelSpec& spec, Rng& rng);

/// A model with identical shapes and all parameters zero; used as the
/// gradient container.
Model zeros_like(const Model& model);

/// Binary keep masks, one (units x batch) matrix per encoder layer, applied
/// with inverted scaling 1/keep_probability.
struct DropoutMask {
  std::vector<Eigen::MatrixXd> keep;
  double keep_probability = 1.0;
};

DropoutMask sample_dropout_mask(const Model& model, Index batch, Rng& rng);
DropoutMask identity_mask(const Model& model, Index batch);

/// Intermediate values of a batched forward pass; columns are samples.
struct Activations {
  Eigen::MatrixXd inputs;
  std::vector<Eigen::MatrixXd> pre;   // per layer, before the rectifier
  std::vector<Eigen::MatrixXd> post;  // per layer, after rectifier and dropout
  Eigen::MatrixXd logits;             // num_classes x batch

  // Cosine head only.
  Eigen::RowVectorXd feature_norms;
  Eigen::MatrixXd unit_features;
  Eigen::MatrixXd unit_prototypes;
  Eigen::VectorXd prototype_norms;

  const Eigen::MatrixXd& features() const { return post.empty() ? inputs : post.back(); }
};

Activations forward_batch(const Model& model, const Eigen::MatrixXd& inputs,
                          const DropoutMask* mask = nullptr);

struct ForwardResult {
  Eigen::VectorXd features;
  Eigen::VectorXd logits;
};

ForwardResult forward(const Model& model, const Eigen::VectorXd& x,
                      const DropoutMask* mask = nullptr);

/// Reverse-mode pass given dLoss/dlogits (num_classes x batch). The mask
/// must be the one used to produce `acts`.
Model backward(const Model& model, const Activations& acts, const Eigen::MatrixXd& logit_grads,
               const DropoutMask* mask = nullptr);

/// p <- p - lr * g for every parameter.
void apply_sgd(Model& model, const Model& grads, double lr);
Model sgd_step(Model model, const Model& grads, double lr);

/// Flat parameter view in a fixed order (encoder layers, head weights, bias).
Eigen::VectorXd flatten(const Model& model);
void unflatten(Model& model, const Eigen::VectorXd& params);

/// FNV-1a over the raw parameter bytes.
std::uint64_t parameter_hash(const Model& model);

struct WeightMagnitude {
  int cls = 0;
  double norm = 0.0;
  std::optional<double> bias;
};

/// One row per class: norm of the stored weight vector and the bias, if any.
std::vector<WeightMagnitude> weight_magnitude_report(const Model& model);

}  // namespace ltcl
