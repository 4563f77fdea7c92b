#include "ltcl/net.hpp"

#include <cstring>

namespace ltcl {

namespace {

void require_finite(const Eigen::MatrixXd& m, const std::string& where) {
  if (!m.allFinite()) throw NumericOverflowError("non-finite value in " + where);
}

std::string layer_name(std::size_t l) { return "encoder layer " + std::to_string(l); }

}  // namespace

std::string to_string(HeadKind kind) { return kind == HeadKind::kLinear ? "linear" : "cosine"; }

HeadKind parse_head_kind(const std::string& name) {
  if (name == "linear") return HeadKind::kLinear;
  if (name == "cosine") return HeadKind::kCosine;
  throw ParameterError("unknown head kind '" + name + "'");
}

Index Model::input_dim() const {
  return encoder.empty() ? head.weights.cols() : encoder.front().weight.cols();
}

Index Model::feature_dim() const {
  return encoder.empty() ? head.weights.cols() : encoder.back().weight.rows();
}

void Model::validate() const {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ParameterError("dropout rate must lie in [0, 1)");
  }
  Index width = input_dim();
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const auto& layer = encoder[l];
    if (layer.weight.cols() != width || layer.bias.size() != layer.weight.rows()) {
      throw ShapeError(layer_name(l) + " does not chain with its input");
    }
    width = layer.weight.rows();
  }
  if (head.weights.cols() != width) throw ShapeError("head width does not match encoder output");
  if (head.kind == HeadKind::kLinear) {
    if (head.bias.size() != head.weights.rows()) throw ShapeError("linear head bias size");
  } else {
    if (head.bias.size() != 0) throw ShapeError("cosine head carries no bias");
    if (!(head.scale > 0.0)) throw ParameterError("cosine scale must be positive");
  }
}

Model init_model(const ModelSpec& spec, Rng& rng) {
  if (spec.input_dim < 1 || spec.num_classes < 1) throw ParameterError("empty model");
  Model model;
  model.dropout_rate = spec.dropout_rate;
  std::normal_distribution<double> normal(0.0, 1.0);
  Index width = spec.input_dim;
  for (Index units : spec.hidden) {
    if (units < 1) throw ParameterError("hidden layer with no units");
    DenseLayer layer;
    const double sd = std::sqrt(2.0 / static_cast<double>(width));
    layer.weight = Eigen::MatrixXd::NullaryExpr(units, width, [&] { return sd * normal(rng); });
    layer.bias = Eigen::VectorXd::Zero(units);
    model.encoder.push_back(std::move(layer));
    width = units;
  }
  model.head.kind = spec.head;
  model.head.scale = spec.scale;
  const double sd = std::sqrt(1.0 / static_cast<double>(width));
  model.head.weights =
      Eigen::MatrixXd::NullaryExpr(spec.num_classes, width, [&] { return sd * normal(rng); });
  if (spec.head == HeadKind::kLinear) model.head.bias = Eigen::VectorXd::Zero(spec.num_classes);
  model.validate();
  return model;
}

Model zeros_like(const Model& model) {
  Model z = model;
  for (auto& layer : z.encoder) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  z.head.weights.setZero();
  z.head.bias.setZero();
  return z;
}

DropoutMask sample_dropout_mask(const Model& model, Index batch, Rng& rng) {
  DropoutMask mask;
  mask.keep_probability = 1.0 - model.dropout_rate;
  std::bernoulli_distribution keep(mask.keep_probability);
  for (const auto& layer : model.encoder) {
    mask.keep.push_back(Eigen::MatrixXd::NullaryExpr(layer.weight.rows(), batch,
                                                     [&] { return keep(rng) ? 1.0 : 0.0; }));
  }
  return mask;
}

DropoutMask identity_mask(const Model& model, Index batch) {
  DropoutMask mask;
  for (const auto& layer : model.encoder) {
    mask.keep.push_back(Eigen::MatrixXd::Ones(layer.weight.rows(), batch));
  }
  return mask;
}

Activations forward_batch(const Model& model, const Eigen::MatrixXd& inputs,
                          const DropoutMask* mask) {
  if (inputs.rows() != model.input_dim()) {
    throw ShapeError("input dimension " + std::to_string(inputs.rows()) + " but model expects " +
                     std::to_string(model.input_dim()));
  }
  if (mask != nullptr) {
    if (mask->keep.size() != model.encoder.size()) throw ShapeError("dropout mask layer count");
    if (!(mask->keep_probability > 0.0)) throw ParameterError("keep probability must be positive");
  }
  Activations acts;
  acts.inputs = inputs;
  const Eigen::MatrixXd* current = &acts.inputs;
  for (std::size_t l = 0; l < model.encoder.size(); ++l) {
    const auto& layer = model.encoder[l];
    Eigen::MatrixXd pre = (layer.weight * *current).colwise() + layer.bias;
    require_finite(pre, layer_name(l));
    Eigen::MatrixXd post = pre.cwiseMax(0.0);
    if (mask != nullptr) {
      const auto& keep = mask->keep[l];
      if (keep.rows() != post.rows() || keep.cols() != post.cols()) {
        throw ShapeError("dropout mask shape for " + layer_name(l));
      }
      post = post.cwiseProduct(keep) / mask->keep_probability;
    }
    acts.pre.push_back(std::move(pre));
    acts.post.push_back(std::move(post));
    current = &acts.post.back();
  }

  const auto& features = *current;
  const auto& head = model.head;
  if (head.kind == HeadKind::kLinear) {
    acts.logits = (head.weights * features).colwise() + head.bias;
  } else {
    acts.feature_norms = features.colwise().norm();
    acts.prototype_norms = head.weights.rowwise().norm();
    for (Index b = 0; b < features.cols(); ++b) {
      if (!(acts.feature_norms(b) > kNormTolerance)) {
        throw DegenerateNormError("zero-norm feature vector for sample " + std::to_string(b));
      }
    }
    for (Index c = 0; c < head.weights.rows(); ++c) {
      if (!(acts.prototype_norms(c) > kNormTolerance)) {
        throw DegenerateNormError("zero-norm prototype for class " + std::to_string(c));
      }
    }
    acts.unit_features = features.array().rowwise() / acts.feature_norms.array();
    acts.unit_prototypes = head.weights.array().colwise() / acts.prototype_norms.array();
    acts.logits = head.scale * (acts.unit_prototypes * acts.unit_features);
  }
  require_finite(acts.logits, "classifier head");
  return acts;
}

ForwardResult forward(const Model& model, const Eigen::VectorXd& x, const DropoutMask* mask) {
  Activations acts = forward_batch(model, x, mask);
  return {acts.features().col(0), acts.logits.col(0)};
}

Model backward(const Model& model, const Activations& acts, const Eigen::MatrixXd& logit_grads,
               const DropoutMask* mask) {
  if (logit_grads.rows() != model.num_classes() || logit_grads.cols() != acts.logits.cols()) {
    throw ShapeError("logit gradient shape");
  }
  require_finite(logit_grads, "classifier head gradient");
  Model grads = zeros_like(model);
  const auto& head = model.head;
  const auto& features = acts.features();

  Eigen::MatrixXd feature_grads;
  if (head.kind == HeadKind::kLinear) {
    grads.head.weights = logit_grads * features.transpose();
    grads.head.bias = logit_grads.rowwise().sum();
    feature_grads = head.weights.transpose() * logit_grads;
  } else {
    const Eigen::MatrixXd unit_proto_grads =
        head.scale * logit_grads * acts.unit_features.transpose();
    const Eigen::MatrixXd unit_feature_grads =
        head.scale * acts.unit_prototypes.transpose() * logit_grads;
    // d(v/|v|) applied to g is (g - (g.u)u)/|v|.
    const Eigen::VectorXd proto_radial =
        unit_proto_grads.cwiseProduct(acts.unit_prototypes).rowwise().sum();
    grads.head.weights = acts.prototype_norms.cwiseInverse().asDiagonal() *
                         (unit_proto_grads - proto_radial.asDiagonal() * acts.unit_prototypes);
    const Eigen::RowVectorXd feature_radial =
        unit_feature_grads.cwiseProduct(acts.unit_features).colwise().sum();
    feature_grads = (unit_feature_grads - acts.unit_features * feature_radial.asDiagonal()) *
                    acts.feature_norms.cwiseInverse().asDiagonal();
  }
  require_finite(grads.head.weights, "classifier head gradient");

  Eigen::MatrixXd upstream = std::move(feature_grads);
  for (std::size_t l = model.encoder.size(); l-- > 0;) {
    Eigen::MatrixXd pre_grads =
        upstream.cwiseProduct((acts.pre[l].array() > 0.0).cast<double>().matrix());
    if (mask != nullptr) pre_grads = pre_grads.cwiseProduct(mask->keep[l]) / mask->keep_probability;
    const Eigen::MatrixXd& layer_input = l == 0 ? acts.inputs : acts.post[l - 1];
    grads.encoder[l].weight = pre_grads * layer_input.transpose();
    grads.encoder[l].bias = pre_grads.rowwise().sum();
    require_finite(grads.encoder[l].weight, layer_name(l) + " gradient");
    if (l > 0) upstream = model.encoder[l].weight.transpose() * pre_grads;
  }
  return grads;
}

void apply_sgd(Model& model, const Model& grads, double lr) {
  if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
  if (grads.encoder.size() != model.encoder.size()) throw ShapeError("gradient layer count");
  auto step = [lr](auto& p, const auto& g, const char* what) {
    if (p.rows() != g.rows() || p.cols() != g.cols()) {
      throw ShapeError(std::string("gradient shape mismatch in ") + what);
    }
    p -= lr * g;
  };
  for (std::size_t l = 0; l < model.encoder.size(); ++l) {
    step(model.encoder[l].weight, grads.encoder[l].weight, "encoder weight");
    step(model.encoder[l].bias, grads.encoder[l].bias, "encoder bias");
  }
  step(model.head.weights, grads.head.weights, "head weights");
  step(model.head.bias, grads.head.bias, "head bias");
}

Model sgd_step(Model model, const Model& grads, double lr) {
  apply_sgd(model, grads, lr);
  return model;
}

namespace {

template <typename M, typename Fn>
void for_each_parameter_block(M& model, Fn&& fn) {
  for (auto& layer : model.encoder) {
    fn(layer.weight.data(), layer.weight.size());
    fn(layer.bias.data(), layer.bias.size());
  }
  fn(model.head.weights.data(), model.head.weights.size());
  fn(model.head.bias.data(), model.head.bias.size());
}

}  // namespace

Eigen::VectorXd flatten(const Model& model) {
  Index total = 0;
  for_each_parameter_block(model, [&](const double*, Index n) { total += n; });
  Eigen::VectorXd out(total);
  Index offset = 0;
  for_each_parameter_block(model, [&](const double* p, Index n) {
    out.segment(offset, n) = Eigen::Map<const Eigen::VectorXd>(p, n);
    offset += n;
  });
  return out;
}

void unflatten(Model& model, const Eigen::VectorXd& params) {
  Index offset = 0;
  for_each_parameter_block(model, [&](double* p, Index n) {
    if (offset + n > params.size()) throw ShapeError("flat parameter vector too short");
    Eigen::Map<Eigen::VectorXd>(p, n) = params.segment(offset, n);
    offset += n;
  });
  if (offset != params.size()) throw ShapeError("flat parameter vector too long");
}

std::uint64_t parameter_hash(const Model& model) {
  std::uint64_t h = 1469598103934665603ULL;
  const Eigen::VectorXd flat = flatten(model);
  const auto* bytes = reinterpret_cast<const unsigned char*>(flat.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(flat.size()) * sizeof(double); ++i) {
    h = (h ^ bytes[i]) * 1099511628211ULL;
  }
  return h;
}

std::vector<WeightMagnitude> weight_magnitude_report(const Model& model) {
  std::vector<WeightMagnitude> rows;
  rows.reserve(static_cast<std::size_t>(model.num_classes()));
  for (Index c = 0; c < model.num_classes(); ++c) {
    WeightMagnitude row;
    row.cls = static_cast<int>(c);
    row.norm = model.head.weights.row(c).norm();
    if (model.head.kind == HeadKind::kLinear) row.bias = model.head.bias(c);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ltcl
