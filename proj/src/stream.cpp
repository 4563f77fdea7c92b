#include "ltcl/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "ltcl/seed.hpp"

namespace ltcl {

namespace {

constexpr std::uint64_t kPermutationKey = 0x7065726d;  // "perm"
constexpr std::uint64_t kCenterKey = 0x63656e74;       // "cent"
constexpr std::uint64_t kTaskOrderKey = 0x7461736b;    // "task"

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                        : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace

std::string to_string(Ordering ordering) {
  return ordering == Ordering::kOrdered ? "ordered" : "shuffled";
}

Ordering parse_ordering(const std::string& name) {
  if (name == "ordered") return Ordering::kOrdered;
  if (name == "shuffled") return Ordering::kShuffled;
  throw ParameterError("unknown ordering '" + name + "'");
}

void StreamConfig::validate() const {
  if (n_tasks < 1) throw ParameterError("n_tasks must be at least 1");
  if (classes_per_task < 1) throw ParameterError("classes_per_task must be at least 1");
  if (base_count < n_tasks) throw ParameterError("base_count must be at least n_tasks");
  if (alpha_stream.has_value() == imbalance_ratio.has_value()) {
    throw ParameterError("exactly one of alpha_stream and imbalance_ratio is required");
  }
  const double value = alpha_stream ? *alpha_stream : *imbalance_ratio;
  if (!(value > 0.0 && value <= 1.0)) {
    throw ParameterError("alpha_stream / imbalance_ratio must lie in (0, 1]");
  }
}

double StreamConfig::alpha() const {
  validate();
  if (alpha_stream) return *alpha_stream;
  if (n_tasks == 1) throw ParameterError("imbalance ratio needs at least two tasks");
  return std::pow(*imbalance_ratio, 1.0 / static_cast<double>(n_tasks - 1));
}

bool TaskDataset::contains_class(int label) const {
  return std::find(class_set.begin(), class_set.end(), label) != class_set.end();
}

std::size_t SamplePool::size() const {
  std::size_t n = 0;
  for (const auto& c : per_class) n += c.size();
  return n;
}

const std::vector<Eigen::VectorXd>& SamplePool::samples_of(int label) const {
  const auto it = std::lower_bound(labels.begin(), labels.end(), label);
  if (it == labels.end() || *it != label) {
    throw ParameterError("label " + std::to_string(label) + " not in pool");
  }
  return per_class[static_cast<std::size_t>(it - labels.begin())];
}

std::vector<std::size_t> longtail_sizes(const StreamConfig& config) {
  const double alpha = config.alpha();
  std::vector<std::size_t> sizes;
  for (int t = 0; t < config.n_tasks; ++t) {
    // The IR route evaluates IR^(t/(n-1)) directly so that exact powers such
    // as 0.01^(1/2) land on their integers.
    const double decay = config.imbalance_ratio
                             ? std::pow(*config.imbalance_ratio,
                                        static_cast<double>(t) / (config.n_tasks - 1))
                             : std::pow(alpha, t);
    const double raw = static_cast<double>(config.base_count) * decay;
    const auto floored = static_cast<std::size_t>(std::floor(raw * (1.0 + 1e-12)));
    sizes.push_back(std::max<std::size_t>(1, floored));
  }
  return sizes;
}

namespace {

std::vector<int> stream_labels(const SamplePool& pool, const StreamConfig& config) {
  config.validate();
  const std::size_t needed =
      static_cast<std::size_t>(config.n_tasks) * static_cast<std::size_t>(config.classes_per_task);
  if (pool.labels.size() < needed) {
    throw CapacityError("pool has " + std::to_string(pool.labels.size()) + " classes but " +
                        std::to_string(needed) + " are required");
  }
  return {pool.labels.begin(), pool.labels.begin() + static_cast<std::ptrdiff_t>(needed)};
}

}  // namespace

std::vector<std::vector<int>> assign_task_classes(const SamplePool& pool,
                                                  const StreamConfig& config) {
  std::vector<int> order = stream_labels(pool, config);
  if (config.ordering == Ordering::kShuffled) {
    Rng rng = make_rng(config.seed, {kPermutationKey});
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<int>> classes(static_cast<std::size_t>(config.n_tasks));
  for (std::size_t t = 0; t < classes.size(); ++t) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(t * config.classes_per_task);
    classes[t].assign(first, first + config.classes_per_task);
    std::sort(classes[t].begin(), classes[t].end());
  }
  return classes;
}

std::map<int, std::size_t> class_quotas(const SamplePool& pool, const StreamConfig& config) {
  const auto sizes = longtail_sizes(config);
  const std::vector<int> labels = stream_labels(pool, config);
  const auto k = static_cast<std::size_t>(config.classes_per_task);
  std::map<int, std::size_t> quotas;
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    for (std::size_t c = 0; c < k; ++c) {
      quotas[labels[t * k + c]] = sizes[t] / k + (c < sizes[t] % k ? 1 : 0);
    }
  }
  return quotas;
}

std::vector<TaskDataset> build_stream(const SamplePool& pool, const StreamConfig& config) {
  const auto quotas = class_quotas(pool, config);
  const auto classes = assign_task_classes(pool, config);
  std::vector<TaskDataset> stream;
  for (std::size_t t = 0; t < classes.size(); ++t) {
    TaskDataset task;
    task.task_id = static_cast<int>(t);
    task.class_set = classes[t];
    for (int label : task.class_set) {
      const std::size_t quota = quotas.at(label);
      const auto& source = pool.samples_of(label);
      if (source.size() < quota) {
        throw CapacityError("class " + std::to_string(label) + " has " +
                            std::to_string(source.size()) + " samples but task " +
                            std::to_string(t) + " needs " + std::to_string(quota));
      }
      std::vector<std::size_t> idx(source.size());
      std::iota(idx.begin(), idx.end(), 0);
      Rng rng = make_rng(config.seed, {static_cast<std::uint64_t>(label)});
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t i = 0; i < quota; ++i) task.samples.push_back({source[idx[i]], label});
    }
    Rng rng = make_rng(config.seed, {kTaskOrderKey, t});
    std::shuffle(task.samples.begin(), task.samples.end(), rng);
    stream.push_back(std::move(task));
  }
  return stream;
}

std::vector<TaskDataset> build_test_stream(const SamplePool& test_pool,
                                           const std::vector<TaskDataset>& stream) {
  std::vector<TaskDataset> tests;
  for (const auto& task : stream) {
    TaskDataset test;
    test.task_id = task.task_id;
    test.class_set = task.class_set;
    for (int label : task.class_set) {
      for (const auto& x : test_pool.samples_of(label)) test.samples.push_back({x, label});
    }
    tests.push_back(std::move(test));
  }
  return tests;
}

std::pair<SamplePool, SamplePool> split_holdout(const SamplePool& pool, std::size_t per_class,
                                                std::uint64_t seed) {
  SamplePool train, test;
  train.dim = test.dim = pool.dim;
  train.labels = test.labels = pool.labels;
  for (std::size_t k = 0; k < pool.per_class.size(); ++k) {
    const auto& source = pool.per_class[k];
    if (source.size() <= per_class) {
      throw CapacityError("class " + std::to_string(pool.labels[k]) +
                          " is too small for the requested hold-out");
    }
    std::vector<std::size_t> idx(source.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(pool.labels[k])});
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<Eigen::VectorXd> tr, te;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < per_class ? te : tr).push_back(source[idx[i]]);
    }
    train.per_class.push_back(std::move(tr));
    test.per_class.push_back(std::move(te));
  }
  return {std::move(train), std::move(test)};
}

SamplePool synth_gaussians(int n_classes, Eigen::Index dim, double separation,
                           std::size_t pool_per_class, std::uint64_t seed) {
  if (dim < 1) throw ParameterError("dimension must be at least 1");
  if (n_classes < 2) throw ParameterError("need at least two classes");
  if (pool_per_class < 1) throw ParameterError("pool_per_class must be at least 1");
  SamplePool pool;
  pool.dim = dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int c = 0; c < n_classes; ++c) {
    Rng center_rng = make_rng(seed, {kCenterKey, static_cast<std::uint64_t>(c)});
    Eigen::VectorXd direction = Eigen::VectorXd::NullaryExpr(dim, [&] { return normal(center_rng); });
    const double norm = direction.norm();
    const Eigen::VectorXd center =
        norm > 0.0 ? Eigen::VectorXd(separation * direction / norm) : Eigen::VectorXd::Zero(dim);
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(c)});
    std::vector<Eigen::VectorXd> samples;
    samples.reserve(pool_per_class);
    for (std::size_t i = 0; i < pool_per_class; ++i) {
      samples.push_back(center + Eigen::VectorXd::NullaryExpr(dim, [&] { return normal(rng); }));
    }
    pool.labels.push_back(c);
    pool.per_class.push_back(std::move(samples));
  }
  return pool;
}

SamplePool parse_pool(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty file", line_no);
  line = trim_cr(line);
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "label") throw ParseError("unknown header", line_no);
  for (std::size_t j = 1; j < header.size(); ++j) {
    if (header[j] != "f" + std::to_string(j - 1)) throw ParseError("unknown header", line_no);
  }
  const auto dim = static_cast<Eigen::Index>(header.size() - 1);

  std::map<int, std::vector<Eigen::VectorXd>> grouped;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(line);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    int label = -1;
    const auto lf = fields[0];
    auto [lp, lec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (lec != std::errc() || lp != lf.data() + lf.size() || label < 0) {
      throw ParseError("label is not a non-negative integer", line_no);
    }
    Eigen::VectorXd x(dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const auto f = fields[static_cast<std::size_t>(j + 1)];
      double value = 0.0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
      if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(value)) {
        throw ParseError("feature f" + std::to_string(j) + " is not a decimal number", line_no);
      }
      x(j) = value;
    }
    grouped[label].push_back(std::move(x));
  }
  if (grouped.empty()) throw ParseError("no samples", line_no);

  SamplePool pool;
  pool.dim = dim;
  for (auto& [label, samples] : grouped) {
    pool.labels.push_back(label);
    pool.per_class.push_back(std::move(samples));
  }
  return pool;
}

SamplePool load_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  return parse_pool(in);
}

void write_pool(const SamplePool& pool, std::ostream& out) {
  out << "label";
  for (Eigen::Index j = 0; j < pool.dim; ++j) out << ",f" << j;
  out << '\n';
  char buf[64];
  for (std::size_t k = 0; k < pool.labels.size(); ++k) {
    for (const auto& x : pool.per_class[k]) {
      out << pool.labels[k];
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x(j));
        out << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf));
      }
      out << '\n';
    }
  }
}

Eigen::MatrixXd stack_inputs(const std::vector<Sample>& samples) {
  if (samples.empty()) return {};
  Eigen::MatrixXd inputs(samples.front().x.size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != inputs.rows()) throw ShapeError("ragged sample dimensions");
    inputs.col(static_cast<Eigen::Index>(i)) = samples[i].x;
  }
  return inputs;
}

}  // namespace ltcl
