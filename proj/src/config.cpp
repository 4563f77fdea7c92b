#include "ltcl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ltcl/seed.hpp"

namespace ltcl {

namespace {

constexpr std::uint64_t kStreamSeedKey = 0x73747265;  // "stre"
constexpr std::uint64_t kMcSeedKey = 0x6d63;          // "mc"

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ParameterError("invalid value '" + value + "' for " + key);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

std::string to_string(EvalMode mode) { return mode == EvalMode::kClassIL ? "class_il" : "task_il"; }

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "class_il" || name == "ClassIL") return EvalMode::kClassIL;
  if (name == "task_il" || name == "TaskIL") return EvalMode::kTaskIL;
  throw ParameterError("unknown evaluation mode '" + name + "'");
}

void ExperimentConfig::validate() const {
  stream.validate();
  loss.validate();
  if (mc.passes < 1) throw ParameterError("mc_passes must be at least 1");
  if (epochs < 1) throw ParameterError("epochs must be at least 1");
  if (batch_size < 1) throw ParameterError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ParameterError("lr must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("dropout_rate in [0,1)");
  if (eval_modes.empty()) throw ParameterError("at least one evaluation mode is required");
  if (threads < 1) throw ParameterError("threads must be at least 1");
  if (data_path.empty() && (dim < 1 || pool_per_class <= test_per_class)) {
    throw ParameterError("synthetic pool needs dim >= 1 and pool_per_class > test_per_class");
  }
}

void ExperimentConfig::reseed(std::uint64_t new_seed) {
  seed = new_seed;
  stream.seed = derive_seed(seed, {kStreamSeedKey});
  mc.seed = derive_seed(seed, {kMcSeedKey});
}

const std::vector<std::string>& required_config_keys() {
  static const std::vector<std::string> keys = {
      "n_tasks",         "classes_per_task", "base_count", "imbalance_ratio|alpha_stream",
      "ordering",        "buffer_capacity",  "buffer_policy", "candidate_order",
      "mc_passes",       "dropout_rate",     "tau1",       "tau2",
      "scale_s",         "alpha_kd",         "beta_proto", "epochs",
      "batch_size",      "lr",               "seed"};
  return keys;
}

void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (key == "n_tasks") {
    c.stream.n_tasks = parse_number<int>(key, value);
  } else if (key == "classes_per_task") {
    c.stream.classes_per_task = parse_number<int>(key, value);
  } else if (key == "base_count") {
    c.stream.base_count = parse_number<long>(key, value);
  } else if (key == "imbalance_ratio") {
    c.stream.imbalance_ratio = parse_number<double>(key, value);
    c.stream.alpha_stream.reset();
  } else if (key == "alpha_stream") {
    c.stream.alpha_stream = parse_number<double>(key, value);
    c.stream.imbalance_ratio.reset();
  } else if (key == "ordering") {
    c.stream.ordering = parse_ordering(value);
  } else if (key == "buffer_capacity") {
    c.buffer_capacity = parse_number<std::size_t>(key, value);
  } else if (key == "buffer_policy") {
    c.buffer_policy = parse_buffer_policy(value);
  } else if (key == "candidate_order") {
    c.candidate_order = parse_candidate_order(value);
  } else if (key == "mc_passes") {
    c.mc.passes = parse_number<int>(key, value);
  } else if (key == "dropout_rate") {
    c.dropout_rate = parse_number<double>(key, value);
  } else if (key == "tau1") {
    c.loss.tau1 = c.mc.tau1 = parse_number<double>(key, value);
  } else if (key == "tau2") {
    c.loss.tau2 = parse_number<double>(key, value);
  } else if (key == "scale_s") {
    c.loss.scale = parse_number<double>(key, value);
  } else if (key == "alpha_kd") {
    c.loss.alpha_kd = parse_number<double>(key, value);
  } else if (key == "beta_proto") {
    c.loss.beta_proto = parse_number<double>(key, value);
  } else if (key == "epochs") {
    c.epochs = parse_number<int>(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_number<std::size_t>(key, value);
  } else if (key == "lr") {
    c.learning_rate = parse_number<double>(key, value);
  } else if (key == "seed") {
    c.reseed(parse_number<std::uint64_t>(key, value));
  } else if (key == "head") {
    c.head = parse_head_kind(value);
  } else if (key == "hidden") {
    c.hidden.clear();
    for (const auto& h : split_list(value)) c.hidden.push_back(parse_number<Index>(key, h));
  } else if (key == "dim") {
    c.dim = parse_number<Index>(key, value);
  } else if (key == "separation") {
    c.separation = parse_number<double>(key, value);
  } else if (key == "pool_per_class") {
    c.pool_per_class = parse_number<std::size_t>(key, value);
  } else if (key == "test_per_class") {
    c.test_per_class = parse_number<std::size_t>(key, value);
  } else if (key == "data_path") {
    c.data_path = value;
  } else if (key == "eval_modes") {
    c.eval_modes.clear();
    for (const auto& m : split_list(value)) c.eval_modes.push_back(parse_eval_mode(m));
  } else if (key == "run_name") {
    c.run_name = value;
  } else if (key == "output_dir") {
    c.output_dir = value;
  } else if (key == "threads") {
    c.threads = parse_number<int>(key, value);
  } else {
    throw ParameterError("unknown key '" + key + "'");
  }
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig config;
  config.reseed(0);
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_setting(config, key, value);
    } catch (const ParameterError& e) {
      throw ParseError(e.what(), line_no);
    }
    seen.insert(key);
  }
  for (const auto& key : required_config_keys()) {
    if (key == "imbalance_ratio|alpha_stream") {
      if (seen.count("imbalance_ratio") + seen.count("alpha_stream") != 1) {
        throw ParseError("exactly one of imbalance_ratio and alpha_stream is required", line_no);
      }
    } else if (!seen.count(key)) {
      throw ParseError("missing required key '" + key + "'", line_no);
    }
  }
  try {
    config.validate();
  } catch (const ParameterError& e) {
    throw ParseError(e.what(), line_no);
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  return parse_config(in);
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> echo = {
      {"n_tasks", std::to_string(c.stream.n_tasks)},
      {"classes_per_task", std::to_string(c.stream.classes_per_task)},
      {"base_count", std::to_string(c.stream.base_count)},
  };
  if (c.stream.imbalance_ratio) echo.emplace_back("imbalance_ratio", format_double(*c.stream.imbalance_ratio));
  if (c.stream.alpha_stream) echo.emplace_back("alpha_stream", format_double(*c.stream.alpha_stream));
  std::string hidden, modes;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(c.hidden[i]);
  for (std::size_t i = 0; i < c.eval_modes.size(); ++i) modes += (i ? "," : "") + to_string(c.eval_modes[i]);
  const std::vector<std::pair<std::string, std::string>> rest = {
      {"ordering", to_string(c.stream.ordering)},
      {"buffer_capacity", std::to_string(c.buffer_capacity)},
      {"buffer_policy", to_string(c.buffer_policy)},
      {"candidate_order", to_string(c.candidate_order)},
      {"mc_passes", std::to_string(c.mc.passes)},
      {"dropout_rate", format_double(c.dropout_rate)},
      {"tau1", format_double(c.loss.tau1)},
      {"tau2", format_double(c.loss.tau2)},
      {"scale_s", format_double(c.loss.scale)},
      {"alpha_kd", format_double(c.loss.alpha_kd)},
      {"beta_proto", format_double(c.loss.beta_proto)},
      {"epochs", std::to_string(c.epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"lr", format_double(c.learning_rate)},
      {"seed", std::to_string(c.seed)},
      {"head", to_string(c.head)},
      {"hidden", hidden},
      {"eval_modes", modes},
      {"data_path", c.data_path},
      {"dim", std::to_string(c.dim)},
      {"separation", format_double(c.separation)},
      {"pool_per_class", std::to_string(c.pool_per_class)},
      {"test_per_class", std::to_string(c.test_per_class)},
      {"run_name", c.run_name},
  };
  echo.insert(echo.end(), rest.begin(), rest.end());
  return echo;
}

SweepGrid parse_grid(std::istream& in) {
  SweepGrid grid;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=v1,v2,...", line_no);
    auto values = split_list(line.substr(eq + 1));
    if (values.empty()) throw ParseError("grid key without values", line_no);
    grid.emplace_back(trim(line.substr(0, eq)), std::move(values));
  }
  if (grid.empty()) throw ParseError("empty grid", line_no);
  return grid;
}

SweepGrid load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  return parse_grid(in);
}

std::vector<std::vector<std::pair<std::string, std::string>>> expand_grid(const SweepGrid& grid) {
  std::vector<std::vector<std::pair<std::string, std::string>>> combos = {{}};
  for (const auto& [key, values] : grid) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& combo : combos) {
      for (const auto& v : values) {
        auto extended = combo;
        extended.emplace_back(key, v);
        next.push_back(std::move(extended));
      }
    }
    combos = std::move(next);
  }
  return combos;
}

}  // namespace ltcl
