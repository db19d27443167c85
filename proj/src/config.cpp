#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <fmt/ranges.h>

#include "vstream/cli.hpp"
#include "vstream/error.hpp"

namespace vstream {

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const NumericError*>(&error) != nullptr) return kExitNumeric;
  if (dynamic_cast<const DataError*>(&error) != nullptr) return kExitData;
  return kExitConfig;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("'{}': expected a boolean, got '{}'", key, value));
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("'{}': expected a number, got '{}'", key, value));
  }
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(fmt::format("'{}': expected a non-negative integer, got '{}'", key, value));
  }
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("'{}': integer '{}' out of range", key, value));
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int i = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("'{}': expected an integer, got '{}'", key, value));
  }
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(value)) out.push_back(parse_unsigned(key, item));
  if (out.empty()) throw ConfigError(fmt::format("'{}': empty list", key));
  return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split_list(value)) out.push_back(parse_double(key, item));
  return out;
}

std::uint64_t fnv1a(const std::string& text, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (const unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig kv;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", origin, line_no));
    }
    kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw ConfigError("empty config key");
  entries_[key] = value;
}

void KeyValueConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(fmt::format("override '{}' is not of the form key=value", assignment));
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void KeyValueConfig::merge(const KeyValueConfig& overrides) {
  for (const auto& [k, v] : overrides.entries_) entries_[k] = v;
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

SynthConfig synth_from_key_values(const KeyValueConfig& kv) {
  SynthConfig s;
  for (const auto& [key, value] : kv.entries()) {
    if (!key.starts_with("synth.")) continue;
    const std::string k = key.substr(6);
    if (k == "name") s.name = value;
    else if (k == "offices") s.offices = parse_unsigned(key, value);
    else if (k == "viewers_per_office") s.viewers_per_office = parse_unsigned(key, value);
    else if (k == "intra_mean") s.intra_mean = parse_double(key, value);
    else if (k == "intra_sd") s.intra_sd = parse_double(key, value);
    else if (k == "inter_mean") s.inter_mean = parse_double(key, value);
    else if (k == "inter_sd") s.inter_sd = parse_double(key, value);
    else if (k == "arrivals") s.arrivals = parse_double_list(key, value);
    else if (k == "rewire_start") s.rewire_start = parse_double(key, value);
    else if (k == "rewire_end") s.rewire_end = parse_double(key, value);
    else if (k == "rewire_schedule") s.rewire_schedule = parse_double_list(key, value);
    else if (k == "cap") s.cap = parse_int(key, value);
    else if (k == "links_per_arrival") s.links_per_arrival = parse_unsigned(key, value);
    else if (k == "intra_prob") s.intra_prob = parse_double(key, value);
    else if (k == "snapshots") s.snapshots = parse_unsigned(key, value);
    else if (k == "interval_minutes") s.interval_minutes = parse_double(key, value);
    else if (k == "seed") s.seed = parse_unsigned(key, value);
    else throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
  s.validate();
  return s;
}

RunConfig RunConfig::from_key_values(const KeyValueConfig& kv) {
  RunConfig cfg;
  bool synthetic = false;
  for (const auto& [key, value] : kv.entries()) {
    if (key.starts_with("synth.") || key.starts_with("sweep.")) continue;
    if (key == "window") cfg.model.window = parse_unsigned(key, value);
    else if (key == "dims") cfg.model.layer_dims = parse_size_list(key, value);
    else if (key == "evolve") cfg.model.evolve = parse_bool(key, value);
    else if (key == "seed") cfg.model.seed = parse_unsigned(key, value);
    else if (key == "epochs") cfg.train.max_epochs = parse_unsigned(key, value);
    else if (key == "tolerance") cfg.train.tolerance = parse_double(key, value);
    else if (key == "patience") cfg.train.patience = parse_unsigned(key, value);
    else if (key == "lr") cfg.train.learning_rate = parse_double(key, value);
    else if (key == "checkpoint_every") cfg.train.checkpoint_every = parse_unsigned(key, value);
    else if (key == "train_only_h") cfg.train.train_only_h = parse_bool(key, value);
    else if (key == "warm_start") cfg.train.warm_start = parse_bool(key, value);
    else if (key == "head") cfg.head = parse_head(value);
    else if (key == "mlp.hidden") cfg.mlp.hidden = parse_unsigned(key, value);
    else if (key == "mlp.epochs") cfg.mlp.epochs = parse_unsigned(key, value);
    else if (key == "mlp.lr") cfg.mlp.learning_rate = parse_double(key, value);
    else if (key == "truth") {
      if (value == "earliest") cfg.truth = TruthRule::Earliest;
      else if (value == "mean") cfg.truth = TruthRule::Mean;
      else throw ConfigError(fmt::format("'truth': expected earliest or mean, got '{}'", value));
    }
    else if (key == "data") cfg.data_path = value;
    else if (key == "synthetic") synthetic = parse_bool(key, value);
    else if (key == "out") cfg.out_dir = value;
    else if (key == "step") cfg.step = parse_unsigned(key, value);
    else if (key == "all_steps") cfg.all_steps = parse_bool(key, value);
    else if (key == "baseline") cfg.baseline = parse_bool(key, value);
    else if (key == "force") cfg.force = parse_bool(key, value);
    else if (key == "timing") cfg.timing = parse_bool(key, value);
    else if (key == "threads") cfg.threads = std::max<std::size_t>(1, parse_unsigned(key, value));
    else throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
  if (synthetic) cfg.synth = synth_from_key_values(kv);
  if (cfg.data_path && cfg.data_path->empty()) cfg.data_path.reset();
  cfg.mlp.seed = cfg.model.seed;
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

void RunConfig::validate() const {
  if (data_path.has_value() == synth.has_value()) {
    throw ConfigError("exactly one data source is required: set 'data' or 'synthetic = true'");
  }
  model.validate();
  train.validate();
}

std::string RunConfig::canonical() const {
  std::string out;
  out += fmt::format("window={}\n", model.window);
  out += fmt::format("dims={}\n", fmt::join(model.layer_dims, ","));
  out += fmt::format("evolve={}\n", model.evolve);
  out += fmt::format("seed={}\n", model.seed);
  out += fmt::format("epochs={}\n", train.max_epochs);
  out += fmt::format("tolerance={:.17g}\n", train.tolerance);
  out += fmt::format("patience={}\n", train.patience);
  out += fmt::format("lr={:.17g}\n", train.learning_rate);
  out += fmt::format("train_only_h={}\n", train.train_only_h);
  out += fmt::format("warm_start={}\n", train.warm_start);
  return out;
}

SweepSpec SweepSpec::from_key_values(const KeyValueConfig& kv) {
  SweepSpec spec;
  for (const auto& [key, value] : kv.entries()) {
    if (!key.starts_with("sweep.")) continue;
    if (key == "sweep.windows") spec.windows = parse_size_list(key, value);
    else if (key == "sweep.dims") spec.dims = parse_size_list(key, value);
    else if (key == "sweep.reps") spec.repetitions = parse_unsigned(key, value);
    else throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
  spec.validate();
  return spec;
}

void SweepSpec::validate() const {
  if (windows.empty() || dims.empty()) throw ConfigError("sweep grid is empty");
  if (repetitions < 1) throw ConfigError("sweep needs at least one repetition");
  for (const auto w : windows) {
    if (w < 1) throw ConfigError("sweep windows must be >= 1");
  }
  for (const auto d : dims) {
    if (d < 1) throw ConfigError("sweep dimensions must be >= 1");
  }
}

DynamicGraph load_run_data(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.data_path) return load_event(*cfg.data_path);
  return generate_event(*cfg.synth);
}

std::string config_fingerprint(const RunConfig& cfg, const DynamicGraph& dyn) {
  std::uint64_t hash = fnv1a(cfg.canonical());
  hash = fnv1a(fmt::format("nodes={}\n", dyn.node_universe()), hash);
  for (const auto& s : dyn.snapshots()) {
    std::string block = fmt::format("snapshot={}\n", s.step());
    for (const auto& e : s.edges()) block += fmt::format("{} {} {:.17g}\n", e.u, e.v, e.weight);
    for (const NodeId v : s.isolated_active()) block += fmt::format("isolated {}\n", v);
    hash = fnv1a(block, hash);
  }
  return fmt::format("{:016x}", hash);
}

std::size_t default_eval_step(const DynamicGraph& dyn) {
  if (dyn.size() < 2) {
    throw EmptyTestSetError("an event needs at least two snapshots for evaluation");
  }
  for (std::size_t k = dyn.size() - 1; k-- > 0;) {
    try {
      build_test_set(dyn, k);
      return k;
    } catch (const EmptyTestSetError&) {
    }
  }
  throw EmptyTestSetError("no step has unobserved future edges");
}

std::uint64_t run_step_seed(const RunConfig& cfg, std::size_t k) {
  return step_seed(cfg.model.seed, k);
}

std::string checkpoint_file_name(std::size_t k) { return fmt::format("checkpoint_step{}.json", k); }

}  // namespace vstream
