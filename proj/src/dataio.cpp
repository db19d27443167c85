#include "vstream/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/core.h>
#include <json.hpp>
#include <zlib.h>

#include "vstream/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vstream {

namespace {

struct RawEdge {
  std::int64_t u;
  std::int64_t v;
  double weight;
  std::size_t line;
};

struct RawSnapshot {
  std::string path;
  std::vector<RawEdge> edges;
  std::vector<std::int64_t> isolated;
};

std::string read_text(const fs::path& path) {
  const std::string name = path.string();
  if (path.extension() == ".gz") {
    gzFile file = gzopen(name.c_str(), "rb");
    if (file == nullptr) throw IoError(fmt::format("cannot open '{}'", name));
    std::string text;
    char buffer[1 << 16];
    int got = 0;
    while ((got = gzread(file, buffer, sizeof(buffer))) > 0) text.append(buffer, got);
    int err = Z_OK;
    const char* message = gzerror(file, &err);
    gzclose(file);
    if (got < 0 || (err != Z_OK && err != Z_STREAM_END)) {
      throw IoError(fmt::format("'{}': gzip read failed: {}", name, message));
    }
    return text;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", name));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == ',' ||
                               line[i] == '\r')) {
      ++i;
    }
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != ',' &&
           line[i] != '\r') {
      ++i;
    }
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

RawSnapshot parse_edge_file(const fs::path& path, bool allow_header) {
  RawSnapshot snap;
  snap.path = path.string();
  const std::string text = read_text(path);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool first_content = true;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto fields = split_fields(line);
    if (fields.empty()) {
      if (end == text.size()) break;
      continue;
    }
    RawEdge e{0, 0, 0.0, line_no};
    const bool ok = fields.size() == 3 && parse_number(fields[0], e.u) &&
                    parse_number(fields[1], e.v) && parse_number(fields[2], e.weight);
    if (!ok) {
      // A header line has no numeric field at all.
      const bool header = std::none_of(fields.begin(), fields.end(), [](std::string_view f) {
        double x;
        return parse_number(f, x);
      });
      if (allow_header && first_content && header) {
        first_content = false;
        continue;
      }
      throw ParseError(fmt::format("{}:{}: expected 'u<TAB>v<TAB>weight', got '{}'", snap.path,
                                   line_no, std::string(line)));
    }
    first_content = false;
    if (e.u < 0 || e.v < 0) {
      throw ParseError(fmt::format("{}:{}: node ids must be non-negative", snap.path, line_no));
    }
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw DataError(fmt::format("{}:{}: edge ({}, {}) has non-positive weight {}", snap.path,
                                  line_no, e.u, e.v, e.weight));
    }
    if (e.u == e.v) {
      throw DataError(fmt::format("{}:{}: self-loop at node {}", snap.path, line_no, e.u));
    }
    snap.edges.push_back(e);
    if (end == text.size()) break;
  }
  return snap;
}

DynamicGraph assemble(std::vector<RawSnapshot> raw, const EventManifest& manifest) {
  std::vector<std::int64_t> external = manifest.external_ids;
  std::unordered_map<std::int64_t, NodeId> remap;
  std::size_t universe = 0;
  if (!external.empty()) {
    for (std::size_t i = 0; i < external.size(); ++i) {
      if (!remap.emplace(external[i], static_cast<NodeId>(i)).second) {
        throw DataError(fmt::format("duplicate external id {} in manifest", external[i]));
      }
    }
    universe = external.size();
  } else {
    std::vector<std::int64_t> ids;
    std::int64_t max_id = -1;
    for (const auto& s : raw) {
      for (const auto& e : s.edges) {
        ids.push_back(e.u);
        ids.push_back(e.v);
      }
      ids.insert(ids.end(), s.isolated.begin(), s.isolated.end());
    }
    for (const auto id : ids) max_id = std::max(max_id, id);
    if (max_id < static_cast<std::int64_t>(manifest.node_count)) {
      universe = manifest.node_count > 0 ? manifest.node_count : static_cast<std::size_t>(max_id + 1);
      for (const auto id : ids) remap.emplace(id, static_cast<NodeId>(id));
    } else {
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      // Ids 0..n-1 map onto themselves; anything else needs an explicit table.
      const bool dense = ids.empty() || ids.back() + 1 == static_cast<std::int64_t>(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) remap.emplace(ids[i], static_cast<NodeId>(i));
      universe = ids.size();
      if (!dense) external = ids;
    }
  }
  if (universe > 0xffffffffULL) throw DataError("node universe exceeds 32-bit ids");

  auto lookup = [&](std::int64_t id, const std::string& where) {
    const auto it = remap.find(id);
    if (it == remap.end()) throw DataError(fmt::format("{}: node id {} not in registry", where, id));
    return it->second;
  };

  std::vector<GraphSnapshot> snapshots;
  snapshots.reserve(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    std::vector<Edge> edges;
    edges.reserve(raw[k].edges.size());
    for (const auto& e : raw[k].edges) {
      const std::string where = fmt::format("{}:{}", raw[k].path, e.line);
      edges.push_back({lookup(e.u, where), lookup(e.v, where), e.weight});
    }
    std::vector<NodeId> isolated;
    for (const auto id : raw[k].isolated) isolated.push_back(lookup(id, raw[k].path));
    try {
      snapshots.emplace_back(k, universe, std::move(edges), std::move(isolated));
    } catch (const DataError& err) {
      throw DataError(fmt::format("{}: {}", raw[k].path, err.what()));
    }
  }
  return DynamicGraph(std::move(snapshots), universe,
                      EventMetadata{manifest.name, manifest.interval_minutes}, std::move(external));
}

bool is_edge_file(const fs::path& p) {
  fs::path base = p;
  if (base.extension() == ".gz") base = base.stem();
  const auto ext = base.extension();
  return ext == ".tsv" || ext == ".txt" || ext == ".csv" || ext == ".edges";
}

}  // namespace

EventManifest read_manifest(const std::string& path) {
  const std::string text = read_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path, e.what()));
  }
  try {
    if (doc.value("format", std::string(kManifestFormat)) != kManifestFormat) {
      throw DataError(fmt::format("{}: unsupported manifest format '{}'", path,
                                  doc.at("format").get<std::string>()));
    }
    EventManifest m;
    m.name = doc.value("name", std::string("event"));
    m.interval_minutes = doc.value("interval_minutes", 5.0);
    m.node_count = doc.value("node_count", std::size_t{0});
    m.external_ids = doc.value("external_ids", std::vector<std::int64_t>{});
    for (const auto& s : doc.at("snapshots")) {
      SnapshotEntry entry;
      if (s.is_string()) {
        entry.file = s.get<std::string>();
      } else {
        entry.file = s.at("file").get<std::string>();
        entry.isolated = s.value("isolated", std::vector<std::int64_t>{});
      }
      m.snapshots.push_back(std::move(entry));
    }
    if (doc.contains("snapshot_count") &&
        doc.at("snapshot_count").get<std::size_t>() != m.snapshots.size()) {
      throw DataError(fmt::format("{}: snapshot_count {} but {} snapshot files listed", path,
                                  doc.at("snapshot_count").get<std::size_t>(), m.snapshots.size()));
    }
    if (m.snapshots.empty()) throw DataError(fmt::format("{}: manifest lists no snapshots", path));
    return m;
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path, e.what()));
  }
}

DynamicGraph load_event(const std::string& path) {
  fs::path manifest_path = path;
  if (fs::is_directory(manifest_path)) {
    if (fs::exists(manifest_path / kManifestName)) {
      manifest_path /= kManifestName;
    } else {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(manifest_path)) {
        if (entry.is_regular_file() && is_edge_file(entry.path())) files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw DataError(fmt::format("{}: no edge-list files found", path));
      EventManifest m;
      m.name = manifest_path.filename().string();
      std::vector<RawSnapshot> raw;
      for (const auto& f : files) raw.push_back(parse_edge_file(f, true));
      return assemble(std::move(raw), m);
    }
  }
  if (!fs::exists(manifest_path)) throw IoError(fmt::format("'{}' does not exist", path));
  const EventManifest m = read_manifest(manifest_path.string());
  const fs::path base = manifest_path.parent_path();
  std::vector<RawSnapshot> raw;
  raw.reserve(m.snapshots.size());
  for (const auto& s : m.snapshots) {
    const fs::path file = fs::path(s.file).is_absolute() ? fs::path(s.file) : base / s.file;
    if (!fs::exists(file)) throw IoError(fmt::format("snapshot file '{}' does not exist", file.string()));
    RawSnapshot snap = parse_edge_file(file, false);
    snap.isolated = s.isolated;
    raw.push_back(std::move(snap));
  }
  return assemble(std::move(raw), m);
}

std::string save_event(const DynamicGraph& dyn, const std::string& dir, bool force) {
  const fs::path root = dir;
  const fs::path manifest_path = root / kManifestName;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir, ec.message()));
  if (fs::exists(manifest_path) && !force) {
    throw IoError(fmt::format("'{}' already exists (use --force to overwrite)", manifest_path.string()));
  }

  const auto& external = dyn.external_ids();
  auto id_of = [&](NodeId v) -> std::int64_t { return external.empty() ? v : external[v]; };

  json snapshots = json::array();
  for (const auto& s : dyn.snapshots()) {
    const std::string name = fmt::format("snapshot_{:03}.tsv", s.step());
    const fs::path file = root / name;
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", file.string()));
    for (const auto& e : s.edges()) {
      out << fmt::format("{}\t{}\t{:.9g}\n", id_of(e.u), id_of(e.v), e.weight);
    }
    if (!out) throw IoError(fmt::format("failed writing '{}'", file.string()));
    std::vector<std::int64_t> isolated;
    for (const NodeId v : s.isolated_active()) isolated.push_back(id_of(v));
    snapshots.push_back({{"file", name}, {"isolated", isolated}});
  }

  json doc = {
      {"format", kManifestFormat},
      {"name", dyn.metadata().name},
      {"snapshot_count", dyn.size()},
      {"interval_minutes", dyn.metadata().interval_minutes},
      {"node_count", dyn.node_universe()},
      {"snapshots", snapshots},
  };
  if (!external.empty()) doc["external_ids"] = external;
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", manifest_path.string()));
  out << doc.dump(2) << '\n';
  if (!out) throw IoError(fmt::format("failed writing '{}'", manifest_path.string()));
  return manifest_path.string();
}

void SynthConfig::validate() const {
  if (offices < 1 || viewers_per_office < 1) throw ConfigError("synthetic event needs viewers");
  if (snapshots < 1) throw ConfigError("synthetic event needs at least one snapshot");
  if (!(intra_mean > 0.0) || !(inter_mean > 0.0)) {
    throw ConfigError("connection weight means must be positive");
  }
  if (intra_sd < 0.0 || inter_sd < 0.0) throw ConfigError("weight deviations must be >= 0");
  double total = 0.0;
  for (const double a : arrivals) {
    if (a < 0.0) throw ConfigError("arrival fractions must be >= 0");
    total += a;
  }
  if (total > 1.0 + 1e-9) throw ConfigError(fmt::format("arrival fractions sum to {} > 1", total));
  auto check_rate = [](double r) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError(fmt::format("rewiring rate {} outside [0, 1]", r));
  };
  check_rate(rewire_start);
  check_rate(rewire_end);
  for (const double r : rewire_schedule) check_rate(r);
  if (!(intra_prob >= 0.0 && intra_prob <= 1.0)) throw ConfigError("intra_prob outside [0, 1]");
  if (cap < 0) throw ConfigError(fmt::format("connection cap {} is infeasible", cap));
  if (!(interval_minutes > 0.0)) throw ConfigError("interval_minutes must be positive");
}

double SynthConfig::rewire_rate(std::size_t k) const {
  if (k == 0) return 0.0;
  if (!rewire_schedule.empty()) {
    return rewire_schedule[std::min(k - 1, rewire_schedule.size() - 1)];
  }
  if (snapshots <= 2) return rewire_start;
  const double t = static_cast<double>(k - 1) / static_cast<double>(snapshots - 2);
  return rewire_start + (rewire_end - rewire_start) * t;
}

namespace {

class EventBuilder {
 public:
  explicit EventBuilder(const SynthConfig& cfg)
      : cfg_(cfg),
        rng_(cfg.seed),
        degree_(cfg.node_count(), 0),
        active_(cfg.node_count(), false),
        office_members_(cfg.offices) {}

  void arrive(NodeId v) {
    active_[v] = true;
    office_members_[cfg_.office_of(v)].push_back(v);
    all_members_.push_back(v);
  }

  bool has_room(NodeId v) const {
    return cfg_.cap == 0 || degree_[v] < static_cast<std::size_t>(cfg_.cap);
  }

  // Picks a partner for v, preferring its own office; pairs in `avoid` are
  // skipped. Returns false when no eligible partner turns up.
  bool connect(NodeId v, const std::unordered_set<std::uint64_t>& avoid) {
    if (!has_room(v)) return false;
    std::bernoulli_distribution same_office(cfg_.intra_prob);
    const bool intra = same_office(rng_);
    for (int pass = 0; pass < 2; ++pass) {
      const bool want_intra = pass == 0 ? intra : !intra;
      const auto& pool = want_intra ? office_members_[cfg_.office_of(v)] : all_members_;
      if (pool.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (int attempt = 0; attempt < 64; ++attempt) {
        const NodeId u = pool[pick(rng_)];
        if (u == v || !has_room(u)) continue;
        if (!want_intra && cfg_.office_of(u) == cfg_.office_of(v)) continue;
        const std::uint64_t key = pair_key(u, v);
        if (edges_.count(key) != 0 || avoid.count(key) != 0) continue;
        edges_.emplace(key, draw_weight(cfg_.office_of(u) == cfg_.office_of(v)));
        ++degree_[u];
        ++degree_[v];
        return true;
      }
    }
    return false;
  }

  void remove(std::uint64_t key) {
    edges_.erase(key);
    --degree_[key >> 32];
    --degree_[key & 0xffffffffULL];
  }

  // Uniform choice over active nodes that still have spare capacity.
  bool random_open_node(NodeId& out) {
    if (all_members_.empty()) return false;
    std::uniform_int_distribution<std::size_t> pick(0, all_members_.size() - 1);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const NodeId v = all_members_[pick(rng_)];
      if (has_room(v)) {
        out = v;
        return true;
      }
    }
    return false;
  }

  GraphSnapshot snapshot(std::size_t step) const {
    std::vector<Edge> edges;
    edges.reserve(edges_.size());
    for (const auto& [key, w] : edges_) {
      edges.push_back({static_cast<NodeId>(key >> 32), static_cast<NodeId>(key & 0xffffffffULL), w});
    }
    std::vector<NodeId> active;
    for (std::size_t v = 0; v < active_.size(); ++v) {
      if (active_[v] && degree_[v] == 0) active.push_back(static_cast<NodeId>(v));
    }
    return GraphSnapshot(step, cfg_.node_count(), std::move(edges), std::move(active));
  }

  std::unordered_set<std::uint64_t> edge_keys() const {
    std::unordered_set<std::uint64_t> keys;
    keys.reserve(edges_.size());
    for (const auto& [key, w] : edges_) keys.insert(key);
    return keys;
  }

  std::vector<std::uint64_t> edge_list() const {
    std::vector<std::uint64_t> keys;
    keys.reserve(edges_.size());
    for (const auto& [key, w] : edges_) keys.push_back(key);
    return keys;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  double draw_weight(bool intra) {
    const double mean = intra ? cfg_.intra_mean : cfg_.inter_mean;
    const double sd = intra ? cfg_.intra_sd : cfg_.inter_sd;
    double w = mean;
    if (sd > 0.0) {
      std::normal_distribution<double> dist(mean, sd);
      do {
        w = dist(rng_);
      } while (!(w > 0.0));
    }
    // Millisecond-of-a-megabit resolution keeps weights exact through the text format.
    return std::max(std::round(w * 1000.0) / 1000.0, 0.001);
  }

  const SynthConfig& cfg_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> degree_;
  std::vector<bool> active_;
  std::vector<std::vector<NodeId>> office_members_;
  std::vector<NodeId> all_members_;
  std::map<std::uint64_t, double> edges_;
};

}  // namespace

DynamicGraph generate_event(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.node_count();
  EventBuilder builder(cfg);

  std::vector<NodeId> order(n);
  for (std::size_t v = 0; v < n; ++v) order[v] = static_cast<NodeId>(v);
  std::shuffle(order.begin(), order.end(), builder.rng());

  std::vector<std::size_t> arrive_by(cfg.snapshots, 0);
  double cumulative = 0.0;
  for (std::size_t k = 0; k < cfg.snapshots; ++k) {
    if (k < cfg.arrivals.size()) cumulative += cfg.arrivals[k];
    arrive_by[k] = std::min(n, static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(n))));
  }

  std::vector<GraphSnapshot> snapshots;
  std::size_t arrived = 0;
  const std::unordered_set<std::uint64_t> nothing;
  for (std::size_t k = 0; k < cfg.snapshots; ++k) {
    if (k > 0) {
      const auto previous = builder.edge_keys();
      auto keys = builder.edge_list();
      std::shuffle(keys.begin(), keys.end(), builder.rng());
      const auto rewired = static_cast<std::size_t>(
          std::llround(cfg.rewire_rate(k) * static_cast<double>(keys.size())));
      for (std::size_t i = 0; i < rewired; ++i) builder.remove(keys[i]);
      for (std::size_t i = 0; i < rewired; ++i) {
        NodeId v;
        if (!builder.random_open_node(v)) break;
        for (int attempt = 0; attempt < 8 && !builder.connect(v, previous); ++attempt) {
          if (!builder.random_open_node(v)) break;
        }
      }
    }
    for (; arrived < arrive_by[k]; ++arrived) {
      const NodeId v = order[arrived];
      builder.arrive(v);
      for (std::size_t l = 0; l < cfg.links_per_arrival; ++l) builder.connect(v, nothing);
    }
    snapshots.push_back(builder.snapshot(k));
  }
  return DynamicGraph(std::move(snapshots), n, EventMetadata{cfg.name, cfg.interval_minutes});
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::nan("");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

EventStats event_stats(const DynamicGraph& dyn) {
  EventStats stats;
  for (std::size_t k = 0; k < dyn.size(); ++k) {
    const GraphSnapshot& s = dyn[k];
    SnapshotSummary row;
    row.step = k;
    row.nodes = s.active_nodes().size();
    row.edges = s.edges().size();
    std::vector<double> weights;
    weights.reserve(s.edges().size());
    for (const auto& e : s.edges()) weights.push_back(e.weight);
    std::sort(weights.begin(), weights.end());
    row.weight_min = quantile(weights, 0.0);
    row.weight_q25 = quantile(weights, 0.25);
    row.weight_median = quantile(weights, 0.5);
    row.weight_q75 = quantile(weights, 0.75);
    row.weight_max = quantile(weights, 1.0);
    for (const NodeId v : s.active_nodes()) {
      const std::size_t degree = s.adjacency().row_cols(v).size();
      row.max_degree = std::max(row.max_degree, degree);
      ++stats.degree_histogram[degree];
    }
    row.mean_degree = row.nodes == 0 ? 0.0 : 2.0 * static_cast<double>(row.edges) /
                                                 static_cast<double>(row.nodes);
    row.edge_evolution = std::nan("");
    row.node_evolution = std::nan("");
    if (k > 0) {
      if (!s.edges().empty()) row.edge_evolution = edge_evolution(dyn[k - 1], s);
      if (!s.active_nodes().empty()) row.node_evolution = node_evolution(dyn[k - 1], s);
      stats.evolution.edge_evolution.push_back(row.edge_evolution);
      stats.evolution.node_evolution.push_back(row.node_evolution);
    }
    stats.snapshots.push_back(row);
  }
  return stats;
}

void write_stats_csv(const EventStats& stats, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path));
  out << "step,nodes,edges,mean_degree,max_degree,weight_min,weight_q25,weight_median,"
         "weight_q75,weight_max,edge_evolution,node_evolution\n";
  for (const auto& r : stats.snapshots) {
    out << fmt::format("{},{},{},{:.6f},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.6f},{:.6f}\n",
                       r.step, r.nodes, r.edges, r.mean_degree, r.max_degree, r.weight_min,
                       r.weight_q25, r.weight_median, r.weight_q75, r.weight_max,
                       r.edge_evolution, r.node_evolution);
  }
  if (!out) throw IoError(fmt::format("failed writing '{}'", path));
}

void write_degree_histogram_csv(const EventStats& stats, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path));
  out << "degree,count\n";
  for (const auto& [degree, count] : stats.degree_histogram) out << degree << ',' << count << '\n';
  if (!out) throw IoError(fmt::format("failed writing '{}'", path));
}

}  // namespace vstream
