#include "retrofit/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

namespace retrofit {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

int intern(EdgeList& el, const std::string& name) {
  auto [it, inserted] = el.ids.emplace(name, static_cast<int>(el.names.size()));
  if (inserted) el.names.push_back(name);
  return it->second;
}

}  // namespace

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split label '" + name + "'");
}

std::string format_split(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

std::vector<int> GraphDataset::nodes_in_split(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < node_count(); ++i)
    if (split[static_cast<size_t>(i)] == s) out.push_back(i);
  return out;
}

EdgeList load_edges(const std::string& path, LoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge file '" + path + "'");
  EdgeList el;
  std::set<std::pair<int, int>> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (toks.size() != 2)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 'child parent', got " +
                      std::to_string(toks.size()) + " fields");
    const int a = intern(el, toks[0]);
    const int b = intern(el, toks[1]);
    if (a == b) {
      if (stats) ++stats->self_loops_dropped;
      continue;
    }
    const auto e = std::minmax(a, b);
    if (!seen.insert({e.first, e.second}).second) {
      if (stats) ++stats->duplicate_edges;
      continue;
    }
    el.edges.emplace_back(e.first, e.second);
  }
  return el;
}

std::unordered_map<std::string, Vec> load_embeddings(const std::string& path,
                                                     int expected_dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file '" + path + "'");
  std::unordered_map<std::string, Vec> table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string token;
    if (!(is >> token)) continue;
    Vec v(expected_dim);
    int got = 0;
    double x;
    while (is >> x) {
      if (got < expected_dim) v[got] = x;
      ++got;
    }
    if (got != expected_dim)
      throw DataError(path + ":" + std::to_string(lineno) + ": token '" +
                      token + "' has " + std::to_string(got) +
                      " values, expected " + std::to_string(expected_dim));
    table[token] = std::move(v);
  }
  return table;
}

GraphDataset assemble_dataset(const EdgeList& edge_list,
                              const std::unordered_map<std::string, Vec>& table,
                              LoadStats* stats) {
  GraphDataset ds;
  std::vector<int> remap(edge_list.names.size(), -1);
  int dim = -1;
  for (size_t i = 0; i < edge_list.names.size(); ++i) {
    const auto it = table.find(edge_list.names[i]);
    if (it == table.end()) {
      if (stats) ++stats->nodes_without_embedding;
      continue;
    }
    if (dim < 0) dim = static_cast<int>(it->second.size());
    remap[i] = static_cast<int>(ds.names.size());
    ds.names.push_back(edge_list.names[i]);
    ds.ids.emplace(edge_list.names[i], remap[i]);
  }
  if (ds.names.empty())
    throw DataError("no dataset node has an embedding");
  ds.embeddings.resize(dim, static_cast<int>(ds.names.size()));
  for (size_t i = 0; i < edge_list.names.size(); ++i)
    if (remap[i] >= 0) ds.embeddings.col(remap[i]) = table.at(edge_list.names[i]);
  for (const auto& [a, b] : edge_list.edges) {
    if (remap[static_cast<size_t>(a)] < 0 || remap[static_cast<size_t>(b)] < 0) {
      if (stats) ++stats->edges_dropped_with_nodes;
      continue;
    }
    const auto e = std::minmax(remap[static_cast<size_t>(a)],
                               remap[static_cast<size_t>(b)]);
    ds.edges.emplace_back(e.first, e.second);
  }
  std::sort(ds.edges.begin(), ds.edges.end());
  ds.split.assign(ds.names.size(), Split::kTrain);
  ds.adjacency.assign(ds.names.size(), {});
  for (const auto& [a, b] : ds.edges) {
    ds.adjacency[static_cast<size_t>(a)].push_back(b);
    ds.adjacency[static_cast<size_t>(b)].push_back(a);
  }
  for (auto& adj : ds.adjacency) std::sort(adj.begin(), adj.end());
  finalize_split(ds);
  return ds;
}

void finalize_split(GraphDataset& ds) {
  ds.train_edges.clear();
  ds.val_edges.clear();
  ds.test_edges.clear();
  ds.train_adjacency.assign(ds.names.size(), {});
  for (const auto& e : ds.edges) {
    const Split sa = ds.split[static_cast<size_t>(e.first)];
    const Split sb = ds.split[static_cast<size_t>(e.second)];
    if (sa == Split::kTest || sb == Split::kTest) {
      ds.test_edges.push_back(e);
    } else if (sa == Split::kVal || sb == Split::kVal) {
      ds.val_edges.push_back(e);
    } else {
      ds.train_edges.push_back(e);
      ds.train_adjacency[static_cast<size_t>(e.first)].push_back(e.second);
      ds.train_adjacency[static_cast<size_t>(e.second)].push_back(e.first);
    }
  }
  for (auto& adj : ds.train_adjacency) std::sort(adj.begin(), adj.end());
}

void make_splits(GraphDataset& ds, const std::array<double, 3>& ratios,
                 std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");
  for (double r : ratios)
    if (r < 0) throw ConfigError("split ratios must be nonnegative");
  const int n = ds.node_count();
  const int n_train = static_cast<int>(std::floor(ratios[0] * n));
  const int n_val = static_cast<int>(std::floor(ratios[1] * n));
  const int n_test = n - n_train - n_val;
  if (n_train <= 0 || n_val <= 0 || n_test <= 0)
    throw SplitTooSmall("graph too small for a " + std::to_string(ratios[0]) +
                        "/" + std::to_string(ratios[1]) + "/" +
                        std::to_string(ratios[2]) + " node split");
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);
  for (int i = 0; i < n; ++i) {
    const int node = order[static_cast<size_t>(i)];
    ds.split[static_cast<size_t>(node)] =
        i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal
                                                           : Split::kTest);
  }
  finalize_split(ds);
}

void apply_split_file(GraphDataset& ds, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file '" + path + "'");
  std::vector<bool> seen(ds.names.size(), false);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (toks.size() != 2)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 'node split'");
    const auto it = ds.ids.find(toks[0]);
    if (it == ds.ids.end())
      throw DataError(path + ":" + std::to_string(lineno) + ": unknown node '" +
                      toks[0] + "'");
    ds.split[static_cast<size_t>(it->second)] = parse_split(toks[1]);
    seen[static_cast<size_t>(it->second)] = true;
  }
  for (size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      throw DataError("split file '" + path + "' is missing node '" +
                      ds.names[i] + "'");
  finalize_split(ds);
}

void write_split_file(const GraphDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split file '" + path + "'");
  for (int i = 0; i < ds.node_count(); ++i)
    out << ds.names[static_cast<size_t>(i)] << '\t'
        << format_split(ds.split[static_cast<size_t>(i)]) << '\n';
}

void write_edges_file(const GraphDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write edge file '" + path + "'");
  for (const auto& [a, b] : ds.edges)
    out << ds.names[static_cast<size_t>(a)] << '\t'
        << ds.names[static_cast<size_t>(b)] << '\n';
}

void write_embeddings_file(const GraphDataset& ds, const std::string& path,
                           const std::string& header) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embedding file '" + path + "'");
  if (!header.empty()) out << "# " << header << '\n';
  out.precision(17);
  for (int i = 0; i < ds.node_count(); ++i) {
    out << ds.names[static_cast<size_t>(i)];
    for (int k = 0; k < ds.embedding_dim(); ++k) out << ' ' << ds.embeddings(k, i);
    out << '\n';
  }
}

std::optional<int> bfs_distance(const GraphDataset& ds, int u, int v) {
  if (u == v) return 0;
  std::vector<int> dist(static_cast<size_t>(ds.node_count()), -1);
  std::deque<int> queue;
  dist[static_cast<size_t>(u)] = 0;
  queue.push_back(u);
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    for (int next : ds.adjacency[static_cast<size_t>(cur)]) {
      if (dist[static_cast<size_t>(next)] >= 0) continue;
      dist[static_cast<size_t>(next)] = dist[static_cast<size_t>(cur)] + 1;
      if (next == v) return dist[static_cast<size_t>(next)];
      queue.push_back(next);
    }
  }
  return std::nullopt;
}

}  // namespace retrofit
