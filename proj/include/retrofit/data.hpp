#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "retrofit/manifold.hpp"
#include "retrofit/rng.hpp"

namespace retrofit {

enum class Split : int { kTrain = 0, kVal = 1, kTest = 2 };

Split parse_split(const std::string& name);
std::string format_split(Split s);

struct LoadStats {
  int self_loops_dropped = 0;
  int duplicate_edges = 0;
  int nodes_without_embedding = 0;
  int edges_dropped_with_nodes = 0;
};

// Node vocabulary, undirected edge list, per-node split labels and source
// embeddings. Edges are canonicalized (min id first) and deduplicated; the
// hypernym direction in the files is not used by the losses.
struct GraphDataset {
  std::vector<std::string> names;             // id -> name
  std::unordered_map<std::string, int> ids;   // name -> id
  std::vector<std::pair<int, int>> edges;
  Mat embeddings;                             // dim x n
  std::vector<Split> split;                   // per node
  std::vector<std::vector<int>> adjacency;    // all edges
  std::vector<std::vector<int>> train_adjacency;
  std::vector<std::pair<int, int>> train_edges, val_edges, test_edges;

  int node_count() const { return static_cast<int>(names.size()); }
  int embedding_dim() const { return static_cast<int>(embeddings.rows()); }

  // Graph neighbors of u; train scope restricts to train-train edges (used
  // for negative-sample exclusion during training).
  const std::vector<int>& neighbors(int u, bool train_scope = false) const {
    return train_scope ? train_adjacency[static_cast<size_t>(u)]
                       : adjacency[static_cast<size_t>(u)];
  }

  std::vector<int> nodes_in_split(Split s) const;
};

struct EdgeList {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> ids;
  std::vector<std::pair<int, int>> edges;
};

// Tab- or space-separated "child parent" lines, '#' comments allowed.
EdgeList load_edges(const std::string& path, LoadStats* stats = nullptr);

// GloVe text format: token followed by expected_dim floats per line.
std::unordered_map<std::string, Vec> load_embeddings(const std::string& path,
                                                     int expected_dim);

// Joins edges with embeddings; nodes without an embedding are dropped along
// with their incident edges (counted in stats). Split labels start unset.
GraphDataset assemble_dataset(const EdgeList& edge_list,
                              const std::unordered_map<std::string, Vec>& table,
                              LoadStats* stats = nullptr);

// Shuffles nodes under the seed and partitions by ratio; populates the split
// labels and the per-split edge sets (train: both endpoints train; val:
// val-val or val-train; test: any edge touching a test node).
void make_splits(GraphDataset& dataset, const std::array<double, 3>& ratios,
                 std::uint64_t seed);

// "node<TAB>{train|val|test}" per line.
void apply_split_file(GraphDataset& dataset, const std::string& path);
void write_split_file(const GraphDataset& dataset, const std::string& path);

// Recomputes per-split edge sets and train adjacency from the labels.
void finalize_split(GraphDataset& dataset);

void write_edges_file(const GraphDataset& dataset, const std::string& path);
void write_embeddings_file(const GraphDataset& dataset, const std::string& path,
                           const std::string& header = "");

// Unweighted shortest-path length over all edges; nullopt when unreachable.
std::optional<int> bfs_distance(const GraphDataset& dataset, int u, int v);

}  // namespace retrofit
