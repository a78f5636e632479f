#pragma once

#include <string>

// vendored single-header nlohmann/json
#include <json.hpp>

#include "retrofit/baselines.hpp"
#include "retrofit/optim.hpp"

namespace retrofit {

using Json = nlohmann::ordered_json;

struct DatasetConfig {
  std::string edges;
  std::string embeddings;
  std::string split;  // empty = generate via make_splits(seed)
  int embedding_dim = 50;
};

struct EvalConfig {
  EvalDistance distance = EvalDistance::kGeodesic;
  int every = 1;
};

// One configuration document drives every command; unknown keys are rejected
// and all defaults are materialized into the persisted copy.
struct RunConfig {
  DatasetConfig dataset;
  std::string architecture;     // full chain; alternative to target_manifold
  std::string target_manifold;  // with hidden_width/hidden_depth
  int hidden_width = 1600;
  int hidden_depth = 2;
  std::string hidden_nonlinearity = "tanh";
  LossConfig loss;
  OptimConfig optim;
  NeighborConfig neighbors;
  EvalConfig eval;
  StandardRetrofitConfig sr;
  std::uint64_t seed = 0;
  std::string out = "runs/run";

  std::vector<ManifoldDescriptor> resolve_architecture(int source_dim) const;
};

RunConfig parse_config(const Json& j);
RunConfig load_config(const std::string& path);
Json config_to_json(const RunConfig& cfg);  // fully resolved

GraphDataset load_dataset(const RunConfig& cfg);

Json checkpoint_to_json(const RiemannianNetwork& net);
RiemannianNetwork network_from_checkpoint(const Json& j);
void save_checkpoint(const RiemannianNetwork& net, const std::string& path);
RiemannianNetwork load_checkpoint(const std::string& path);

}  // namespace retrofit
