#pragma once

#include <string>

#include "retrofit/optim.hpp"

namespace retrofit {

// Small synthetic setups: a crossed pair of clusters, a near-collinear
// cycle, and a two-level tree. Nodes never touched by an edge stay out of
// the training vocabulary but are still transformed for plotting.
struct Fixture {
  std::string name;
  std::vector<std::string> node_names;
  std::vector<std::string> roles;  // observed | missing
  Mat coords;                      // 2 x n source coordinates
  std::vector<std::pair<int, int>> edges;
};

Fixture make_fixture(const std::string& which);

// Vocabulary = nodes incident to an edge; every node labeled train.
GraphDataset fixture_dataset(const Fixture& fx);

struct FixtureTrainOptions {
  LossVariant variant = LossVariant::kConformal;
  std::string target = "E2";
  int hidden_width = 32;
  int hidden_depth = 2;
  int epochs = 300;
  double margin = 1.0;
  double lambda = 1.0;
  double conformality_c = 0.5;
  double euclidean_lr = 5e-3;
  double riemannian_lr = 5e-3;
  int batch_size = 16;
  int neighbor_k = 8;
  std::uint64_t seed = 0;
};

struct FixtureRun {
  Fixture fixture;
  GraphDataset dataset;
  RiemannianNetwork net;
  double mean_hinge = 0.0;
};

FixtureRun run_fixture(const std::string& which,
                       const FixtureTrainOptions& options);

// Mean over train edges of the max-margin fidelity normalized by the number
// of negatives, with negatives re-sampled from a fresh index.
double mean_edge_hinge(RiemannianNetwork& net, const GraphDataset& dataset,
                       double margin, int k);

// Standard deviation over grid cells of log(image area / source area) for a
// planar-target map; uniform scalings score 0.
double grid_area_distortion(RiemannianNetwork& net, double x0, double x1,
                            double y0, double y1, int nx, int ny);

// points.csv (id, role, src_*, tgt_*) and edges.csv under out_dir.
void write_figure_csv(FixtureRun& run, const std::string& out_dir);

}  // namespace retrofit
