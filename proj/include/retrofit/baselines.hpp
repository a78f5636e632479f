#pragma once

#include "retrofit/optim.hpp"

namespace retrofit {

struct StandardRetrofitConfig {
  double lambda = 1.0;
  double lr = 0.0;  // 0 = stable step from the objective's curvature bound
  int iterations = 200;
};

// Gradient descent on the free target table, initialized at the sources.
// Nodes without train edges stay exactly at their source embeddings.
Mat run_standard_retrofit(const GraphDataset& dataset,
                          const StandardRetrofitConfig& cfg);

// Max-margin fidelity + proximity preservation on a Euclidean-target network;
// shares the Trainer stack with conformal retrofitting.
FitResult run_explicit_retrofit(RiemannianNetwork& net,
                                const GraphDataset& dataset,
                                const LossConfig& loss_cfg,
                                const OptimConfig& optim_cfg,
                                const NeighborConfig& neighbor_cfg,
                                const std::function<void(const EpochRow&)>&
                                    on_epoch = {});

}  // namespace retrofit
