#include "retrofit/baselines.hpp"

#include <algorithm>

namespace retrofit {

Mat run_standard_retrofit(const GraphDataset& dataset,
                          const StandardRetrofitConfig& cfg) {
  Mat targets = dataset.embeddings;
  const auto& edges = dataset.train_edges;
  int max_deg = 0;
  {
    std::vector<int> deg(static_cast<size_t>(dataset.node_count()), 0);
    for (const auto& [u, v] : edges) {
      ++deg[static_cast<size_t>(u)];
      ++deg[static_cast<size_t>(v)];
    }
    for (int d : deg) max_deg = std::max(max_deg, d);
  }
  // Objective curvature is bounded by 2*lambda + 2*lambda_max(L) with
  // lambda_max(L) <= 2*max_deg, so this step size descends monotonically.
  const double lr =
      cfg.lr > 0 ? cfg.lr : 1.0 / (2.0 * (cfg.lambda + 2.0 * max_deg) + 1e-12);

  Mat grad(targets.rows(), targets.cols());
  for (int it = 0; it < cfg.iterations; ++it) {
    grad = 2.0 * cfg.lambda * (targets - dataset.embeddings);
    for (const auto& [u, v] : edges) {
      const Vec d = 2.0 * (targets.col(u) - targets.col(v));
      grad.col(u) += d;
      grad.col(v) -= d;
    }
    targets -= lr * grad;
  }
  return targets;
}

FitResult run_explicit_retrofit(RiemannianNetwork& net,
                                const GraphDataset& dataset,
                                const LossConfig& loss_cfg,
                                const OptimConfig& optim_cfg,
                                const NeighborConfig& neighbor_cfg,
                                const std::function<void(const EpochRow&)>&
                                    on_epoch) {
  LossConfig cfg = loss_cfg;
  cfg.variant = LossVariant::kExplicit;
  Trainer trainer(net, dataset, cfg, optim_cfg, neighbor_cfg,
                  EvalDistance::kCosine);
  return trainer.fit(on_epoch);
}

}  // namespace retrofit
