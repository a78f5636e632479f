#pragma once

#include <functional>
#include <optional>

#include "retrofit/data.hpp"
#include "retrofit/eval.hpp"
#include "retrofit/losses.hpp"
#include "retrofit/neighbors.hpp"

namespace retrofit {

struct OptimConfig {
  double euclidean_lr = 1e-3;
  double riemannian_lr = 1e-3;
  int batch_size = 128;
  int epochs = 200;
  bool gradnorm_enabled = true;
  double gradnorm_beta = 0.9;
  int patience = 50;
  std::uint64_t seed = 0;
  // Vertices entering the preservation term per step; 0 = every batch vertex.
  int preservation_sample = 0;
  int eval_every = 1;
};

struct NeighborConfig {
  int k = 50;
  long refresh_period = 0;  // 0 = one epoch's step count
};

// One R-SGD update: Riemannian gradient (metric-inverse scaling + tangent
// projection), exponential-map retraction, manifold clamp. Non-finite
// gradients skip the step and bump the counter.
Vec rsgd_step(const ManifoldDescriptor& m, const Vec& p, const Vec& grad,
              double lr, int* skipped = nullptr);

struct AdamMoments {
  Vec m, v;
  long t = 0;
};

// Standard bias-corrected Adam on a flat parameter vector.
Vec adam_step(AdamMoments& state, const Vec& param, const Vec& grad, double lr,
              double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct GradNormState {
  std::vector<double> ema;
  bool initialized = false;
  double beta = 0.9;
};

// Inverse-norm objective weights using the geometric mean of EMA-smoothed
// gradient norms, renormalized to sum to the objective count.
std::vector<double> gradnorm_weights(const std::vector<double>& norms,
                                     GradNormState& state);

struct StepMetrics {
  double fidelity = 0.0;      // sum of hinge terms over the batch
  double preservation = 0.0;  // lambda-scaled preservation sum
  double weight_fidelity = 1.0;
  double weight_preservation = 1.0;
  int floored = 0;
  int skipped_updates = 0;
  int edges = 0;
};

struct EpochRow {
  int epoch = 0;
  double fidelity = 0.0;
  double preservation = 0.0;
  double weight_fidelity = 1.0;
  double weight_preservation = 1.0;
  int floored = 0;
  int skipped_updates = 0;
  double val_map = -1.0;  // -1 when not evaluated this epoch
  int val_skipped = 0;
  double index_recall = 1.0;
};

struct FitResult {
  int best_epoch = -1;
  double best_val_map = -1.0;
  int epochs_run = 0;
};

// Minibatch trainer shared by conformal retrofitting and the explicit
// baseline; the variant in LossConfig picks fidelity/preservation terms.
class Trainer {
 public:
  Trainer(RiemannianNetwork& net, const GraphDataset& data,
          const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
          const NeighborConfig& neighbor_cfg,
          EvalDistance eval_distance = EvalDistance::kGeodesic);

  StepMetrics step();

  // Per-objective gradients for an explicit batch, without updating
  // parameters; exposed for gradient checks.
  void compute_gradients(const std::vector<std::pair<int, int>>& edge_batch,
                         const std::vector<int>& vertex_batch,
                         const std::vector<std::vector<int>>& negatives,
                         diff::GradTable& fidelity_grads,
                         diff::GradTable& preservation_grads,
                         StepMetrics* metrics = nullptr);

  // Negatives for each edge's first endpoint from the current index.
  std::vector<std::vector<int>> sample_negatives(
      const std::vector<std::pair<int, int>>& edge_batch) const;

  FitResult fit(const std::function<void(const EpochRow&)>& on_epoch = {});

  MapResult evaluate_map(Split split);
  Mat transform_nodes();  // target coords for every dataset node

  const TangentIndex& index() const { return index_; }
  int steps_per_epoch() const { return steps_per_epoch_; }
  long step_count() const { return step_count_; }
  RiemannianNetwork& network() { return *net_; }

 private:
  void refresh_index(bool force);
  void apply_updates(const diff::GradTable& fid, const diff::GradTable& pre,
                     double w_fid, double w_pre, StepMetrics* metrics);
  double grad_measure_norm(const diff::GradTable& g) const;

  RiemannianNetwork* net_;
  const GraphDataset* data_;
  LossConfig loss_;
  OptimConfig opt_;
  NeighborConfig ncfg_;
  EvalDistance eval_distance_;

  diff::Engine engine_;
  Rng rng_;
  std::vector<int> train_ids_;
  std::vector<std::pair<int, int>> edge_order_;
  int epoch_cursor_ = 0;
  int steps_per_epoch_ = 1;
  long step_count_ = 0;
  TangentIndex index_;
  int measure_layer_ = 0;

  // Adam state per program parameter (matrices and Euclidean bias vectors).
  std::vector<AdamMoments> mat_moments_;
  std::vector<AdamMoments> vec_moments_;
  std::vector<bool> vec_is_riemannian_;
  std::vector<ManifoldDescriptor> vec_manifold_;
  GradNormState gradnorm_;
  int skipped_updates_ = 0;
};

}  // namespace retrofit
