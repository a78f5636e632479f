#pragma once

#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "retrofit/manifold.hpp"

namespace retrofit {

struct KarcherResult {
  Vec mean;
  bool converged = true;
  bool hemisphere_warning = false;
  int iterations = 0;
};

// Fixed-point iteration c <- exp_c(mean log_c(v)). Starts from the projected
// ambient mean; on spheres a point outside the starting hemisphere only
// raises the warning flag.
KarcherResult karcher_mean(const ManifoldDescriptor& m,
                           const std::vector<Vec>& points, double tol = 1e-6,
                           int max_iter = 100);

// Snapshot of the vocabulary projected onto the tangent space at the Karcher
// centroid; queries are exact flat scans in the chart.
struct TangentIndex {
  ManifoldDescriptor manifold;
  Vec centroid;
  std::vector<int> ids;
  Mat projected;  // intrinsic_dim x n, column order matches ids
  std::unordered_map<int, int> id_to_col;
  long build_step = 0;
  long refresh_period = 1;
  bool karcher_converged = true;
  bool hemisphere_warning = false;
  // recall@k of chart kNN vs brute-force geodesic kNN; 1 for Euclidean
  // manifolds where the chart is an isometry, measured on rebuild otherwise.
  double recall_at_k = 1.0;
};

TangentIndex build_index(const ManifoldDescriptor& m,
                         const std::vector<int>& ids,
                         const std::vector<Vec>& embeddings, long step,
                         long refresh_period, bool with_recall_diagnostic,
                         int recall_k = 50);

// k nearest by chart Euclidean distance, exclusions removed, ties broken by
// ascending node id.
std::vector<int> query_negatives(const TangentIndex& index, int u, int k,
                                 const std::unordered_set<int>& exclusions);

// Rebuilds when (step - build_step) >= refresh_period, otherwise returns the
// input snapshot unchanged.
TangentIndex maybe_refresh(const TangentIndex& index, long step,
                           const std::vector<int>& ids,
                           const std::vector<Vec>& embeddings,
                           bool with_recall_diagnostic = false);

}  // namespace retrofit
