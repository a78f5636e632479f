#pragma once

#include <vector>

#include "retrofit/layers.hpp"
#include "retrofit/manifold.hpp"
#include "retrofit/spd.hpp"

namespace retrofit {

enum class LossVariant { kStandard, kExplicit, kConformal };
enum class DistanceKind { kEuclidean, kCosine };

LossVariant parse_variant(const std::string& name);
std::string format_variant(LossVariant v);
DistanceKind parse_distance_kind(const std::string& name);
std::string format_distance_kind(DistanceKind k);

struct LossConfig {
  LossVariant variant = LossVariant::kConformal;
  double lambda_balance = 1.0;
  double margin = 1.0;
  // C >= 0; infinity bounds nothing (angles only), 0 recovers the isometry
  // regularizer.
  double conformality_c = std::numeric_limits<double>::infinity();
  DistanceKind distance_kind = DistanceKind::kEuclidean;
  int neighbor_count = 50;
  // Explicit-retrofit fidelity: false = max-margin reimplementation, true =
  // literal squared graph-distance fidelity.
  bool er_squared_fidelity = false;
};

// |w_source - w_target|^2 in a shared ambient space.
double proximity_loss(const Vec& w_source, const Vec& w_target);

// sum_E |u - v|^2 + lambda sum_V |w - w_src|^2 over a free target table
// (columns are nodes).
double sr_objective(const Mat& targets, const Mat& sources,
                    const std::vector<std::pair<int, int>>& edges,
                    double lambda);

double cosine_distance(const Vec& u, const Vec& v);

// (d_emb(u,v) - d_graph)^2 with the chosen embedding distance.
double er_fidelity(const Vec& u_t, const Vec& v_t, double graph_dist,
                   DistanceKind kind);

// sum_x max(0, margin + d(u,v) - d(u,x)) with geodesic distances on the
// target manifold.
double cr_fidelity(const ManifoldDescriptor& m, const Vec& u_t, const Vec& v_t,
                   const std::vector<Vec>& negatives, double margin);

// F_p = J^T G_{f(p)} J in the source chart, symmetrized and floored.
spd::SpdMatrix pullback_metric(RiemannianNetwork& net, const Vec& w_source,
                               int* floored = nullptr);

double isometry_loss(RiemannianNetwork& net, const Vec& w_source,
                     int* floored = nullptr);

double conformality_loss(RiemannianNetwork& net, const Vec& w_source, double c,
                         int* floored = nullptr);

// Closed-form conformality on explicit metric tensors: the constrained
// objective min_{|alpha|<=C} |log(F G^-1 e^-alpha)|^2 after optimizing out
// alpha. n is the source intrinsic dimension.
double conformality_from_metrics(const spd::SpdMatrix& f,
                                 const spd::SpdMatrix& g, double c, int n,
                                 int* floored = nullptr);

// Same value, plus dL/dF for gradient propagation. Floored eigenvalues carry
// zero derivative.
double conformality_value_grad(const Mat& f_raw, const spd::SpdMatrix& g,
                               double c, int n, Mat& dl_df,
                               int* floored = nullptr);

// Parameter gradients of scale * conformality_loss(net, w_source, c),
// accumulated into grads through the given engine; returns the loss value
// (unscaled). Covers the isometry regularizer as the c = 0 case.
double conformality_param_gradients(RiemannianNetwork& net,
                                    diff::Engine& engine, const Vec& w_source,
                                    double c, double scale,
                                    diff::GradTable& grads,
                                    int* floored = nullptr);

struct ObjectiveTerms {
  double fidelity = 0.0;
  double preservation = 0.0;  // lambda-scaled
  double total = 0.0;
  int floored = 0;
};

// Weighted conformal-retrofitting objective over an edge batch and a vertex
// batch; per-term values are returned for logging and GradNorm. negatives
// holds, per edge, the target-manifold points of the sampled negatives of the
// edge's first endpoint.
ObjectiveTerms total_conformal_objective(
    RiemannianNetwork& net, const std::vector<std::pair<Vec, Vec>>& edge_sources,
    const std::vector<std::vector<Vec>>& negatives_per_edge,
    const std::vector<Vec>& vertex_sources, const LossConfig& cfg,
    double weight_fidelity = 1.0, double weight_preservation = 1.0);

}  // namespace retrofit
