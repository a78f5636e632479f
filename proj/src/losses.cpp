#include "retrofit/losses.hpp"

#include <cmath>
#include <limits>

namespace retrofit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Piecewise correction psi(s) subtracted from |log(F G^-1)|^2; continuous at
// the KKT threshold |s|/n = C because the boundary branch keeps the + C^2 n
// constant from the optimal boundary alpha.
double psi(double s, double c, int n) {
  if (c == kInf || std::abs(s) / n <= c) return s * s / n;
  return 2.0 * c * std::abs(s) - c * c * n;
}

double psi_prime(double s, double c, int n) {
  if (c == kInf || std::abs(s) / n <= c) return 2.0 * s / n;
  return 2.0 * c * (s >= 0 ? 1.0 : -1.0);
}

}  // namespace

LossVariant parse_variant(const std::string& name) {
  if (name == "standard") return LossVariant::kStandard;
  if (name == "explicit") return LossVariant::kExplicit;
  if (name == "conformal") return LossVariant::kConformal;
  throw ConfigError("unknown variant '" + name + "'");
}

std::string format_variant(LossVariant v) {
  switch (v) {
    case LossVariant::kStandard: return "standard";
    case LossVariant::kExplicit: return "explicit";
    case LossVariant::kConformal: return "conformal";
  }
  return "conformal";
}

DistanceKind parse_distance_kind(const std::string& name) {
  if (name == "euclidean") return DistanceKind::kEuclidean;
  if (name == "cosine") return DistanceKind::kCosine;
  throw ConfigError("unknown distance kind '" + name + "'");
}

std::string format_distance_kind(DistanceKind k) {
  return k == DistanceKind::kEuclidean ? "euclidean" : "cosine";
}

double proximity_loss(const Vec& w_source, const Vec& w_target) {
  if (w_source.size() != w_target.size())
    throw DimMismatch("proximity loss needs a shared ambient space");
  return (w_source - w_target).squaredNorm();
}

double sr_objective(const Mat& targets, const Mat& sources,
                    const std::vector<std::pair<int, int>>& edges,
                    double lambda) {
  if (targets.rows() != sources.rows() || targets.cols() != sources.cols())
    throw DimMismatch("target table shape differs from source table");
  double acc = 0.0;
  for (const auto& [u, v] : edges)
    acc += (targets.col(u) - targets.col(v)).squaredNorm();
  for (int w = 0; w < targets.cols(); ++w)
    acc += lambda * (targets.col(w) - sources.col(w)).squaredNorm();
  return acc;
}

double cosine_distance(const Vec& u, const Vec& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu < 1e-300 || nv < 1e-300) return 1.0;
  return 1.0 - u.dot(v) / (nu * nv);
}

double er_fidelity(const Vec& u_t, const Vec& v_t, double graph_dist,
                   DistanceKind kind) {
  const double d = kind == DistanceKind::kEuclidean ? (u_t - v_t).norm()
                                                    : cosine_distance(u_t, v_t);
  const double diff = d - graph_dist;
  return diff * diff;
}

double cr_fidelity(const ManifoldDescriptor& m, const Vec& u_t, const Vec& v_t,
                   const std::vector<Vec>& negatives, double margin) {
  const double duv = distance(m, u_t, v_t);
  double acc = 0.0;
  for (const Vec& x : negatives) {
    const double h = margin + duv - distance(m, u_t, x);
    if (h > 0) acc += h;
  }
  return acc;
}

spd::SpdMatrix pullback_metric(RiemannianNetwork& net, const Vec& w_source,
                               int* floored) {
  Vec y;
  const Mat jac = net.jacobian_ambient(w_source, &y);
  const Mat j_chart = tangent_basis(net.target(), y).transpose() * jac;
  const spd::SpdMatrix g_t = metric_tensor(net.target(), y);
  Mat f = j_chart.transpose() * g_t.m * j_chart;
  return spd::make_spd(std::move(f), floored);
}

double isometry_loss(RiemannianNetwork& net, const Vec& w_source,
                     int* floored) {
  const spd::SpdMatrix f = pullback_metric(net, w_source, floored);
  const spd::SpdMatrix g = metric_tensor(net.source(), w_source);
  return spd::spd_geodesic_sq(f, g, floored);
}

double conformality_from_metrics(const spd::SpdMatrix& f,
                                 const spd::SpdMatrix& g, double c, int n,
                                 int* floored) {
  if (c < 0) throw ConfigError("conformality bound C must be >= 0");
  const spd::SymRatio r = spd::sym_ratio(f, g, floored);
  double d = 0.0;
  double s = 0.0;
  for (int i = 0; i < r.eigenvalues.size(); ++i) {
    const double l = std::log(r.eigenvalues[i]);
    d += l * l;
    s += l;
  }
  return std::max(0.0, d - psi(s, c, n));
}

double conformality_loss(RiemannianNetwork& net, const Vec& w_source, double c,
                         int* floored) {
  const spd::SpdMatrix f = pullback_metric(net, w_source, floored);
  const spd::SpdMatrix g = metric_tensor(net.source(), w_source);
  return conformality_from_metrics(f, g, c, net.source().intrinsic_dim,
                                   floored);
}

double conformality_value_grad(const Mat& f_raw, const spd::SpdMatrix& g,
                               double c, int n, Mat& dl_df, int* floored) {
  if (c < 0) throw ConfigError("conformality bound C must be >= 0");
  spd::SpdMatrix f;
  f.m = 0.5 * (f_raw + f_raw.transpose());
  int local_floored = 0;
  const spd::SymRatio r = spd::sym_ratio(f, g, &local_floored);
  if (floored) *floored += local_floored;

  const int m = static_cast<int>(r.eigenvalues.size());
  double d = 0.0;
  double s = 0.0;
  Vec lg(m);
  for (int i = 0; i < m; ++i) {
    lg[i] = std::log(r.eigenvalues[i]);
    d += lg[i] * lg[i];
    s += lg[i];
  }
  const double loss = std::max(0.0, d - psi(s, c, n));

  const double dpsi = psi_prime(s, c, n);
  Vec dmu(m);
  for (int i = 0; i < m; ++i) {
    // Floored eigenvalues sit on the clamp boundary: zero derivative.
    if (r.eigenvalues[i] <= spd::kEigenvalueFloor) {
      dmu[i] = 0.0;
    } else {
      dmu[i] = (2.0 * lg[i] - dpsi) / r.eigenvalues[i];
    }
  }
  const Mat dm = r.eigenvectors * dmu.asDiagonal() * r.eigenvectors.transpose();
  dl_df = r.y_inv_sqrt * dm * r.y_inv_sqrt;
  dl_df = 0.5 * (dl_df + dl_df.transpose()).eval();
  return loss;
}

double conformality_param_gradients(RiemannianNetwork& net,
                                    diff::Engine& engine, const Vec& w_source,
                                    double c, double scale,
                                    diff::GradTable& grads, int* floored) {
  const ManifoldDescriptor& target = net.target();
  const ManifoldDescriptor& source = net.source();
  if (!source.pure_euclidean())
    throw ConfigError("conformality training expects a Euclidean source");
  Mat jac;
  const Vec y = engine.forward_with_jacobian(net.params(), w_source, &jac);
  const Vec h = ambient_metric_diag(target, y);
  const Mat f_raw = jac.transpose() * h.asDiagonal() * jac;
  const spd::SpdMatrix g = metric_tensor(source, w_source);
  Mat df;
  const double loss = conformality_value_grad(f_raw, g, c,
                                              source.intrinsic_dim, df, floored);
  Mat dj = 2.0 * h.asDiagonal() * jac * df;
  Vec dy = Vec::Zero(target.ambient_dim);
  // The target metric depends on the output point only through ball-factor
  // conformal scales: d(lambda^2)/dy = 2 lambda^3 y per block.
  int off = 0;
  for (int fi = 0; fi < target.factor_count(); ++fi) {
    const ManifoldDescriptor& fac = target.factor(fi);
    if (fac.kind == ManifoldKind::PoincareBall) {
      const auto yb = y.segment(off, fac.ambient_dim);
      const double lam = ball_lambda(yb);
      double trace = 0.0;
      for (int k = off; k < off + fac.ambient_dim; ++k)
        trace += jac.row(k) * df * jac.row(k).transpose();
      dy.segment(off, fac.ambient_dim) = trace * 2.0 * lam * lam * lam * yb;
    }
    off += fac.ambient_dim;
  }
  engine.backward_with_jacobian(Vec(scale * dy), Mat(scale * dj), grads);
  return loss;
}

ObjectiveTerms total_conformal_objective(
    RiemannianNetwork& net, const std::vector<std::pair<Vec, Vec>>& edge_sources,
    const std::vector<std::vector<Vec>>& negatives_per_edge,
    const std::vector<Vec>& vertex_sources, const LossConfig& cfg,
    double weight_fidelity, double weight_preservation) {
  if (edge_sources.size() != negatives_per_edge.size())
    throw DimMismatch("one negative set per edge required");
  ObjectiveTerms out;
  for (size_t e = 0; e < edge_sources.size(); ++e) {
    const Vec u_t = net.forward(edge_sources[e].first);
    const Vec v_t = net.forward(edge_sources[e].second);
    out.fidelity += cr_fidelity(net.target(), u_t, v_t, negatives_per_edge[e],
                                cfg.margin);
  }
  for (const Vec& w : vertex_sources)
    out.preservation +=
        cfg.lambda_balance *
        conformality_loss(net, w, cfg.conformality_c, &out.floored);
  out.total = weight_fidelity * out.fidelity +
              weight_preservation * out.preservation;
  return out;
}

}  // namespace retrofit
