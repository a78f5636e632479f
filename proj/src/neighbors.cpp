#include "retrofit/neighbors.hpp"

#include <algorithm>
#include <cmath>

namespace retrofit {

namespace {

Vec projected_ambient_mean(const ManifoldDescriptor& m,
                           const std::vector<Vec>& points) {
  Vec mean = Vec::Zero(m.ambient_dim);
  for (const Vec& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  // Project back factor-wise: normalize sphere slices (e1 fallback for a
  // vanishing mean), clamp ball slices.
  int off = 0;
  for (int i = 0; i < m.factor_count(); ++i) {
    const ManifoldDescriptor& f = m.factor(i);
    auto seg = mean.segment(off, f.ambient_dim);
    if (f.kind == ManifoldKind::Sphere) {
      const double n = seg.norm();
      if (n < 1e-9) {
        seg.setZero();
        seg[0] = 1.0;
      } else {
        seg /= n;
      }
    } else if (f.kind == ManifoldKind::PoincareBall) {
      const double n = seg.norm();
      if (n > 1.0 - kBallEps) seg *= (1.0 - kBallEps) / n;
    }
    off += f.ambient_dim;
  }
  return mean;
}

bool outside_hemisphere(const ManifoldDescriptor& m, const Vec& center,
                        const Vec& p) {
  int off = 0;
  for (int i = 0; i < m.factor_count(); ++i) {
    const ManifoldDescriptor& f = m.factor(i);
    if (f.kind == ManifoldKind::Sphere) {
      if (center.segment(off, f.ambient_dim)
              .dot(p.segment(off, f.ambient_dim)) < 0.0)
        return true;
    }
    off += f.ambient_dim;
  }
  return false;
}

}  // namespace

KarcherResult karcher_mean(const ManifoldDescriptor& m,
                           const std::vector<Vec>& points, double tol,
                           int max_iter) {
  if (points.empty()) throw EmptyInput("Karcher mean of an empty point set");
  KarcherResult out;
  out.mean = projected_ambient_mean(m, points);
  for (const Vec& p : points) {
    if (outside_hemisphere(m, out.mean, p)) {
      out.hemisphere_warning = true;
      break;
    }
  }
  if (m.pure_euclidean()) {
    // The fixed point is the arithmetic mean, already computed.
    out.iterations = 0;
    return out;
  }
  out.converged = false;
  for (int it = 0; it < max_iter; ++it) {
    Vec step = Vec::Zero(m.ambient_dim);
    for (const Vec& p : points) step += log_map(m, out.mean, p);
    step /= static_cast<double>(points.size());
    out.mean = exp_map(m, out.mean, step);
    out.iterations = it + 1;
    if (step.norm() < tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

TangentIndex build_index(const ManifoldDescriptor& m,
                         const std::vector<int>& ids,
                         const std::vector<Vec>& embeddings, long step,
                         long refresh_period, bool with_recall_diagnostic,
                         int recall_k) {
  if (ids.size() != embeddings.size())
    throw DimMismatch("ids and embeddings must align");
  if (ids.empty()) throw EmptyInput("cannot index an empty vocabulary");
  const KarcherResult km = karcher_mean(m, embeddings);

  TangentIndex index;
  index.manifold = m;
  index.centroid = km.mean;
  index.ids = ids;
  index.karcher_converged = km.converged;
  index.hemisphere_warning = km.hemisphere_warning;
  index.build_step = step;
  index.refresh_period = std::max<long>(1, refresh_period);
  const int n = static_cast<int>(ids.size());
  index.projected.resize(m.intrinsic_dim, n);
  for (int i = 0; i < n; ++i) {
    index.projected.col(i) =
        chart_down(m, km.mean, log_map(m, km.mean, embeddings[i]));
    index.id_to_col.emplace(ids[static_cast<size_t>(i)], i);
  }

  if (with_recall_diagnostic && !m.pure_euclidean() && n > 1) {
    const int k = std::min(recall_k, n - 1);
    long hits = 0;
    std::vector<std::pair<double, int>> chart(n), geo(n);
    for (int q = 0; q < n; ++q) {
      for (int j = 0; j < n; ++j) {
        chart[j] = {(index.projected.col(j) - index.projected.col(q))
                        .squaredNorm(),
                    ids[static_cast<size_t>(j)]};
        geo[j] = {distance(m, embeddings[static_cast<size_t>(q)],
                           embeddings[static_cast<size_t>(j)]),
                  ids[static_cast<size_t>(j)]};
      }
      chart[q].first = std::numeric_limits<double>::infinity();
      geo[q].first = std::numeric_limits<double>::infinity();
      std::partial_sort(chart.begin(), chart.begin() + k, chart.end());
      std::partial_sort(geo.begin(), geo.begin() + k, geo.end());
      std::unordered_set<int> truth;
      for (int j = 0; j < k; ++j) truth.insert(geo[j].second);
      for (int j = 0; j < k; ++j) hits += truth.count(chart[j].second);
    }
    index.recall_at_k =
        static_cast<double>(hits) / (static_cast<double>(n) * k);
  }
  return index;
}

std::vector<int> query_negatives(const TangentIndex& index, int u, int k,
                                 const std::unordered_set<int>& exclusions) {
  const auto it = index.id_to_col.find(u);
  if (it == index.id_to_col.end())
    throw UnknownParameter("query node " + std::to_string(u) +
                           " is not indexed");
  const int uc = it->second;
  std::vector<std::pair<double, int>> candidates;
  candidates.reserve(index.ids.size());
  for (size_t j = 0; j < index.ids.size(); ++j) {
    const int id = index.ids[j];
    if (exclusions.count(id)) continue;
    const double d2 =
        (index.projected.col(static_cast<int>(j)) - index.projected.col(uc))
            .squaredNorm();
    candidates.emplace_back(d2, id);
  }
  const int take = std::min<int>(k, static_cast<int>(candidates.size()));
  std::partial_sort(candidates.begin(), candidates.begin() + take,
                    candidates.end());
  std::vector<int> out;
  out.reserve(static_cast<size_t>(take));
  for (int j = 0; j < take; ++j) out.push_back(candidates[static_cast<size_t>(j)].second);
  return out;
}

TangentIndex maybe_refresh(const TangentIndex& index, long step,
                           const std::vector<int>& ids,
                           const std::vector<Vec>& embeddings,
                           bool with_recall_diagnostic) {
  if (step - index.build_step < index.refresh_period) return index;
  return build_index(index.manifold, ids, embeddings, step,
                     index.refresh_period, with_recall_diagnostic);
}

}  // namespace retrofit
