#include "retrofit/eval.hpp"

#include <algorithm>

#include "retrofit/losses.hpp"

namespace retrofit {

double average_precision(const std::vector<int>& ranked_ids,
                         const std::unordered_set<int>& relevant) {
  if (relevant.empty()) throw EmptyInput("average precision needs >= 1 relevant item");
  int hits = 0;
  double acc = 0.0;
  for (size_t rank = 0; rank < ranked_ids.size(); ++rank) {
    if (relevant.count(ranked_ids[rank])) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return acc / static_cast<double>(relevant.size());
}

EvalDistance parse_eval_distance(const std::string& name) {
  if (name == "geodesic") return EvalDistance::kGeodesic;
  if (name == "cosine") return EvalDistance::kCosine;
  throw ConfigError("unknown eval distance '" + name + "'");
}

std::string format_eval_distance(EvalDistance d) {
  return d == EvalDistance::kGeodesic ? "geodesic" : "cosine";
}

MapResult mean_average_precision(
    const GraphDataset& dataset, Split query_split,
    const std::function<const Vec&(int)>& embedding,
    const std::function<double(const Vec&, const Vec&)>& dist) {
  // Pool: every node whose split is visible to the query split.
  const int max_label = static_cast<int>(query_split);
  std::vector<int> pool;
  for (int i = 0; i < dataset.node_count(); ++i)
    if (static_cast<int>(dataset.split[static_cast<size_t>(i)]) <= max_label)
      pool.push_back(i);

  MapResult out;
  double acc = 0.0;
  std::vector<std::pair<double, int>> ranked;
  for (int q : dataset.nodes_in_split(query_split)) {
    std::unordered_set<int> relevant;
    for (int v : dataset.neighbors(q))
      if (v != q &&
          static_cast<int>(dataset.split[static_cast<size_t>(v)]) <= max_label)
        relevant.insert(v);
    if (relevant.empty()) {
      ++out.skipped;
      continue;
    }
    ranked.clear();
    const Vec& qe = embedding(q);
    for (int v : pool) {
      if (v == q) continue;  // query excluded from its own pool
      ranked.emplace_back(dist(qe, embedding(v)), v);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<int> ids(ranked.size());
    for (size_t i = 0; i < ranked.size(); ++i) ids[i] = ranked[i].second;
    acc += average_precision(ids, relevant);
    ++out.queries;
  }
  out.map = out.queries > 0 ? acc / out.queries : 0.0;
  return out;
}

MapResult cosine_map(const GraphDataset& dataset, Split query_split,
                     const Mat& table) {
  std::vector<Vec> cols(static_cast<size_t>(table.cols()));
  for (int i = 0; i < table.cols(); ++i) cols[static_cast<size_t>(i)] = table.col(i);
  return mean_average_precision(
      dataset, query_split,
      [&](int id) -> const Vec& { return cols[static_cast<size_t>(id)]; },
      [](const Vec& a, const Vec& b) { return cosine_distance(a, b); });
}

MapResult geodesic_map(const GraphDataset& dataset, Split query_split,
                       const ManifoldDescriptor& target, const Mat& table) {
  std::vector<Vec> cols(static_cast<size_t>(table.cols()));
  for (int i = 0; i < table.cols(); ++i) cols[static_cast<size_t>(i)] = table.col(i);
  return mean_average_precision(
      dataset, query_split,
      [&](int id) -> const Vec& { return cols[static_cast<size_t>(id)]; },
      [&](const Vec& a, const Vec& b) { return distance(target, a, b); });
}

}  // namespace retrofit
