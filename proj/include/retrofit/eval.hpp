#pragma once

#include <functional>
#include <unordered_set>
#include <vector>

#include "retrofit/data.hpp"
#include "retrofit/manifold.hpp"

namespace retrofit {

// Mean over relevant items of precision at that item's rank.
double average_precision(const std::vector<int>& ranked_ids,
                         const std::unordered_set<int>& relevant);

enum class EvalDistance { kGeodesic, kCosine };

EvalDistance parse_eval_distance(const std::string& name);
std::string format_eval_distance(EvalDistance d);

// Query nodes come from `query_split`; candidate pools follow the split
// visibility rules (train queries rank against train nodes, val against
// train+val, test against everything). A query's relevant set is every true
// graph neighbor inside its pool; queries with an empty relevant set are
// skipped and counted.
struct MapResult {
  double map = 0.0;
  int queries = 0;
  int skipped = 0;
};

// `embedding(id)` returns the representation ranked under `dist`; ties are
// broken by ascending node id.
MapResult mean_average_precision(
    const GraphDataset& dataset, Split query_split,
    const std::function<const Vec&(int)>& embedding,
    const std::function<double(const Vec&, const Vec&)>& dist);

// Convenience: rank a fixed table (columns = nodes) by cosine distance; the
// untransformed-source baseline path.
MapResult cosine_map(const GraphDataset& dataset, Split query_split,
                     const Mat& table);

// Rank target-manifold points by geodesic distance.
MapResult geodesic_map(const GraphDataset& dataset, Split query_split,
                       const ManifoldDescriptor& target, const Mat& table);

}  // namespace retrofit
