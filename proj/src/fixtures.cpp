#include "retrofit/fixtures.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace retrofit {

namespace {

constexpr double kPi = 3.14159265358979323846;

Fixture build(const std::string& name, const std::vector<std::string>& names,
              const std::vector<std::string>& roles,
              const std::vector<std::pair<double, double>>& pts,
              const std::vector<std::pair<int, int>>& edges) {
  Fixture fx;
  fx.name = name;
  fx.node_names = names;
  fx.roles = roles;
  fx.coords.resize(2, static_cast<int>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) {
    fx.coords(0, static_cast<int>(i)) = pts[i].first;
    fx.coords(1, static_cast<int>(i)) = pts[i].second;
  }
  fx.edges = edges;
  return fx;
}

}  // namespace

Fixture make_fixture(const std::string& which) {
  if (which == "crossed") {
    // Two clusters whose graph pairs cross cluster boundaries: P-Q and R-S
    // must come together although P,R and Q,S start adjacent.
    return build("crossed", {"P", "R", "Q", "S", "A", "B", "C"},
                 {"observed", "observed", "observed", "observed", "missing",
                  "missing", "missing"},
                 {{-1.0, 0.25},
                  {-1.0, -0.25},
                  {1.0, 0.25},
                  {1.0, -0.25},
                  {-0.1, 1.2},
                  {0.1, 1.5},
                  {-0.3, 1.5}},
                 {{0, 2}, {1, 3}});
  }
  if (which == "cycle") {
    // Near-collinear points carrying a 4-cycle; the long way around from P
    // to S has to bend back on itself.
    return build("cycle", {"P", "Q", "R", "S", "A", "B", "C", "D"},
                 {"observed", "observed", "observed", "observed", "missing",
                  "missing", "missing", "missing"},
                 {{-1.5, 0.05},
                  {-0.5, -0.05},
                  {0.5, 0.05},
                  {1.5, -0.05},
                  {-1.5, 0.8},
                  {-0.5, 0.9},
                  {0.5, 0.8},
                  {1.5, 0.9}},
                 {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  }
  if (which == "tree") {
    // Two-level tree R -> {A,B,C} -> one leaf each; the leaf clusters start
    // next to the wrong parent so the margins disagree with the source
    // layout.
    std::vector<std::string> names = {"R",  "A",  "B",  "C",  "A1",
                                      "A2", "B1", "B2", "C1", "C2"};
    std::vector<std::string> roles = {"observed", "observed", "observed",
                                      "observed", "observed", "missing",
                                      "observed", "missing",  "missing",
                                      "observed"};
    const double r1 = 1.0;
    const double r2 = 1.45;
    auto at = [&](double radius, double deg) {
      return std::make_pair(radius * std::cos(deg * kPi / 180.0),
                            radius * std::sin(deg * kPi / 180.0));
    };
    std::vector<std::pair<double, double>> pts = {
        {0.0, 0.0},     // R
        at(r1, 90.0),   // A
        at(r1, 210.0),  // B
        at(r1, 330.0),  // C
        at(r2, 195.0),  // A1 parked near B
        at(r2, 105.0),  // A2 near A
        at(r2, 315.0),  // B1 parked near C
        at(r2, 225.0),  // B2 near B
        at(r2, 345.0),  // C1 near C
        at(r2, 75.0),   // C2 parked near A
    };
    return build("tree", names, roles, pts,
                 {{0, 1}, {0, 2}, {0, 3}, {1, 4}, {2, 6}, {3, 9}});
  }
  throw ConfigError("unknown fixture '" + which +
                    "' (expected crossed|cycle|tree)");
}

GraphDataset fixture_dataset(const Fixture& fx) {
  GraphDataset ds;
  std::vector<int> remap(fx.node_names.size(), -1);
  for (const auto& [a, b] : fx.edges) {
    for (int n : {a, b}) {
      if (remap[static_cast<size_t>(n)] < 0) {
        remap[static_cast<size_t>(n)] = static_cast<int>(ds.names.size());
        ds.names.push_back(fx.node_names[static_cast<size_t>(n)]);
        ds.ids.emplace(ds.names.back(), remap[static_cast<size_t>(n)]);
      }
    }
  }
  ds.embeddings.resize(2, static_cast<int>(ds.names.size()));
  for (size_t n = 0; n < fx.node_names.size(); ++n)
    if (remap[n] >= 0) ds.embeddings.col(remap[n]) = fx.coords.col(static_cast<int>(n));
  for (const auto& [a, b] : fx.edges) {
    const auto e = std::minmax(remap[static_cast<size_t>(a)],
                               remap[static_cast<size_t>(b)]);
    ds.edges.emplace_back(e.first, e.second);
  }
  std::sort(ds.edges.begin(), ds.edges.end());
  ds.split.assign(ds.names.size(), Split::kTrain);
  ds.adjacency.assign(ds.names.size(), {});
  for (const auto& [a, b] : ds.edges) {
    ds.adjacency[static_cast<size_t>(a)].push_back(b);
    ds.adjacency[static_cast<size_t>(b)].push_back(a);
  }
  for (auto& adj : ds.adjacency) std::sort(adj.begin(), adj.end());
  finalize_split(ds);
  return ds;
}

double mean_edge_hinge(RiemannianNetwork& net, const GraphDataset& dataset,
                       double margin, int k) {
  const auto train_ids = dataset.nodes_in_split(Split::kTrain);
  std::vector<Vec> embs;
  embs.reserve(train_ids.size());
  for (int id : train_ids) embs.push_back(net.forward(dataset.embeddings.col(id)));
  const TangentIndex index =
      build_index(net.target(), train_ids, embs, 0, 1, false);
  double acc = 0.0;
  int terms = 0;
  for (const auto& edge : dataset.train_edges) {
    for (int orient = 0; orient < 2; ++orient) {
      const int u = orient == 0 ? edge.first : edge.second;
      const int v = orient == 0 ? edge.second : edge.first;
      std::unordered_set<int> excl(dataset.neighbors(u, true).begin(),
                                   dataset.neighbors(u, true).end());
      excl.insert(u);
      const auto neg_ids = query_negatives(index, u, k, excl);
      std::vector<Vec> negs;
      negs.reserve(neg_ids.size());
      for (int x : neg_ids)
        negs.push_back(net.forward(dataset.embeddings.col(x)));
      const double fid =
          cr_fidelity(net.target(), net.forward(dataset.embeddings.col(u)),
                      net.forward(dataset.embeddings.col(v)), negs, margin);
      acc += fid / std::max<size_t>(1, negs.size());
      ++terms;
    }
  }
  return acc / std::max(1, terms);
}

double grid_area_distortion(RiemannianNetwork& net, double x0, double x1,
                            double y0, double y1, int nx, int ny) {
  if (net.target().ambient_dim != 2 || !net.target().pure_euclidean())
    throw ConfigError("area distortion needs a planar Euclidean target");
  auto fwd = [&](double x, double y) {
    Vec p(2);
    p << x, y;
    return net.forward(p);
  };
  const double dx = (x1 - x0) / nx;
  const double dy = (y1 - y0) / ny;
  const double cell_area = dx * dy;
  std::vector<double> logs;
  logs.reserve(static_cast<size_t>(nx) * ny);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      const Vec a = fwd(x0 + i * dx, y0 + j * dy);
      const Vec b = fwd(x0 + (i + 1) * dx, y0 + j * dy);
      const Vec c = fwd(x0 + (i + 1) * dx, y0 + (j + 1) * dy);
      const Vec d = fwd(x0 + i * dx, y0 + (j + 1) * dy);
      // shoelace over the mapped quad
      double area = 0.5 * std::abs((a[0] * b[1] - b[0] * a[1]) +
                                   (b[0] * c[1] - c[0] * b[1]) +
                                   (c[0] * d[1] - d[0] * c[1]) +
                                   (d[0] * a[1] - a[0] * d[1]));
      area = std::max(area, 1e-12);
      logs.push_back(std::log(area / cell_area));
    }
  }
  double mean = 0.0;
  for (double l : logs) mean += l;
  mean /= static_cast<double>(logs.size());
  double var = 0.0;
  for (double l : logs) var += (l - mean) * (l - mean);
  return std::sqrt(var / static_cast<double>(logs.size()));
}

FixtureRun run_fixture(const std::string& which,
                       const FixtureTrainOptions& options) {
  Fixture fx = make_fixture(which);
  GraphDataset ds = fixture_dataset(fx);

  std::vector<ManifoldDescriptor> chain;
  chain.push_back(ManifoldDescriptor::euclidean(2));
  for (int i = 0; i < options.hidden_depth; ++i)
    chain.push_back(ManifoldDescriptor::euclidean(options.hidden_width));
  chain.push_back(parse_manifold(options.target));

  Rng rng(options.seed);
  RiemannianNetwork net = init_network(chain, rng);

  LossConfig loss;
  loss.variant = options.variant;
  loss.lambda_balance = options.lambda;
  loss.margin = options.margin;
  loss.conformality_c = options.conformality_c;
  loss.neighbor_count = options.neighbor_k;

  OptimConfig opt;
  opt.euclidean_lr = options.euclidean_lr;
  opt.riemannian_lr = options.riemannian_lr;
  opt.batch_size = options.batch_size;
  opt.epochs = options.epochs;
  opt.patience = 0;  // tiny graphs have no validation split
  opt.seed = options.seed;
  opt.eval_every = options.epochs + 1;  // skip val evaluation entirely

  NeighborConfig ncfg;
  ncfg.k = options.neighbor_k;
  ncfg.refresh_period = 0;

  Trainer trainer(net, ds, loss, opt, ncfg);
  trainer.fit();

  FixtureRun run{std::move(fx), std::move(ds), std::move(net), 0.0};
  run.mean_hinge = mean_edge_hinge(run.net, run.dataset, options.margin,
                                   options.neighbor_k);
  return run;
}

void write_figure_csv(FixtureRun& run, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream points(out_dir + "/points.csv");
  if (!points) throw DataError("cannot write " + out_dir + "/points.csv");
  const int tdim = run.net.target().ambient_dim;
  points << "id,role,src_0,src_1";
  for (int k = 0; k < tdim; ++k) points << ",tgt_" << k;
  points << '\n';
  points.precision(17);
  for (size_t i = 0; i < run.fixture.node_names.size(); ++i) {
    const Vec src = run.fixture.coords.col(static_cast<int>(i));
    const Vec tgt = run.net.forward(src);
    points << run.fixture.node_names[i] << ',' << run.fixture.roles[i] << ','
           << src[0] << ',' << src[1];
    for (int k = 0; k < tdim; ++k) points << ',' << tgt[k];
    points << '\n';
  }
  std::ofstream edges(out_dir + "/edges.csv");
  if (!edges) throw DataError("cannot write " + out_dir + "/edges.csv");
  edges << "u,v\n";
  for (const auto& [a, b] : run.fixture.edges)
    edges << run.fixture.node_names[static_cast<size_t>(a)] << ','
          << run.fixture.node_names[static_cast<size_t>(b)] << '\n';
}

}  // namespace retrofit
