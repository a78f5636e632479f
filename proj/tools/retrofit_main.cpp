// retrofit: train/evaluate/transform embeddings on Riemannian manifolds.
//
// Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 numerical failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "retrofit/baselines.hpp"
#include "retrofit/config.hpp"
#include "retrofit/fixtures.hpp"

namespace fs = std::filesystem;
using namespace retrofit;

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

constexpr const char* kMetricsHeader =
    "schema,epoch,split,map,skipped_queries,fidelity,preservation,"
    "weight_fidelity,weight_preservation,floored,skipped_updates,"
    "index_recall\n";

std::string metrics_row(const std::string& split, int epoch, double map,
                        int skipped, const EpochRow* row) {
  std::string s = "metrics_v1," + std::to_string(epoch) + "," + split + ",";
  s += map < 0 ? "" : fmt(map);
  s += "," + std::to_string(skipped) + ",";
  if (row) {
    s += fmt(row->fidelity) + "," + fmt(row->preservation) + "," +
         fmt(row->weight_fidelity) + "," + fmt(row->weight_preservation) + "," +
         std::to_string(row->floored) + "," +
         std::to_string(row->skipped_updates) + "," + fmt(row->index_recall);
  } else {
    s += ",,,,,,";
  }
  return s + "\n";
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_override) {
  RunConfig cfg = load_config(config_path);
  if (seed) {
    cfg.seed = *seed;
    cfg.optim.seed = *seed;
  }
  if (!out_override.empty()) cfg.out = out_override;
  fs::create_directories(cfg.out);
  write_text(cfg.out + "/config.json", config_to_json(cfg).dump(2) + "\n");

  GraphDataset ds = load_dataset(cfg);
  std::ofstream metrics(cfg.out + "/metrics.csv");
  metrics << kMetricsHeader;

  if (cfg.loss.variant == LossVariant::kStandard) {
    const Mat targets = run_standard_retrofit(ds, cfg.sr);
    const MapResult val = cosine_map(ds, Split::kVal, targets);
    metrics << metrics_row("val", cfg.sr.iterations, val.map, val.skipped,
                           nullptr);
    std::ofstream table(cfg.out + "/retrofitted.txt");
    table << "# manifold E" << ds.embedding_dim() << "\n";
    table.precision(17);
    for (int i = 0; i < ds.node_count(); ++i) {
      table << ds.names[static_cast<size_t>(i)];
      for (int k = 0; k < ds.embedding_dim(); ++k) table << ' ' << targets(k, i);
      table << '\n';
    }
    std::cout << "standard retrofitting: val mAP " << val.map << "\n";
    return 0;
  }

  const auto chain = cfg.resolve_architecture(ds.embedding_dim());
  std::vector<Nonlinearity> sigmas(chain.size() - 1,
                                   parse_nonlinearity(cfg.hidden_nonlinearity));
  sigmas.back() = Nonlinearity::kIdentity;
  Rng rng(cfg.seed);
  RiemannianNetwork net = init_network(chain, sigmas, rng);

  const EvalDistance eval_dist = cfg.loss.variant == LossVariant::kExplicit
                                     ? EvalDistance::kCosine
                                     : cfg.eval.distance;
  Trainer trainer(net, ds, cfg.loss, cfg.optim, cfg.neighbors, eval_dist);
  const FitResult fit = trainer.fit([&](const EpochRow& row) {
    metrics << metrics_row("train", row.epoch, -1.0, 0, &row);
    if (row.val_map >= 0)
      metrics << metrics_row("val", row.epoch, row.val_map, row.val_skipped,
                             nullptr);
  });

  save_checkpoint(net, cfg.out + "/checkpoint.json");
  std::cout << "trained " << net.architecture_string() << ": best val mAP "
            << fit.best_val_map << " at epoch " << fit.best_epoch << " ("
            << fit.epochs_run << " epochs run)\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint,
                 const std::string& split_name) {
  RunConfig cfg = load_config(config_path);
  GraphDataset ds = load_dataset(cfg);
  const Split split = parse_split(split_name);

  MapResult res;
  if (checkpoint == "identity" || checkpoint.empty()) {
    res = cosine_map(ds, split, ds.embeddings);
    std::cout << "identity(cosine) " << split_name << " mAP " << fmt(res.map)
              << " queries " << res.queries << " skipped " << res.skipped
              << "\n";
    return 0;
  }
  RiemannianNetwork net = load_checkpoint(checkpoint);
  diff::Engine engine(net.program());
  Mat table(net.target().ambient_dim, ds.node_count());
  for (int i = 0; i < ds.node_count(); ++i)
    table.col(i) = engine.forward(net.params(), ds.embeddings.col(i));
  const EvalDistance dist = cfg.loss.variant == LossVariant::kExplicit
                                ? EvalDistance::kCosine
                                : cfg.eval.distance;
  res = dist == EvalDistance::kGeodesic
            ? geodesic_map(ds, split, net.target(), table)
            : cosine_map(ds, split, table);
  std::cout << format_eval_distance(dist) << " " << split_name << " mAP "
            << fmt(res.map) << " queries " << res.queries << " skipped "
            << res.skipped << "\n";
  return 0;
}

int cmd_transform(const std::string& checkpoint, const std::string& in_path,
                  const std::string& out_path, int dim) {
  RiemannianNetwork net = load_checkpoint(checkpoint);
  const auto table = load_embeddings(in_path, dim);
  std::vector<std::string> tokens;
  tokens.reserve(table.size());
  for (const auto& [tok, _] : table) tokens.push_back(tok);
  std::sort(tokens.begin(), tokens.end());

  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write '" + out_path + "'");
  out << "# manifold " << format_manifold(net.target()) << "\n";
  out.precision(17);
  diff::Engine engine(net.program());
  for (const auto& tok : tokens) {
    const Vec y = engine.forward(net.params(), table.at(tok));
    out << tok;
    for (int k = 0; k < y.size(); ++k) out << ' ' << y[k];
    out << '\n';
  }
  std::cout << "transformed " << tokens.size() << " embeddings onto "
            << format_manifold(net.target()) << "\n";
  return 0;
}

int cmd_split(const std::string& edges_path, const std::vector<double>& ratios,
              std::uint64_t seed, const std::string& out_path) {
  if (ratios.size() != 3) throw ConfigError("--ratios needs three values");
  LoadStats stats;
  const EdgeList el = load_edges(edges_path, &stats);
  // Synthesize unit embeddings so the split can be generated without a
  // vector file; labels depend only on the vocabulary order and seed.
  std::unordered_map<std::string, Vec> dummy;
  for (const auto& name : el.names) dummy[name] = Vec::Ones(1);
  GraphDataset ds = assemble_dataset(el, dummy);
  make_splits(ds, {ratios[0], ratios[1], ratios[2]}, seed);
  write_split_file(ds, out_path);
  std::cout << "split " << ds.node_count() << " nodes: "
            << ds.nodes_in_split(Split::kTrain).size() << "/"
            << ds.nodes_in_split(Split::kVal).size() << "/"
            << ds.nodes_in_split(Split::kTest).size() << ", edges "
            << ds.train_edges.size() << "/" << ds.val_edges.size() << "/"
            << ds.test_edges.size() << " -> " << out_path << "\n";
  return 0;
}

int cmd_check_grad(const std::string& config_path, bool corrupt) {
  RunConfig cfg = load_config(config_path);
  GraphDataset ds = load_dataset(cfg);
  auto chain = cfg.resolve_architecture(ds.embedding_dim());
  // Gradient checks run on a thin copy of the architecture; finite
  // differences over the full hidden width would be needlessly slow.
  for (size_t i = 1; i + 1 < chain.size(); ++i)
    if (chain[i].pure_euclidean() && chain[i].ambient_dim > 16)
      chain[i] = ManifoldDescriptor::euclidean(16);
  Rng rng(cfg.seed);
  RiemannianNetwork net = init_network(chain, rng);

  if (corrupt) diff::set_corrupt_tanh_derivative(true);

  LossConfig loss = cfg.loss;
  OptimConfig opt = cfg.optim;
  opt.batch_size = 4;
  NeighborConfig ncfg = cfg.neighbors;
  ncfg.k = 4;
  Trainer trainer(net, ds, loss, opt, ncfg);

  std::vector<std::pair<int, int>> batch(
      ds.train_edges.begin(),
      ds.train_edges.begin() + std::min<size_t>(4, ds.train_edges.size()));
  std::vector<int> vertices;
  for (const auto& [u, v] : batch) {
    vertices.push_back(u);
    vertices.push_back(v);
  }
  std::sort(vertices.begin(), vertices.end());
  vertices.erase(std::unique(vertices.begin(), vertices.end()),
                 vertices.end());
  const auto negatives = trainer.sample_negatives(batch);

  diff::GradTable fid = diff::ParamStore::zeros_like(net.program());
  diff::GradTable pre = diff::ParamStore::zeros_like(net.program());
  trainer.compute_gradients(batch, vertices, negatives, fid, pre);

  // Finite differences of the combined objective (weights 1, matching the
  // analytic tables' sum) over every parameter block.
  auto objective = [&]() {
    // one directed fidelity term per edge orientation, negatives frozen
    std::vector<std::pair<Vec, Vec>> edge_sources;
    std::vector<std::vector<Vec>> negs;
    for (size_t e = 0; e < batch.size(); ++e) {
      for (int orient = 0; orient < 2; ++orient) {
        const int u = orient == 0 ? batch[e].first : batch[e].second;
        const int v = orient == 0 ? batch[e].second : batch[e].first;
        edge_sources.emplace_back(ds.embeddings.col(u), ds.embeddings.col(v));
        std::vector<Vec> xs;
        for (int x : negatives[2 * e + static_cast<size_t>(orient)])
          xs.push_back(net.forward(ds.embeddings.col(x)));
        negs.push_back(std::move(xs));
      }
    }
    std::vector<Vec> verts;
    for (int w : vertices) verts.push_back(ds.embeddings.col(w));
    if (loss.variant == LossVariant::kExplicit) {
      double fid_sum = 0.0;
      for (size_t e = 0; e < edge_sources.size(); ++e)
        fid_sum += cr_fidelity(net.target(),
                               net.forward(edge_sources[e].first),
                               net.forward(edge_sources[e].second), negs[e],
                               loss.margin);
      double pre_sum = 0.0;
      for (const Vec& w : verts)
        pre_sum += loss.lambda_balance * proximity_loss(w, net.forward(w));
      return fid_sum + pre_sum;
    }
    const ObjectiveTerms t = total_conformal_objective(
        net, edge_sources, negs, verts, loss, 1.0, 1.0);
    return t.total;
  };

  // The hinge's negative SET is frozen above; finite differences stay valid
  // because the set only changes at hinge boundaries, which the analytic
  // subgradient convention also treats as frozen.
  double worst = 0.0;
  std::string worst_name = "-";
  const double h = 1e-5;
  auto& params = net.params();
  const auto& prog = net.program();
  auto check_block = [&](const std::string& name, double* data, int size,
                         const double* analytic) {
    double max_rel = 0.0;
    Rng pick(12345);
    const int samples = std::min(size, 24);
    for (int s = 0; s < samples; ++s) {
      const int i = static_cast<int>(pick.uniform_index(size));
      const double save = data[i];
      data[i] = save + h;
      const double hi = objective();
      data[i] = save - h;
      const double lo = objective();
      data[i] = save;
      const double fd = (hi - lo) / (2.0 * h);
      const double an = analytic[i];
      const double rel = std::abs(fd - an) / std::max(1.0, std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
    std::cout << "  " << name << ": max rel err " << fmt(max_rel) << "\n";
    if (max_rel > worst) {
      worst = max_rel;
      worst_name = name;
    }
  };

  std::cout << "gradient check (" << format_variant(loss.variant) << ")\n";
  for (size_t i = 0; i < params.mats.size(); ++i) {
    Mat analytic = fid.mats[i] + pre.mats[i];
    check_block(prog.mat_params()[i].name, params.mats[i].data(),
                static_cast<int>(params.mats[i].size()), analytic.data());
  }
  for (size_t i = 0; i < params.vecs.size(); ++i) {
    Vec analytic = fid.vecs[i] + pre.vecs[i];
    check_block(prog.vec_params()[i].name, params.vecs[i].data(),
                static_cast<int>(params.vecs[i].size()), analytic.data());
  }
  diff::set_corrupt_tanh_derivative(false);

  const bool ok = worst <= 1e-4;
  std::cout << (ok ? "PASS" : "FAIL") << ": worst block " << worst_name
            << " rel err " << fmt(worst) << " (tolerance 1e-4)\n";
  return ok ? 0 : 4;
}

int cmd_figure_data(const std::string& which, const std::string& variant,
                    const std::string& target, const std::string& out_dir,
                    std::uint64_t seed, int epochs) {
  FixtureTrainOptions options;
  options.variant = parse_variant(variant);
  options.target = target;
  options.seed = seed;
  if (epochs > 0) options.epochs = epochs;
  FixtureRun run = run_fixture(which, options);
  write_figure_csv(run, out_dir);
  std::cout << "fixture " << which << " variant " << variant << " target "
            << target << ": mean edge hinge " << fmt(run.mean_hinge) << "\n";
  if (which == "cycle" && run.net.target().pure_euclidean() &&
      run.net.target().ambient_dim == 2) {
    const double distortion =
        grid_area_distortion(run.net, -2.0, 2.0, -1.2, 1.2, 12, 8);
    std::cout << "cycle grid area distortion " << fmt(distortion) << "\n";
    write_text(out_dir + "/diagnostics.csv",
               "metric,value\nmean_edge_hinge," + fmt(run.mean_hinge) +
                   "\narea_distortion," + fmt(distortion) + "\n");
  } else {
    write_text(out_dir + "/diagnostics.csv",
               "metric,value\nmean_edge_hinge," + fmt(run.mean_hinge) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conformal retrofitting of embeddings onto Riemannian manifolds"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, split_name = "test";
  std::string in_path, out_path, out_dir, which, variant = "conformal";
  std::string target = "E2";
  std::vector<double> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  bool seed_set = false;
  int dim = 50;
  int epochs = -1;
  bool corrupt = false;

  auto* train = app.add_subcommand("train", "train a retrofitting model");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
    seed_set = true;
  });
  train->add_option("--out", out_dir, "output directory override");

  auto* evaluate = app.add_subcommand("evaluate", "mAP of a checkpoint");
  evaluate->add_option("--config", config_path, "run config JSON")->required();
  evaluate->add_option("--checkpoint", checkpoint,
                       "checkpoint path or 'identity' for the raw-embedding "
                       "cosine baseline")
      ->required();
  evaluate->add_option("--split", split_name, "train|val|test");

  auto* transform = app.add_subcommand("transform", "transform an embedding file");
  transform->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  transform->add_option("--in", in_path, "embeddings in")->required();
  transform->add_option("--out", out_path, "embeddings out")->required();
  transform->add_option("--dim", dim, "embedding dimension");

  auto* split = app.add_subcommand("split", "generate a node split file");
  split->add_option("--edges", in_path, "edge file")->required();
  split->add_option("--ratios", ratios, "train val test ratios")->expected(3);
  split->add_option("--seed", seed, "shuffle seed");
  split->add_option("--out", out_path, "split file out")->required();

  auto* figure = app.add_subcommand("figure-data", "emit synthetic fixture CSVs");
  figure->add_option("--which", which, "crossed|cycle|tree")->required();
  figure->add_option("--variant", variant, "standard|explicit|conformal");
  figure->add_option("--target", target, "target manifold, e.g. H2");
  figure->add_option("--out", out_dir, "output directory")->required();
  figure->add_option("--seed", seed, "seed");
  figure->add_option("--epochs", epochs, "training epochs");

  auto* check = app.add_subcommand("check-grad", "analytic vs finite-difference gradients");
  check->add_option("--config", config_path, "run config JSON")->required();
  check->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
    seed_set = true;
  });
  auto* corrupt_flag = check->add_flag("--corrupt-derivative", corrupt,
                                       "inject a broken tanh derivative");
  corrupt_flag->group("");  // test hook, hidden from help

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed())
      return cmd_train(config_path,
                       seed_set ? std::optional<std::uint64_t>(seed)
                                : std::nullopt,
                       out_dir);
    if (evaluate->parsed()) return cmd_evaluate(config_path, checkpoint, split_name);
    if (transform->parsed()) return cmd_transform(checkpoint, in_path, out_path, dim);
    if (split->parsed()) return cmd_split(in_path, ratios, seed, out_path);
    if (figure->parsed())
      return cmd_figure_data(which, variant, target, out_dir, seed, epochs);
    if (check->parsed()) return cmd_check_grad(config_path, corrupt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
