#include "retrofit/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace retrofit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_keys(const Json& j, const std::set<std::string>& allowed,
                const std::string& path) {
  if (!j.is_object()) throw ConfigError("expected object at " + path);
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError("unknown config key '" + path + key + "'");
}

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

// C may be a number or the string "inf".
double parse_c_value(const Json& v, const std::string& where) {
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return kInf;
    throw ConfigError(where + ": expected a number or \"inf\"");
  }
  if (!v.is_number()) throw ConfigError(where + ": expected a number or \"inf\"");
  const double c = v.get<double>();
  if (c < 0) throw ConfigError(where + ": C must be >= 0");
  return c;
}

std::string label_key(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v.get<double>());
  return buf;
}

}  // namespace

std::vector<ManifoldDescriptor> RunConfig::resolve_architecture(
    int source_dim) const {
  if (!architecture.empty()) {
    auto chain = parse_architecture(architecture);
    if (chain.front().ambient_dim != source_dim)
      throw ConfigError("architecture source dimension " +
                        std::to_string(chain.front().ambient_dim) +
                        " differs from embedding dimension " +
                        std::to_string(source_dim));
    return chain;
  }
  if (target_manifold.empty())
    throw ConfigError("config needs either 'architecture' or 'target_manifold'");
  std::vector<ManifoldDescriptor> chain;
  chain.push_back(ManifoldDescriptor::euclidean(source_dim));
  for (int i = 0; i < hidden_depth; ++i)
    chain.push_back(ManifoldDescriptor::euclidean(hidden_width));
  chain.push_back(parse_manifold(target_manifold));
  return chain;
}

RunConfig parse_config(const Json& j) {
  check_keys(j, {"dataset", "architecture", "target_manifold", "hidden_width",
                 "hidden_depth", "hidden_nonlinearity", "loss", "optim",
                 "neighbors", "eval", "sr", "seed", "out"},
             "");
  RunConfig cfg;

  if (!j.contains("dataset")) throw ConfigError("missing 'dataset' section");
  const Json& d = j.at("dataset");
  check_keys(d, {"edges", "embeddings", "split", "embedding_dim"}, "dataset.");
  cfg.dataset.edges = get_or<std::string>(d, "edges", "");
  cfg.dataset.embeddings = get_or<std::string>(d, "embeddings", "");
  cfg.dataset.split = get_or<std::string>(d, "split", "");
  cfg.dataset.embedding_dim = get_or<int>(d, "embedding_dim", 50);
  if (cfg.dataset.edges.empty() || cfg.dataset.embeddings.empty())
    throw ConfigError("dataset.edges and dataset.embeddings are required");

  cfg.architecture = get_or<std::string>(j, "architecture", "");
  cfg.target_manifold = get_or<std::string>(j, "target_manifold", "");
  if (!cfg.architecture.empty() && !cfg.target_manifold.empty())
    throw ConfigError("give either 'architecture' or 'target_manifold', not both");
  cfg.hidden_width = get_or<int>(j, "hidden_width", 1600);
  cfg.hidden_depth = get_or<int>(j, "hidden_depth", 2);
  cfg.hidden_nonlinearity = get_or<std::string>(j, "hidden_nonlinearity", "tanh");
  parse_nonlinearity(cfg.hidden_nonlinearity);

  if (j.contains("loss")) {
    const Json& l = j.at("loss");
    check_keys(l,
               {"variant", "lambda", "margin", "conformality_c",
                "conformality_neg_log_c", "conformality_label_table",
                "distance_kind", "neighbor_count", "er_squared_fidelity"},
               "loss.");
    cfg.loss.variant = parse_variant(get_or<std::string>(l, "variant", "conformal"));
    cfg.loss.lambda_balance = get_or<double>(l, "lambda", 1.0);
    cfg.loss.margin = get_or<double>(l, "margin", 1.0);
    if (cfg.loss.margin <= 0) throw ConfigError("loss.margin must be > 0");
    cfg.loss.distance_kind =
        parse_distance_kind(get_or<std::string>(l, "distance_kind", "euclidean"));
    cfg.loss.neighbor_count = get_or<int>(l, "neighbor_count", 50);
    if (cfg.loss.neighbor_count < 1)
      throw ConfigError("loss.neighbor_count must be >= 1");
    cfg.loss.er_squared_fidelity = get_or<bool>(l, "er_squared_fidelity", false);

    const bool has_c = l.contains("conformality_c") && !l.at("conformality_c").is_null();
    const bool has_label = l.contains("conformality_neg_log_c") &&
                           !l.at("conformality_neg_log_c").is_null();
    if (has_c && has_label)
      throw ConfigError(
          "give either loss.conformality_c or loss.conformality_neg_log_c, "
          "not both");
    if (has_c) {
      cfg.loss.conformality_c = parse_c_value(l.at("conformality_c"),
                                              "loss.conformality_c");
    } else if (has_label) {
      // The reported -log(C) values are opaque labels; an explicit table maps
      // them to C because the paper's stated correspondence (0 -> C=inf) has
      // no consistent closed form.
      if (!l.contains("conformality_label_table") ||
          l.at("conformality_label_table").is_null())
        throw ConfigError(
            "loss.conformality_neg_log_c needs loss.conformality_label_table");
      const Json& table = l.at("conformality_label_table");
      const std::string key = label_key(l.at("conformality_neg_log_c"));
      if (!table.contains(key))
        throw ConfigError("conformality label '" + key +
                          "' missing from loss.conformality_label_table");
      cfg.loss.conformality_c =
          parse_c_value(table.at(key), "conformality_label_table[" + key + "]");
    }
  }

  if (j.contains("optim")) {
    const Json& o = j.at("optim");
    check_keys(o,
               {"euclidean_lr", "riemannian_lr", "batch_size", "epochs",
                "gradnorm", "patience", "preservation_sample"},
               "optim.");
    cfg.optim.euclidean_lr = get_or<double>(o, "euclidean_lr", 1e-3);
    cfg.optim.riemannian_lr = get_or<double>(o, "riemannian_lr", 1e-3);
    cfg.optim.batch_size = get_or<int>(o, "batch_size", 128);
    cfg.optim.epochs = get_or<int>(o, "epochs", 200);
    cfg.optim.patience = get_or<int>(o, "patience", 50);
    cfg.optim.preservation_sample = get_or<int>(o, "preservation_sample", 0);
    if (o.contains("gradnorm")) {
      const Json& g = o.at("gradnorm");
      check_keys(g, {"enabled", "beta"}, "optim.gradnorm.");
      cfg.optim.gradnorm_enabled = get_or<bool>(g, "enabled", true);
      cfg.optim.gradnorm_beta = get_or<double>(g, "beta", 0.9);
    }
  }

  if (j.contains("neighbors")) {
    const Json& n = j.at("neighbors");
    check_keys(n, {"k", "refresh_period"}, "neighbors.");
    cfg.neighbors.k = get_or<int>(n, "k", 50);
    cfg.neighbors.refresh_period = get_or<long>(n, "refresh_period", 0);
  }

  if (j.contains("eval")) {
    const Json& e = j.at("eval");
    check_keys(e, {"distance", "every"}, "eval.");
    cfg.eval.distance =
        parse_eval_distance(get_or<std::string>(e, "distance", "geodesic"));
    cfg.eval.every = get_or<int>(e, "every", 1);
  }

  if (j.contains("sr")) {
    const Json& s = j.at("sr");
    check_keys(s, {"lambda", "lr", "iterations"}, "sr.");
    cfg.sr.lambda = get_or<double>(s, "lambda", 1.0);
    cfg.sr.lr = get_or<double>(s, "lr", 0.0);
    cfg.sr.iterations = get_or<int>(s, "iterations", 200);
  }

  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  cfg.optim.seed = cfg.seed;
  cfg.eval.every = std::max(1, cfg.eval.every);
  cfg.optim.eval_every = cfg.eval.every;
  cfg.out = get_or<std::string>(j, "out", "runs/run");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("bad JSON in '" + path + "': " + e.what());
  }
  return parse_config(j);
}

Json config_to_json(const RunConfig& cfg) {
  Json j;
  j["dataset"] = {{"edges", cfg.dataset.edges},
                  {"embeddings", cfg.dataset.embeddings},
                  {"split", cfg.dataset.split},
                  {"embedding_dim", cfg.dataset.embedding_dim}};
  j["architecture"] = cfg.architecture;
  j["target_manifold"] = cfg.target_manifold;
  j["hidden_width"] = cfg.hidden_width;
  j["hidden_depth"] = cfg.hidden_depth;
  j["hidden_nonlinearity"] = cfg.hidden_nonlinearity;
  Json c;
  if (cfg.loss.conformality_c == kInf)
    c = "inf";
  else
    c = cfg.loss.conformality_c;
  j["loss"] = {{"variant", format_variant(cfg.loss.variant)},
               {"lambda", cfg.loss.lambda_balance},
               {"margin", cfg.loss.margin},
               {"conformality_c", c},
               {"distance_kind", format_distance_kind(cfg.loss.distance_kind)},
               {"neighbor_count", cfg.loss.neighbor_count},
               {"er_squared_fidelity", cfg.loss.er_squared_fidelity}};
  j["optim"] = {{"euclidean_lr", cfg.optim.euclidean_lr},
                {"riemannian_lr", cfg.optim.riemannian_lr},
                {"batch_size", cfg.optim.batch_size},
                {"epochs", cfg.optim.epochs},
                {"gradnorm",
                 {{"enabled", cfg.optim.gradnorm_enabled},
                  {"beta", cfg.optim.gradnorm_beta}}},
                {"patience", cfg.optim.patience},
                {"preservation_sample", cfg.optim.preservation_sample}};
  j["neighbors"] = {{"k", cfg.neighbors.k},
                    {"refresh_period", cfg.neighbors.refresh_period}};
  j["eval"] = {{"distance", format_eval_distance(cfg.eval.distance)},
               {"every", cfg.eval.every}};
  j["sr"] = {{"lambda", cfg.sr.lambda},
             {"lr", cfg.sr.lr},
             {"iterations", cfg.sr.iterations}};
  j["seed"] = cfg.seed;
  j["out"] = cfg.out;
  return j;
}

GraphDataset load_dataset(const RunConfig& cfg) {
  LoadStats stats;
  const EdgeList edges = load_edges(cfg.dataset.edges, &stats);
  const auto table =
      load_embeddings(cfg.dataset.embeddings, cfg.dataset.embedding_dim);
  GraphDataset ds = assemble_dataset(edges, table, &stats);
  if (stats.self_loops_dropped || stats.duplicate_edges ||
      stats.nodes_without_embedding)
    std::fprintf(stderr,
                 "[retrofit] dataset: %d self-loops dropped, %d duplicate "
                 "edges, %d nodes without embeddings (%d edges dropped)\n",
                 stats.self_loops_dropped, stats.duplicate_edges,
                 stats.nodes_without_embedding, stats.edges_dropped_with_nodes);
  if (!cfg.dataset.split.empty())
    apply_split_file(ds, cfg.dataset.split);
  else
    make_splits(ds, {0.8, 0.1, 0.1}, cfg.seed);
  return ds;
}

Json checkpoint_to_json(const RiemannianNetwork& net) {
  Json j;
  j["version"] = 1;
  j["architecture"] = net.architecture_string();
  Json sigmas = Json::array();
  for (int i = 0; i < net.layer_count(); ++i)
    sigmas.push_back(format_nonlinearity(net.spec(i).sigma));
  j["nonlinearities"] = sigmas;
  Json params = Json::object();
  const auto& prog = net.program();
  const auto& store = net.params();
  for (size_t i = 0; i < prog.mat_params().size(); ++i) {
    const auto& spec = prog.mat_params()[i];
    Json data = Json::array();
    const Mat& m = store.mats[i];
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    params[spec.name] = {{"rows", spec.rows}, {"cols", spec.cols},
                         {"data", std::move(data)}};
  }
  for (size_t i = 0; i < prog.vec_params().size(); ++i) {
    const auto& spec = prog.vec_params()[i];
    Json data = Json::array();
    for (int k = 0; k < store.vecs[i].size(); ++k)
      data.push_back(store.vecs[i][k]);
    params[spec.name] = {{"len", spec.len}, {"data", std::move(data)}};
  }
  j["params"] = std::move(params);
  return j;
}

RiemannianNetwork network_from_checkpoint(const Json& j) {
  if (!j.contains("version") || j.at("version").get<int>() != 1)
    throw ConfigError("unsupported checkpoint version");
  const auto chain = parse_architecture(j.at("architecture").get<std::string>());
  std::vector<Nonlinearity> sigmas;
  for (const auto& s : j.at("nonlinearities"))
    sigmas.push_back(parse_nonlinearity(s.get<std::string>()));
  std::vector<LayerSpec> specs;
  for (size_t i = 0; i + 1 < chain.size(); ++i)
    specs.push_back({chain[i], chain[i + 1], sigmas.at(i)});
  RiemannianNetwork net(std::move(specs));
  const Json& params = j.at("params");
  const auto& prog = net.program();
  for (size_t i = 0; i < prog.mat_params().size(); ++i) {
    const auto& spec = prog.mat_params()[i];
    if (!params.contains(spec.name))
      throw ConfigError("checkpoint missing parameter '" + spec.name + "'");
    const Json& p = params.at(spec.name);
    if (p.at("rows").get<int>() != spec.rows ||
        p.at("cols").get<int>() != spec.cols)
      throw ConfigError("checkpoint parameter '" + spec.name + "' has wrong shape");
    Mat m(spec.rows, spec.cols);
    const Json& data = p.at("data");
    int idx = 0;
    for (int r = 0; r < spec.rows; ++r)
      for (int c = 0; c < spec.cols; ++c) m(r, c) = data.at(idx++).get<double>();
    net.params().mats[i] = std::move(m);
  }
  for (size_t i = 0; i < prog.vec_params().size(); ++i) {
    const auto& spec = prog.vec_params()[i];
    if (!params.contains(spec.name))
      throw ConfigError("checkpoint missing parameter '" + spec.name + "'");
    const Json& p = params.at(spec.name);
    Vec v(spec.len);
    const Json& data = p.at("data");
    for (int k = 0; k < spec.len; ++k) v[k] = data.at(k).get<double>();
    net.params().vecs[i] = std::move(v);
  }
  return net;
}

void save_checkpoint(const RiemannianNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(net).dump(2) << '\n';
}

RiemannianNetwork load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw DataError("bad checkpoint JSON in '" + path + "': " + e.what());
  }
  return network_from_checkpoint(j);
}

}  // namespace retrofit
