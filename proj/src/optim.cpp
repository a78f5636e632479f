#include "retrofit/optim.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace retrofit {

namespace {

// Adam over a flat array view; shared by vector and matrix parameters.
void adam_update(Eigen::Map<Eigen::ArrayXd> param,
                 Eigen::Map<const Eigen::ArrayXd> grad,
                 Eigen::ArrayXd& m, Eigen::ArrayXd& v, long t, double lr,
                 double beta1, double beta2, double eps) {
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.square();
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  param -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
}

}  // namespace

Vec rsgd_step(const ManifoldDescriptor& m, const Vec& p, const Vec& grad,
              double lr, int* skipped) {
  if (!grad.allFinite()) {
    if (skipped) ++*skipped;
    return p;
  }
  Vec rgrad(m.ambient_dim);
  int off = 0;
  for (int i = 0; i < m.factor_count(); ++i) {
    const ManifoldDescriptor& f = m.factor(i);
    const auto ps = p.segment(off, f.ambient_dim);
    const auto gs = grad.segment(off, f.ambient_dim);
    auto rs = rgrad.segment(off, f.ambient_dim);
    switch (f.kind) {
      case ManifoldKind::Euclidean:
        rs = gs;
        break;
      case ManifoldKind::Sphere:
        rs = gs - ps.dot(gs) * ps;
        break;
      case ManifoldKind::PoincareBall: {
        const double scale = (1.0 - ps.squaredNorm()) / 2.0;
        rs = (scale * scale) * gs;
        break;
      }
      case ManifoldKind::Product:
        break;
    }
    off += f.ambient_dim;
  }
  return clamp_to_manifold(m, exp_map(m, p, Vec(-lr * rgrad)));
}

Vec adam_step(AdamMoments& state, const Vec& param, const Vec& grad, double lr,
              double beta1, double beta2, double eps) {
  if (state.m.size() != param.size()) {
    state.m = Vec::Zero(param.size());
    state.v = Vec::Zero(param.size());
    state.t = 0;
  }
  Vec out = param;
  ++state.t;
  Eigen::ArrayXd m = state.m.array();
  Eigen::ArrayXd v = state.v.array();
  adam_update(Eigen::Map<Eigen::ArrayXd>(out.data(), out.size()),
              Eigen::Map<const Eigen::ArrayXd>(grad.data(), grad.size()), m, v,
              state.t, lr, beta1, beta2, eps);
  state.m = m.matrix();
  state.v = v.matrix();
  return out;
}

std::vector<double> gradnorm_weights(const std::vector<double>& norms,
                                     GradNormState& state) {
  const size_t k = norms.size();
  if (k == 0) return {};
  if (state.ema.size() != k) {
    state.ema.assign(k, 0.0);
    state.initialized = false;
  }
  for (size_t i = 0; i < k; ++i) {
    const double n = std::max(norms[i], 1e-12);
    state.ema[i] = state.initialized
                       ? state.beta * state.ema[i] + (1.0 - state.beta) * n
                       : n;
  }
  state.initialized = true;
  double log_sum = 0.0;
  for (double e : state.ema) log_sum += std::log(e);
  const double geomean = std::exp(log_sum / static_cast<double>(k));
  std::vector<double> w(k);
  double total = 0.0;
  for (size_t i = 0; i < k; ++i) {
    w[i] = geomean / state.ema[i];
    total += w[i];
  }
  for (size_t i = 0; i < k; ++i) w[i] *= static_cast<double>(k) / total;
  return w;
}

Trainer::Trainer(RiemannianNetwork& net, const GraphDataset& data,
                 const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                 const NeighborConfig& neighbor_cfg, EvalDistance eval_distance)
    : net_(&net),
      data_(&data),
      loss_(loss_cfg),
      opt_(optim_cfg),
      ncfg_(neighbor_cfg),
      eval_distance_(eval_distance),
      engine_(net.program()),
      rng_(optim_cfg.seed) {
  if (net.source().ambient_dim != data.embedding_dim())
    throw ConfigError("network source dimension " +
                      std::to_string(net.source().ambient_dim) +
                      " differs from embedding dimension " +
                      std::to_string(data.embedding_dim()));
  if (loss_.variant == LossVariant::kStandard)
    throw ConfigError("standard retrofitting does not train a network");
  if (loss_.variant == LossVariant::kExplicit) {
    if (!net.target().pure_euclidean())
      throw ConfigError("explicit retrofitting requires a Euclidean target");
    if (net.target().ambient_dim != data.embedding_dim())
      throw ConfigError(
          "explicit retrofitting needs matching source/target dimensions for "
          "the proximity term");
  }
  if (loss_.variant == LossVariant::kConformal &&
      net.target().intrinsic_dim < net.source().intrinsic_dim) {
    // F is necessarily rank deficient; the eigenvalue floor absorbs it.
    std::fprintf(stderr,
                 "[retrofit] warning: target intrinsic dim %d < source %d; "
                 "pullback metrics are singular by construction\n",
                 net.target().intrinsic_dim, net.source().intrinsic_dim);
  }
  train_ids_ = data.nodes_in_split(Split::kTrain);
  if (train_ids_.empty()) throw DataError("no train nodes");
  edge_order_ = data.train_edges;
  if (edge_order_.empty()) throw DataError("no train edges");
  const int batch = std::max(1, opt_.batch_size);
  steps_per_epoch_ =
      static_cast<int>((edge_order_.size() + batch - 1) / batch);
  if (ncfg_.refresh_period <= 0) ncfg_.refresh_period = steps_per_epoch_;

  measure_layer_ = std::max(0, net.layer_count() - 2);
  gradnorm_.beta = opt_.gradnorm_beta;

  const auto& prog = net.program();
  mat_moments_.resize(prog.mat_params().size());
  vec_moments_.resize(prog.vec_params().size());
  vec_is_riemannian_.resize(prog.vec_params().size(), false);
  vec_manifold_.resize(prog.vec_params().size());
  for (int i = 0; i < net.layer_count(); ++i) {
    const auto& spec = net.spec(i);
    const int bs = prog.find_vec_param(RiemannianNetwork::bs_name(i));
    const int bt = prog.find_vec_param(RiemannianNetwork::bt_name(i));
    vec_manifold_[static_cast<size_t>(bs)] = spec.source;
    vec_manifold_[static_cast<size_t>(bt)] = spec.target;
    vec_is_riemannian_[static_cast<size_t>(bs)] = spec.source.has_curved_factor();
    vec_is_riemannian_[static_cast<size_t>(bt)] = spec.target.has_curved_factor();
  }
  refresh_index(true);
}

void Trainer::refresh_index(bool force) {
  if (!force && step_count_ - index_.build_step < ncfg_.refresh_period) return;
  std::vector<Vec> embs;
  embs.reserve(train_ids_.size());
  for (int id : train_ids_)
    embs.push_back(engine_.forward(net_->params(), data_->embeddings.col(id)));
  index_ = build_index(net_->target(), train_ids_, embs, step_count_,
                       ncfg_.refresh_period, /*with_recall_diagnostic=*/true,
                       ncfg_.k);
}

std::vector<std::vector<int>> Trainer::sample_negatives(
    const std::vector<std::pair<int, int>>& edge_batch) const {
  // Undirected edges contribute one hinge per orientation, so each edge gets
  // negatives for both endpoints (slots 2e and 2e+1).
  std::vector<std::vector<int>> out;
  out.reserve(2 * edge_batch.size());
  for (const auto& [u, v] : edge_batch) {
    for (int q : {u, v}) {
      std::unordered_set<int> excl(
          data_->neighbors(q, /*train_scope=*/true).begin(),
          data_->neighbors(q, true).end());
      excl.insert(q);
      out.push_back(query_negatives(index_, q, ncfg_.k, excl));
    }
  }
  return out;
}

void Trainer::compute_gradients(
    const std::vector<std::pair<int, int>>& edge_batch,
    const std::vector<int>& vertex_batch,
    const std::vector<std::vector<int>>& negatives,
    diff::GradTable& fidelity_grads, diff::GradTable& preservation_grads,
    StepMetrics* metrics) {
  const ManifoldDescriptor& target = net_->target();
  const diff::ParamStore& params = net_->params();

  if (negatives.size() != 2 * edge_batch.size())
    throw DimMismatch("expected two negative sets per edge (one per endpoint)");
  // Unique nodes touched by the fidelity term.
  std::vector<int> nodes;
  for (size_t e = 0; e < edge_batch.size(); ++e) {
    nodes.push_back(edge_batch[e].first);
    nodes.push_back(edge_batch[e].second);
  }
  for (const auto& negs : negatives)
    for (int x : negs) nodes.push_back(x);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  std::unordered_map<int, int> pos;
  std::vector<Vec> outs(nodes.size());
  std::vector<Vec> adj(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    pos.emplace(nodes[i], static_cast<int>(i));
    outs[i] = engine_.forward(params, data_->embeddings.col(nodes[i]));
    adj[i] = Vec::Zero(target.ambient_dim);
  }

  const bool cosine_fid = loss_.variant == LossVariant::kExplicit &&
                          loss_.distance_kind == DistanceKind::kCosine;
  auto dist_with_grad = [&](const Vec& a, const Vec& b) {
    if (!cosine_fid) return distance_grad(target, a, b);
    DistanceGrad g;
    const double na = a.norm();
    const double nb = b.norm();
    if (na < 1e-300 || nb < 1e-300) {
      g.value = 1.0;
      g.dx = Vec::Zero(a.size());
      g.dy = Vec::Zero(b.size());
      return g;
    }
    const double ab = a.dot(b);
    g.value = 1.0 - ab / (na * nb);
    g.dx = -(b / (na * nb) - (ab / (na * na * na * nb)) * a);
    g.dy = -(a / (na * nb) - (ab / (na * nb * nb * nb)) * b);
    return g;
  };

  double fid_sum = 0.0;
  for (size_t e = 0; e < edge_batch.size(); ++e) {
    for (int orient = 0; orient < 2; ++orient) {
      const int u = orient == 0 ? edge_batch[e].first : edge_batch[e].second;
      const int v = orient == 0 ? edge_batch[e].second : edge_batch[e].first;
      const int iu = pos.at(u);
      const int iv = pos.at(v);
      const DistanceGrad duv = dist_with_grad(outs[static_cast<size_t>(iu)],
                                              outs[static_cast<size_t>(iv)]);
      if (loss_.variant == LossVariant::kExplicit && loss_.er_squared_fidelity) {
        // Literal squared graph-distance fidelity; training pairs are edges,
        // so the graph distance is 1.
        if (orient == 1) continue;  // symmetric term, count once
        const double diff = duv.value - 1.0;
        fid_sum += diff * diff;
        adj[static_cast<size_t>(iu)] += 2.0 * diff * duv.dx;
        adj[static_cast<size_t>(iv)] += 2.0 * diff * duv.dy;
        continue;
      }
      for (int x : negatives[2 * e + static_cast<size_t>(orient)]) {
        const int ix = pos.at(x);
        const DistanceGrad dux = dist_with_grad(outs[static_cast<size_t>(iu)],
                                                outs[static_cast<size_t>(ix)]);
        const double h = loss_.margin + duv.value - dux.value;
        if (h > 0) {
          fid_sum += h;
          adj[static_cast<size_t>(iu)] += duv.dx - dux.dx;
          adj[static_cast<size_t>(iv)] += duv.dy;
          adj[static_cast<size_t>(ix)] -= dux.dy;
        }
      }
    }
  }
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (adj[i].isZero(0.0)) continue;
    engine_.forward(params, data_->embeddings.col(nodes[i]));
    engine_.backward(adj[i], fidelity_grads);
  }

  double pre_sum = 0.0;
  int floored = 0;
  const double lambda = loss_.lambda_balance;
  for (int w : vertex_batch) {
    const Vec src = data_->embeddings.col(w);
    if (loss_.variant == LossVariant::kExplicit) {
      const Vec y = engine_.forward(params, src);
      pre_sum += lambda * (y - src).squaredNorm();
      engine_.backward(Vec(2.0 * lambda * (y - src)), preservation_grads);
      continue;
    }
    pre_sum += lambda * conformality_param_gradients(
                            *net_, engine_, src, loss_.conformality_c, lambda,
                            preservation_grads, &floored);
  }

  if (metrics) {
    metrics->fidelity = fid_sum;
    metrics->preservation = pre_sum;
    metrics->floored = floored;
    metrics->edges = static_cast<int>(edge_batch.size());
  }
}

double Trainer::grad_measure_norm(const diff::GradTable& g) const {
  const int id = net_->program().find_mat_param(
      RiemannianNetwork::mat_name(measure_layer_));
  return g.mats[static_cast<size_t>(id)].norm();
}

void Trainer::apply_updates(const diff::GradTable& fid,
                            const diff::GradTable& pre, double w_fid,
                            double w_pre, StepMetrics* metrics) {
  auto& params = net_->params();
  const auto& prog = net_->program();
  for (size_t i = 0; i < params.mats.size(); ++i) {
    Mat g = w_fid * fid.mats[i] + w_pre * pre.mats[i];
    if (!g.allFinite()) {
      ++skipped_updates_;
      continue;
    }
    AdamMoments& st = mat_moments_[i];
    if (st.m.size() != g.size()) {
      st.m = Vec::Zero(g.size());
      st.v = Vec::Zero(g.size());
      st.t = 0;
    }
    ++st.t;
    Eigen::ArrayXd m = st.m.array();
    Eigen::ArrayXd v = st.v.array();
    adam_update(
        Eigen::Map<Eigen::ArrayXd>(params.mats[i].data(), params.mats[i].size()),
        Eigen::Map<const Eigen::ArrayXd>(g.data(), g.size()), m, v, st.t,
        opt_.euclidean_lr, 0.9, 0.999, 1e-8);
    st.m = m.matrix();
    st.v = v.matrix();
  }
  for (size_t i = 0; i < params.vecs.size(); ++i) {
    Vec g = w_fid * fid.vecs[i] + w_pre * pre.vecs[i];
    if (vec_is_riemannian_[i]) {
      params.vecs[i] = rsgd_step(vec_manifold_[i], params.vecs[i], g,
                                 opt_.riemannian_lr, &skipped_updates_);
    } else {
      if (!g.allFinite()) {
        ++skipped_updates_;
        continue;
      }
      params.vecs[i] =
          adam_step(vec_moments_[i], params.vecs[i], g, opt_.euclidean_lr);
    }
  }
#ifndef NDEBUG
  for (size_t i = 0; i < params.vecs.size(); ++i)
    if (vec_is_riemannian_[i])
      validate_point(vec_manifold_[i], params.vecs[i]);
#endif
  if (metrics) metrics->skipped_updates = skipped_updates_;
  (void)prog;
}

StepMetrics Trainer::step() {
  const int batch = std::max(1, opt_.batch_size);
  const int step_in_epoch = static_cast<int>(step_count_ % steps_per_epoch_);
  if (step_in_epoch == 0) rng_.shuffle(edge_order_);
  refresh_index(false);

  const size_t begin = static_cast<size_t>(step_in_epoch) * batch;
  const size_t end = std::min(edge_order_.size(), begin + batch);
  std::vector<std::pair<int, int>> edge_batch(edge_order_.begin() + begin,
                                              edge_order_.begin() + end);

  std::vector<int> vertices;
  for (const auto& [u, v] : edge_batch) {
    vertices.push_back(u);
    vertices.push_back(v);
  }
  std::sort(vertices.begin(), vertices.end());
  vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
  if (opt_.preservation_sample > 0 &&
      static_cast<int>(vertices.size()) > opt_.preservation_sample) {
    rng_.shuffle(vertices);
    vertices.resize(static_cast<size_t>(opt_.preservation_sample));
    std::sort(vertices.begin(), vertices.end());
  }

  const auto negatives = sample_negatives(edge_batch);

  diff::GradTable fid = diff::ParamStore::zeros_like(net_->program());
  diff::GradTable pre = diff::ParamStore::zeros_like(net_->program());
  StepMetrics metrics;
  compute_gradients(edge_batch, vertices, negatives, fid, pre, &metrics);

  double w_fid = 1.0;
  double w_pre = 1.0;
  if (opt_.gradnorm_enabled) {
    const auto w = gradnorm_weights(
        {grad_measure_norm(fid), grad_measure_norm(pre)}, gradnorm_);
    w_fid = w[0];
    w_pre = w[1];
  }
  metrics.weight_fidelity = w_fid;
  metrics.weight_preservation = w_pre;

  apply_updates(fid, pre, w_fid, w_pre, &metrics);
  ++step_count_;
  return metrics;
}

MapResult Trainer::evaluate_map(Split split) {
  const Mat table = transform_nodes();
  if (eval_distance_ == EvalDistance::kGeodesic)
    return geodesic_map(*data_, split, net_->target(), table);
  return cosine_map(*data_, split, table);
}

Mat Trainer::transform_nodes() {
  Mat out(net_->target().ambient_dim, data_->node_count());
  for (int i = 0; i < data_->node_count(); ++i)
    out.col(i) = engine_.forward(net_->params(), data_->embeddings.col(i));
  return out;
}

FitResult Trainer::fit(const std::function<void(const EpochRow&)>& on_epoch) {
  FitResult result;
  diff::ParamStore best = net_->params();
  int since_best = 0;
  for (int epoch = 0; epoch < opt_.epochs; ++epoch) {
    EpochRow row;
    row.epoch = epoch;
    for (int s = 0; s < steps_per_epoch_; ++s) {
      const StepMetrics m = step();
      row.fidelity += m.fidelity;
      row.preservation += m.preservation;
      row.weight_fidelity = m.weight_fidelity;
      row.weight_preservation = m.weight_preservation;
      row.floored += m.floored;
    }
    row.skipped_updates = skipped_updates_;
    row.index_recall = index_.recall_at_k;
    result.epochs_run = epoch + 1;

    const bool eval_now =
        (epoch + 1) % std::max(1, opt_.eval_every) == 0 || epoch + 1 == opt_.epochs;
    if (eval_now) {
      const MapResult val = evaluate_map(Split::kVal);
      row.val_map = val.map;
      row.val_skipped = val.skipped;
      if (val.map > result.best_val_map) {
        result.best_val_map = val.map;
        result.best_epoch = epoch;
        best = net_->params();
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    if (on_epoch) on_epoch(row);
    if (opt_.patience > 0 && since_best >= opt_.patience) break;
  }
  if (result.best_epoch >= 0) net_->params() = best;
  return result;
}

}  // namespace retrofit
