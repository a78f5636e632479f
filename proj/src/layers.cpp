#include "retrofit/layers.hpp"

#include <Eigen/QR>
#include <cmath>
#include <limits>
#include <sstream>

namespace retrofit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec apply_sigma(Nonlinearity s, Vec u) {
  switch (s) {
    case Nonlinearity::kTanh:
      for (int i = 0; i < u.size(); ++i) u[i] = std::tanh(u[i]);
      return u;
    case Nonlinearity::kRelu:
      for (int i = 0; i < u.size(); ++i) u[i] = u[i] > 0 ? u[i] : 0.0;
      return u;
    case Nonlinearity::kIdentity:
      return u;
  }
  return u;
}

// Builds the traced subgraphs for manifold operations out of the primitive
// set. Base points may be parameter nodes (trainable biases) or constants.
struct Tracer {
  diff::Program& p;
  int one = -1;
  int neg_one = -1;
  int two = -1;

  explicit Tracer(diff::Program& prog) : p(prog) {}

  int scalar(double v) {
    Vec c(1);
    c[0] = v;
    return p.constant(c);
  }
  int ensure_one() { return one >= 0 ? one : (one = scalar(1.0)); }
  int ensure_neg_one() { return neg_one >= 0 ? neg_one : (neg_one = scalar(-1.0)); }
  int ensure_two() { return two >= 0 ? two : (two = scalar(2.0)); }

  int mobius_add(int a, int b) {
    const int ab = p.dot(a, b);
    const int aa = p.dot(a, a);
    const int bb = p.dot(b, b);
    const int two_ab = p.mul(ab, ensure_two());
    // (1 + 2<a,b> + |b|^2) a + (1 - |a|^2) b
    const int ca = p.add(p.add(ensure_one(), two_ab), bb);
    const int cb = p.sub(ensure_one(), aa);
    const int num = p.add(p.mul(a, ca), p.mul(b, cb));
    const int den = p.add(p.add(ensure_one(), two_ab), p.mul(aa, bb));
    return p.div(num, den);
  }

  // Householder direction u = (e1 - b)/|e1 - b|; zero vector when b = e1 so
  // the reflection degenerates to the identity, matching the closed form.
  int householder_dir(const ManifoldDescriptor& f, int b) {
    Vec e1 = Vec::Zero(f.ambient_dim);
    e1[0] = 1.0;
    const int d = p.sub(p.constant(e1), b);
    const int dn = p.clamp(p.norm(d), 1e-16, kInf);
    return p.div(d, dn);
  }

  int householder_apply(int u, int z) {
    const int t = p.dot(u, z);
    return p.sub(z, p.mul(u, p.mul(t, ensure_two())));
  }

  int factor_log(const ManifoldDescriptor& f, int b, int x) {
    switch (f.kind) {
      case ManifoldKind::Euclidean:
        return p.sub(x, b);
      case ManifoldKind::Sphere: {
        const int c = p.dot(b, x);
        const int theta = p.acos(p.clamp(c, -1.0, 1.0));
        const int w = p.sub(x, p.mul(b, c));
        const int s = p.clamp(p.norm(w), 1e-16, kInf);
        return p.mul(p.div(w, s), theta);
      }
      case ManifoldKind::PoincareBall: {
        const int nb = p.mul(b, ensure_neg_one());
        const int w = mobius_add(nb, x);
        const int r = p.norm(w);
        const int at = p.atanh(p.clamp(r, 0.0, 1.0 - 1e-12));
        const int rs = p.clamp(r, 1e-16, kInf);
        const int bb = p.dot(b, b);
        // 2/lambda_b = 1 - |b|^2
        const int coef = p.mul(at, p.sub(ensure_one(), bb));
        return p.mul(p.div(w, rs), coef);
      }
      case ManifoldKind::Product:
        break;
    }
    throw Error("unreachable factor kind in trace");
  }

  int factor_exp(const ManifoldDescriptor& f, int b, int v) {
    switch (f.kind) {
      case ManifoldKind::Euclidean:
        return p.add(b, v);
      case ManifoldKind::Sphere: {
        const int t = p.norm(v);
        const int ts = p.clamp(t, 1e-16, kInf);
        const int y0 = p.add(p.mul(b, p.cos(t)), p.mul(p.div(v, ts), p.sin(t)));
        const int yn = p.clamp(p.norm(y0), 1e-16, kInf);
        return p.div(y0, yn);
      }
      case ManifoldKind::PoincareBall: {
        const int t = p.norm(v);
        const int ts = p.clamp(t, 1e-16, kInf);
        const int bb = p.dot(b, b);
        const int half_lambda = p.div(ensure_one(), p.sub(ensure_one(), bb));
        const int step = p.mul(p.div(v, ts), p.tanh(p.mul(t, half_lambda)));
        const int y0 = mobius_add(b, step);
        // radius clamp onto 1 - kBallEps; the factor is exactly 1 (locally
        // constant) for interior points
        const int r = p.clamp(p.norm(y0), 1e-16, kInf);
        const int factor = p.clamp(p.div(scalar(1.0 - kBallEps), r), 0.0, 1.0);
        return p.mul(y0, factor);
      }
      case ManifoldKind::Product:
        break;
    }
    throw Error("unreachable factor kind in trace");
  }

  template <typename Fn>
  int per_factor(const ManifoldDescriptor& m, int base, int x, Fn&& fn) {
    if (m.kind != ManifoldKind::Product) return fn(m, base, x);
    int out = -1;
    int off = 0;
    for (int i = 0; i < m.factor_count(); ++i) {
      const ManifoldDescriptor& f = m.factor(i);
      const int bf = p.slice(base, off, f.ambient_dim);
      const int xf = p.slice(x, off, f.ambient_dim);
      const int r = fn(f, bf, xf);
      out = out < 0 ? r : p.concat(out, r);
      off += f.ambient_dim;
    }
    return out;
  }

  int log(const ManifoldDescriptor& m, int base, int x) {
    return per_factor(m, base, x, [&](const ManifoldDescriptor& f, int b, int xx) {
      return factor_log(f, b, xx);
    });
  }
  int exp(const ManifoldDescriptor& m, int base, int v) {
    return per_factor(m, base, v, [&](const ManifoldDescriptor& f, int b, int vv) {
      return factor_exp(f, b, vv);
    });
  }

  // Ambient tangent -> intrinsic chart coordinates at the base point.
  int chart_down(const ManifoldDescriptor& m, int base, int v) {
    return per_factor(m, base, v, [&](const ManifoldDescriptor& f, int b, int vv) {
      if (f.kind != ManifoldKind::Sphere) return vv;
      const int u = householder_dir(f, b);
      const int hv = householder_apply(u, vv);
      return p.slice(hv, 1, f.intrinsic_dim);
    });
  }

  // Intrinsic chart coordinates -> ambient tangent at the base point. The
  // intrinsic vector is consumed factor by factor, so offsets differ from
  // the ambient layout.
  int chart_up(const ManifoldDescriptor& m, int base, int u) {
    if (m.kind != ManifoldKind::Product) return chart_up_factor(m, base, u);
    int out = -1;
    int aoff = 0;
    int ioff = 0;
    for (int i = 0; i < m.factor_count(); ++i) {
      const ManifoldDescriptor& f = m.factor(i);
      const int bf = p.slice(base, aoff, f.ambient_dim);
      const int uf = p.slice(u, ioff, f.intrinsic_dim);
      const int r = chart_up_factor(f, bf, uf);
      out = out < 0 ? r : p.concat(out, r);
      aoff += f.ambient_dim;
      ioff += f.intrinsic_dim;
    }
    return out;
  }

  int chart_up_factor(const ManifoldDescriptor& f, int b, int u) {
    if (f.kind != ManifoldKind::Sphere) return u;
    const int z = p.concat(scalar(0.0), u);
    const int hd = householder_dir(f, b);
    return householder_apply(hd, z);
  }

  int sigma(Nonlinearity s, int x) {
    switch (s) {
      case Nonlinearity::kTanh: return p.tanh(x);
      case Nonlinearity::kRelu: return p.relu(x);
      case Nonlinearity::kIdentity: return p.identity(x);
    }
    return x;
  }
};

// Traces the layer stack from an ambient source point node to the ambient
// target point node, registering parameters in layer order.
int trace_layers(diff::Program& p, int x, const std::vector<LayerSpec>& specs) {
  Tracer tr(p);
  int cur = x;
  for (size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    const int a = p.mat_param(RiemannianNetwork::mat_name(static_cast<int>(i)),
                              s.target.intrinsic_dim, s.source.intrinsic_dim);
    const int bs = p.param_vec(RiemannianNetwork::bs_name(static_cast<int>(i)),
                               s.source.ambient_dim);
    const int bt = p.param_vec(RiemannianNetwork::bt_name(static_cast<int>(i)),
                               s.target.ambient_dim);
    const int v = tr.log(s.source, bs, cur);
    const int u = tr.chart_down(s.source, bs, v);
    const int pre = p.matvec(a, u);
    const int act = tr.sigma(s.sigma, pre);
    const int w = tr.chart_up(s.target, bt, act);
    cur = tr.exp(s.target, bt, w);
  }
  return cur;
}

void check_chain(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw ConfigError("network needs at least one layer");
  for (size_t i = 0; i + 1 < specs.size(); ++i)
    if (specs[i].target != specs[i + 1].source)
      throw ManifoldMismatch("layer " + std::to_string(i) +
                             " target differs from layer " +
                             std::to_string(i + 1) + " source");
}

Mat orthogonal_matrix(int rows, int cols, Rng& rng) {
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  Mat g(big, small);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < small; ++j) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(big, small);
  const Mat r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return rows >= cols ? q : Mat(q.transpose());
}

}  // namespace

Nonlinearity parse_nonlinearity(const std::string& name) {
  if (name == "tanh") return Nonlinearity::kTanh;
  if (name == "relu") return Nonlinearity::kRelu;
  if (name == "identity") return Nonlinearity::kIdentity;
  throw ConfigError("unknown nonlinearity '" + name + "'");
}

std::string format_nonlinearity(Nonlinearity s) {
  switch (s) {
    case Nonlinearity::kTanh: return "tanh";
    case Nonlinearity::kRelu: return "relu";
    case Nonlinearity::kIdentity: return "identity";
  }
  return "identity";
}

Vec rfl_forward(const RflLayer& layer, const Vec& x) {
  validate_point(layer.source, x);
  const Vec v = log_map(layer.source, layer.b_source, x);
  const Vec u = chart_down(layer.source, layer.b_source, v);
  const Vec act = apply_sigma(layer.sigma, layer.A * u);
  const Vec w = chart_up(layer.target, layer.b_target, act);
  return exp_map(layer.target, layer.b_target, w);
}

RiemannianNetwork::RiemannianNetwork(std::vector<LayerSpec> specs)
    : specs_(std::move(specs)) {
  check_chain(specs_);
  auto prog = std::make_shared<diff::Program>();
  const int x = prog->input(specs_.front().source.ambient_dim);
  prog->set_output(trace_layers(*prog, x, specs_));
  prog_ = std::move(prog);
  params_ = diff::ParamStore::zeros_like(*prog_);
  for (size_t i = 0; i < specs_.size(); ++i) {
    params_.vec(*prog_, bs_name(static_cast<int>(i))) =
        base_point(specs_[i].source);
    params_.vec(*prog_, bt_name(static_cast<int>(i))) =
        base_point(specs_[i].target);
  }
  engine_ = std::make_unique<diff::Engine>(*prog_);
}

RflLayer RiemannianNetwork::layer(int i) const {
  const LayerSpec& s = specs_[static_cast<size_t>(i)];
  RflLayer out;
  out.source = s.source;
  out.target = s.target;
  out.sigma = s.sigma;
  out.A = params_.mat(*prog_, mat_name(i));
  out.b_source = params_.vec(*prog_, bs_name(i));
  out.b_target = params_.vec(*prog_, bt_name(i));
  return out;
}

void RiemannianNetwork::set_layer_params(int i, const Mat& a,
                                         const Vec& b_source,
                                         const Vec& b_target) {
  const LayerSpec& s = specs_[static_cast<size_t>(i)];
  if (a.rows() != s.target.intrinsic_dim || a.cols() != s.source.intrinsic_dim)
    throw DimMismatch("layer matrix shape");
  validate_point(s.source, b_source);
  validate_point(s.target, b_target);
  params_.mat(*prog_, mat_name(i)) = a;
  params_.vec(*prog_, bs_name(i)) = b_source;
  params_.vec(*prog_, bt_name(i)) = b_target;
}

std::string RiemannianNetwork::architecture_string() const {
  std::vector<ManifoldDescriptor> chain;
  chain.push_back(source());
  for (const auto& s : specs_) chain.push_back(s.target);
  return format_architecture(chain);
}

Vec RiemannianNetwork::forward(const Vec& x) {
  return engine_->forward(params_, x);
}

Mat RiemannianNetwork::jacobian_ambient(const Vec& x, Vec* y_out) {
  validate_point(source(), x);
  Mat jac;
  const Vec y = engine_->forward_with_jacobian(params_, x, &jac);
  if (y_out) *y_out = y;
  if (source().pure_euclidean()) return jac;
  // The traced map extends smoothly off the source manifold; restricting its
  // ambient differential to tangent directions gives the chart differential
  // because d(exp_x)|_0 is the identity on the tangent space.
  return jac * tangent_basis(source(), x);
}

Mat RiemannianNetwork::jacobian(const Vec& x) {
  Vec y;
  const Mat jac = jacobian_ambient(x, &y);
  return tangent_basis(target(), y).transpose() * jac;
}

Vec network_forward(RiemannianNetwork& net, const Vec& x) {
  return net.forward(x);
}

Mat network_jacobian(RiemannianNetwork& net, const Vec& x) {
  return net.jacobian(x);
}

RiemannianNetwork init_network(const std::vector<ManifoldDescriptor>& chain,
                               const std::vector<Nonlinearity>& sigmas,
                               Rng& rng) {
  if (chain.size() < 2) throw ConfigError("architecture needs >= 2 manifolds");
  if (sigmas.size() != chain.size() - 1)
    throw ConfigError("one nonlinearity per layer required");
  std::vector<LayerSpec> specs;
  for (size_t i = 0; i + 1 < chain.size(); ++i)
    specs.push_back({chain[i], chain[i + 1], sigmas[i]});
  RiemannianNetwork net(std::move(specs));
  for (int i = 0; i < net.layer_count(); ++i) {
    const LayerSpec& s = net.spec(i);
    net.params().mat(net.program(), RiemannianNetwork::mat_name(i)) =
        orthogonal_matrix(s.target.intrinsic_dim, s.source.intrinsic_dim, rng);
  }
  return net;
}

RiemannianNetwork init_network(const std::vector<ManifoldDescriptor>& chain,
                               Rng& rng) {
  std::vector<Nonlinearity> sigmas(chain.size() - 1, Nonlinearity::kTanh);
  if (!sigmas.empty()) sigmas.back() = Nonlinearity::kIdentity;
  return init_network(chain, sigmas, rng);
}

std::vector<ManifoldDescriptor> parse_architecture(const std::string& text) {
  std::vector<ManifoldDescriptor> chain;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t arrow = text.find("->", pos);
    std::string tok = text.substr(pos, arrow == std::string::npos
                                           ? std::string::npos
                                           : arrow - pos);
    const auto first = tok.find_first_not_of(" \t");
    if (first == std::string::npos)
      throw ConfigError("empty factor in architecture string '" + text + "'");
    const auto last = tok.find_last_not_of(" \t");
    chain.push_back(parse_manifold(tok.substr(first, last - first + 1)));
    if (arrow == std::string::npos) break;
    pos = arrow + 2;
  }
  if (chain.size() < 2)
    throw ConfigError("architecture string needs at least two manifolds");
  return chain;
}

std::string format_architecture(const std::vector<ManifoldDescriptor>& chain) {
  std::ostringstream os;
  for (size_t i = 0; i < chain.size(); ++i) {
    if (i) os << " -> ";
    os << format_manifold(chain[i]);
  }
  return os.str();
}

}  // namespace retrofit
