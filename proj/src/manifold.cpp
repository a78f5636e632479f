#include "retrofit/manifold.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace retrofit {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

double clamp(double x, double lo, double hi) {
  return std::min(std::max(x, lo), hi);
}

// Mobius addition on the Poincare ball.
Vec mobius_add(const Vec& a, const Vec& b) {
  const double ab = a.dot(b);
  const double aa = a.squaredNorm();
  const double bb = b.squaredNorm();
  const double denom = 1.0 + 2.0 * ab + aa * bb;
  return ((1.0 + 2.0 * ab + bb) * a + (1.0 - aa) * b) / denom;
}

template <typename Fn>
void for_each_factor(const ManifoldDescriptor& m, Fn&& fn) {
  int off = 0;
  for (int i = 0; i < m.factor_count(); ++i) {
    const ManifoldDescriptor& f = m.factor(i);
    fn(f, off);
    off += f.ambient_dim;
  }
}

}  // namespace

ManifoldDescriptor ManifoldDescriptor::euclidean(int d) {
  if (d <= 0) throw ConfigError("manifold dimension must be positive");
  return {ManifoldKind::Euclidean, d, d, {}};
}

ManifoldDescriptor ManifoldDescriptor::sphere(int d) {
  if (d <= 0) throw ConfigError("manifold dimension must be positive");
  return {ManifoldKind::Sphere, d, d + 1, {}};
}

ManifoldDescriptor ManifoldDescriptor::ball(int d) {
  if (d <= 0) throw ConfigError("manifold dimension must be positive");
  return {ManifoldKind::PoincareBall, d, d, {}};
}

ManifoldDescriptor ManifoldDescriptor::product(
    std::vector<ManifoldDescriptor> fs) {
  std::vector<ManifoldDescriptor> flat;
  for (auto& f : fs) {
    if (f.kind == ManifoldKind::Product) {
      for (auto& g : f.factors) flat.push_back(std::move(g));
    } else {
      flat.push_back(std::move(f));
    }
  }
  if (flat.empty()) throw ConfigError("product manifold needs factors");
  if (flat.size() == 1) return flat.front();
  ManifoldDescriptor out;
  out.kind = ManifoldKind::Product;
  out.factors = std::move(flat);
  out.intrinsic_dim = 0;
  out.ambient_dim = 0;
  for (const auto& f : out.factors) {
    out.intrinsic_dim += f.intrinsic_dim;
    out.ambient_dim += f.ambient_dim;
  }
  return out;
}

bool ManifoldDescriptor::operator==(const ManifoldDescriptor& other) const {
  if (kind != other.kind || intrinsic_dim != other.intrinsic_dim ||
      ambient_dim != other.ambient_dim)
    return false;
  if (kind != ManifoldKind::Product) return true;
  if (factors.size() != other.factors.size()) return false;
  for (size_t i = 0; i < factors.size(); ++i)
    if (!(factors[i] == other.factors[i])) return false;
  return true;
}

bool ManifoldDescriptor::pure_euclidean() const {
  if (kind == ManifoldKind::Euclidean) return true;
  if (kind != ManifoldKind::Product) return false;
  return std::all_of(factors.begin(), factors.end(),
                     [](const ManifoldDescriptor& f) {
                       return f.kind == ManifoldKind::Euclidean;
                     });
}

ManifoldDescriptor parse_manifold(const std::string& text) {
  std::vector<ManifoldDescriptor> factors;
  size_t i = 0;
  while (i < text.size()) {
    const char c = static_cast<char>(std::toupper(text[i]));
    if (c != 'E' && c != 'S' && c != 'H')
      throw ConfigError("bad manifold string '" + text +
                        "': expected E/S/H at position " + std::to_string(i));
    ++i;
    size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])))
      ++j;
    if (j == i)
      throw ConfigError("bad manifold string '" + text +
                        "': missing dimension after '" + std::string(1, c) +
                        "'");
    const int d = std::stoi(text.substr(i, j - i));
    if (c == 'E') factors.push_back(ManifoldDescriptor::euclidean(d));
    if (c == 'S') factors.push_back(ManifoldDescriptor::sphere(d));
    if (c == 'H') factors.push_back(ManifoldDescriptor::ball(d));
    i = j;
    if (i < text.size()) {
      if (std::toupper(text[i]) != 'X')
        throw ConfigError("bad manifold string '" + text +
                          "': expected 'x' between factors");
      ++i;
      if (i >= text.size())
        throw ConfigError("bad manifold string '" + text +
                          "': trailing factor separator");
    }
  }
  if (factors.empty())
    throw ConfigError("empty manifold string");
  return ManifoldDescriptor::product(std::move(factors));
}

std::string format_manifold(const ManifoldDescriptor& m) {
  std::ostringstream os;
  for (int i = 0; i < m.factor_count(); ++i) {
    if (i) os << 'x';
    const ManifoldDescriptor& f = m.factor(i);
    switch (f.kind) {
      case ManifoldKind::Euclidean: os << 'E'; break;
      case ManifoldKind::Sphere: os << 'S'; break;
      case ManifoldKind::PoincareBall: os << 'H'; break;
      case ManifoldKind::Product: os << '?'; break;
    }
    os << f.intrinsic_dim;
  }
  return os.str();
}

bool point_ok(const ManifoldDescriptor& m, const Vec& coords) {
  if (coords.size() != m.ambient_dim) return false;
  if (!coords.allFinite()) return false;
  bool ok = true;
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    const auto seg = coords.segment(off, f.ambient_dim);
    switch (f.kind) {
      case ManifoldKind::Euclidean:
        break;
      case ManifoldKind::Sphere:
        if (std::abs(seg.norm() - 1.0) > kSphereTol) ok = false;
        break;
      case ManifoldKind::PoincareBall:
        if (seg.norm() > 1.0 - kBallEps + 1e-12) ok = false;
        break;
      case ManifoldKind::Product:
        ok = false;  // flattened at construction
        break;
    }
  });
  return ok;
}

void validate_point(const ManifoldDescriptor& m, const Vec& coords) {
  if (coords.size() != m.ambient_dim)
    throw InvalidPoint("point has " + std::to_string(coords.size()) +
                       " coordinates, manifold " + format_manifold(m) +
                       " expects " + std::to_string(m.ambient_dim));
  if (!point_ok(m, coords))
    throw InvalidPoint("point violates invariants of " + format_manifold(m));
}

double ball_lambda(const Vec& p) { return 2.0 / (1.0 - p.squaredNorm()); }

spd::SpdMatrix metric_tensor(const ManifoldDescriptor& m, const Vec& p) {
  validate_point(m, p);
  spd::SpdMatrix g;
  g.m = Mat::Zero(m.intrinsic_dim, m.intrinsic_dim);
  int row = 0;
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    const auto seg = p.segment(off, f.ambient_dim);
    switch (f.kind) {
      case ManifoldKind::Euclidean:
      case ManifoldKind::Sphere:
        g.m.block(row, row, f.intrinsic_dim, f.intrinsic_dim) =
            Mat::Identity(f.intrinsic_dim, f.intrinsic_dim);
        break;
      case ManifoldKind::PoincareBall: {
        const double l = ball_lambda(seg);
        g.m.block(row, row, f.intrinsic_dim, f.intrinsic_dim) =
            (l * l) * Mat::Identity(f.intrinsic_dim, f.intrinsic_dim);
        break;
      }
      case ManifoldKind::Product:
        break;
    }
    row += f.intrinsic_dim;
  });
  return g;
}

Vec ambient_metric_diag(const ManifoldDescriptor& m, const Vec& p) {
  Vec d = Vec::Ones(m.ambient_dim);
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    if (f.kind == ManifoldKind::PoincareBall) {
      const double l = ball_lambda(p.segment(off, f.ambient_dim));
      d.segment(off, f.ambient_dim).setConstant(l * l);
    }
  });
  return d;
}

namespace {

double factor_distance(const ManifoldDescriptor& f, const Eigen::Ref<const Vec>& x,
                       const Eigen::Ref<const Vec>& y) {
  switch (f.kind) {
    case ManifoldKind::Euclidean:
      return (x - y).norm();
    case ManifoldKind::Sphere:
      if (x == y) return 0.0;  // acos(<x,x>) would round away from zero
      return std::acos(clamp(x.dot(y), -1.0, 1.0));
    case ManifoldKind::PoincareBall: {
      const double a = 1.0 - x.squaredNorm();
      const double b = 1.0 - y.squaredNorm();
      const double u = (x - y).squaredNorm();
      const double z = std::max(1.0, 1.0 + 2.0 * u / (a * b));
      return std::acosh(z);
    }
    case ManifoldKind::Product:
      break;
  }
  return 0.0;
}

}  // namespace

double distance(const ManifoldDescriptor& m, const Vec& x, const Vec& y) {
  double sq = 0.0;
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    const double d = factor_distance(f, x.segment(off, f.ambient_dim),
                                     y.segment(off, f.ambient_dim));
    sq += d * d;
  });
  return std::sqrt(sq);
}

double distance(const ManifoldPoint& x, const ManifoldPoint& y) {
  if (x.desc != y.desc)
    throw ManifoldMismatch("distance between points on different manifolds");
  return distance(x.desc, x.coords, y.coords);
}

DistanceGrad distance_grad(const ManifoldDescriptor& m, const Vec& x,
                           const Vec& y) {
  DistanceGrad out;
  out.dx = Vec::Zero(m.ambient_dim);
  out.dy = Vec::Zero(m.ambient_dim);

  // Gradients of each factor distance, combined through
  // d = sqrt(sum d_i^2) => dd/dx = (d_i / d) * dd_i/dx.
  struct FactorGrad {
    double d;
    Vec dx, dy;
    int off, len;
  };
  std::vector<FactorGrad> fgs;
  double sq = 0.0;
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    const auto xs = x.segment(off, f.ambient_dim);
    const auto ys = y.segment(off, f.ambient_dim);
    FactorGrad fg;
    fg.off = off;
    fg.len = f.ambient_dim;
    fg.d = factor_distance(f, xs, ys);
    switch (f.kind) {
      case ManifoldKind::Euclidean: {
        if (fg.d > 1e-300) {
          fg.dx = (xs - ys) / fg.d;
          fg.dy = -fg.dx;
        } else {
          fg.dx = Vec::Zero(fg.len);
          fg.dy = Vec::Zero(fg.len);
        }
        break;
      }
      case ManifoldKind::Sphere: {
        const double c = clamp(xs.dot(ys), -1.0, 1.0);
        const double s2 = 1.0 - c * c;
        if (s2 > 1e-24) {
          const double inv = -1.0 / std::sqrt(s2);
          fg.dx = inv * ys;
          fg.dy = inv * xs;
        } else {
          fg.dx = Vec::Zero(fg.len);
          fg.dy = Vec::Zero(fg.len);
        }
        break;
      }
      case ManifoldKind::PoincareBall: {
        const double a = 1.0 - xs.squaredNorm();
        const double b = 1.0 - ys.squaredNorm();
        const double u = (xs - ys).squaredNorm();
        const double z = 1.0 + 2.0 * u / (a * b);
        const double zz = z * z - 1.0;
        if (zz > 1e-24) {
          const double dz = 1.0 / std::sqrt(zz);
          fg.dx = dz * ((4.0 / (a * b)) * (xs - ys) +
                        (4.0 * u / (a * a * b)) * xs);
          fg.dy = dz * ((4.0 / (a * b)) * (ys - xs) +
                        (4.0 * u / (a * b * b)) * ys);
        } else {
          fg.dx = Vec::Zero(fg.len);
          fg.dy = Vec::Zero(fg.len);
        }
        break;
      }
      case ManifoldKind::Product:
        break;
    }
    sq += fg.d * fg.d;
    fgs.push_back(std::move(fg));
  });
  out.value = std::sqrt(sq);
  if (out.value > 1e-300) {
    for (const auto& fg : fgs) {
      const double w = fg.d / out.value;
      out.dx.segment(fg.off, fg.len) = w * fg.dx;
      out.dy.segment(fg.off, fg.len) = w * fg.dy;
    }
  }
  return out;
}

Vec exp_map(const ManifoldDescriptor& m, const Vec& p, const Vec& v) {
  Vec out(m.ambient_dim);
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    const auto ps = p.segment(off, f.ambient_dim);
    const auto vs = v.segment(off, f.ambient_dim);
    auto os = out.segment(off, f.ambient_dim);
    switch (f.kind) {
      case ManifoldKind::Euclidean:
        os = ps + vs;
        break;
      case ManifoldKind::Sphere: {
        const double t = vs.norm();
        if (t < 1e-300) {
          os = ps;
        } else {
          os = std::cos(t) * ps + (std::sin(t) / t) * vs;
          os /= os.norm();
        }
        break;
      }
      case ManifoldKind::PoincareBall: {
        const double t = vs.norm();
        if (t < 1e-300) {
          os = ps;
        } else {
          const double l = ball_lambda(ps);
          Vec step = std::tanh(l * t / 2.0) / t * vs;
          Vec q = mobius_add(ps, step);
          const double r = q.norm();
          if (r > 1.0 - kBallEps) q *= (1.0 - kBallEps) / r;
          os = q;
        }
        break;
      }
      case ManifoldKind::Product:
        break;
    }
  });
  return out;
}

ManifoldPoint exp_map(const ManifoldPoint& p, const TangentVector& v) {
  if (v.base.desc != p.desc || v.base.coords != p.coords)
    throw ManifoldMismatch("tangent vector is based at a different point");
  return {p.desc, exp_map(p.desc, p.coords, v.coords)};
}

Vec log_map(const ManifoldDescriptor& m, const Vec& p, const Vec& q) {
  Vec out(m.ambient_dim);
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    const auto ps = p.segment(off, f.ambient_dim);
    const auto qs = q.segment(off, f.ambient_dim);
    auto os = out.segment(off, f.ambient_dim);
    switch (f.kind) {
      case ManifoldKind::Euclidean:
        os = qs - ps;
        break;
      case ManifoldKind::Sphere: {
        const double c = clamp(ps.dot(qs), -1.0, 1.0);
        if (c < -1.0 + 1e-12)
          throw UndefinedLog("log map undefined for antipodal sphere points");
        Vec w = qs - c * ps;
        const double s = w.norm();
        if (s < 1e-14) {
          os.setZero();
        } else {
          os = (std::acos(c) / s) * w;
        }
        break;
      }
      case ManifoldKind::PoincareBall: {
        Vec w = mobius_add(-ps, qs);
        const double r = w.norm();
        if (r < 1e-300) {
          os.setZero();
        } else {
          const double l = ball_lambda(ps);
          os = (2.0 / l) * std::atanh(std::min(r, 1.0 - 1e-12)) / r * w;
        }
        break;
      }
      case ManifoldKind::Product:
        break;
    }
  });
  return out;
}

TangentVector log_map(const ManifoldPoint& p, const ManifoldPoint& q) {
  if (p.desc != q.desc)
    throw ManifoldMismatch("log map between points on different manifolds");
  return {p, log_map(p.desc, p.coords, q.coords)};
}

namespace {

// Householder reflection mapping e1 to p (unit p): H = I - 2uu^T with
// u = (e1 - p)/|e1 - p|; the tangent basis is columns 2..n+1 of H. H(e1) = I
// by convention so the basis is deterministic everywhere.
Mat sphere_basis(const Eigen::Ref<const Vec>& p) {
  const int n = static_cast<int>(p.size());
  Vec d = -p;
  d[0] += 1.0;
  const double dn = d.norm();
  Mat h = Mat::Identity(n, n);
  if (dn > 1e-14) {
    d /= dn;
    h -= 2.0 * d * d.transpose();
  }
  return h.rightCols(n - 1);
}

}  // namespace

Mat tangent_basis(const ManifoldDescriptor& m, const Vec& p) {
  Mat b = Mat::Zero(m.ambient_dim, m.intrinsic_dim);
  int col = 0;
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    if (f.kind == ManifoldKind::Sphere) {
      b.block(off, col, f.ambient_dim, f.intrinsic_dim) =
          sphere_basis(p.segment(off, f.ambient_dim));
    } else {
      b.block(off, col, f.ambient_dim, f.intrinsic_dim) =
          Mat::Identity(f.ambient_dim, f.intrinsic_dim);
    }
    col += f.intrinsic_dim;
  });
  return b;
}

Vec project_to_tangent(const ManifoldDescriptor& m, const Vec& p,
                       const Vec& w) {
  Vec out = w;
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    if (f.kind == ManifoldKind::Sphere) {
      const auto ps = p.segment(off, f.ambient_dim);
      auto ws = out.segment(off, f.ambient_dim);
      ws -= ps.dot(ws) * ps;
    }
  });
  return out;
}

Vec chart_down(const ManifoldDescriptor& m, const Vec& p, const Vec& w) {
  return tangent_basis(m, p).transpose() * w;
}

Vec chart_up(const ManifoldDescriptor& m, const Vec& p, const Vec& u) {
  return tangent_basis(m, p) * u;
}

Vec random_point(const ManifoldDescriptor& m, Rng& rng) {
  Vec out(m.ambient_dim);
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    auto seg = out.segment(off, f.ambient_dim);
    switch (f.kind) {
      case ManifoldKind::Euclidean:
        for (int i = 0; i < f.ambient_dim; ++i) seg[i] = rng.gaussian();
        break;
      case ManifoldKind::Sphere: {
        double n = 0.0;
        do {
          for (int i = 0; i < f.ambient_dim; ++i) seg[i] = rng.gaussian();
          n = seg.norm();
        } while (n < 1e-12);
        seg /= n;
        break;
      }
      case ManifoldKind::PoincareBall: {
        double n = 0.0;
        do {
          for (int i = 0; i < f.ambient_dim; ++i) seg[i] = rng.gaussian();
          n = seg.norm();
        } while (n < 1e-12);
        const double r =
            0.5 * std::pow(rng.uniform(), 1.0 / f.intrinsic_dim);
        seg *= r / n;
        break;
      }
      case ManifoldKind::Product:
        break;
    }
  });
  return out;
}

Vec base_point(const ManifoldDescriptor& m) {
  Vec out = Vec::Zero(m.ambient_dim);
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    if (f.kind == ManifoldKind::Sphere) out[off] = 1.0;
  });
  return out;
}

Vec clamp_to_manifold(const ManifoldDescriptor& m, Vec coords) {
  for_each_factor(m, [&](const ManifoldDescriptor& f, int off) {
    auto seg = coords.segment(off, f.ambient_dim);
    if (f.kind == ManifoldKind::Sphere) {
      const double n = seg.norm();
      if (n > 1e-300) seg /= n;
    } else if (f.kind == ManifoldKind::PoincareBall) {
      const double n = seg.norm();
      if (n > 1.0 - kBallEps) seg *= (1.0 - kBallEps) / n;
    }
  });
  return coords;
}

}  // namespace retrofit
