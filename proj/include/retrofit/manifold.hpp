#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "retrofit/errors.hpp"
#include "retrofit/rng.hpp"
#include "retrofit/spd.hpp"

namespace retrofit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ManifoldKind { Euclidean, Sphere, PoincareBall, Product };

// Ball points are kept strictly inside radius 1 - kBallEps; sphere points are
// unit to kSphereTol.
inline constexpr double kBallEps = 1e-5;
inline constexpr double kSphereTol = 1e-9;

struct ManifoldDescriptor {
  ManifoldKind kind = ManifoldKind::Euclidean;
  int intrinsic_dim = 0;
  int ambient_dim = 0;
  std::vector<ManifoldDescriptor> factors;  // Product only

  static ManifoldDescriptor euclidean(int d);
  static ManifoldDescriptor sphere(int d);  // intrinsic d, ambient d + 1
  static ManifoldDescriptor ball(int d);
  // Flattens nested products at construction.
  static ManifoldDescriptor product(std::vector<ManifoldDescriptor> fs);

  bool operator==(const ManifoldDescriptor& other) const;
  bool operator!=(const ManifoldDescriptor& other) const {
    return !(*this == other);
  }

  bool pure_euclidean() const;
  bool has_curved_factor() const { return !pure_euclidean(); }

  // Iteration helper: product descriptors expose their factors, everything
  // else behaves as a single-factor product of itself.
  int factor_count() const {
    return kind == ManifoldKind::Product ? static_cast<int>(factors.size())
                                         : 1;
  }
  const ManifoldDescriptor& factor(int i) const {
    return kind == ManifoldKind::Product ? factors[static_cast<size_t>(i)]
                                         : *this;
  }
};

// Compact grammar: letters E/S/H followed by the intrinsic dimension, factors
// joined by 'x'; case-insensitive ("S30xH30", "e50").
ManifoldDescriptor parse_manifold(const std::string& text);
std::string format_manifold(const ManifoldDescriptor& m);

struct ManifoldPoint {
  ManifoldDescriptor desc;
  Vec coords;  // length desc.ambient_dim
};

struct TangentVector {
  ManifoldPoint base;
  Vec coords;  // ambient coordinates, length desc.ambient_dim
};

// Throws InvalidPoint if coordinates violate the manifold invariants.
void validate_point(const ManifoldDescriptor& m, const Vec& coords);
bool point_ok(const ManifoldDescriptor& m, const Vec& coords);

// Metric tensor in the orthonormal chart fixed by tangent_basis: identity for
// Euclidean and sphere factors, squared conformal factor for ball factors,
// block-diagonal for products.
spd::SpdMatrix metric_tensor(const ManifoldDescriptor& m, const Vec& p);

// Per-ambient-coordinate diagonal of the metric as a bilinear form on ambient
// vectors (1 for Euclidean/sphere coordinates, lambda(p)^2 for ball ones).
Vec ambient_metric_diag(const ManifoldDescriptor& m, const Vec& p);

double distance(const ManifoldDescriptor& m, const Vec& x, const Vec& y);
double distance(const ManifoldPoint& x, const ManifoldPoint& y);

// Ambient-coordinate gradients of distance(m, x, y) with respect to both
// endpoints; zero at coincident points (subgradient convention).
struct DistanceGrad {
  double value = 0;
  Vec dx, dy;
};
DistanceGrad distance_grad(const ManifoldDescriptor& m, const Vec& x,
                           const Vec& y);

Vec exp_map(const ManifoldDescriptor& m, const Vec& p, const Vec& v);
ManifoldPoint exp_map(const ManifoldPoint& p, const TangentVector& v);

Vec log_map(const ManifoldDescriptor& m, const Vec& p, const Vec& q);
TangentVector log_map(const ManifoldPoint& p, const ManifoldPoint& q);

// Orthonormal columns spanning T_p M in ambient coordinates; identity for
// Euclidean/ball, deterministic Householder complement of p for spheres,
// block-diagonal for products.
Mat tangent_basis(const ManifoldDescriptor& m, const Vec& p);

Vec project_to_tangent(const ManifoldDescriptor& m, const Vec& p,
                       const Vec& w);

// Chart transport: intrinsic coordinates u = B^T w and back.
Vec chart_down(const ManifoldDescriptor& m, const Vec& p, const Vec& w);
Vec chart_up(const ManifoldDescriptor& m, const Vec& p, const Vec& u);

Vec random_point(const ManifoldDescriptor& m, Rng& rng);

// Deterministic base point used for bias initialization: e1 on sphere
// factors, origin elsewhere.
Vec base_point(const ManifoldDescriptor& m);

// Rescales ball factors onto radius <= 1 - kBallEps and renormalizes sphere
// factors; used after exp/retraction steps.
Vec clamp_to_manifold(const ManifoldDescriptor& m, Vec coords);

// Poincare ball conformal factor 2 / (1 - |p|^2).
double ball_lambda(const Vec& p);

}  // namespace retrofit
