#pragma once

#include <memory>
#include <string>
#include <vector>

#include "retrofit/diff.hpp"
#include "retrofit/manifold.hpp"
#include "retrofit/rng.hpp"

namespace retrofit {

enum class Nonlinearity { kTanh, kRelu, kIdentity };

Nonlinearity parse_nonlinearity(const std::string& name);
std::string format_nonlinearity(Nonlinearity s);

struct LayerSpec {
  ManifoldDescriptor source;
  ManifoldDescriptor target;
  Nonlinearity sigma = Nonlinearity::kIdentity;
};

// A single layer with materialized parameters; the value-level path used by
// tests and by callers that do not need derivatives.
struct RflLayer {
  ManifoldDescriptor source;
  ManifoldDescriptor target;
  Mat A;         // target intrinsic x source intrinsic
  Vec b_source;  // ambient point on source
  Vec b_target;  // ambient point on target
  Nonlinearity sigma = Nonlinearity::kIdentity;
};

// exp_{bT}(sigma(A log_{bS} x)) with the linear map and nonlinearity applied
// in the orthonormal charts at the bias points.
Vec rfl_forward(const RflLayer& layer, const Vec& x);

// Stack of Riemannian feedforward layers. Parameters live in a diff
// ParamStore bound to the traced program ("L0.A", "L0.bS", "L0.bT", ...);
// the program is the single differentiation path for training, the
// closed-form rfl_forward composition cross-checks it in tests.
class RiemannianNetwork {
 public:
  explicit RiemannianNetwork(std::vector<LayerSpec> specs);

  int layer_count() const { return static_cast<int>(specs_.size()); }
  const LayerSpec& spec(int i) const { return specs_[static_cast<size_t>(i)]; }
  RflLayer layer(int i) const;
  void set_layer_params(int i, const Mat& a, const Vec& b_source,
                        const Vec& b_target);

  const ManifoldDescriptor& source() const { return specs_.front().source; }
  const ManifoldDescriptor& target() const { return specs_.back().target; }

  const diff::Program& program() const { return *prog_; }
  diff::ParamStore& params() { return params_; }
  const diff::ParamStore& params() const { return params_; }

  std::string architecture_string() const;

  // Forward through the traced program (ambient source coords in, ambient
  // target coords out).
  Vec forward(const Vec& x);

  // d(ambient output)/d(source chart coords) at x; also reports f(x).
  Mat jacobian_ambient(const Vec& x, Vec* y_out = nullptr);

  // Chart-to-chart Jacobian, target intrinsic x source intrinsic.
  Mat jacobian(const Vec& x);

  static std::string mat_name(int layer) {
    return "L" + std::to_string(layer) + ".A";
  }
  static std::string bs_name(int layer) {
    return "L" + std::to_string(layer) + ".bS";
  }
  static std::string bt_name(int layer) {
    return "L" + std::to_string(layer) + ".bT";
  }

 private:
  std::vector<LayerSpec> specs_;
  std::shared_ptr<const diff::Program> prog_;
  diff::ParamStore params_;
  std::unique_ptr<diff::Engine> engine_;
};

Vec network_forward(RiemannianNetwork& net, const Vec& x);
Mat network_jacobian(RiemannianNetwork& net, const Vec& x);

// Orthogonal A (semi-orthogonal when rectangular), zero Euclidean biases,
// e1 sphere biases, origin ball biases; deterministic under the seed.
RiemannianNetwork init_network(const std::vector<ManifoldDescriptor>& chain,
                               const std::vector<Nonlinearity>& sigmas,
                               Rng& rng);
// Default nonlinearities: tanh on hidden layers, identity on the last.
RiemannianNetwork init_network(const std::vector<ManifoldDescriptor>& chain,
                               Rng& rng);

// "E50 -> E1600 -> E1600 -> S30xH30"
std::vector<ManifoldDescriptor> parse_architecture(const std::string& text);
std::string format_architecture(const std::vector<ManifoldDescriptor>& chain);

}  // namespace retrofit
