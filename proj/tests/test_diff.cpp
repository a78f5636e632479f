#include <doctest.h>

#include <cmath>

#include "retrofit/diff.hpp"
#include "retrofit/rng.hpp"

using namespace retrofit;
using diff::GradTable;
using diff::Mat;
using diff::ParamStore;
using diff::Program;
using diff::Vec;

namespace {

// Quadratic loss over outputs and Jacobian entries with fixed random
// weights: L = s.y + t.(y^2) + sum(W*J) + sum(R*J^2).
struct QuadLoss : diff::JacobianLoss {
  Vec s, t;
  Mat w, r;
  double eval(const Vec& y, const Mat& jac, Vec& dl_dy,
              Mat& dl_djac) const override {
    double l = s.dot(y) + t.dot(y.cwiseProduct(y));
    l += (w.array() * jac.array()).sum();
    l += (r.array() * jac.array() * jac.array()).sum();
    dl_dy = s + 2.0 * t.cwiseProduct(y);
    dl_djac = w + 2.0 * r.cwiseProduct(jac);
    return l;
  }
};

struct GeneratedProgram {
  Program prog;
  ParamStore params;
  Vec x;
};

// Random programs over the full primitive set, arranged so every evaluation
// stays inside the primitives' smooth domains (relu through a positive
// shift, acos/atanh through a 0.9*tanh squash, wide clamps).
GeneratedProgram random_program(Rng& rng) {
  GeneratedProgram out;
  Program& p = out.prog;
  const int w = 2 + static_cast<int>(rng.uniform_index(7));  // 2..8
  const int x = p.input(w);
  std::vector<int> live = {x};
  auto pick = [&]() {
    return live[rng.uniform_index(live.size())];
  };
  int param_counter = 0;
  const int depth = 1 + static_cast<int>(rng.uniform_index(4));
  for (int d = 0; d < depth; ++d) {
    const int n_ops = 1 + static_cast<int>(rng.uniform_index(3));
    for (int o = 0; o < n_ops; ++o) {
      const int kind = static_cast<int>(rng.uniform_index(12));
      const int a = pick();
      switch (kind) {
        case 0: {  // matvec by a parameter matrix
          const int mp = p.mat_param("W" + std::to_string(param_counter++), w, w);
          live.push_back(p.matvec(mp, a));
          break;
        }
        case 1: {  // parameter bias add
          const int bp = p.param_vec("b" + std::to_string(param_counter++), w);
          live.push_back(p.add(a, bp));
          break;
        }
        case 2: live.push_back(p.tanh(a)); break;
        case 3: live.push_back(p.sin(a)); break;
        case 4: live.push_back(p.cos(a)); break;
        case 5:  // relu away from its kink
          live.push_back(p.relu(p.add(a, p.constant(Vec::Constant(w, 3.0)))));
          break;
        case 6:  // sqrt of a positive expression
          live.push_back(p.sqrt(p.add(p.mul(p.tanh(a), p.tanh(a)),
                                      p.constant(Vec::Constant(1, 0.5)))));
          break;
        case 7:  // atanh / acos inside (-0.9, 0.9)
          if (rng.uniform() < 0.5)
            live.push_back(p.atanh(p.mul(p.tanh(a), p.constant(Vec::Constant(1, 0.9)))));
          else
            live.push_back(p.acos(p.mul(p.tanh(a), p.constant(Vec::Constant(1, 0.9)))));
          break;
        case 8:  // acosh above 1.5
          live.push_back(p.acosh(p.add(p.mul(p.tanh(a), p.tanh(a)),
                                       p.constant(Vec::Constant(1, 1.5)))));
          break;
        case 9: {  // scalar channel: dot or norm broadcast back
          const int b = pick();
          const int s = rng.uniform() < 0.5 ? p.dot(a, b) : p.norm(a);
          live.push_back(p.mul(pick(), p.tanh(s)));
          break;
        }
        case 10: {  // binary arithmetic
          const int b = pick();
          const int which = static_cast<int>(rng.uniform_index(4));
          if (which == 0) live.push_back(p.add(a, b));
          if (which == 1) live.push_back(p.sub(a, b));
          if (which == 2) live.push_back(p.mul(p.tanh(a), p.tanh(b)));
          if (which == 3)
            live.push_back(p.div(a, p.add(p.mul(p.tanh(b), p.tanh(b)),
                                          p.constant(Vec::Constant(1, 1.5)))));
          break;
        }
        default:  // clamp with inactive bounds, identity
          live.push_back(rng.uniform() < 0.5 ? p.clamp(a, -50.0, 50.0)
                                             : p.identity(a));
          break;
      }
    }
  }
  // keep the output width w; slices/concats get their own directed tests
  p.set_output(live.back());

  out.params = ParamStore::zeros_like(p);
  for (auto& m : out.params.mats)
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j)
        m(i, j) = rng.gaussian() / std::sqrt(static_cast<double>(w));
  for (auto& v : out.params.vecs)
    for (int i = 0; i < v.size(); ++i) v[i] = 0.5 * rng.gaussian();
  out.x.resize(w);
  // 1e-9 jitter keeps evaluation off exact kinks
  for (int i = 0; i < w; ++i) out.x[i] = rng.gaussian() + 1e-9;
  return out;
}

double max_rel_err(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) {
      const double denom = std::max(1.0, std::abs(b(i, j)));
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  return worst;
}

}  // namespace

TEST_CASE("jacobian of the identity program") {
  Program p;
  p.set_output(p.identity(p.input(2)));
  const ParamStore ps = ParamStore::zeros_like(p);
  Vec x(2);
  x << 1, 2;
  const auto vj = diff::value_and_jacobian(p, ps, x);
  CHECK(vj.value.isApprox(x));
  CHECK(vj.jacobian.isApprox(Mat::Identity(2, 2)));
}

TEST_CASE("jacobian of a diagonal linear map") {
  Program p;
  const int x = p.input(2);
  Vec scale(2);
  scale << 2, 3;
  p.set_output(p.mul(x, p.constant(scale)));
  const ParamStore ps = ParamStore::zeros_like(p);
  const auto vj = diff::value_and_jacobian(p, ps, Vec::Ones(2));
  CHECK(vj.jacobian(0, 0) == doctest::Approx(2.0));
  CHECK(vj.jacobian(1, 1) == doctest::Approx(3.0));
  CHECK(vj.jacobian(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("jacobian of tanh at zero") {
  Program p;
  p.set_output(p.tanh(p.input(1)));
  const ParamStore ps = ParamStore::zeros_like(p);
  const auto vj = diff::value_and_jacobian(p, ps, Vec::Zero(1));
  CHECK(vj.jacobian(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("finite differences reproduce the jacobian examples") {
  {
    Program p;
    p.set_output(p.identity(p.input(2)));
    const ParamStore ps = ParamStore::zeros_like(p);
    Vec x(2);
    x << 1, 2;
    CHECK(max_rel_err(diff::finite_diff_jacobian(p, ps, x),
                      diff::value_and_jacobian(p, ps, x).jacobian) < 1e-6);
  }
  {
    Program p;
    const int x = p.input(2);
    Vec scale(2);
    scale << 2, 3;
    p.set_output(p.mul(x, p.constant(scale)));
    const ParamStore ps = ParamStore::zeros_like(p);
    CHECK(max_rel_err(diff::finite_diff_jacobian(p, ps, Vec::Ones(2)),
                      diff::value_and_jacobian(p, ps, Vec::Ones(2)).jacobian) <
          1e-6);
  }
  {
    Program p;
    p.set_output(p.tanh(p.input(1)));
    const ParamStore ps = ParamStore::zeros_like(p);
    CHECK(max_rel_err(diff::finite_diff_jacobian(p, ps, Vec::Zero(1)),
                      diff::value_and_jacobian(p, ps, Vec::Zero(1)).jacobian) <
          1e-6);
  }
}

TEST_CASE("parameter gradient examples") {
  // f(x) = theta * x with theta = 3, x = 2
  Program p;
  const int x = p.input(1);
  const int theta = p.param_vec("theta", 1);
  p.set_output(p.mul(x, theta));
  ParamStore ps = ParamStore::zeros_like(p);
  ps.vec(p, "theta")[0] = 3.0;
  Vec x0(1);
  x0 << 2.0;

  SUBCASE("loss = |y|^2 gives d/dtheta = 24") {
    struct L : diff::JacobianLoss {
      double eval(const Vec& y, const Mat& jac, Vec& dy, Mat& dj) const override {
        dy = 2.0 * y;
        dj = Mat::Zero(jac.rows(), jac.cols());
        return y.squaredNorm();
      }
    } loss;
    const GradTable g = diff::param_gradients(p, ps, x0, loss);
    CHECK(g.vec(p, "theta")[0] == doctest::Approx(24.0).epsilon(1e-12));
  }
  SUBCASE("loss = J11 gives d/dtheta = 1") {
    struct L : diff::JacobianLoss {
      double eval(const Vec& y, const Mat& jac, Vec& dy, Mat& dj) const override {
        dy = Vec::Zero(y.size());
        dj = Mat::Zero(jac.rows(), jac.cols());
        dj(0, 0) = 1.0;
        return jac(0, 0);
      }
    } loss;
    const GradTable g = diff::param_gradients(p, ps, x0, loss);
    CHECK(g.vec(p, "theta")[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("loss = J11^2 gives d/dtheta = 6") {
    struct L : diff::JacobianLoss {
      double eval(const Vec& y, const Mat& jac, Vec& dy, Mat& dj) const override {
        dy = Vec::Zero(y.size());
        dj = Mat::Zero(jac.rows(), jac.cols());
        dj(0, 0) = 2.0 * jac(0, 0);
        return jac(0, 0) * jac(0, 0);
      }
    } loss;
    const GradTable g = diff::param_gradients(p, ps, x0, loss);
    CHECK(g.vec(p, "theta")[0] == doctest::Approx(6.0).epsilon(1e-12));
  }
}

TEST_CASE("unknown parameter lookup fails") {
  Program p;
  p.set_output(p.identity(p.input(1)));
  ParamStore ps = ParamStore::zeros_like(p);
  CHECK_THROWS_AS(ps.vec(p, "nope"), UnknownParameter);
}

TEST_CASE("relu and clamp use the zero subgradient at kinks") {
  Program p;
  const int x = p.input(1);
  p.set_output(p.relu(x));
  const ParamStore ps = ParamStore::zeros_like(p);
  CHECK(diff::value_and_jacobian(p, ps, Vec::Zero(1)).jacobian(0, 0) == 0.0);

  Program q;
  q.set_output(q.clamp(q.input(1), -1.0, 1.0));
  const ParamStore qs = ParamStore::zeros_like(q);
  CHECK(diff::value_and_jacobian(q, qs, Vec::Ones(1)).jacobian(0, 0) == 0.0);
  Vec inside(1);
  inside << 0.5;
  CHECK(diff::value_and_jacobian(q, qs, inside).jacobian(0, 0) == 1.0);
}

TEST_CASE("100 random programs: analytic vs finite-difference jacobians") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    GeneratedProgram g = random_program(rng);
    const auto vj = diff::value_and_jacobian(g.prog, g.params, g.x);
    const Mat fd = diff::finite_diff_jacobian(g.prog, g.params, g.x);
    CHECK(max_rel_err(vj.jacobian, fd) <= 1e-5);
  }
}

TEST_CASE("100 random programs: parameter gradients of jacobian losses") {
  Rng rng(202);
  for (int trial = 0; trial < 100; ++trial) {
    GeneratedProgram g = random_program(rng);
    const int out_dim = g.prog.output_dim();
    const int in_dim = g.prog.input_dim();

    QuadLoss loss;
    loss.s.resize(out_dim);
    loss.t.resize(out_dim);
    loss.w.resize(out_dim, in_dim);
    loss.r.resize(out_dim, in_dim);
    for (int i = 0; i < out_dim; ++i) {
      loss.s[i] = rng.gaussian();
      loss.t[i] = rng.gaussian();
      for (int j = 0; j < in_dim; ++j) {
        loss.w(i, j) = rng.gaussian();
        loss.r(i, j) = rng.gaussian();
      }
    }

    double l0 = 0.0;
    const GradTable grads = diff::param_gradients(g.prog, g.params, g.x, loss, &l0);

    auto loss_value = [&]() {
      const auto vj = diff::value_and_jacobian(g.prog, g.params, g.x);
      Vec dy;
      Mat dj;
      return loss.eval(vj.value, vj.jacobian, dy, dj);
    };
    CHECK(loss_value() == doctest::Approx(l0).epsilon(1e-12));

    const double h = 1e-5;
    double worst = 0.0;
    for (size_t pi = 0; pi < g.params.mats.size(); ++pi) {
      Mat& m = g.params.mats[pi];
      for (int i = 0; i < m.size(); ++i) {
        const double save = m.data()[i];
        m.data()[i] = save + h;
        const double hi = loss_value();
        m.data()[i] = save - h;
        const double lo = loss_value();
        m.data()[i] = save;
        const double fd = (hi - lo) / (2 * h);
        const double an = grads.mats[pi].data()[i];
        worst = std::max(worst,
                         std::abs(fd - an) / std::max(1.0, std::abs(fd)));
      }
    }
    for (size_t pi = 0; pi < g.params.vecs.size(); ++pi) {
      Vec& v = g.params.vecs[pi];
      for (int i = 0; i < v.size(); ++i) {
        const double save = v[i];
        v[i] = save + h;
        const double hi = loss_value();
        v[i] = save - h;
        const double lo = loss_value();
        v[i] = save;
        const double fd = (hi - lo) / (2 * h);
        const double an = grads.vecs[pi][i];
        worst = std::max(worst,
                         std::abs(fd - an) / std::max(1.0, std::abs(fd)));
      }
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("jacobian of a sum program equals the sum of jacobians exactly") {
  Rng rng(303);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = 3;
    // f branch: tanh(x); g branch: sin(x) * 0.5; h = f + g
    auto build = [&](int mode) {
      Program p;
      const int x = p.input(w);
      const int f = p.tanh(x);
      const int g = p.mul(p.sin(x), p.constant(Vec::Constant(1, 0.5)));
      if (mode == 0) p.set_output(f);
      if (mode == 1) p.set_output(g);
      if (mode == 2) p.set_output(p.add(f, g));
      return p;
    };
    const Program pf = build(0);
    const Program pg = build(1);
    const Program ph = build(2);
    Vec x(w);
    for (int i = 0; i < w; ++i) x[i] = rng.gaussian();
    const Mat jf = diff::value_and_jacobian(pf, ParamStore::zeros_like(pf), x).jacobian;
    const Mat jg = diff::value_and_jacobian(pg, ParamStore::zeros_like(pg), x).jacobian;
    const Mat jh = diff::value_and_jacobian(ph, ParamStore::zeros_like(ph), x).jacobian;
    CHECK((jh - (jf + jg)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("slice and concat round trip with duals") {
  Program p;
  const int x = p.input(4);
  const int a = p.slice(x, 0, 2);
  const int b = p.slice(x, 2, 2);
  p.set_output(p.concat(p.tanh(a), b));
  const ParamStore ps = ParamStore::zeros_like(p);
  Rng rng(404);
  Vec x0(4);
  for (int i = 0; i < 4; ++i) x0[i] = rng.gaussian();
  const auto vj = diff::value_and_jacobian(p, ps, x0);
  const Mat fd = diff::finite_diff_jacobian(p, ps, x0);
  CHECK(max_rel_err(vj.jacobian, fd) < 1e-6);
}
