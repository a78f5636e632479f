#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "retrofit/layers.hpp"

using namespace retrofit;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec gaussian_vec(int n, Rng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.gaussian();
  return v;
}

Mat gaussian_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.gaussian();
  return m;
}

// Finite-difference oracle for the chart-to-chart map: perturb normal
// coordinates at x, read off chart coordinates at the frozen f(x). The step
// balances truncation against the acos cancellation in log at distance ~h.
Mat fd_chart_jacobian(RiemannianNetwork& net, const Vec& x, double h = 5e-5) {
  const ManifoldDescriptor& src = net.source();
  const ManifoldDescriptor& tgt = net.target();
  const Mat bs = tangent_basis(src, x);
  const Vec y0 = net.forward(x);
  const Mat bt = tangent_basis(tgt, y0);
  Mat jac(tgt.intrinsic_dim, src.intrinsic_dim);
  for (int j = 0; j < src.intrinsic_dim; ++j) {
    Vec u = Vec::Zero(src.intrinsic_dim);
    u[j] = h;
    const Vec hi = net.forward(exp_map(src, x, bs * u));
    u[j] = -h;
    const Vec lo = net.forward(exp_map(src, x, bs * u));
    jac.col(j) =
        bt.transpose() * (log_map(tgt, y0, hi) - log_map(tgt, y0, lo)) / (2 * h);
  }
  return jac;
}

RflLayer random_layer(const ManifoldDescriptor& src,
                      const ManifoldDescriptor& tgt, Nonlinearity sigma,
                      Rng& rng, double a_scale = 0.7) {
  RflLayer l;
  l.source = src;
  l.target = tgt;
  l.sigma = sigma;
  l.A = a_scale * gaussian_mat(tgt.intrinsic_dim, src.intrinsic_dim, rng);
  l.b_source = random_point(src, rng);
  l.b_target = random_point(tgt, rng);
  return l;
}

}  // namespace

TEST_CASE("architecture strings parse and format") {
  const auto chain = parse_architecture("E50 -> E1600 -> E1600 -> S30xH30");
  CHECK(chain.size() == 4);
  CHECK(chain[0].ambient_dim == 50);
  CHECK(chain[3].intrinsic_dim == 60);
  CHECK(format_architecture(chain) == "E50 -> E1600 -> E1600 -> S30xH30");
  CHECK_THROWS_AS(parse_architecture("E50"), ConfigError);
  CHECK_THROWS_AS(parse_architecture("E50 -> -> E3"), ConfigError);
}

TEST_CASE("rfl matches the Euclidean feedforward layer example") {
  RflLayer l;
  l.source = ManifoldDescriptor::euclidean(2);
  l.target = ManifoldDescriptor::euclidean(2);
  l.A = Mat::Identity(2, 2);
  l.b_source = vec2(-1, 0);
  l.b_target = vec2(0, 0);
  l.sigma = Nonlinearity::kTanh;
  const Vec y = rfl_forward(l, vec2(0, 0));
  CHECK(y[0] == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.0));
}

TEST_CASE("identity-configured rfl is the identity map") {
  Rng rng(5);
  for (const auto& m :
       {ManifoldDescriptor::sphere(3), ManifoldDescriptor::ball(3),
        ManifoldDescriptor::euclidean(3),
        ManifoldDescriptor::product(
            {ManifoldDescriptor::sphere(2), ManifoldDescriptor::ball(2)})}) {
    const Vec p = random_point(m, rng);
    RflLayer l;
    l.source = m;
    l.target = m;
    l.A = Mat::Identity(m.intrinsic_dim, m.intrinsic_dim);
    l.b_source = p;
    l.b_target = p;
    l.sigma = Nonlinearity::kIdentity;
    CHECK((rfl_forward(l, p) - p).norm() < 1e-12);
    // and for other inputs log/exp at the same base cancel
    const Vec x = random_point(m, rng);
    CHECK((rfl_forward(l, x) - x).norm() < 1e-9);
  }
}

TEST_CASE("EFL reduction: b_target = 0, b_source = -A^+ b") {
  Rng rng(7);
  int done = 0;
  while (done < 100) {
    const int m = 2 + static_cast<int>(rng.uniform_index(4));  // inputs
    const int n =
        1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(m)));
    const Mat a = gaussian_mat(n, m, rng);
    // full row rank, conditioned well enough that A A^+ b = b holds to 1e-12
    Eigen::JacobiSVD<Mat> svd(a);
    if (svd.singularValues()(svd.singularValues().size() - 1) < 0.05) continue;
    ++done;
    const Vec b = gaussian_vec(n, rng);
    const Vec x = gaussian_vec(m, rng);
    const Vec pinv_b = a.completeOrthogonalDecomposition().solve(b);

    RflLayer l;
    l.source = ManifoldDescriptor::euclidean(m);
    l.target = ManifoldDescriptor::euclidean(n);
    l.A = a;
    l.b_source = -pinv_b;
    l.b_target = Vec::Zero(n);
    l.sigma = Nonlinearity::kTanh;

    const Vec got = rfl_forward(l, x);
    const Vec want = (a * x + b).array().tanh();
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("sphere-target outputs stay on the sphere") {
  Rng rng(11);
  const auto src = ManifoldDescriptor::euclidean(3);
  const auto tgt = ManifoldDescriptor::sphere(3);
  for (int trial = 0; trial < 50; ++trial) {
    const RflLayer l = random_layer(src, tgt, Nonlinearity::kTanh, rng);
    const Vec y = rfl_forward(l, gaussian_vec(3, rng));
    CHECK(std::abs(y.norm() - 1.0) <= 1e-9);
  }
}

TEST_CASE("network forward composes rfl layers") {
  Rng rng(13);
  const auto e3 = ManifoldDescriptor::euclidean(3);
  const auto s2 = ManifoldDescriptor::sphere(2);
  const auto h2 = ManifoldDescriptor::ball(2);

  RiemannianNetwork net({{e3, s2, Nonlinearity::kTanh},
                         {s2, h2, Nonlinearity::kIdentity}});
  net.set_layer_params(0, Mat(0.6 * gaussian_mat(2, 3, rng)),
                       random_point(e3, rng), random_point(s2, rng));
  net.set_layer_params(1, Mat(0.6 * gaussian_mat(2, 2, rng)),
                       random_point(s2, rng), random_point(h2, rng));

  for (int trial = 0; trial < 30; ++trial) {
    const Vec x = gaussian_vec(3, rng);
    const Vec manual = rfl_forward(net.layer(1), rfl_forward(net.layer(0), x));
    const Vec forwarded = net.forward(x);
    CHECK((manual - forwarded).norm() <= 1e-12);
    CHECK_NOTHROW(validate_point(h2, forwarded));
  }

  RiemannianNetwork one({{e3, s2, Nonlinearity::kTanh}});
  one.set_layer_params(0, net.layer(0).A, net.layer(0).b_source,
                       net.layer(0).b_target);
  const Vec x = gaussian_vec(3, rng);
  CHECK((one.forward(x) - rfl_forward(one.layer(0), x)).norm() <= 1e-12);

  const Vec p = random_point(s2, rng);
  RiemannianNetwork ident({{s2, s2, Nonlinearity::kIdentity},
                           {s2, s2, Nonlinearity::kIdentity}});
  ident.set_layer_params(0, Mat::Identity(2, 2), p, p);
  ident.set_layer_params(1, Mat::Identity(2, 2), p, p);
  const Vec q = random_point(s2, rng);
  CHECK((ident.forward(q) - q).norm() <= 1e-9);
}

TEST_CASE("network jacobian: identity and scaling maps") {
  const auto e2 = ManifoldDescriptor::euclidean(2);
  RiemannianNetwork ident({{e2, e2, Nonlinearity::kIdentity}});
  ident.set_layer_params(0, Mat::Identity(2, 2), Vec::Zero(2), Vec::Zero(2));
  CHECK(ident.jacobian(vec2(0.3, -0.7)).isApprox(Mat::Identity(2, 2), 1e-12));

  RiemannianNetwork twice({{e2, e2, Nonlinearity::kIdentity}});
  twice.set_layer_params(0, Mat(2.0 * Mat::Identity(2, 2)), Vec::Zero(2),
                         Vec::Zero(2));
  CHECK(twice.jacobian(vec2(0.3, -0.7))
            .isApprox(Mat(2.0 * Mat::Identity(2, 2)), 1e-12));
}

TEST_CASE("network jacobian matches finite differences on random networks") {
  Rng rng(17);
  const auto e3 = ManifoldDescriptor::euclidean(3);
  const auto s2 = ManifoldDescriptor::sphere(2);
  const auto h2 = ManifoldDescriptor::ball(2);
  const auto prod = ManifoldDescriptor::product({s2, h2});

  const std::vector<std::vector<ManifoldDescriptor>> chains = {
      {e3, e3, e3},
      {e3, ManifoldDescriptor::euclidean(4), s2},
      {e3, ManifoldDescriptor::euclidean(4), h2},
      {s2, ManifoldDescriptor::euclidean(4), s2},
      {h2, e3, prod},
      {prod, ManifoldDescriptor::euclidean(5), s2},
  };
  for (const auto& chain : chains) {
    for (int trial = 0; trial < 5; ++trial) {
      RiemannianNetwork net = init_network(chain, rng);
      for (int l = 0; l < net.layer_count(); ++l) {
        auto layer = net.layer(l);
        net.set_layer_params(
            l, Mat(0.6 * gaussian_mat(static_cast<int>(layer.A.rows()),
                                      static_cast<int>(layer.A.cols()), rng)),
            random_point(layer.source, rng), random_point(layer.target, rng));
      }
      const Vec x = random_point(chain.front(), rng);
      const Mat analytic = net.jacobian(x);

      // primary oracle: central differences of the traced ambient program,
      // restricted to the charts
      Vec y0;
      net.jacobian_ambient(x, &y0);
      const Mat fd_amb = tangent_basis(net.target(), y0).transpose() *
                         diff::finite_diff_jacobian(net.program(), net.params(), x) *
                         (chain.front().pure_euclidean()
                              ? Mat(Mat::Identity(chain.front().ambient_dim,
                                                  chain.front().ambient_dim))
                              : tangent_basis(chain.front(), x));
      double worst = 0.0;
      for (int i = 0; i < analytic.rows(); ++i)
        for (int j = 0; j < analytic.cols(); ++j)
          worst = std::max(worst, std::abs(analytic(i, j) - fd_amb(i, j)) /
                                      std::max(1.0, std::abs(fd_amb(i, j))));
      CHECK(worst <= 1e-5);

      // geometric cross-check through exp/log charts; skipped when a ball
      // factor sits near its boundary, where the chart curvature ~2/(1-r^2)
      // pushes finite h steps outside the oracle's linear regime
      bool near_boundary = false;
      int off = 0;
      for (int f = 0; f < net.target().factor_count(); ++f) {
        const auto& fac = net.target().factor(f);
        if (fac.kind == ManifoldKind::PoincareBall &&
            y0.segment(off, fac.ambient_dim).norm() > 0.95)
          near_boundary = true;
        off += fac.ambient_dim;
      }
      if (!near_boundary) {
        const Mat fd = fd_chart_jacobian(net, x);
        double worst_geo = 0.0;
        for (int i = 0; i < analytic.rows(); ++i)
          for (int j = 0; j < analytic.cols(); ++j)
            worst_geo =
                std::max(worst_geo, std::abs(analytic(i, j) - fd(i, j)) /
                                        std::max(1.0, std::abs(fd(i, j))));
        CHECK(worst_geo <= 5e-5);
      }
    }
  }
}

TEST_CASE("chain jacobian equals the product of layer chart jacobians") {
  Rng rng(19);
  const auto e3 = ManifoldDescriptor::euclidean(3);
  const auto s2 = ManifoldDescriptor::sphere(2);
  const auto h2 = ManifoldDescriptor::ball(2);
  RiemannianNetwork net({{e3, s2, Nonlinearity::kTanh},
                         {s2, h2, Nonlinearity::kIdentity}});
  net.set_layer_params(0, Mat(0.5 * gaussian_mat(2, 3, rng)),
                       random_point(e3, rng), random_point(s2, rng));
  net.set_layer_params(1, Mat(0.5 * gaussian_mat(2, 2, rng)),
                       random_point(s2, rng), random_point(h2, rng));

  for (int trial = 0; trial < 10; ++trial) {
    const Vec x = gaussian_vec(3, rng);
    const Vec mid = rfl_forward(net.layer(0), x);

    RiemannianNetwork first({{e3, s2, Nonlinearity::kTanh}});
    first.set_layer_params(0, net.layer(0).A, net.layer(0).b_source,
                           net.layer(0).b_target);
    RiemannianNetwork second({{s2, h2, Nonlinearity::kIdentity}});
    second.set_layer_params(0, net.layer(1).A, net.layer(1).b_source,
                            net.layer(1).b_target);

    const Mat total = net.jacobian(x);
    const Mat composed = second.jacobian(mid) * first.jacobian(x);
    CHECK((total - composed).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("init_network: seeded determinism and invariants") {
  const auto chain = parse_architecture("E50 -> E1600 -> E1600 -> S30xH30");
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    RiemannianNetwork net = init_network(chain, rng);
    for (int l = 0; l < net.layer_count(); ++l) {
      const RflLayer layer = net.layer(l);
      CHECK_NOTHROW(validate_point(layer.source, layer.b_source));
      CHECK_NOTHROW(validate_point(layer.target, layer.b_target));
      const Mat& a = layer.A;
      const Mat gram = a.rows() >= a.cols() ? Mat(a.transpose() * a)
                                            : Mat(a * a.transpose());
      CHECK((gram - Mat::Identity(gram.rows(), gram.cols())).norm() < 1e-8);
    }
  }
  Rng r1(42), r2(42), r3(43);
  RiemannianNetwork n1 = init_network(chain, r1);
  RiemannianNetwork n2 = init_network(chain, r2);
  RiemannianNetwork n3 = init_network(chain, r3);
  CHECK(n1.layer(0).A == n2.layer(0).A);
  CHECK(n1.layer(0).A != n3.layer(0).A);
}

TEST_CASE("layer chain compatibility is enforced") {
  const auto e2 = ManifoldDescriptor::euclidean(2);
  const auto e3 = ManifoldDescriptor::euclidean(3);
  CHECK_THROWS_AS(RiemannianNetwork({{e2, e3, Nonlinearity::kTanh},
                                     {e2, e3, Nonlinearity::kTanh}}),
                  ManifoldMismatch);
  RiemannianNetwork ok({{e2, e3, Nonlinearity::kTanh}});
  CHECK_THROWS_AS(
      ok.set_layer_params(0, Mat::Identity(2, 2), Vec::Zero(2), Vec::Zero(3)),
      DimMismatch);
  CHECK_THROWS_AS(ok.set_layer_params(0, Mat::Identity(3, 2), Vec::Zero(3),
                                      Vec::Zero(3)),
                  InvalidPoint);
}
