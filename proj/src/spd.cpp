#include "retrofit/spd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace retrofit::spd {

namespace {

constexpr int kMaxSweeps = 100;

void check_square(const Mat& x) {
  if (x.rows() != x.cols()) throw DimMismatch("matrix is not square");
}

// Sort eigenpairs ascending and fix each eigenvector's sign so its
// largest-magnitude entry is positive. Keeps output deterministic across
// otherwise equivalent rotation orders.
EigResult canonicalize(Vec evals, Mat evecs) {
  const int n = static_cast<int>(evals.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return evals[a] < evals[b]; });
  EigResult out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (int k = 0; k < n; ++k) {
    out.eigenvalues[k] = evals[order[k]];
    Vec col = evecs.col(order[k]);
    int arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0) col = -col;
    out.eigenvectors.col(k) = col;
  }
  return out;
}

}  // namespace

EigResult sym_eig(const Mat& x) {
  check_square(x);
  const int n = static_cast<int>(x.rows());
  Mat a = 0.5 * (x + x.transpose());
  Mat v = Mat::Identity(n, n);
  if (n == 1) return canonicalize(a.diagonal(), v);

  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  const double tol = 1e-15 * scale;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= tol * n) return canonicalize(a.diagonal(), v);

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= tol) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  throw EigFailure("Jacobi eigensolver did not converge within 100 sweeps");
}

SpdMatrix make_spd(Mat x, int* floored) {
  check_square(x);
  EigResult eig = sym_eig(x);
  int hits = 0;
  for (int i = 0; i < eig.eigenvalues.size(); ++i) {
    if (eig.eigenvalues[i] < kEigenvalueFloor) {
      eig.eigenvalues[i] = kEigenvalueFloor;
      ++hits;
    }
  }
  if (floored) *floored += hits;
  SpdMatrix out;
  out.m = eig.eigenvectors * eig.eigenvalues.asDiagonal() *
          eig.eigenvectors.transpose();
  out.m = 0.5 * (out.m + out.m.transpose()).eval();
  return out;
}

Mat spd_log(const SpdMatrix& x, int* floored) {
  EigResult eig = sym_eig(x.m);
  Vec lg(eig.eigenvalues.size());
  for (int i = 0; i < lg.size(); ++i) {
    double ev = eig.eigenvalues[i];
    if (ev < kEigenvalueFloor) {
      ev = kEigenvalueFloor;
      if (floored) ++*floored;
    }
    lg[i] = std::log(ev);
  }
  Mat out = eig.eigenvectors * lg.asDiagonal() * eig.eigenvectors.transpose();
  return 0.5 * (out + out.transpose()).eval();
}

SymRatio sym_ratio(const SpdMatrix& x, const SpdMatrix& y, int* floored) {
  if (x.dim() != y.dim())
    throw DimMismatch("SPD geodesic distance requires equal dimensions");
  EigResult ey = sym_eig(y.m);
  Vec inv_sqrt(ey.eigenvalues.size());
  for (int i = 0; i < inv_sqrt.size(); ++i) {
    double ev = ey.eigenvalues[i];
    if (ev < kEigenvalueFloor) {
      ev = kEigenvalueFloor;
      if (floored) ++*floored;
    }
    inv_sqrt[i] = 1.0 / std::sqrt(ev);
  }
  SymRatio out;
  out.y_inv_sqrt = ey.eigenvectors * inv_sqrt.asDiagonal() *
                   ey.eigenvectors.transpose();
  Mat m = out.y_inv_sqrt * x.m * out.y_inv_sqrt;
  m = 0.5 * (m + m.transpose()).eval();
  EigResult em = sym_eig(m);
  for (int i = 0; i < em.eigenvalues.size(); ++i) {
    if (em.eigenvalues[i] < kEigenvalueFloor) {
      em.eigenvalues[i] = kEigenvalueFloor;
      if (floored) ++*floored;
    }
  }
  out.eigenvalues = em.eigenvalues;
  out.eigenvectors = em.eigenvectors;
  return out;
}

double spd_geodesic_sq(const SpdMatrix& x, const SpdMatrix& y, int* floored) {
  const SymRatio r = sym_ratio(x, y, floored);
  double acc = 0.0;
  for (int i = 0; i < r.eigenvalues.size(); ++i) {
    const double l = std::log(r.eigenvalues[i]);
    acc += l * l;
  }
  return acc;
}

double logdet_ratio(const SpdMatrix& x, const SpdMatrix& y, int* floored) {
  const SymRatio r = sym_ratio(x, y, floored);
  double acc = 0.0;
  for (int i = 0; i < r.eigenvalues.size(); ++i)
    acc += std::log(r.eigenvalues[i]);
  return acc;
}

}  // namespace retrofit::spd
