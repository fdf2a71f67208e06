#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "obfloc/solvers.hpp"

namespace obfloc {

namespace {

// Dense polynomial in x, y, z of total degree <= 3.
struct Poly3 {
  std::array<double, 64> c{};

  static int index(int i, int j, int k) { return (i * 4 + j) * 4 + k; }
  double& at(int i, int j, int k) { return c[index(i, j, k)]; }
  double at(int i, int j, int k) const { return c[index(i, j, k)]; }

  static Poly3 linear(double x, double y, double z, double w) {
    Poly3 p;
    p.at(1, 0, 0) = x;
    p.at(0, 1, 0) = y;
    p.at(0, 0, 1) = z;
    p.at(0, 0, 0) = w;
    return p;
  }

  Poly3& operator+=(const Poly3& o) {
    for (int i = 0; i < 64; ++i) c[i] += o.c[i];
    return *this;
  }
  Poly3& operator-=(const Poly3& o) {
    for (int i = 0; i < 64; ++i) c[i] -= o.c[i];
    return *this;
  }
  friend Poly3 operator+(Poly3 a, const Poly3& b) { return a += b; }
  friend Poly3 operator-(Poly3 a, const Poly3& b) { return a -= b; }
  friend Poly3 operator*(double s, Poly3 a) {
    for (double& v : a.c) v *= s;
    return a;
  }
  double eval(const Vec3& v, Vec3* grad) const {
    double value = 0.0;
    Vec3 g = Vec3::Zero();
    double px[4] = {1, v.x(), v.x() * v.x(), v.x() * v.x() * v.x()};
    double py[4] = {1, v.y(), v.y() * v.y(), v.y() * v.y() * v.y()};
    double pz[4] = {1, v.z(), v.z() * v.z(), v.z() * v.z() * v.z()};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; i + j < 4; ++j)
        for (int k = 0; i + j + k < 4; ++k) {
          const double cf = at(i, j, k);
          if (cf == 0.0) continue;
          value += cf * px[i] * py[j] * pz[k];
          if (i > 0) g.x() += cf * i * px[i - 1] * py[j] * pz[k];
          if (j > 0) g.y() += cf * j * px[i] * py[j - 1] * pz[k];
          if (k > 0) g.z() += cf * k * px[i] * py[j] * pz[k - 1];
        }
    if (grad) *grad = g;
    return value;
  }

  friend Poly3 operator*(const Poly3& a, const Poly3& b) {
    Poly3 r;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; i + j < 4; ++j)
        for (int k = 0; i + j + k < 4; ++k) {
          const double av = a.at(i, j, k);
          if (av == 0.0) continue;
          for (int p = 0; i + p < 4; ++p)
            for (int q = 0; j + q < 4 && i + p + j + q < 4; ++q)
              for (int s = 0; i + j + k + p + q + s < 4; ++s) r.at(i + p, j + q, k + s) += av * b.at(p, q, s);
        }
    return r;
  }
};

using PolyMat = std::array<std::array<Poly3, 3>, 3>;

PolyMat multiply(const PolyMat& a, const PolyMat& b) {
  PolyMat r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

PolyMat transpose(const PolyMat& a) {
  PolyMat r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = a[j][i];
  return r;
}

// Monomial order: x^3 y^3 x^2y xy^2 x^2z x^2 y^2z y^2 xyz xy | xz^2 xz x yz^2 yz y z^3 z^2 z 1.
// The first ten are eliminated; the trailing ten are linear in x, y with
// z-polynomial coefficients.
constexpr std::array<std::array<int, 3>, 20> kMonomials = {{
    {3, 0, 0}, {0, 3, 0}, {2, 1, 0}, {1, 2, 0}, {2, 0, 1}, {2, 0, 0}, {0, 2, 1},
    {0, 2, 0}, {1, 1, 1}, {1, 1, 0}, {1, 0, 2}, {1, 0, 1}, {1, 0, 0}, {0, 1, 2},
    {0, 1, 1}, {0, 1, 0}, {0, 0, 3}, {0, 0, 2}, {0, 0, 1}, {0, 0, 0},
}};

using ZPoly = std::array<double, 11>;  // ascending powers of z

ZPoly zmul(const ZPoly& a, const ZPoly& b) {
  ZPoly r{};
  for (int i = 0; i < 11; ++i) {
    if (a[i] == 0.0) continue;
    for (int j = 0; i + j < 11; ++j) r[i + j] += a[i] * b[j];
  }
  return r;
}

ZPoly zsub(const ZPoly& a, const ZPoly& b) {
  ZPoly r{};
  for (int i = 0; i < 11; ++i) r[i] = a[i] - b[i];
  return r;
}

ZPoly zshift(const ZPoly& a) {
  ZPoly r{};
  for (int i = 0; i < 10; ++i) r[i + 1] = a[i];
  return r;
}

double zeval(const ZPoly& p, double z) {
  double v = 0.0;
  for (int i = 10; i >= 0; --i) v = v * z + p[i];
  return v;
}

}  // namespace

EssentialMatrix normalize_essential(const Mat3& E) {
  Mat3 out = E / E.norm();
  Eigen::Index r = 0, c = 0;
  out.cwiseAbs().maxCoeff(&r, &c);
  if (out(r, c) < 0) out = -out;
  return out;
}

double essential_det_residual(const EssentialMatrix& E) {
  return std::abs((E / E.norm()).determinant());
}

double essential_trace_residual(const EssentialMatrix& E) {
  const Mat3 En = E / E.norm();
  const Mat3 EEt = En * En.transpose();
  return (2.0 * EEt * En - EEt.trace() * En).cwiseAbs().maxCoeff();
}

std::vector<EssentialMatrix> essential_5pt(std::span<const BearingPair, 5> pairs) {
  Eigen::Matrix<double, 5, 9> Q;
  for (int r = 0; r < 5; ++r) {
    const Vec3 a = pairs[r].first.normalized();
    const Vec3 b = pairs[r].second.normalized();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) Q(r, 3 * i + j) = b(i) * a(j);
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 5, 9>> svd(Q, Eigen::ComputeFullV);
  const auto sv = svd.singularValues();
  if (sv(4) <= 1e-10 * sv(0)) return {};
  // Mix the null-space basis with a fixed generic reflection: structured
  // inputs (e.g. axis-aligned pure translation) otherwise put the solution
  // exactly at W-coefficient zero, which this parameterisation cannot reach.
  const Eigen::Vector4d h(0.5727, -0.3109, 0.6813, 0.3274);
  const Eigen::Matrix4d mix = Eigen::Matrix4d::Identity() - 2.0 * h * h.transpose() / h.squaredNorm();
  Eigen::Matrix<double, 9, 9> V = svd.matrixV();
  V.rightCols<4>() = (V.rightCols<4>() * mix).eval();

  // E = x X + y Y + z Z + W over the right null space.
  PolyMat E;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int e = 3 * i + j;
      E[i][j] = Poly3::linear(V(e, 5), V(e, 6), V(e, 7), V(e, 8));
    }

  Eigen::Matrix<double, 10, 20> A;
  const Poly3 det = E[0][0] * (E[1][1] * E[2][2] - E[1][2] * E[2][1]) -
                    E[0][1] * (E[1][0] * E[2][2] - E[1][2] * E[2][0]) +
                    E[0][2] * (E[1][0] * E[2][1] - E[1][1] * E[2][0]);
  const PolyMat EEt = multiply(E, transpose(E));
  const Poly3 trace = EEt[0][0] + EEt[1][1] + EEt[2][2];
  const PolyMat EEtE = multiply(EEt, E);
  std::array<Poly3, 10> eqs;
  eqs[0] = det;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) eqs[1 + 3 * i + j] = 2.0 * EEtE[i][j] - trace * E[i][j];
  for (int r = 0; r < 10; ++r)
    for (int m = 0; m < 20; ++m)
      A(r, m) = eqs[r].at(kMonomials[m][0], kMonomials[m][1], kMonomials[m][2]);

  // Gauss-Jordan with partial pivoting over the first ten columns.
  const double scale = A.cwiseAbs().maxCoeff();
  for (int col = 0; col < 10; ++col) {
    Eigen::Index pivot = 0;
    A.col(col).segment(col, 10 - col).cwiseAbs().maxCoeff(&pivot);
    pivot += col;
    if (std::abs(A(pivot, col)) <= 1e-12 * scale) return {};
    A.row(col).swap(A.row(pivot));
    A.row(col) /= A(col, col);
    for (int r = 0; r < 10; ++r) {
      if (r != col) A.row(r) -= A(r, col) * A.row(col);
    }
  }

  auto px = [&](int r) { return ZPoly{A(r, 12), A(r, 11), A(r, 10)}; };
  auto py = [&](int r) { return ZPoly{A(r, 15), A(r, 14), A(r, 13)}; };
  auto p1 = [&](int r) { return ZPoly{A(r, 19), A(r, 18), A(r, 17), A(r, 16)}; };

  // Rows (x^2 z, x^2), (y^2 z, y^2), (xyz, xy): eliminate the leading
  // monomial with row_a - z * row_b.
  std::array<std::array<ZPoly, 3>, 3> B;
  const std::array<std::pair<int, int>, 3> row_pairs = {{{4, 5}, {6, 7}, {8, 9}}};
  for (int k = 0; k < 3; ++k) {
    const auto [a, b] = row_pairs[k];
    B[k][0] = zsub(px(a), zshift(px(b)));
    B[k][1] = zsub(py(a), zshift(py(b)));
    B[k][2] = zsub(p1(a), zshift(p1(b)));
  }

  const ZPoly n = zsub(zmul(B[0][0], zsub(zmul(B[1][1], B[2][2]), zmul(B[1][2], B[2][1]))),
                       zsub(zmul(B[0][1], zsub(zmul(B[1][0], B[2][2]), zmul(B[1][2], B[2][0]))),
                            zmul(B[0][2], zsub(zmul(B[1][0], B[2][1]), zmul(B[1][1], B[2][0])))));

  const std::vector<double> zs = detail::real_polynomial_roots(n, 1);

  std::vector<EssentialMatrix> out;
  for (double z : zs) {
    Mat3 Bz;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) Bz(r, c) = zeval(B[r][c], z);
    // (x, y, 1) spans the null space of B(z).
    const Vec3 c01 = Bz.row(0).cross(Bz.row(1));
    const Vec3 c02 = Bz.row(0).cross(Bz.row(2));
    const Vec3 c12 = Bz.row(1).cross(Bz.row(2));
    Vec3 v = c01;
    if (c02.norm() > v.norm()) v = c02;
    if (c12.norm() > v.norm()) v = c12;
    if (std::abs(v.z()) < 1e-14 * v.norm() || v.norm() == 0.0) continue;
    Vec3 xyz(v.x() / v.z(), v.y() / v.z(), z);

    // Gauss-Newton on the ten cubic constraints sharpens roots that the
    // univariate elimination left slightly inaccurate.
    for (int it = 0; it < 3; ++it) {
      Eigen::Matrix<double, 10, 1> f;
      Eigen::Matrix<double, 10, 3> J;
      for (int r = 0; r < 10; ++r) {
        Vec3 g;
        f(r) = eqs[r].eval(xyz, &g);
        J.row(r) = g.transpose();
      }
      const Vec3 step = J.colPivHouseholderQr().solve(f);
      if (!step.allFinite()) break;
      xyz -= step;
      if (step.norm() <= 1e-15 * (1.0 + xyz.norm())) break;
    }
    const double x = xyz.x();
    const double y = xyz.y();
    const double zr = xyz.z();

    Eigen::Matrix<double, 9, 1> e = x * V.col(5) + y * V.col(6) + zr * V.col(7) + V.col(8);
    Mat3 Em;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) Em(i, j) = e(3 * i + j);
    if (!Em.allFinite() || Em.norm() == 0.0) continue;
    Em = normalize_essential(Em);

    if (essential_det_residual(Em) > 1e-8 || essential_trace_residual(Em) > 1e-6) continue;
    bool epipolar_ok = true;
    for (const auto& p : pairs) {
      if (std::abs(p.second.normalized().dot(Em * p.first.normalized())) > 1e-8) {
        epipolar_ok = false;
        break;
      }
    }
    if (!epipolar_ok) continue;
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const Mat3& o) {
      return (o - Em).norm() < 1e-10;
    });
    if (!duplicate) out.push_back(Em);
  }
  return out;
}

}  // namespace obfloc
