#include <doctest.h>

#include <cmath>
#include <set>

#include "nerd/errors.hpp"
#include "nerd/numerics/linalg.hpp"
#include "nerd/numerics/rng.hpp"
#include "nerd/numerics/stats.hpp"
#include "oracles.hpp"

using namespace nerd;
using namespace nerd::numerics;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

oracle::Mat to_rows(const Matrix& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

Matrix random_matrix(RngStream& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

Matrix pairwise_distances(const Matrix& pts) {
  Matrix d(pts.rows(), pts.rows());
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (Eigen::Index j = 0; j < pts.rows(); ++j) d(i, j) = (pts.row(i) - pts.row(j)).norm();
  return d;
}

}  // namespace

TEST_CASE("rng streams are reproducible and substreams independent") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream root(7);
  auto s1 = root.substream("s01", "init");
  auto s1b = root.substream("s01", "init");
  auto s2 = root.substream("s02", "init");
  auto s3 = root.substream("s01", "init", 1);
  const auto x1 = s1.next_u64();
  CHECK(x1 == s1b.next_u64());
  CHECK(x1 != s2.next_u64());
  CHECK(x1 != s3.next_u64());

  RngStream n(3);
  double sum = 0, sq = 0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const double z = n.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / N) < 0.01);
  CHECK(std::abs(sq / N - 1.0) < 0.02);
  RngStream u(4);
  for (int i = 0; i < 1000; ++i) {
    const auto k = u.below(7);
    CHECK(k < 7);
  }
}

TEST_CASE("gaussian_logpdf") {
  CHECK(gaussian_logpdf(0, 0, 1) == doctest::Approx(-0.91893853320467274).epsilon(1e-15));
  for (double s : {0.1, 1.0, 3.7}) CHECK(gaussian_logpdf(2.5, 2.5, s) == doctest::Approx(-0.5 * std::log(2 * M_PI) - std::log(s)));
  const double mass = oracle::trapezoid([](double x) { return std::exp(gaussian_logpdf(x, 0.0, 2.0)); }, -40, 40, 400000);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  const double v = gaussian_logpdf(1.0, 0.0, 2.0);
  CHECK(v == doctest::Approx(-0.5 * std::log(2 * M_PI) - std::log(2.0) - 1.0 / 8.0));
  CHECK_THROWS_AS(gaussian_logpdf(0, 0, 0), InvalidArgument);
  CHECK_THROWS_AS(gaussian_logpdf(0, 0, -1), InvalidArgument);
  CHECK_THROWS_AS(gaussian_logpdf(NAN, 0, 1), InvalidArgument);
}

TEST_CASE("pearson examples and properties") {
  CHECK(pearson(vec({1, 2, 3}), vec({1, 2, 3})) == doctest::Approx(1.0));
  CHECK(pearson(vec({1, 2, 3}), vec({3, 2, 1})) == doctest::Approx(-1.0));
  // one-line transcription of the defining formula
  auto formula = [](const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
  };
  CHECK(pearson(vec({1, 2, 4}), vec({2, 2, 5})) == doctest::Approx(formula({1, 2, 4}, {2, 2, 5})).epsilon(1e-14));
  CHECK_THROWS_AS(pearson(vec({1, 1, 1}), vec({1, 2, 3})), DegenerateInput);
  CHECK_THROWS_AS(pearson(vec({1}), vec({1})), InvalidArgument);

  RngStream rng(11);
  for (int rep = 0; rep < 1000; ++rep) {
    const Vector x = rng.normal_vector(2 + static_cast<Eigen::Index>(rng.below(8)));
    const Vector y = rng.normal_vector(x.size());
    const double r = pearson(x, y);
    CHECK(std::abs(r) <= 1.0 + 1e-12);
    if (rep < 100) {
      CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(pearson(x, Vector(-x)) == doctest::Approx(-1.0).epsilon(1e-12));
      std::vector<double> xs(x.data(), x.data() + x.size()), ys(y.data(), y.data() + y.size());
      CHECK(r == doctest::Approx(formula(xs, ys)).epsilon(1e-10));
    }
  }
}

TEST_CASE("spearman uses average ranks") {
  CHECK(spearman(vec({1, 2, 3, 4}), vec({10, 20, 30, 40})) == doctest::Approx(1.0));
  CHECK(spearman(vec({1, 2, 3, 4}), vec({1, 4, 9, 16})) == doctest::Approx(1.0));
  CHECK(spearman(vec({1, 2, 3}), vec({3, 2, 1})) == doctest::Approx(-1.0));
  // ties: ranks (1.5, 1.5, 3) vs (1, 2, 3)
  CHECK(spearman(vec({5, 5, 7}), vec({1, 2, 3})) == doctest::Approx(pearson(vec({1.5, 1.5, 3}), vec({1, 2, 3}))));
}

TEST_CASE("student_t_sf") {
  for (double dof : {1.0, 3.0, 23.0}) CHECK(student_t_sf(0.0, dof) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(student_t_sf(1e6, 5) < 1e-12);
  CHECK(student_t_sf(2.0, 10) == doctest::Approx(oracle::t_sf(2.0, 10)).epsilon(1e-8));
  // dof = 1 is Cauchy: sf(t) = 1/2 - atan(t)/pi
  CHECK(student_t_sf(1.3, 1) == doctest::Approx(0.5 - std::atan(1.3) / M_PI).epsilon(1e-12));
  RngStream rng(5);
  for (int i = 0; i < 50; ++i) {
    const double t = rng.uniform(-6, 6), dof = 1 + static_cast<double>(rng.below(40));
    CHECK(student_t_sf(-t, dof) + student_t_sf(t, dof) == doctest::Approx(1.0).epsilon(1e-10));
  }
  CHECK(two_sided_p(0.0, 7) == doctest::Approx(1.0));
  CHECK_THROWS_AS(student_t_sf(1.0, 0.5), InvalidArgument);
}

TEST_CASE("ols_fit examples") {
  Matrix x(10, 2);
  Vector y(10);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = 1;
    x(i, 1) = i;
    y[i] = 2 * i + 1;
  }
  const auto fit = ols_fit(x, y);
  CHECK(fit.coefficients[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.coefficients[1] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.design_column_names == std::vector<std::string>{"x0", "x1"});

  const Matrix ones = Matrix::Ones(5, 1);
  const auto c = ols_fit(ones, Vector::Constant(5, 3.5));
  CHECK(c.coefficients[0] == doctest::Approx(3.5));
  CHECK(c.r_squared == 0.0);

  Matrix rank_def(5, 2);
  rank_def.col(0).setOnes();
  rank_def.col(1).setConstant(2.0);
  CHECK_THROWS_AS(ols_fit(rank_def, vec({1, 2, 3, 4, 5})), SingularDesign);
  CHECK_THROWS_AS(ols_fit(Matrix::Ones(2, 2), vec({1, 2})), InsufficientData);
}

TEST_CASE("ols_fit matches normal equations solved by elimination (100 instances)") {
  RngStream rng(2024);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index n = 8 + static_cast<Eigen::Index>(rng.below(20));
    const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.below(3));
    Matrix x = random_matrix(rng, n, k);
    x.col(0).setOnes();
    const Vector y = random_matrix(rng, n, 1).col(0);
    const auto fit = ols_fit(x, y);

    const Matrix xtx_m = x.transpose() * x;
    const Vector xty_v = x.transpose() * y;
    oracle::Mat xtx = to_rows(xtx_m);
    oracle::Vec xty(xty_v.data(), xty_v.data() + xty_v.size());
    const auto beta = oracle::solve(xtx, xty);
    const auto inv = oracle::inverse(xtx);
    double rss = 0, tss = 0;
    const double my = y.mean();
    for (Eigen::Index i = 0; i < n; ++i) {
      double pred = 0;
      for (Eigen::Index j = 0; j < k; ++j) pred += x(i, j) * beta[j];
      rss += (y[i] - pred) * (y[i] - pred);
      tss += (y[i] - my) * (y[i] - my);
    }
    const double s2 = rss / static_cast<double>(n - k);
    for (Eigen::Index j = 0; j < k; ++j) {
      CHECK(fit.coefficients[j] == doctest::Approx(beta[j]).epsilon(1e-8));
      const double se = std::sqrt(s2 * inv[j][j]);
      CHECK(fit.std_errors[j] == doctest::Approx(se).epsilon(1e-8));
      CHECK(fit.t_stats[j] == doctest::Approx(beta[j] / se).epsilon(1e-7));
      CHECK(fit.p_values[j] == doctest::Approx(2 * student_t_sf(std::abs(beta[j] / se), double(n - k))).epsilon(1e-7));
    }
    CHECK(fit.r_squared == doctest::Approx(1 - rss / tss).epsilon(1e-9));
    CHECK(fit.residual_dof == n - k);
    // residuals orthogonal to every design column
    for (Eigen::Index j = 0; j < k; ++j) CHECK(std::abs(x.col(j).dot(fit.residuals)) < 1e-8);
  }
}

TEST_CASE("paired_t_test") {
  CHECK_THROWS_AS(paired_t_test(vec({1, 2, 3}), vec({1, 2, 3})), DegenerateInput);
  CHECK_THROWS_AS(paired_t_test(vec({2, 3, 4}), vec({1, 2, 3})), DegenerateInput);
  CHECK_THROWS_AS(paired_t_test(vec({1}), vec({2})), InvalidArgument);
  RngStream rng(99);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index n = rep == 0 ? 24 : 2 + static_cast<Eigen::Index>(rng.below(30));
    const Vector a = rng.normal_vector(n), b = rng.normal_vector(n);
    const auto r = paired_t_test(a, b);
    double md = 0;
    for (Eigen::Index i = 0; i < n; ++i) md += (a[i] - b[i]) / static_cast<double>(n);
    double ss = 0;
    for (Eigen::Index i = 0; i < n; ++i) ss += (a[i] - b[i] - md) * (a[i] - b[i] - md);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double t = md / (sd / std::sqrt(static_cast<double>(n)));
    CHECK(r.dof == n - 1);
    CHECK(r.t == doctest::Approx(t).epsilon(1e-10));
    CHECK(r.p == doctest::Approx(2 * student_t_sf(std::abs(t), static_cast<double>(n - 1))).epsilon(1e-10));
    if (rep == 0) CHECK(r.p == doctest::Approx(2 * oracle::t_sf(std::abs(t), 23)).epsilon(1e-7));
  }
}

TEST_CASE("pca examples") {
  Matrix line(5, 2);
  for (int i = 0; i < 5; ++i) {
    line(i, 0) = i;
    line(i, 1) = 2 * i + 1;
  }
  const auto p = pca(line, 2);
  CHECK(p.explained_variance_ratio[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(p.explained_variance_ratio[1]) < 1e-9);

  Matrix cross(4, 2);
  cross << 1, 0, -1, 0, 0, 1, 0, -1;
  const auto c = pca(cross, 2);
  CHECK(c.explained_variance_ratio[0] == doctest::Approx(0.5));
  CHECK(c.explained_variance_ratio[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(pca(cross, 3), InvalidArgument);
  CHECK_THROWS_AS(pca(Matrix::Ones(1, 2), 1), InvalidArgument);
}

TEST_CASE("pca matches a Jacobi eigen oracle on 100 random instances") {
  RngStream rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng.below(10));
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(4));
    const Matrix data = random_matrix(rng, n, d);
    const Eigen::Index k = std::min(n, d);
    const auto p = pca(data, k);

    const Vector mean = data.colwise().mean();
    const Matrix centered = data.rowwise() - mean.transpose();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
    oracle::Vec values;
    oracle::Mat vectors;
    oracle::jacobi_eigen(to_rows(cov), values, vectors);
    const double total = std::accumulate(values.begin(), values.end(), 0.0);
    for (Eigen::Index j = 0; j < k; ++j) {
      CHECK(p.explained_variance[j] == doctest::Approx(values[j]).epsilon(1e-9));
      CHECK(p.explained_variance_ratio[j] == doctest::Approx(values[j] / total).epsilon(1e-9));
      // same axis up to sign
      double dot = 0;
      for (Eigen::Index i = 0; i < d; ++i) dot += p.components(j, i) * vectors[i][j];
      CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-6));
    }
    for (Eigen::Index j = 1; j < k; ++j) CHECK(p.explained_variance_ratio[j] <= p.explained_variance_ratio[j - 1] + 1e-12);
    CHECK(p.explained_variance_ratio.sum() <= 1 + 1e-9);
    const Matrix gram = p.components * p.components.transpose();
    CHECK((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-9);
    if (k == d) {
      const Matrix recon = (p.scores * p.components).rowwise() + p.mean.transpose();
      CHECK((recon - data).cwiseAbs().maxCoeff() < 1e-8);
    }
    const Matrix sc = p.scores.transpose() * p.scores / static_cast<double>(n - 1);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j)
        if (i != j) CHECK(std::abs(sc(i, j)) < 1e-8 * std::max(1.0, p.explained_variance[0]));
  }
}

TEST_CASE("kmeans examples") {
  RngStream rng(8);
  const Matrix pts = random_matrix(rng, 6, 2);
  RngStream r1(1);
  const auto kn = kmeans(pts, 6, r1);
  CHECK(kn.inertia == doctest::Approx(0.0));
  std::set<int> distinct(kn.labels.data(), kn.labels.data() + kn.labels.size());
  CHECK(distinct.size() == 6);

  RngStream r2(1);
  const auto k1 = kmeans(pts, 1, r2);
  const Vector mean = pts.colwise().mean();
  CHECK((k1.centroids.row(0).transpose() - mean).norm() < 1e-12);
  CHECK(k1.inertia == doctest::Approx((pts.rowwise() - mean.transpose()).squaredNorm()));
  RngStream r3(1);
  CHECK_THROWS_AS(kmeans(pts, 7, r3), InvalidArgument);

  // deterministic under a fixed seed
  RngStream a(5), b(5);
  CHECK(kmeans(pts, 3, a).labels == kmeans(pts, 3, b).labels);
}

TEST_CASE("kmeans reaches the exhaustive optimum on 100 small instances") {
  RngStream rng(77);
  int optimal = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng.below(4));
    const int k = 2 + static_cast<int>(rng.below(2));
    Matrix pts = random_matrix(rng, n, 2);
    // two or three loose groups
    for (Eigen::Index i = 0; i < n; ++i) pts(i, 0) += 4.0 * static_cast<double>(i % k);
    RngStream krng(static_cast<std::uint64_t>(rep));
    const auto res = kmeans(pts, k, krng);
    const double best = oracle::brute_force_kmeans(to_rows(pts), k);
    CHECK(res.inertia >= best - 1e-9);
    if (res.inertia <= best + 1e-9) ++optimal;
    for (std::size_t i = 1; i < res.inertia_history.size(); ++i)
      CHECK(res.inertia_history[i] <= res.inertia_history[i - 1] + 1e-9);
  }
  CHECK(optimal >= 95);
}

TEST_CASE("kmeans separates two blobs") {
  RngStream rng(3);
  Matrix pts(20, 2);
  for (int i = 0; i < 20; ++i) {
    pts(i, 0) = (i < 10 ? 0.0 : 10.0) + 0.3 * rng.normal();
    pts(i, 1) = 0.3 * rng.normal();
  }
  RngStream krng(2);
  const auto res = kmeans(pts, 2, krng);
  for (int i = 1; i < 10; ++i) CHECK(res.labels[i] == res.labels[0]);
  for (int i = 11; i < 20; ++i) CHECK(res.labels[i] == res.labels[10]);
  CHECK(res.labels[0] != res.labels[10]);
}

TEST_CASE("agglomerative_cluster examples") {
  RngStream rng(4);
  const Matrix pts = random_matrix(rng, 5, 2);
  const Matrix d = pairwise_distances(pts);
  const auto single = agglomerative_cluster(d, 5);
  std::set<int> distinct(single.labels.data(), single.labels.data() + 5);
  CHECK(distinct.size() == 5);
  CHECK(agglomerative_cluster(d, 1).merges.size() == 4);

  Matrix groups(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) groups(i, j) = i == j ? 0.0 : ((i < 3) == (j < 3) ? 1.0 : 50.0);
  for (auto l : {Linkage::average, Linkage::complete, Linkage::ward}) {
    const auto t = agglomerative_cluster(groups, 2, l);
    CHECK(t.labels[0] == t.labels[1]);
    CHECK(t.labels[1] == t.labels[2]);
    CHECK(t.labels[3] == t.labels[4]);
    CHECK(t.labels[0] != t.labels[3]);
  }
  Matrix asym = groups;
  asym(0, 1) = 2.0;
  CHECK_THROWS_AS(agglomerative_cluster(asym, 2), InvalidArgument);
  Matrix neg = groups;
  neg(0, 1) = neg(1, 0) = -1.0;
  CHECK_THROWS_AS(agglomerative_cluster(neg, 2), InvalidArgument);
  CHECK_THROWS_AS(agglomerative_cluster(groups, 0), InvalidArgument);
  CHECK_THROWS_AS(agglomerative_cluster(groups, 7), InvalidArgument);
}

TEST_CASE("agglomerative_cluster matches a naive replay on 100 random metrics") {
  RngStream rng(123);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index n = rep == 0 ? 6 : 4 + static_cast<Eigen::Index>(rng.below(6));
    const Eigen::Index k = rep == 0 ? 3 : 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    const Matrix d = pairwise_distances(random_matrix(rng, n, 3));
    for (bool complete : {false, true}) {
      const auto t = agglomerative_cluster(d, k, complete ? Linkage::complete : Linkage::average);
      std::vector<int> got(t.labels.data(), t.labels.data() + t.labels.size());
      CHECK(oracle::canonical(got) == oracle::naive_agglomerate(to_rows(d), static_cast<std::size_t>(k), complete));
    }
  }
}

TEST_CASE("classical_mds examples") {
  Matrix d(3, 3);
  d << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  const Matrix x = classical_mds(d, 1);
  CHECK(std::abs(x(0, 0) - x(1, 0)) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(x(1, 0) - x(2, 0)) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(x(0, 0) - x(2, 0)) == doctest::Approx(2.0).epsilon(1e-9));

  const Matrix zero = classical_mds(Matrix::Zero(4, 4), 2);
  CHECK(zero.cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(classical_mds(d, 3), InvalidArgument);
  CHECK_THROWS_AS(classical_mds(d, 0), InvalidArgument);
}

TEST_CASE("classical_mds reproduces Euclidean distances on 100 point sets") {
  RngStream rng(55);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index n = rep == 0 ? 8 : 4 + static_cast<Eigen::Index>(rng.below(8));
    const Eigen::Index dims = 1 + static_cast<Eigen::Index>(rng.below(3));
    if (dims > n - 1) continue;
    const Matrix pts = random_matrix(rng, n, dims);
    const Matrix d = pairwise_distances(pts);
    const Matrix emb = classical_mds(d, dims);
    CHECK((pairwise_distances(emb) - d).cwiseAbs().maxCoeff() < 1e-6);
  }
}
