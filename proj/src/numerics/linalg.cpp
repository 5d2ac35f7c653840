#include "nerd/numerics/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "nerd/errors.hpp"

namespace nerd::numerics {

namespace {

// Descending eigenpairs of a symmetric matrix.
void sorted_eigen(const Matrix& sym, Vector& values, Matrix& vectors) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericFailure("eigendecomposition did not converge", 0);
  const Eigen::Index n = sym.rows();
  values.resize(n);
  vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    values[i] = solver.eigenvalues()[n - 1 - i];
    vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
}

void fix_sign(Eigen::Ref<Vector> v) {
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v[arg] < 0) v = -v;
}

}  // namespace

PcaResult pca(const Matrix& data, Eigen::Index n_components) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  if (n < 2) throw InvalidArgument("pca: need at least two samples");
  if (n_components < 1 || n_components > std::min(n, d)) throw InvalidArgument("pca: n_components out of range");

  PcaResult res;
  res.mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - res.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Vector values;
  Matrix vectors;
  sorted_eigen(cov, values, vectors);
  values = values.cwiseMax(0.0);
  const double total = values.sum();

  res.components.resize(n_components, d);
  for (Eigen::Index c = 0; c < n_components; ++c) {
    Vector v = vectors.col(c);
    fix_sign(v);
    res.components.row(c) = v.transpose();
  }
  res.explained_variance = values.head(n_components);
  res.explained_variance_ratio =
      total > 0.0 ? Vector(res.explained_variance / total) : Vector(Vector::Zero(n_components));
  res.scores = centered * res.components.transpose();
  return res;
}

namespace {

double sq_dist(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  return (a - b).squaredNorm();
}

Matrix plus_plus_seed(const Matrix& data, Eigen::Index k, RngStream& rng) {
  const Eigen::Index n = data.rows();
  Matrix centroids(k, data.cols());
  centroids.row(0) = data.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Vector best(n);
  for (Eigen::Index i = 0; i < n; ++i) best[i] = sq_dist(data.row(i).transpose(), centroids.row(0).transpose());
  for (Eigen::Index c = 1; c < k; ++c) {
    const double total = best.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += best[i];
        if (acc > target && best[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = data.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      best[i] = std::min(best[i], sq_dist(data.row(i).transpose(), centroids.row(c).transpose()));
  }
  return centroids;
}

KMeansResult lloyd(const Matrix& data, Matrix centroids, int max_iterations) {
  const Eigen::Index n = data.rows();
  const Eigen::Index k = centroids.rows();
  KMeansResult res;
  res.labels = IntVector::Constant(n, -1);
  Vector dist(n);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best_c = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double dd = sq_dist(data.row(i).transpose(), centroids.row(c).transpose());
        if (dd < best_d) {
          best_d = dd;
          best_c = static_cast<int>(c);
        }
      }
      if (res.labels[i] != best_c) changed = true;
      res.labels[i] = best_c;
      dist[i] = best_d;
      inertia += best_d;
    }
    res.inertia_history.push_back(inertia);
    res.inertia = inertia;
    if (!changed) break;

    Matrix sums = Matrix::Zero(k, data.cols());
    Vector counts = Vector::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.labels[i]) += data.row(i);
      counts[res.labels[i]] += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centroids.row(c) = sums.row(c) / counts[c];
      } else {
        // Empty cluster: steal the point farthest from its centroid.
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        centroids.row(c) = data.row(far);
        dist[far] = 0.0;
      }
    }
  }
  res.centroids = std::move(centroids);
  return res;
}

}  // namespace

KMeansResult kmeans(const Matrix& data, Eigen::Index k, RngStream& rng, int n_restarts, int max_iterations) {
  const Eigen::Index n = data.rows();
  if (k < 1 || k > n) throw InvalidArgument("kmeans: k must satisfy 1 <= k <= n");
  if (n_restarts < 1) throw InvalidArgument("kmeans: n_restarts must be >= 1");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < n_restarts; ++r) {
    KMeansResult run = lloyd(data, plus_plus_seed(data, k, rng), max_iterations);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

void require_distance_matrix(const Matrix& m, double tol, const char* who) {
  if (m.rows() != m.cols()) throw InvalidArgument(std::string(who) + ": matrix must be square");
  if (!m.allFinite()) throw InvalidArgument(std::string(who) + ": non-finite entry");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (std::abs(m(i, i)) > tol) throw InvalidArgument(std::string(who) + ": nonzero diagonal");
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) < -tol) throw InvalidArgument(std::string(who) + ": negative entry");
      if (std::abs(m(i, j) - m(j, i)) > tol * std::max(1.0, std::abs(m(i, j))))
        throw InvalidArgument(std::string(who) + ": matrix is not symmetric");
    }
  }
}

Dendrogram agglomerative_cluster(const Matrix& dist, Eigen::Index k, Linkage linkage) {
  require_distance_matrix(dist, 1e-12, "agglomerative_cluster");
  const Eigen::Index n = dist.rows();
  if (k < 1 || k > n) throw InvalidArgument("agglomerative_cluster: k must satisfy 1 <= k <= n");

  Matrix d = dist;
  std::vector<bool> active(static_cast<std::size_t>(n), true);
  std::vector<int> node(static_cast<std::size_t>(n));
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  std::iota(node.begin(), node.end(), 0);
  // Each slot's member list; slot index is the cluster's smallest member.
  std::vector<std::vector<int>> members(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) members[static_cast<std::size_t>(i)] = {i};

  Dendrogram out;
  out.labels = IntVector::Zero(n);
  auto assign_labels = [&] {
    int label = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (int m : members[static_cast<std::size_t>(i)]) out.labels[m] = label;
      ++label;
    }
  };
  if (k == n) assign_labels();

  for (Eigen::Index step = 0; step < n - 1; ++step) {
    Eigen::Index bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        if (d(i, j) < best) {
          best = d(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    const auto si = static_cast<std::size_t>(bi);
    const auto sj = static_cast<std::size_t>(bj);
    const double ni = size[si];
    const double nj = size[sj];
    for (Eigen::Index m = 0; m < n; ++m) {
      if (!active[static_cast<std::size_t>(m)] || m == bi || m == bj) continue;
      double merged = 0.0;
      if (linkage == Linkage::complete)
        merged = std::max(d(bi, m), d(bj, m));
      else
        merged = (ni * d(bi, m) + nj * d(bj, m)) / (ni + nj);
      d(bi, m) = d(m, bi) = merged;
    }
    out.merges.push_back({node[si], node[sj], best, size[si] + size[sj]});
    node[si] = static_cast<int>(n + step);
    size[si] += size[sj];
    members[si].insert(members[si].end(), members[sj].begin(), members[sj].end());
    active[sj] = false;
    if (n - 1 - step == k) assign_labels();
  }
  return out;
}

Matrix classical_mds(const Matrix& dist, Eigen::Index dims) {
  require_distance_matrix(dist, 1e-9, "classical_mds");
  const Eigen::Index n = dist.rows();
  if (dims < 1 || dims > n - 1) throw InvalidArgument("classical_mds: dims must satisfy 1 <= dims <= n-1");
  const Matrix sq = dist.array().square();
  const Vector row_mean = sq.rowwise().mean();
  const double grand = sq.mean();
  Matrix b(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) b(i, j) = -0.5 * (sq(i, j) - row_mean[i] - row_mean[j] + grand);

  Vector values;
  Matrix vectors;
  sorted_eigen(b, values, vectors);
  Matrix coords(n, dims);
  for (Eigen::Index c = 0; c < dims; ++c) {
    Vector v = vectors.col(c);
    fix_sign(v);
    coords.col(c) = v * std::sqrt(std::max(values[c], 0.0));
  }
  return coords;
}

}  // namespace nerd::numerics
