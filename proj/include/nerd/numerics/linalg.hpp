#pragma once

#include <vector>

#include "nerd/numerics/rng.hpp"
#include "nerd/types.hpp"

namespace nerd::numerics {

struct PcaResult {
  Matrix components;  ///< n_components x n_features, orthonormal rows
  Vector explained_variance;
  Vector explained_variance_ratio;
  Matrix scores;  ///< n_samples x n_components
  Vector mean;
};

/// Principal components of the rows of `data` (samples x features). Each
/// component's sign is fixed so its largest-magnitude loading is positive.
PcaResult pca(const Matrix& data, Eigen::Index n_components);

struct KMeansResult {
  IntVector labels;
  Matrix centroids;  ///< k x d
  double inertia = 0.0;
  /// Inertia after every assignment step of the winning restart.
  std::vector<double> inertia_history;
};

/// Lloyd's algorithm with k-means++ seeding; keeps the lowest-inertia run
/// over `n_restarts`. Stops when assignments no longer change.
KMeansResult kmeans(const Matrix& data, Eigen::Index k, RngStream& rng, int n_restarts = 10,
                    int max_iterations = 300);

enum class Linkage {
  average,
  complete,
  /// Ward needs raw coordinates; on a distance matrix this falls back to average.
  ward,
};

struct Merge {
  int left = 0;   ///< node id: < n is a leaf, otherwise n + merge index
  int right = 0;
  double height = 0.0;
  int size = 0;
};

struct Dendrogram {
  std::vector<Merge> merges;  ///< n - 1 merges, bottom-up
  IntVector labels;           ///< flat cut at the requested k
};

/// Bottom-up agglomeration on a precomputed distance matrix. Ties go to
/// the lowest (i, j) pair. Labels are numbered by each cluster's smallest
/// member index.
Dendrogram agglomerative_cluster(const Matrix& dist, Eigen::Index k, Linkage linkage = Linkage::average);

/// Torgerson classical scaling. Negative eigenvalues are clamped to zero.
Matrix classical_mds(const Matrix& dist, Eigen::Index dims);

/// Throws InvalidArgument unless `m` is square, symmetric within `tol`,
/// non-negative, with a zero diagonal.
void require_distance_matrix(const Matrix& m, double tol, const char* who);

}  // namespace nerd::numerics
