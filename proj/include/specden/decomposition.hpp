#pragma once

#include <vector>

#include "specden/containers.hpp"
#include "specden/preprocess.hpp"

namespace specden {

enum class SvdMethod {
  automatic, // divide-and-conquer SVD, Gram route for very tall problems
  bdcsvd,
  gram,
};

/// Principal component decomposition D = T P^T of a weighted, centered
/// data matrix. Loadings P (n x r) have orthonormal columns, scores
/// T = U Sigma (m x r), component variances lambda_i = s_i^2 / (m - 1)
/// sorted non-increasing. Sign convention: each loading column's
/// largest-magnitude entry is positive, making the decomposition
/// deterministic.
struct PcaModel {
  Matrix loadings;   // n x r
  Matrix scores;     // m x r
  Vector variances;  // r
  CenterModel center;
  WeightModel weights;
  Index m = 0;
  Index n = 0;
  Index r = 0;
};

/// Decomposes a preprocessed matrix. Throws ValueError on non-finite
/// input. The returned model carries identity weights and a zero center;
/// pipeline code replaces them with the actual preprocessing state.
PcaModel pca_decompose(const Matrix& matrix, SvdMethod method = SvdMethod::automatic);

/// (1-based component index, variance) pairs for log-scale plotting.
std::vector<std::pair<int, double>> scree(const PcaModel& model);

/// Squared projections of every test loading onto one reference loading:
/// phi[l] = (P_test[:,l] . P_ref[:,k])^2. Sums to 1 when the test basis is
/// complete; `complete` records that check at 1e-6.
struct ProximitySeries {
  int k = 0;              // 1-based reference component index
  std::vector<double> phi; // over test components l = 1..r_test
  double sum = 0.0;
  bool complete = false;
};

/// Throws DimensionError when channel counts differ or k is out of range.
ProximitySeries proximity(const PcaModel& test, const PcaModel& reference, int k);

} // namespace specden
