#include "specden/decomposition.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "specden/errors.hpp"

namespace specden {

namespace {

// Direct SVD cost grows like m * n^2; beyond this budget the n x n Gram
// route is used instead (adequate for O(1)-scaled weighted data).
constexpr double kAutoGramBudget = 4e10;

void fix_signs(Matrix& loadings, Matrix& scores) {
  for (Index l = 0; l < loadings.cols(); ++l) {
    Index imax = 0;
    loadings.col(l).cwiseAbs().maxCoeff(&imax);
    if (loadings(imax, l) < 0.0) {
      loadings.col(l) = -loadings.col(l);
      scores.col(l) = -scores.col(l);
    }
  }
}

} // namespace

PcaModel pca_decompose(const Matrix& matrix, SvdMethod method) {
  if (!matrix.allFinite()) throw ValueError("pca_decompose: input has non-finite values");
  const Index m = matrix.rows();
  const Index n = matrix.cols();
  if (m < 2 || n < 1) throw ValueError("pca_decompose: need at least 2 rows and 1 column");
  const Index r = std::min(m, n);

  if (method == SvdMethod::automatic) {
    const double cost = static_cast<double>(m) * static_cast<double>(n) * static_cast<double>(n);
    method = (m >= n && cost > kAutoGramBudget) ? SvdMethod::gram : SvdMethod::bdcsvd;
  }
  if (method == SvdMethod::gram && m < n) method = SvdMethod::bdcsvd;

  PcaModel model;
  model.m = m;
  model.n = n;
  model.r = r;

  if (method == SvdMethod::gram) {
    const Matrix gram = matrix.transpose() * matrix; // n x n
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    if (eig.info() != Eigen::Success) throw Error("pca_decompose: eigensolver failed");
    // Ascending eigenvalues -> reverse into non-increasing order.
    model.loadings.resize(n, r);
    Vector singular(r);
    for (Index i = 0; i < r; ++i) {
      const Index src = n - 1 - i;
      model.loadings.col(i) = eig.eigenvectors().col(src);
      singular(i) = std::sqrt(std::max(0.0, eig.eigenvalues()(src)));
    }
    model.scores = matrix * model.loadings;
    model.variances = singular.array().square() / static_cast<double>(m - 1);
  } else {
    Eigen::BDCSVD<Matrix> svd(matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& singular = svd.singularValues();
    model.loadings = svd.matrixV();
    model.scores = svd.matrixU() * singular.asDiagonal();
    model.variances = singular.array().square() / static_cast<double>(m - 1);
  }

  fix_signs(model.loadings, model.scores);
  model.center.mean_spectrum = Vector::Zero(n);
  model.weights = WeightModel::identity(m, n);
  return model;
}

std::vector<std::pair<int, double>> scree(const PcaModel& model) {
  std::vector<std::pair<int, double>> out;
  out.reserve(static_cast<std::size_t>(model.r));
  for (Index i = 0; i < model.r; ++i) {
    out.emplace_back(static_cast<int>(i) + 1, model.variances(i));
  }
  return out;
}

ProximitySeries proximity(const PcaModel& test, const PcaModel& reference, int k) {
  if (test.n != reference.n) {
    throw DimensionError("proximity: decompositions have different channel counts");
  }
  if (k < 1 || k > reference.r) throw DimensionError("proximity: reference component out of range");

  ProximitySeries series;
  series.k = k;
  const Vector target = reference.loadings.col(k - 1);
  series.phi.reserve(static_cast<std::size_t>(test.r));
  for (Index l = 0; l < test.r; ++l) {
    const double dot = test.loadings.col(l).dot(target);
    series.phi.push_back(dot * dot);
    series.sum += dot * dot;
  }
  series.complete = std::abs(series.sum - 1.0) <= 1e-6;
  return series;
}

} // namespace specden
