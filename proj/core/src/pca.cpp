#include "wsp/pca.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "wsp/error.hpp"

namespace wsp {

PcaResult pca_project(const Tensor& x, std::size_t modes) {
  if (x.rank() != 2) throw DimensionError("pca_project: expected an n x D matrix, got " + shape_to_string(x.shape()));
  const std::size_t n = x.extent(0);
  const std::size_t d = x.extent(1);
  if (n < 3) throw ContractError("pca_project: need at least 3 rows, got " + std::to_string(n));
  if (modes == 0 || modes > d) throw ContractError("pca_project: modes must lie in [1, D]");

  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(d);
  const Eigen::Map<const Matrix> data(x.data(), rows, cols);
  const Eigen::RowVectorXd mu = data.colwise().mean();
  const Matrix centered = data.rowwise() - mu;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

  const double total = cov.trace();
  if (!(total > 0.0)) throw DegenerateInputError("pca_project: data has zero variance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DegenerateInputError("pca_project: eigendecomposition failed");
  // Eigenvalues come in ascending order.
  PcaResult out;
  out.mean.assign(mu.data(), mu.data() + d);
  out.components = Tensor({d, modes});
  out.coordinates = Tensor({n, modes});
  for (std::size_t m = 0; m < modes; ++m) {
    const Eigen::Index col = cols - 1 - static_cast<Eigen::Index>(m);
    Eigen::VectorXd axis = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0.0) axis = -axis;
    const Eigen::VectorXd proj = centered * axis;
    for (std::size_t r = 0; r < d; ++r) out.components.at(r, m) = axis[static_cast<Eigen::Index>(r)];
    for (std::size_t r = 0; r < n; ++r) out.coordinates.at(r, m) = proj[static_cast<Eigen::Index>(r)];
    out.explained_variance.push_back(std::max(solver.eigenvalues()[col], 0.0) / total);
  }
  return out;
}

}  // namespace wsp
