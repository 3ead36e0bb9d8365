#include "aesindy/pod.hpp"

#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "aesindy/error.hpp"

namespace aesindy {

namespace {

// Flips each column so that its largest-magnitude entry is positive.
void fix_signs(Eigen::MatrixXd& basis) {
  for (Eigen::Index j = 0; j < basis.cols(); ++j) {
    Eigen::Index idx = 0;
    basis.col(j).cwiseAbs().maxCoeff(&idx);
    if (basis(idx, j) < 0.0) basis.col(j) = -basis.col(j);
  }
}

// Thin QR with a positive diagonal; leaves well-conditioned columns unchanged
// up to rounding and completes degenerate ones to an orthonormal set.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& u) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(u);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(u.rows(), u.cols());
  const Eigen::MatrixXd r = qr.matrixQR().topRows(u.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < u.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace

PodBasis compute_pod(const Eigen::MatrixXd& states, Eigen::Index n_pod, bool center) {
  const Eigen::Index rows = states.rows();
  const Eigen::Index dim = states.cols();
  if (n_pod <= 0 || n_pod > std::min(rows, dim))
    throw DataError("n_pod = " + std::to_string(n_pod) + " exceeds rank bound min(" +
                    std::to_string(rows) + ", " + std::to_string(dim) + ")");
  if (!states.allFinite()) throw DataError("non-finite entries in snapshot matrix");

  PodBasis pod;
  pod.mean = center ? Eigen::VectorXd(states.colwise().mean().transpose())
                    : Eigen::VectorXd::Zero(dim);
  const Eigen::MatrixXd x = states.rowwise() - pod.mean.transpose();
  pod.full_spectrum_energy = x.squaredNorm();

  if (dim > 4 * rows) {
    // Method of snapshots: eigen-decompose the rows x rows Gram matrix.
    const Eigen::MatrixXd gram = x * x.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    pod.singular_values.resize(n_pod);
    Eigen::MatrixXd u(dim, n_pod);
    for (Eigen::Index k = 0; k < n_pod; ++k) {
      const Eigen::Index idx = rows - 1 - k;  // eigenvalues ascending
      const double sigma = std::sqrt(std::max(eig.eigenvalues()(idx), 0.0));
      pod.singular_values(k) = sigma;
      u.col(k) = x.transpose() * eig.eigenvectors().col(idx);
      if (sigma > 0.0) u.col(k) /= sigma;
    }
    pod.basis = orthonormalize(u);
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    pod.singular_values = svd.singularValues().head(n_pod);
    pod.basis = svd.matrixV().leftCols(n_pod);
  }
  fix_signs(pod.basis);
  pod.blocks = {{dim, n_pod}};
  return pod;
}

PodBasis compute_pod_blocks(const Eigen::MatrixXd& states,
                            const std::vector<PodBasis::Block>& blocks, bool center) {
  Eigen::Index total_dim = 0;
  Eigen::Index total_modes = 0;
  for (const auto& b : blocks) {
    total_dim += b.state_dim;
    total_modes += b.modes;
  }
  if (blocks.empty() || total_dim != states.cols())
    throw DataError("POD blocks do not partition the state columns");

  PodBasis pod;
  pod.basis = Eigen::MatrixXd::Zero(total_dim, total_modes);
  pod.singular_values.resize(total_modes);
  pod.mean.resize(total_dim);
  Eigen::Index col = 0;
  Eigen::Index mode = 0;
  for (const auto& b : blocks) {
    PodBasis part = compute_pod(states.middleCols(col, b.state_dim), b.modes, center);
    pod.basis.block(col, mode, b.state_dim, b.modes) = part.basis;
    pod.singular_values.segment(mode, b.modes) = part.singular_values;
    pod.mean.segment(col, b.state_dim) = part.mean;
    pod.full_spectrum_energy += part.full_spectrum_energy;
    col += b.state_dim;
    mode += b.modes;
  }
  pod.blocks = blocks;
  return pod;
}

Eigen::VectorXd project(const PodBasis& pod, const Eigen::VectorXd& x) {
  if (x.size() != pod.state_dim())
    throw DataError("project: expected " + std::to_string(pod.state_dim()) + " entries, got " +
                    std::to_string(x.size()));
  return pod.basis.transpose() * (x - pod.mean);
}

Eigen::VectorXd reconstruct(const PodBasis& pod, const Eigen::VectorXd& reduced) {
  if (reduced.size() != pod.modes())
    throw DataError("reconstruct: expected " + std::to_string(pod.modes()) + " entries, got " +
                    std::to_string(reduced.size()));
  return pod.basis * reduced + pod.mean;
}

Eigen::MatrixXd project_rows(const PodBasis& pod, const Eigen::MatrixXd& x) {
  if (x.cols() != pod.state_dim()) throw DataError("project: state dimension mismatch");
  return (x.rowwise() - pod.mean.transpose()) * pod.basis;
}

Eigen::MatrixXd reconstruct_rows(const PodBasis& pod, const Eigen::MatrixXd& reduced) {
  if (reduced.cols() != pod.modes()) throw DataError("reconstruct: mode count mismatch");
  return (reduced * pod.basis.transpose()).rowwise() + pod.mean.transpose();
}

Eigen::MatrixXd project_rate_rows(const PodBasis& pod, const Eigen::MatrixXd& xdot) {
  if (xdot.cols() != pod.state_dim()) throw DataError("project: state dimension mismatch");
  return xdot * pod.basis;
}

}  // namespace aesindy
