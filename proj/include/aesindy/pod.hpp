#pragma once

#include <vector>

#include <Eigen/Dense>

namespace aesindy {

/// Truncated POD basis of a snapshot matrix whose rows are states.
///
/// For separate-field POD the basis is block diagonal: `blocks` holds the
/// (state columns, retained modes) of each field in order, and singular
/// values are descending within each block.
struct PodBasis {
  struct Block {
    Eigen::Index state_dim;
    Eigen::Index modes;
  };

  Eigen::MatrixXd basis;            // N x N_POD, orthonormal columns
  Eigen::VectorXd singular_values;  // N_POD
  double full_spectrum_energy = 0;  // sum of all sigma^2
  Eigen::VectorXd mean;             // N, zero when not centered
  std::vector<Block> blocks;

  [[nodiscard]] Eigen::Index state_dim() const { return basis.rows(); }
  [[nodiscard]] Eigen::Index modes() const { return basis.cols(); }
};

PodBasis compute_pod(const Eigen::MatrixXd& states, Eigen::Index n_pod, bool center);

/// Runs compute_pod per column block and assembles a block-diagonal basis.
PodBasis compute_pod_blocks(const Eigen::MatrixXd& states,
                            const std::vector<PodBasis::Block>& blocks, bool center);

Eigen::VectorXd project(const PodBasis& pod, const Eigen::VectorXd& x);
Eigen::VectorXd reconstruct(const PodBasis& pod, const Eigen::VectorXd& reduced);

/// Row-wise versions for snapshot matrices.
Eigen::MatrixXd project_rows(const PodBasis& pod, const Eigen::MatrixXd& x);
Eigen::MatrixXd reconstruct_rows(const PodBasis& pod, const Eigen::MatrixXd& reduced);
/// Projects time derivatives: the mean does not enter.
Eigen::MatrixXd project_rate_rows(const PodBasis& pod, const Eigen::MatrixXd& xdot);

}  // namespace aesindy
