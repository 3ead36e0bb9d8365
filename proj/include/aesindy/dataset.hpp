#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace aesindy {

/// Stacked snapshot data of a parametric system.
///
/// Rows are time samples. Rows belonging to one parameter instance are
/// contiguous and time-ordered; every instance has the same number of steps.
struct SnapshotSet {
  Eigen::MatrixXd states;                      // rows x N
  std::optional<Eigen::MatrixXd> derivatives;  // rows x N when present
  Eigen::MatrixXd params;                      // rows x p (p may be 0)
  Eigen::VectorXd times;                       // absolute time of each row
  std::vector<std::uint64_t> instance_ids;     // instance of each row

  [[nodiscard]] Eigen::Index rows() const { return states.rows(); }
  [[nodiscard]] Eigen::Index state_dim() const { return states.cols(); }
  [[nodiscard]] Eigen::Index param_dim() const { return params.cols(); }

  /// Distinct instance ids in row order.
  [[nodiscard]] std::vector<std::uint64_t> instances() const;
  /// Rows per instance; zero for an empty set.
  [[nodiscard]] Eigen::Index steps_per_instance() const;
  /// First row of every instance, plus a final sentinel equal to rows().
  [[nodiscard]] std::vector<Eigen::Index> instance_offsets() const;

  /// Throws DataError if any structural invariant is violated.
  void validate() const;
};

SnapshotSet load_snapshots(const std::filesystem::path& path);
void save_snapshots(const SnapshotSet& set, const std::filesystem::path& path);

/// Second-order finite differences in time, computed per instance.
/// Central in the interior, one-sided at instance boundaries.
SnapshotSet finite_difference_derivatives(const SnapshotSet& set);

enum class ScalerMode { None, AbsMax, SqrtSingularValue };

/// Affine per-feature scaling: scaled = (x - shift) / factor.
struct Scaler {
  ScalerMode mode = ScalerMode::None;
  Eigen::VectorXd factors;
  Eigen::VectorXd shift;

  [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  [[nodiscard]] Eigen::VectorXd invert(const Eigen::VectorXd& scaled) const;
  /// Time derivatives are scaled without the shift.
  [[nodiscard]] Eigen::VectorXd apply_rate(const Eigen::VectorXd& xdot) const;
  [[nodiscard]] Eigen::VectorXd invert_rate(const Eigen::VectorXd& scaled) const;

  [[nodiscard]] Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& x) const;
  [[nodiscard]] Eigen::MatrixXd apply_rate_rows(const Eigen::MatrixXd& xdot) const;
  [[nodiscard]] Eigen::MatrixXd invert_rows(const Eigen::MatrixXd& scaled) const;

  [[nodiscard]] Eigen::Index size() const { return factors.size(); }
};

/// Fits a scaler to the columns of `features`.
///
/// AbsMax divides every column by its max |value| (all-zero columns get 1).
/// SqrtSingularValue weights column i by sqrt(singular_values[i]) and then
/// divides everything by the global max |value|, which makes the factors
/// globalmax / sqrt(sigma_i). With `center` the column means are subtracted
/// first and kept in `shift`.
Scaler fit_scaler(const Eigen::MatrixXd& features, ScalerMode mode,
                  std::optional<Eigen::VectorXd> singular_values = std::nullopt,
                  bool center = false);
Scaler fit_scaler(const SnapshotSet& set, ScalerMode mode,
                  std::optional<Eigen::VectorXd> singular_values = std::nullopt,
                  bool center = false);

/// Partitions by instance id. Returns (train, test) with row order preserved.
std::pair<SnapshotSet, SnapshotSet> split_by_instance(
    const SnapshotSet& set, std::span<const std::uint64_t> test_ids);

}  // namespace aesindy
