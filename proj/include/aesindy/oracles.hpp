#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "aesindy/dataset.hpp"
#include "aesindy/sindy.hpp"

namespace aesindy {

/// Embedding x = L z + Q vech(z z^T) of a latent state into R^N.
///
/// L has orthonormal columns and Q's columns are orthogonal to them and to
/// each other (scaled by the quadratic weight).
struct LiftSpec {
  Eigen::MatrixXd linear;     // N x n
  Eigen::MatrixXd quadratic;  // N x n(n+1)/2
  double noise = 0.0;         // standard deviation of additive state noise
  std::uint64_t seed = 0;

  [[nodiscard]] Eigen::Index ambient_dim() const { return linear.rows(); }
  [[nodiscard]] Eigen::Index latent_dim() const { return linear.cols(); }
  [[nodiscard]] Eigen::VectorXd lift(const Eigen::VectorXd& z) const;
  /// Chain rule: d/dt lift(z) for dz/dt = zdot.
  [[nodiscard]] Eigen::VectorXd lift_rate(const Eigen::VectorXd& z, const Eigen::VectorXd& zdot) const;
  void validate() const;
};

/// Products z_i z_j for i <= j, ordered (0,0), (0,1), ..., (0,n-1), (1,1), ...
Eigen::VectorXd vech_outer(const Eigen::VectorXd& z);

/// Random lift from the QR factorization of a seeded Gaussian matrix.
LiftSpec make_lift(Eigen::Index ambient_dim, Eigen::Index latent_dim, double quadratic_scale,
                   double noise, std::uint64_t seed);

struct DuffingConfig {
  double omega0 = 0.5475;
  double q = 50.0;
  double gamma = 0.1;
  std::vector<double> forcing = {0.125, 0.25};
  std::vector<double> omegas;  // empty: 28 values over [0.526, 0.564]
  double t_end = 200.0;
  double dt = 0.1;
  Eigen::Vector2d z0 = Eigen::Vector2d::Zero();
  bool finite_difference = false;  // derivative block by finite differences instead of exactly

  [[nodiscard]] std::vector<double> omega_grid() const;
};

/// z'' + (omega0/Q) z' + omega0^2 z + gamma z^3 = F cos(omega t), lifted.
/// Parameters per row: (F, omega). One instance per grid point, F major.
SnapshotSet gen_duffing(const LiftSpec& lift, const DuffingConfig& cfg);

struct StuartLandauConfig {
  std::vector<double> mus;  // empty: 9 values over [-0.2, 0.3]
  double omega = 1.0;
  double t_end = 60.0;
  double dt = 0.05;
  Eigen::Vector2d z0 = Eigen::Vector2d(0.6, 0.0);
  bool finite_difference = false;

  [[nodiscard]] std::vector<double> mu_grid() const;
};

/// Hopf normal form z1' = mu z1 - omega z2 - z1 |z|^2, z2' = omega z1 + mu z2 - z2 |z|^2,
/// lifted. Parameter per row: mu.
SnapshotSet gen_stuart_landau(const LiftSpec& lift, const StuartLandauConfig& cfg);

/// Latent right-hand sides of the oracle systems.
Eigen::VectorXd duffing_rhs(const DuffingConfig& cfg, double force, double omega, double t,
                            const Eigen::VectorXd& z);
Eigen::VectorXd stuart_landau_rhs(double mu, double omega, const Eigen::VectorXd& z);

/// Duffing truth in the 11-feature beam library (parameters F, omega).
LatentModel duffing_true_model(double omega0, double q, double gamma);
/// Stuart-Landau truth in the cubic library over (z1, z2, mu).
LatentModel stuart_landau_true_model(double omega = 1.0);
/// The published identified beam system, parameters (F, omega).
LatentModel beam_published_model();
/// The published fluid coefficient table in (z1, z2, z3, beta), beta = 1000 / Re;
/// the model's raw parameter is Re.
LatentModel fluid_published_model();

/// The 11-feature beam library: cubic monomials in (z1, z2) plus F cos / sin(omega t).
FeatureLibrary beam_library();

}  // namespace aesindy
