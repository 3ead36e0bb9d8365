#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aesindy/error.hpp"
#include "aesindy/sindy.hpp"
#include "aesindy/trainer.hpp"

namespace aesindy {

enum class OrbitMode { Forced, Autonomous };

/// Periodic orbit on normalized time s in [0, 1] with physical time t = s * tau.
///
/// Piecewise polynomial of degree `degree` on each mesh element, stored at
/// the (n_elements * degree + 1) equispaced element nodes.
struct Orbit {
  Eigen::Index n_elements = 0;
  int degree = 0;
  Eigen::VectorXd mesh;  // n_elements + 1 boundaries, 0 .. 1
  Eigen::MatrixXd z;     // nodes x n
  double tau = 0;
  double beta = 0;  // raw value of the continuation parameter
  OrbitMode mode = OrbitMode::Autonomous;

  [[nodiscard]] Eigen::Index nodes() const { return z.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return z.cols(); }
  /// Interpolated state at normalized time s.
  [[nodiscard]] Eigen::VectorXd at(double s) const;
  /// Throws DataError if the structural invariants do not hold.
  void validate() const;
};

/// Orbit with a uniform mesh whose node values are given by `shape(s)`.
Orbit sample_orbit(const std::function<Eigen::VectorXd(double)>& shape, double tau, double beta,
                   OrbitMode mode, Eigen::Index n_elements = 40, int degree = 4);

/// The latent system together with the parameter being continued.
struct PeriodicProblem {
  LatentModel model;
  Eigen::VectorXd params;  // raw parameters; entry `active` is replaced by beta
  Eigen::Index active = 0;
  OrbitMode mode = OrbitMode::Autonomous;
  Eigen::Index output = 0;  // latent component whose amplitude is reported

  [[nodiscard]] Eigen::VectorXd raw(double beta) const;
  /// Forced mode: 2 pi / omega, with omega the frequency parameter of the harmonics.
  [[nodiscard]] double forced_period(double beta) const;
  /// Library parameter index that multiplies t in the harmonic features.
  [[nodiscard]] Eigen::Index frequency_index() const;
  void validate() const;
};

/// Collocation residual G(z_c, tau, beta): per element and Gauss point
/// z'(s) - tau f(z(s), beta, s tau), then z_0 - z_N, then (autonomous) the
/// integral phase condition against `phase_reference`.
Eigen::VectorXd collocation_residual(const PeriodicProblem& problem, const Orbit& orbit,
                                     const Orbit* phase_reference = nullptr);

/// Pseudo-arclength record: the corrected point must satisfy
/// tangent^T W (u - u_prev) = ds, with u = (z nodes, [tau], beta).
struct ArcLength {
  Eigen::VectorXd previous;
  Eigen::VectorXd tangent;
  double ds = 0;
};

struct NewtonOptions {
  double tolerance = 1e-10;
  int max_iterations = 25;
};

class NewtonFailure : public NumericalError {
 public:
  NewtonFailure(const std::string& what, std::vector<double> trace)
      : NumericalError(what), trace(std::move(trace)) {}
  std::vector<double> trace;  // max-norm residual per iteration
};

struct NewtonResult {
  Orbit orbit;
  int iterations = 0;
  double residual = 0;  // final max-norm of G (and the arclength row)
};

/// Damped Newton on the collocation system. Without `arc` beta is held
/// fixed; with it beta is an unknown and the Keller row is appended.
/// Throws NewtonFailure on non-convergence and NumericalError on a
/// singular Jacobian.
NewtonResult newton_correct(const PeriodicProblem& problem, const Orbit& guess,
                            const Orbit* phase_reference = nullptr, const ArcLength* arc = nullptr,
                            const NewtonOptions& opts = {});

struct SeedOptions {
  double settle_time = 300;
  double dt = 0.01;
  Eigen::Index n_elements = 40;
  int degree = 4;
};

/// Integrates past the settle time, extracts one period and corrects it.
/// Throws CollapseError when no cycle is found.
Orbit initial_orbit(const PeriodicProblem& problem, double beta, const Eigen::VectorXd& z0,
                    const SeedOptions& opts = {});

/// Monodromy eigenvalues from RK4 on the variational equations.
Eigen::VectorXcd floquet_multipliers(const PeriodicProblem& problem, const Orbit& orbit,
                                     int steps = 1000);

/// Multipliers with the trivial one (closest to 1) removed in autonomous mode.
Eigen::VectorXcd nontrivial_multipliers(const Eigen::VectorXcd& all, OrbitMode mode);

/// Half of max - min of g(z(s)) over the period, with local maxima refined
/// on the collocation polynomial.
double orbit_amplitude(const Orbit& orbit, const std::function<double(const Eigen::VectorXd&)>& g);
double orbit_amplitude(const Orbit& orbit, Eigen::Index component);

enum class Termination { RangeEnd, PointBudget, FoldLimit, Collapse, NewtonFailure };
std::string termination_name(Termination t);

struct BranchPoint {
  Orbit orbit;
  double beta = 0;
  double amplitude = 0;  // half peak-to-peak of the designated output
  bool stable = false;
  Eigen::VectorXcd multipliers;  // nontrivial
  double multiplier_max_abs = 0;
  double residual = 0;
  int newton_iterations = 0;
};

struct Branch {
  std::vector<BranchPoint> points;
  std::vector<std::size_t> folds;  // indices of points where d beta changes sign
  double ds0 = 0;
  double ds_final = 0;
  Termination termination = Termination::PointBudget;
  std::string amplitude_convention = "half peak-to-peak";
  /// Weighted metric used for the arclength: z nodes by 1/nodes, beta by 1, tau by 0.
  Eigen::VectorXd weights;
};

struct ContinuationOptions {
  double ds = 0.01;
  int max_points = 200;
  int direction = 0;  // +1 / -1; 0 heads for the farther end of the range
  double ds_min_factor = 1e-6;
  double grow_factor = 1.3;
  int grow_after = 3;
  int fast_iterations = 4;  // Newton iterations counted as a fast success
  int max_folds = -1;       // -1: unlimited
  int floquet_steps = 1000;
  double min_amplitude = 1e-6;
  double collapse_fraction = 0.1;  // of the branch's largest orbit size
  SeedOptions seed;
  NewtonOptions newton;
};

/// Keller pseudo-arclength continuation in the active parameter over
/// [range_lo, range_hi], seeded by initial_orbit at beta_start from z0.
Branch continue_branch(const PeriodicProblem& problem, double beta_start, double range_lo,
                       double range_hi, const Eigen::VectorXd& z0,
                       const ContinuationOptions& opts = {});

/// Same, starting from an already corrected orbit.
Branch continue_branch(const PeriodicProblem& problem, const Orbit& start, double range_lo,
                       double range_hi, const ContinuationOptions& opts = {});

struct BranchSummary {
  double beta = 0;
  double period = 0;
  double amplitude = 0;
  bool stable = false;
  double multiplier_max_abs = 0;
};

/// Physical amplitude of state component `output_node` along a branch,
/// through decoder, unscaling and POD reconstruction.
std::vector<BranchSummary> decode_branch(const TrainedModel& model, const Branch& branch,
                                         Eigen::Index output_node);

/// CSV with columns index, beta, period, amplitude, stability,
/// multiplier_max_abs and a trailing "# termination: ..." line.
std::string branch_to_csv(const std::vector<BranchSummary>& rows, const Branch& branch);
std::vector<BranchSummary> latent_summaries(const Branch& branch);

}  // namespace aesindy
