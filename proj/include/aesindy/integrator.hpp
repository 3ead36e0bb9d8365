#pragma once

#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "aesindy/trainer.hpp"

namespace aesindy {

struct Trajectory {
  Eigen::VectorXd times;
  Eigen::MatrixXd latent;                  // steps x n
  std::optional<Eigen::MatrixXd> decoded;  // steps x N

  [[nodiscard]] Eigen::Index steps() const { return times.size(); }
};

/// Raw parameter values, either constant or a function of time.
struct ParamSchedule {
  Eigen::VectorXd constant;
  std::function<Eigen::VectorXd(double)> function;

  ParamSchedule() = default;
  template <typename Derived>
  ParamSchedule(const Eigen::MatrixBase<Derived>& values) : constant(values) {}  // NOLINT
  ParamSchedule(std::function<Eigen::VectorXd(double)> f) : function(std::move(f)) {}  // NOLINT

  [[nodiscard]] Eigen::VectorXd at(double t) const { return function ? function(t) : constant; }
};

using OdeRhs = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

/// Classical fixed-step RK4 on t0, t0+dt, ... with the last step shortened to
/// land on t_end. Throws NumericalError with the time of a non-finite state.
Trajectory rk4_integrate(const OdeRhs& f, const Eigen::VectorXd& z0, double t0, double t_end,
                         double dt);

/// Single RK4 step.
Eigen::VectorXd rk4_step(const OdeRhs& f, double t, const Eigen::VectorXd& z, double h);

Eigen::VectorXd encode_state(const TrainedModel& model, const Eigen::VectorXd& x0);
Eigen::VectorXd decode_state(const TrainedModel& model, const Eigen::VectorXd& z);

Trajectory integrate_latent(const LatentModel& model, const Eigen::VectorXd& z0,
                            const ParamSchedule& params, double t0, double t_end, double dt);
Trajectory integrate_latent(const TrainedModel& model, const Eigen::VectorXd& z0,
                            const ParamSchedule& params, double t0, double t_end, double dt);

/// Fills `decoded` (decoder, unscale, POD reconstruction) without touching `latent`.
Trajectory decode_trajectory(const TrainedModel& model, Trajectory traj);

Trajectory simulate(const TrainedModel& model, const Eigen::VectorXd& x0,
                    const ParamSchedule& params, double t0, double t_end, double dt);

}  // namespace aesindy
