#include "aesindy/integrator.hpp"

#include <cmath>
#include <string>

#include "aesindy/error.hpp"

namespace aesindy {

Eigen::VectorXd rk4_step(const OdeRhs& f, double t, const Eigen::VectorXd& z, double h) {
  const Eigen::VectorXd k1 = f(t, z);
  const Eigen::VectorXd k2 = f(t + 0.5 * h, z + 0.5 * h * k1);
  const Eigen::VectorXd k3 = f(t + 0.5 * h, z + 0.5 * h * k2);
  const Eigen::VectorXd k4 = f(t + h, z + h * k3);
  return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory rk4_integrate(const OdeRhs& f, const Eigen::VectorXd& z0, double t0, double t_end,
                         double dt) {
  if (!(dt > 0) || !std::isfinite(dt)) throw DataError("dt must be positive");
  if (!(t_end >= t0)) throw DataError("t_end must not precede t0");
  if (!z0.allFinite()) throw DataError("non-finite initial state");
  // Steps within 1e-9 dt of t_end are merged into the final one.
  const double span = (t_end - t0) / dt;
  const auto full = static_cast<Eigen::Index>(std::floor(span + 1e-9));
  const bool partial = span - static_cast<double>(full) > 1e-9;
  const Eigen::Index steps = full + (partial ? 1 : 0);

  Trajectory traj;
  traj.times.resize(steps + 1);
  traj.latent.resize(steps + 1, z0.size());
  traj.times(0) = t0;
  traj.latent.row(0) = z0.transpose();
  Eigen::VectorXd z = z0;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const double t_next = k + 1 == steps ? t_end : t0 + static_cast<double>(k + 1) * dt;
    z = rk4_step(f, t, z, t_next - t);
    if (!z.allFinite())
      throw NumericalError("integration blew up at t = " + std::to_string(t_next));
    traj.times(k + 1) = t_next;
    traj.latent.row(k + 1) = z.transpose();
  }
  return traj;
}

Eigen::VectorXd encode_state(const TrainedModel& model, const Eigen::VectorXd& x0) {
  if (x0.size() != model.pod.state_dim())
    throw DataError("state has dimension " + std::to_string(x0.size()) + ", model expects " +
                    std::to_string(model.pod.state_dim()));
  return forward(model.encoder, model.scaler.apply(project(model.pod, x0)));
}

Eigen::VectorXd decode_state(const TrainedModel& model, const Eigen::VectorXd& z) {
  if (z.size() != model.latent_dim()) throw DataError("latent dimension mismatch");
  return reconstruct(model.pod, model.scaler.invert(forward(model.decoder, z)));
}

Trajectory integrate_latent(const LatentModel& model, const Eigen::VectorXd& z0,
                            const ParamSchedule& params, double t0, double t_end, double dt) {
  if (z0.size() != model.latent_dim()) throw DataError("initial latent state has wrong dimension");
  if (!params.function && params.constant.size() != model.param_dim())
    throw DataError("expected " + std::to_string(model.param_dim()) + " parameters, got " +
                    std::to_string(params.constant.size()));
  return rk4_integrate(
      [&](double t, const Eigen::VectorXd& z) { return model.rhs(z, params.at(t), t); }, z0, t0,
      t_end, dt);
}

Trajectory integrate_latent(const TrainedModel& model, const Eigen::VectorXd& z0,
                            const ParamSchedule& params, double t0, double t_end, double dt) {
  return integrate_latent(model.latent, z0, params, t0, t_end, dt);
}

Trajectory decode_trajectory(const TrainedModel& model, Trajectory traj) {
  if (traj.latent.rows() != traj.times.size()) throw DataError("trajectory row counts differ");
  if (traj.steps() > 0 && traj.latent.cols() != model.latent_dim())
    throw DataError("trajectory latent width does not match the decoder");
  if (traj.steps() == 0) {
    traj.decoded = Eigen::MatrixXd(0, model.pod.state_dim());
    return traj;
  }
  const Eigen::MatrixXd zt = traj.latent.transpose();
  const TangentTape tape =
      forward_tangent(model.decoder, zt, Eigen::MatrixXd::Zero(zt.rows(), zt.cols()));
  const Eigen::MatrixXd scaled = tape.output().transpose();
  traj.decoded = reconstruct_rows(model.pod, model.scaler.invert_rows(scaled));
  return traj;
}

Trajectory simulate(const TrainedModel& model, const Eigen::VectorXd& x0,
                    const ParamSchedule& params, double t0, double t_end, double dt) {
  const Eigen::VectorXd z0 = encode_state(model, x0);
  return decode_trajectory(model, integrate_latent(model, z0, params, t0, t_end, dt));
}

}  // namespace aesindy
