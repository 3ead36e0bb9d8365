#include "aesindy/oracles.hpp"

#include <cmath>
#include <random>
#include <string>

#include "aesindy/error.hpp"
#include "aesindy/integrator.hpp"

namespace aesindy {

namespace {

std::vector<double> linspace(double a, double b, int count) {
  std::vector<double> v(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    v[static_cast<std::size_t>(i)] = count == 1 ? a : a + (b - a) * i / (count - 1);
  return v;
}

void set_coefficient(LatentModel& m, const std::string& feature, Eigen::Index eq, double value) {
  const Eigen::Index row = m.library.index_of(feature);
  if (row < 0) throw DataError("library has no feature '" + feature + "'");
  m.xi.values(row, eq) = value;
}

// Integrates the latent truth at dt/10 and lifts every dt-sample.
void append_instance(SnapshotSet& out, const LiftSpec& lift, const OdeRhs& f,
                     const Eigen::VectorXd& z0, const Eigen::VectorXd& params, double t_end,
                     double dt, std::uint64_t id, std::mt19937_64& rng) {
  const auto samples = static_cast<Eigen::Index>(std::llround(t_end / dt)) + 1;
  constexpr int kSub = 10;
  const Eigen::Index row0 = out.rows();
  const Eigen::Index big_n = lift.ambient_dim();
  out.states.conservativeResize(row0 + samples, big_n);
  out.derivatives->conservativeResize(row0 + samples, big_n);
  out.params.conservativeResize(row0 + samples, params.size());
  out.times.conservativeResize(row0 + samples);
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::VectorXd z = z0;
  double t = 0.0;
  for (Eigen::Index k = 0; k < samples; ++k) {
    if (k > 0)
      for (int s = 0; s < kSub; ++s) {
        const double h = dt / kSub;
        z = rk4_step(f, t, z, h);
        t = (static_cast<double>(k - 1) + static_cast<double>(s + 1) / kSub) * dt;
      }
    t = static_cast<double>(k) * dt;
    if (!z.allFinite()) throw NumericalError("oracle trajectory blew up at t = " + std::to_string(t));
    Eigen::VectorXd x = lift.lift(z);
    if (lift.noise > 0)
      for (Eigen::Index i = 0; i < big_n; ++i) x(i) += lift.noise * noise(rng);
    out.states.row(row0 + k) = x.transpose();
    out.derivatives->row(row0 + k) = lift.lift_rate(z, f(t, z)).transpose();
    out.params.row(row0 + k) = params.transpose();
    out.times(row0 + k) = t;
    out.instance_ids.push_back(id);
  }
}

SnapshotSet empty_set(const LiftSpec& lift, Eigen::Index p) {
  SnapshotSet s;
  s.states.resize(0, lift.ambient_dim());
  s.derivatives = Eigen::MatrixXd(0, lift.ambient_dim());
  s.params.resize(0, p);
  return s;
}

SnapshotSet finish(SnapshotSet s, bool finite_difference) {
  if (finite_difference) {
    s.derivatives.reset();
    s = finite_difference_derivatives(s);
  }
  s.validate();
  return s;
}

}  // namespace

Eigen::VectorXd vech_outer(const Eigen::VectorXd& z) {
  const Eigen::Index n = z.size();
  Eigen::VectorXd v(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) v(k++) = z(i) * z(j);
  return v;
}

Eigen::VectorXd LiftSpec::lift(const Eigen::VectorXd& z) const {
  if (z.size() != latent_dim()) throw DataError("lift: latent dimension mismatch");
  return linear * z + quadratic * vech_outer(z);
}

Eigen::VectorXd LiftSpec::lift_rate(const Eigen::VectorXd& z, const Eigen::VectorXd& zdot) const {
  const Eigen::Index n = latent_dim();
  Eigen::VectorXd dv(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) dv(k++) = zdot(i) * z(j) + z(i) * zdot(j);
  return linear * zdot + quadratic * dv;
}

void LiftSpec::validate() const {
  const Eigen::Index n = latent_dim();
  if (n < 1 || quadratic.rows() != linear.rows() || quadratic.cols() != n * (n + 1) / 2)
    throw DataError("lift blocks have inconsistent shapes");
  if (ambient_dim() < n + quadratic.cols()) throw DataError("ambient dimension too small for the lift");
  if (!(noise >= 0)) throw DataError("noise level must be >= 0");
  const Eigen::MatrixXd gram = linear.transpose() * linear;
  if ((gram - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-10)
    throw DataError("linear lift columns are not orthonormal");
  if ((linear.transpose() * quadratic).cwiseAbs().maxCoeff() > 1e-10)
    throw DataError("lift blocks are not orthogonal");
}

LiftSpec make_lift(Eigen::Index ambient_dim, Eigen::Index latent_dim, double quadratic_scale,
                   double noise, std::uint64_t seed) {
  const Eigen::Index q = latent_dim * (latent_dim + 1) / 2;
  if (latent_dim < 1 || ambient_dim < latent_dim + q)
    throw DataError("ambient dimension must be at least n + n(n+1)/2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd g(ambient_dim, latent_dim + q);
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = dist(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd qthin = qr.householderQ() * Eigen::MatrixXd::Identity(ambient_dim, g.cols());
  LiftSpec lift;
  lift.linear = qthin.leftCols(latent_dim);
  lift.quadratic = quadratic_scale * qthin.rightCols(q);
  lift.noise = noise;
  lift.seed = seed;
  lift.validate();
  return lift;
}

std::vector<double> DuffingConfig::omega_grid() const {
  return omegas.empty() ? linspace(0.526, 0.564, 28) : omegas;
}

std::vector<double> StuartLandauConfig::mu_grid() const {
  return mus.empty() ? linspace(-0.2, 0.3, 9) : mus;
}

Eigen::VectorXd duffing_rhs(const DuffingConfig& cfg, double force, double omega, double t,
                            const Eigen::VectorXd& z) {
  Eigen::VectorXd d(2);
  d(0) = z(1);
  d(1) = -cfg.omega0 * cfg.omega0 * z(0) - cfg.omega0 / cfg.q * z(1) - cfg.gamma * z(0) * z(0) * z(0) +
         force * std::cos(omega * t);
  return d;
}

Eigen::VectorXd stuart_landau_rhs(double mu, double omega, const Eigen::VectorXd& z) {
  const double r2 = z.squaredNorm();
  Eigen::VectorXd d(2);
  d(0) = mu * z(0) - omega * z(1) - z(0) * r2;
  d(1) = omega * z(0) + mu * z(1) - z(1) * r2;
  return d;
}

SnapshotSet gen_duffing(const LiftSpec& lift, const DuffingConfig& cfg) {
  lift.validate();
  if (lift.latent_dim() != 2) throw DataError("Duffing oracle needs a 2-dimensional lift");
  if (!(cfg.omega0 > 0) || !(cfg.q > 0) || !(cfg.dt > 0) || !(cfg.t_end > 0))
    throw DataError("Duffing constants omega0, Q, dt and T must be positive");
  if (!(cfg.gamma >= 0)) throw DataError("Duffing gamma must be >= 0");
  const auto omegas = cfg.omega_grid();
  if (cfg.forcing.empty() || omegas.empty()) throw DataError("empty (F, omega) grid");
  std::mt19937_64 rng(lift.seed + 1);
  SnapshotSet out = empty_set(lift, 2);
  std::uint64_t id = 0;
  for (double force : cfg.forcing)
    for (double omega : omegas) {
      const OdeRhs f = [&](double t, const Eigen::VectorXd& z) {
        return duffing_rhs(cfg, force, omega, t, z);
      };
      append_instance(out, lift, f, cfg.z0, Eigen::Vector2d(force, omega), cfg.t_end, cfg.dt, id++, rng);
    }
  return finish(std::move(out), cfg.finite_difference);
}

SnapshotSet gen_stuart_landau(const LiftSpec& lift, const StuartLandauConfig& cfg) {
  lift.validate();
  if (lift.latent_dim() != 2) throw DataError("Stuart-Landau oracle needs a 2-dimensional lift");
  if (!(cfg.dt > 0) || !(cfg.t_end > 0)) throw DataError("dt and T must be positive");
  const auto mus = cfg.mu_grid();
  if (mus.empty()) throw DataError("empty mu grid");
  bool neg = false, pos = false;
  for (double mu : mus) {
    neg = neg || mu < 0;
    pos = pos || mu > 0;
  }
  if (!neg || !pos) throw DataError("mu grid must span both signs of mu");
  std::mt19937_64 rng(lift.seed + 1);
  SnapshotSet out = empty_set(lift, 1);
  std::uint64_t id = 0;
  for (double mu : mus) {
    const OdeRhs f = [&](double, const Eigen::VectorXd& z) { return stuart_landau_rhs(mu, cfg.omega, z); };
    append_instance(out, lift, f, cfg.z0, Eigen::VectorXd::Constant(1, mu), cfg.t_end, cfg.dt, id++, rng);
  }
  return finish(std::move(out), cfg.finite_difference);
}

FeatureLibrary beam_library() { return build_polynomial_library(2, 0, 3, false, {{0, 1}}, 2); }

LatentModel duffing_true_model(double omega0, double q, double gamma) {
  LatentModel m;
  m.library = beam_library();
  m.xi = CoefficientMatrix(Eigen::MatrixXd::Zero(m.library.size(), 2));
  m.transform = ParamTransform::identity({"F", "omega"});
  set_coefficient(m, "z2", 0, 1.0);
  set_coefficient(m, "z1", 1, -omega0 * omega0);
  set_coefficient(m, "z2", 1, -omega0 / q);
  set_coefficient(m, "z1^3", 1, -gamma);
  set_coefficient(m, "b1*cos(b2*t)", 1, 1.0);
  return m;
}

LatentModel stuart_landau_true_model(double omega) {
  LatentModel m;
  m.library = build_polynomial_library(2, 1, 3, false);
  m.xi = CoefficientMatrix(Eigen::MatrixXd::Zero(m.library.size(), 2));
  m.transform = ParamTransform::identity({"mu"});
  set_coefficient(m, "z1*b1", 0, 1.0);
  set_coefficient(m, "z2", 0, -omega);
  set_coefficient(m, "z1^3", 0, -1.0);
  set_coefficient(m, "z1*z2^2", 0, -1.0);
  set_coefficient(m, "z1", 1, omega);
  set_coefficient(m, "z2*b1", 1, 1.0);
  set_coefficient(m, "z1^2*z2", 1, -1.0);
  set_coefficient(m, "z2^3", 1, -1.0);
  return m;
}

LatentModel beam_published_model() {
  LatentModel m;
  m.library = beam_library();
  m.xi = CoefficientMatrix(Eigen::MatrixXd::Zero(m.library.size(), 2));
  m.transform = ParamTransform::identity({"F", "omega"});
  set_coefficient(m, "z2", 0, 1.0);
  set_coefficient(m, "z1", 1, -0.3);
  set_coefficient(m, "z2", 1, -0.011);
  set_coefficient(m, "z1^2", 1, 0.003);
  set_coefficient(m, "z2^2", 1, -0.012);
  set_coefficient(m, "z1^3", 1, -0.113);
  set_coefficient(m, "z1^2*z2", 1, 0.036);
  set_coefficient(m, "z1*z2^2", 1, 0.719);
  set_coefficient(m, "z2^3", 1, -0.051);
  set_coefficient(m, "b1*cos(b2*t)", 1, -0.009);
  return m;
}

LatentModel fluid_published_model() {
  // Rows follow the library order 1, z1, z2, z3, b1, z1^2, ..., b1^3.
  static const double kTable[35][3] = {
      {2.23, 10.81, 0},       {0, -89.0, -35.4},     {3.44, 112.5, -16.1},  {61.8, -67.5, 0},
      {-0.25, 0, 0.04},       {0, 327.2, 229.2},     {-4.17, -623.2, -61.2}, {0, 82.17, 81.9},
      {0, -2.68, 2.34},       {0, 244.7, -7.41},     {-8.15, -54.0, 1.46},  {-0.43, -1.49, 1.77},
      {-7.55, -3.79, 31.0},   {-29.5, -23.0, 11.8},  {-8.15, 3.96, 0},      {0, 0, 0},
      {-33.6, -734.1, 0},     {111.3, 1309.0, 154.1}, {-1175.1, -187.5, 217.0}, {0.14, 12.5, -12.4},
      {-142.5, -781.0, -153.8}, {1449.0, 0, -10.9},  {-3.38, -2.23, 0},     {-687.0, 0, 0},
      {0, 0, 0},              {4.58, 151.5, 94.4},   {-565.0, 113.0, -121.0}, {0, -2.51, 4.03},
      {408.2, -85.9, 139.7},  {-18.5, 6.78, -2.4},   {0, 0, 0},             {-262.1, 47.3, -58.5},
      {7.91, 1.26, 0.77},     {0, 0, 0},             {0, 0, 0}};
  LatentModel m;
  m.library = build_polynomial_library(3, 1, 3, true);
  if (m.library.size() != 35) throw DataError("fluid library must have 35 features");
  Eigen::MatrixXd xi(35, 3);
  for (int i = 0; i < 35; ++i)
    for (int j = 0; j < 3; ++j) xi(i, j) = kTable[i][j];
  m.xi = CoefficientMatrix(xi);
  m.transform.components.push_back({"Re", ParamTransform::Kind::Reciprocal, 1000.0, 0.0});
  return m;
}

}  // namespace aesindy
