#include "aesindy/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <spdlog/spdlog.h>

#include "aesindy/integrator.hpp"

namespace aesindy {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Lagrange basis on equispaced element nodes, evaluated at Gauss points.
struct Collocation {
  int m = 0;
  Eigen::VectorXd gauss;    // m points in (0, 1)
  Eigen::VectorXd weights;  // sum to 1
  Eigen::MatrixXd value;    // m x (m+1)
  Eigen::MatrixXd slope;    // m x (m+1), d/d sigma
};

void lagrange(int m, double x, Eigen::Ref<Eigen::VectorXd> value, Eigen::Ref<Eigen::VectorXd> slope) {
  for (int j = 0; j <= m; ++j) {
    const double xj = static_cast<double>(j) / m;
    double v = 1.0;
    double d = 0.0;
    for (int i = 0; i <= m; ++i) {
      if (i == j) continue;
      const double xi = static_cast<double>(i) / m;
      const double denom = xj - xi;
      d = d * (x - xi) / denom + v / denom;
      v *= (x - xi) / denom;
    }
    value(j) = v;
    slope(j) = d;
  }
}

Collocation make_collocation(int m) {
  Collocation c;
  c.m = m;
  // Golub-Welsch on [-1, 1], mapped to [0, 1].
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, m);
  for (int k = 1; k < m; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jac(k, k - 1) = b;
    jac(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  c.gauss = (es.eigenvalues().array() + 1.0) / 2.0;
  c.weights = es.eigenvectors().row(0).transpose().array().square();
  c.value.resize(m, m + 1);
  c.slope.resize(m, m + 1);
  for (int k = 0; k < m; ++k) {
    Eigen::VectorXd v(m + 1), d(m + 1);
    lagrange(m, c.gauss(k), v, d);
    c.value.row(k) = v.transpose();
    c.slope.row(k) = d.transpose();
  }
  return c;
}

const Collocation& collocation(int m) {
  thread_local std::vector<Collocation> cache;
  for (const auto& c : cache)
    if (c.m == m) return c;
  cache.push_back(make_collocation(m));
  return cache.back();
}

bool autonomous(const Orbit& o) { return o.mode == OrbitMode::Autonomous; }

Eigen::Index unknowns(const Orbit& o, bool with_beta) {
  return o.nodes() * o.dim() + (autonomous(o) ? 1 : 0) + (with_beta ? 1 : 0);
}

Eigen::VectorXd pack(const Orbit& o) {
  Eigen::VectorXd u(unknowns(o, true));
  const Eigen::Index nz = o.nodes() * o.dim();
  u.head(nz) = o.z.transpose().reshaped();
  if (autonomous(o)) u(nz) = o.tau;
  u(u.size() - 1) = o.beta;
  return u;
}

void unpack(const PeriodicProblem& p, Orbit& o, const Eigen::VectorXd& u, bool with_beta) {
  const Eigen::Index nz = o.nodes() * o.dim();
  o.z.transpose().reshaped() = u.head(nz);
  if (autonomous(o)) o.tau = u(nz);
  if (with_beta) o.beta = u(u.size() - 1);
  if (!autonomous(o)) o.tau = p.forced_period(o.beta);
}

Eigen::VectorXd arc_weights(const Orbit& o) {
  Eigen::VectorXd w(unknowns(o, true));
  const Eigen::Index nz = o.nodes() * o.dim();
  w.head(nz).setConstant(1.0 / static_cast<double>(o.nodes()));
  if (autonomous(o)) w(nz) = 0.0;
  w(w.size() - 1) = 1.0;
  return w;
}

void check_reference(const Orbit& o, const Orbit& ref) {
  if (ref.nodes() != o.nodes() || ref.dim() != o.dim() || ref.degree != o.degree ||
      ref.n_elements != o.n_elements)
    throw DataError("phase reference has a different discretization");
}

struct System {
  Eigen::VectorXd g;
  Eigen::SparseMatrix<double> jac;
  double phase_row_norm = 0;
};

// Residual and (optionally) Jacobian. Columns: z nodes row-major, tau when
// autonomous, beta when `with_beta`.
System assemble(const PeriodicProblem& p, const Orbit& o, const Orbit& ref, bool with_beta,
                bool want_jacobian) {
  const auto& col = collocation(o.degree);
  const Eigen::Index n = o.dim();
  const int m = o.degree;
  const bool aut = autonomous(o);
  const Eigen::Index nz = o.nodes() * n;
  const Eigen::Index col_tau = aut ? nz : -1;
  const Eigen::Index col_beta = with_beta ? nz + (aut ? 1 : 0) : -1;
  const Eigen::Index ncols = unknowns(o, with_beta);
  const Eigen::Index n_coll = o.n_elements * m * n;
  const Eigen::Index nrows = n_coll + n + (aut ? 1 : 0);

  const Eigen::VectorXd raw = p.raw(o.beta);
  const double tau = o.tau;
  double dtau_dbeta = 0.0;
  if (!aut && p.active == p.frequency_index()) {
    const double omega = p.model.transform.apply(raw)(p.active);
    dtau_dbeta = -tau / omega * p.model.transform.derivative(raw)(p.active);
  }

  System sys;
  sys.g.resize(nrows);
  std::vector<Eigen::Triplet<double>> trip;
  if (want_jacobian) trip.reserve(static_cast<std::size_t>(o.n_elements * m * n * ((m + 1) * n + 2) + 4 * n + nz));

  for (Eigen::Index e = 0; e < o.n_elements; ++e) {
    const double s0 = o.mesh(e);
    const double h = o.mesh(e + 1) - s0;
    const auto block = o.z.middleRows(e * m, m + 1);
    for (int c = 0; c < m; ++c) {
      const double s = s0 + h * col.gauss(c);
      const Eigen::VectorXd zc = block.transpose() * col.value.row(c).transpose();
      // Differences from the first node: the slope weights sum to zero, so constants give exactly 0.
      const Eigen::VectorXd zp =
          (block.rowwise() - block.row(0)).transpose() * col.slope.row(c).transpose() / h;
      const double t = s * tau;
      const Eigen::VectorXd f = p.model.rhs(zc, raw, t);
      const Eigen::Index row0 = (e * m + c) * n;
      sys.g.segment(row0, n) = zp - tau * f;
      if (!want_jacobian) continue;
      const DynamicsJacobians jj = p.model.jacobians(zc, raw, t);
      for (int j = 0; j <= m; ++j) {
        const Eigen::Index c0 = (e * m + j) * n;
        for (Eigen::Index a = 0; a < n; ++a)
          for (Eigen::Index b = 0; b < n; ++b) {
            double v = -tau * col.value(c, j) * jj.dz(a, b);
            if (a == b) v += col.slope(c, j) / h;
            if (v != 0.0) trip.emplace_back(row0 + a, c0 + b, v);
          }
      }
      if (aut)
        for (Eigen::Index a = 0; a < n; ++a)
          trip.emplace_back(row0 + a, col_tau, -f(a) - tau * s * jj.dt(a));
      if (with_beta)
        for (Eigen::Index a = 0; a < n; ++a)
          trip.emplace_back(row0 + a, col_beta,
                            -tau * jj.dbeta(a, p.active) - dtau_dbeta * (f(a) + tau * s * jj.dt(a)));
    }
  }

  const Eigen::Index last = o.nodes() - 1;
  sys.g.segment(n_coll, n) = (o.z.row(0) - o.z.row(last)).transpose();
  if (want_jacobian)
    for (Eigen::Index k = 0; k < n; ++k) {
      trip.emplace_back(n_coll + k, k, 1.0);
      trip.emplace_back(n_coll + k, last * n + k, -1.0);
    }

  if (aut) {
    // Integral of z . z_ref' over s, by the collocation quadrature.
    Eigen::MatrixXd coeff = Eigen::MatrixXd::Zero(o.nodes(), n);
    for (Eigen::Index e = 0; e < o.n_elements; ++e) {
      const auto rblock = ref.z.middleRows(e * m, m + 1);
      for (int c = 0; c < m; ++c) {
        const Eigen::RowVectorXd dref = col.slope.row(c) * rblock;
        for (int j = 0; j <= m; ++j)
          coeff.row(e * m + j) += col.weights(c) * col.value(c, j) * dref;
      }
    }
    sys.g(nrows - 1) = (coeff.array() * o.z.array()).sum();
    sys.phase_row_norm = coeff.cwiseAbs().maxCoeff();
    if (want_jacobian)
      for (Eigen::Index i = 0; i < o.nodes(); ++i)
        for (Eigen::Index k = 0; k < n; ++k)
          if (coeff(i, k) != 0.0) trip.emplace_back(nrows - 1, i * n + k, coeff(i, k));
  }

  if (want_jacobian) {
    sys.jac.resize(nrows, ncols);
    sys.jac.setFromTriplets(trip.begin(), trip.end());
  }
  return sys;
}

// Appends a dense row to a sparse matrix.
Eigen::SparseMatrix<double> with_row(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& row) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(a.nonZeros() + row.size()));
  for (int k = 0; k < a.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it)
      trip.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index j = 0; j < row.size(); ++j)
    if (row(j) != 0.0) trip.emplace_back(a.rows(), j, row(j));
  Eigen::SparseMatrix<double> out(a.rows() + 1, a.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Eigen::VectorXd sparse_solve(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b) {
  if (a.rows() != a.cols()) throw NumericalError("collocation system is not square");
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw NumericalError("singular Jacobian in collocation system");
  Eigen::VectorXd x = lu.solve(b);
  if (lu.info() != Eigen::Success || !x.allFinite())
    throw NumericalError("singular Jacobian in collocation system");
  return x;
}

// Unit tangent (in the weighted metric) of the solution curve at `o`.
Eigen::VectorXd tangent_at(const PeriodicProblem& p, const Orbit& o, const Eigen::VectorXd& w,
                           const Eigen::VectorXd& previous) {
  const System sys = assemble(p, o, o, true, true);
  Eigen::VectorXd row = previous.cwiseProduct(w);
  if (row.squaredNorm() == 0.0) row = previous;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.jac.rows() + 1);
  rhs(rhs.size() - 1) = 1.0;
  Eigen::VectorXd t = sparse_solve(with_row(sys.jac, row), rhs);
  const double norm = std::sqrt(t.dot(w.cwiseProduct(t)));
  if (!(norm > 0)) throw NumericalError("degenerate branch tangent");
  return t / norm;
}

double orbit_size(const Orbit& o) {
  double size = 0.0;
  for (Eigen::Index k = 0; k < o.dim(); ++k) size = std::max(size, orbit_amplitude(o, k));
  return size;
}

double wrap(double s) {
  s = std::fmod(s, 1.0);
  return s < 0 ? s + 1.0 : s;
}

}  // namespace

Eigen::VectorXd Orbit::at(double s) const {
  s = wrap(s);
  const auto it = std::upper_bound(mesh.data(), mesh.data() + mesh.size(), s);
  Eigen::Index e = std::clamp<Eigen::Index>((it - mesh.data()) - 1, 0, n_elements - 1);
  const double h = mesh(e + 1) - mesh(e);
  Eigen::VectorXd v(degree + 1), d(degree + 1);
  lagrange(degree, (s - mesh(e)) / h, v, d);
  return z.middleRows(e * degree, degree + 1).transpose() * v;
}

void Orbit::validate() const {
  if (n_elements < 1 || degree < 1) throw DataError("orbit needs at least one element of degree >= 1");
  if (mesh.size() != n_elements + 1) throw DataError("orbit mesh size mismatch");
  if (std::abs(mesh(0)) > 1e-14 || std::abs(mesh(n_elements) - 1.0) > 1e-14)
    throw DataError("orbit mesh must run from 0 to 1");
  for (Eigen::Index e = 0; e < n_elements; ++e)
    if (!(mesh(e + 1) > mesh(e))) throw DataError("orbit mesh must be strictly increasing");
  if (z.rows() != n_elements * degree + 1 || z.cols() < 1) throw DataError("orbit node count mismatch");
  if (!z.allFinite()) throw DataError("non-finite orbit values");
  if (!(tau > 0) || !std::isfinite(tau)) throw DataError("orbit period must be positive");
  const double scale = 1.0 + z.cwiseAbs().maxCoeff();
  if ((z.row(0) - z.row(z.rows() - 1)).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw DataError("orbit endpoints differ: z(0) != z(tau)");
}

Orbit sample_orbit(const std::function<Eigen::VectorXd(double)>& shape, double tau, double beta,
                   OrbitMode mode, Eigen::Index n_elements, int degree) {
  Orbit o;
  o.n_elements = n_elements;
  o.degree = degree;
  o.mesh = Eigen::VectorXd::LinSpaced(n_elements + 1, 0.0, 1.0);
  const Eigen::Index nodes = n_elements * degree + 1;
  const Eigen::VectorXd first = shape(0.0);
  o.z.resize(nodes, first.size());
  for (Eigen::Index i = 0; i < nodes; ++i) {
    const Eigen::Index e = std::min(i / degree, n_elements - 1);
    const double local = static_cast<double>(i - e * degree) / degree;
    o.z.row(i) = shape(o.mesh(e) + local * (o.mesh(e + 1) - o.mesh(e))).transpose();
  }
  o.z.row(nodes - 1) = o.z.row(0);
  o.tau = tau;
  o.beta = beta;
  o.mode = mode;
  return o;
}

Eigen::VectorXd PeriodicProblem::raw(double beta) const {
  Eigen::VectorXd r = params;
  if (active >= 0 && active < r.size()) r(active) = beta;
  return r;
}

Eigen::Index PeriodicProblem::frequency_index() const {
  Eigen::Index freq = -1;
  for (const auto& f : model.library.features())
    if (const auto* h = std::get_if<Harmonic>(&f)) {
      if (freq >= 0 && h->frequency != freq)
        throw DataError("harmonic features use more than one frequency parameter");
      freq = h->frequency;
    }
  return freq;
}

double PeriodicProblem::forced_period(double beta) const {
  const Eigen::Index freq = frequency_index();
  if (freq < 0) throw DataError("forced mode needs harmonic features");
  const double omega = model.transform.apply(raw(beta))(freq);
  if (!(omega > 0)) throw DataError("forcing frequency must be positive");
  return kTwoPi / omega;
}

void PeriodicProblem::validate() const {
  if (params.size() != model.param_dim())
    throw DataError("expected " + std::to_string(model.param_dim()) + " parameters, got " +
                    std::to_string(params.size()));
  if (active < 0 || active >= params.size()) throw DataError("unknown continuation parameter");
  if (output < 0 || output >= model.latent_dim()) throw DataError("output component out of range");
  const bool harmonics = model.library.has_harmonics();
  if (mode == OrbitMode::Forced && !harmonics)
    throw DataError("forced mode needs harmonic features in the library");
  if (mode == OrbitMode::Autonomous && harmonics)
    throw DataError("autonomous mode requires a library without explicit time dependence");
}

Eigen::VectorXd collocation_residual(const PeriodicProblem& problem, const Orbit& orbit,
                                     const Orbit* phase_reference) {
  orbit.validate();
  if (orbit.dim() != problem.model.latent_dim()) throw DataError("orbit dimension mismatch");
  const Orbit& ref = phase_reference ? *phase_reference : orbit;
  check_reference(orbit, ref);
  return assemble(problem, orbit, ref, false, false).g;
}

NewtonResult newton_correct(const PeriodicProblem& problem, const Orbit& guess,
                            const Orbit* phase_reference, const ArcLength* arc,
                            const NewtonOptions& opts) {
  problem.validate();
  guess.validate();
  if (guess.dim() != problem.model.latent_dim()) throw DataError("orbit dimension mismatch");
  if (guess.mode != problem.mode) throw DataError("orbit mode differs from the problem mode");
  const Orbit ref = phase_reference ? *phase_reference : guess;
  check_reference(guess, ref);
  const bool with_beta = arc != nullptr;

  Orbit o = guess;
  if (!autonomous(o)) o.tau = problem.forced_period(o.beta);
  const Eigen::VectorXd w = arc_weights(o);
  Eigen::VectorXd keller;
  if (with_beta) {
    if (arc->previous.size() != w.size() || arc->tangent.size() != w.size())
      throw DataError("arclength record has the wrong size");
    keller = arc->tangent.cwiseProduct(w);
  }

  auto full_unknowns = [&](const Orbit& x) {
    Eigen::VectorXd u = pack(x);
    return with_beta ? u : Eigen::VectorXd(u.head(u.size() - 1));
  };
  auto evaluate = [&](const Orbit& x, bool jac) {
    System sys = assemble(problem, x, ref, with_beta, jac);
    if (with_beta) {
      sys.g.conservativeResize(sys.g.size() + 1);
      sys.g(sys.g.size() - 1) = keller.dot(pack(x) - arc->previous) - arc->ds;
      if (jac) sys.jac = with_row(sys.jac, keller);
    }
    return sys;
  };

  std::vector<double> trace;
  double last_step = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= opts.max_iterations; ++it) {
    System sys = evaluate(o, true);
    const double r = sys.g.cwiseAbs().maxCoeff();
    trace.push_back(r);
    if (!std::isfinite(r)) throw NewtonFailure("non-finite collocation residual", trace);
    if (r < opts.tolerance && last_step < opts.tolerance) return {o, it, r};
    if (it == opts.max_iterations) break;
    if (autonomous(o) && sys.phase_row_norm < 1e-14)
      throw NumericalError("singular Jacobian: phase condition vanishes on an equilibrium");
    const Eigen::VectorXd du = sparse_solve(sys.jac, -sys.g);
    const Eigen::VectorXd u = full_unknowns(o);
    double lambda = 1.0;
    Orbit trial = o;
    for (;;) {
      unpack(problem, trial, u + lambda * du, with_beta);
      const bool ok = trial.z.allFinite() && (!autonomous(trial) || trial.tau > 0);
      if (ok) {
        const double rt = evaluate(trial, false).g.cwiseAbs().maxCoeff();
        if (std::isfinite(rt) && (rt < r || rt < opts.tolerance)) break;
      }
      lambda /= 2.0;
      if (lambda < 1.0 / 64.0) {
        unpack(problem, trial, u + lambda * 2.0 * du, with_beta);
        break;
      }
    }
    o = trial;
    last_step = (lambda * du).cwiseAbs().maxCoeff();
  }
  char msg[96];
  std::snprintf(msg, sizeof msg, "Newton did not converge in %d iterations (residual %.3e)", opts.max_iterations,
                trace.back());
  throw NewtonFailure(msg, trace);
}

Orbit initial_orbit(const PeriodicProblem& problem, double beta, const Eigen::VectorXd& z0,
                    const SeedOptions& opts) {
  problem.validate();
  if (z0.size() != problem.model.latent_dim()) throw DataError("initial latent state has wrong dimension");
  if (!(opts.dt > 0) || !(opts.settle_time >= 0)) throw DataError("bad seeding options");
  const Eigen::VectorXd raw = problem.raw(beta);
  const OdeRhs f = [&](double t, const Eigen::VectorXd& z) { return problem.model.rhs(z, raw, t); };
  const Eigen::Index segments = opts.n_elements * opts.degree;
  auto advance = [&](Eigen::VectorXd& z, double& t, double h, Eigen::Index count) {
    for (Eigen::Index k = 0; k < count; ++k) {
      z = rk4_step(f, t, z, h);
      t += h;
      if (!z.allFinite())
        throw NumericalError("integration blew up at t = " + std::to_string(t) + " while seeding");
    }
  };
  auto sample_period = [&](Eigen::VectorXd z, double t, double tau) {
    const auto sub = static_cast<Eigen::Index>(std::ceil(tau / static_cast<double>(segments) / opts.dt));
    const double h = tau / static_cast<double>(segments * sub);
    Eigen::MatrixXd nodes(segments + 1, z.size());
    nodes.row(0) = z.transpose();
    for (Eigen::Index i = 1; i <= segments; ++i) {
      advance(z, t, h, sub);
      nodes.row(i) = z.transpose();
    }
    return nodes;
  };
  auto from_nodes = [&](const Eigen::MatrixXd& nodes, double tau) {
    return sample_orbit(
        [&](double s) {
          const auto i = static_cast<Eigen::Index>(std::llround(s * static_cast<double>(segments)));
          return Eigen::VectorXd(nodes.row(std::min(i, segments)).transpose());
        },
        tau, beta, problem.mode, opts.n_elements, opts.degree);
  };

  Eigen::VectorXd z = z0;
  double t = 0.0;
  if (problem.mode == OrbitMode::Forced) {
    const double tau = problem.forced_period(beta);
    const auto periods = static_cast<Eigen::Index>(std::ceil(opts.settle_time / tau));
    const auto sub = static_cast<Eigen::Index>(std::ceil(tau / opts.dt));
    for (Eigen::Index k = 0; k < periods; ++k) {
      const double start = static_cast<double>(k) * tau;
      t = start;
      advance(z, t, tau / static_cast<double>(sub), sub);
      t = start + tau;
    }
    const Orbit guess = from_nodes(sample_period(z, 0.0, tau), tau);
    return newton_correct(problem, guess).orbit;
  }

  const auto settle_steps = static_cast<Eigen::Index>(std::ceil(opts.settle_time / opts.dt));
  advance(z, t, opts.dt, settle_steps);
  const Eigen::Index window = std::max<Eigen::Index>(settle_steps, 1000);
  Eigen::MatrixXd hist(window + 1, z.size());
  Eigen::VectorXd times(window + 1);
  hist.row(0) = z.transpose();
  times(0) = t;
  for (Eigen::Index k = 1; k <= window; ++k) {
    advance(z, t, opts.dt, 1);
    hist.row(k) = z.transpose();
    times(k) = t;
  }
  const Eigen::VectorXd y = hist.col(problem.output);
  const double half_range = (y.maxCoeff() - y.minCoeff()) / 2.0;
  if (half_range < 1e-8) throw CollapseError("no cycle detected: amplitude below 1e-8");
  const double mean = y.mean();
  std::vector<double> crossings;
  std::vector<Eigen::Index> before;
  for (Eigen::Index k = 0; k < window; ++k)
    if (y(k) < mean && y(k + 1) >= mean) {
      const double frac = (mean - y(k)) / (y(k + 1) - y(k));
      crossings.push_back(times(k) + frac * opts.dt);
      before.push_back(k);
    }
  if (crossings.size() < 3) throw CollapseError("no cycle detected: too few section crossings");
  const std::size_t c = crossings.size();
  const double tau = crossings[c - 1] - crossings[c - 2];
  auto range_between = [&](std::size_t a, std::size_t b) {
    const auto seg = y.segment(before[a], before[b] - before[a] + 1);
    return (seg.maxCoeff() - seg.minCoeff()) / 2.0;
  };
  const double amp_prev = range_between(c - 3, c - 2);
  const double amp_last = range_between(c - 2, c - 1);
  if (std::abs(amp_last - amp_prev) > 1e-2 * amp_last)
    throw CollapseError("no cycle detected: oscillation amplitude not settled");

  Eigen::VectorXd zc = hist.row(before[c - 2]).transpose();
  double tc = times(before[c - 2]);
  const double partial = crossings[c - 2] - tc;
  if (partial > 0) advance(zc, tc, partial, 1);
  const Orbit guess = from_nodes(sample_period(zc, tc, tau), tau);
  Orbit corrected = newton_correct(problem, guess, &guess).orbit;
  if (orbit_size(corrected) < 1e-8) throw CollapseError("no cycle detected: orbit collapsed onto an equilibrium");
  return corrected;
}

Eigen::VectorXcd floquet_multipliers(const PeriodicProblem& problem, const Orbit& orbit, int steps) {
  if (steps < 200) throw DataError("Floquet integration needs at least 200 steps per period");
  const Eigen::Index n = orbit.dim();
  const Eigen::VectorXd raw = problem.raw(orbit.beta);
  const double tau = orbit.tau;
  auto a_at = [&](double s) {
    return Eigen::MatrixXd(tau * problem.model.jacobians(orbit.at(s), raw, s * tau).dz);
  };
  const double h = 1.0 / steps;
  Eigen::MatrixXd y = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd a0 = a_at(0.0);
  for (int k = 0; k < steps; ++k) {
    const double s = k * h;
    const Eigen::MatrixXd am = a_at(s + 0.5 * h);
    const Eigen::MatrixXd a1 = a_at(k + 1 == steps ? 1.0 : s + h);
    const Eigen::MatrixXd k1 = a0 * y;
    const Eigen::MatrixXd k2 = am * (y + 0.5 * h * k1);
    const Eigen::MatrixXd k3 = am * (y + 0.5 * h * k2);
    const Eigen::MatrixXd k4 = a1 * (y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    a0 = a1;
  }
  if (!y.allFinite()) throw NumericalError("non-finite variational flow");
  Eigen::EigenSolver<Eigen::MatrixXd> es(y, false);
  if (es.info() != Eigen::Success) throw NumericalError("monodromy eigenvalue computation failed");
  return es.eigenvalues();
}

Eigen::VectorXcd nontrivial_multipliers(const Eigen::VectorXcd& all, OrbitMode mode) {
  if (mode == OrbitMode::Forced || all.size() == 0) return all;
  Eigen::Index trivial = 0;
  (all.array() - std::complex<double>(1.0, 0.0)).abs().minCoeff(&trivial);
  Eigen::VectorXcd out(all.size() - 1);
  for (Eigen::Index i = 0, k = 0; i < all.size(); ++i)
    if (i != trivial) out(k++) = all(i);
  return out;
}

double orbit_amplitude(const Orbit& orbit, const std::function<double(const Eigen::VectorXd&)>& g) {
  constexpr int kPerElement = 16;
  const Eigen::Index count = orbit.n_elements * kPerElement;
  std::vector<double> s(static_cast<std::size_t>(count));
  std::vector<double> v(static_cast<std::size_t>(count));
  for (Eigen::Index e = 0, k = 0; e < orbit.n_elements; ++e)
    for (int j = 0; j < kPerElement; ++j, ++k) {
      const double sk = orbit.mesh(e) + (orbit.mesh(e + 1) - orbit.mesh(e)) * j / kPerElement;
      s[static_cast<std::size_t>(k)] = sk;
      v[static_cast<std::size_t>(k)] = g(orbit.at(sk));
    }
  // Golden-section refinement between the neighbours of the best sample.
  auto refine = [&](std::size_t best, double sign) {
    const std::size_t cnt = s.size();
    double lo = s[(best + cnt - 1) % cnt];
    double hi = s[(best + 1) % cnt];
    if (hi <= lo) hi += 1.0;
    if (lo > s[best]) lo -= 1.0;
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - ratio * (hi - lo);
    double x2 = lo + ratio * (hi - lo);
    double f1 = sign * g(orbit.at(x1));
    double f2 = sign * g(orbit.at(x2));
    for (int it = 0; it < 80 && hi - lo > 1e-14; ++it) {
      if (f1 > f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - ratio * (hi - lo);
        f1 = sign * g(orbit.at(x1));
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + ratio * (hi - lo);
        f2 = sign * g(orbit.at(x2));
      }
    }
    return std::max({sign * v[best], f1, f2}) * sign;
  };
  const auto imax = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  const auto imin = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
  return (refine(imax, 1.0) - refine(imin, -1.0)) / 2.0;
}

double orbit_amplitude(const Orbit& orbit, Eigen::Index component) {
  return orbit_amplitude(orbit, [component](const Eigen::VectorXd& z) { return z(component); });
}

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::RangeEnd: return "range-end";
    case Termination::PointBudget: return "point-budget";
    case Termination::FoldLimit: return "fold-limit";
    case Termination::Collapse: return "collapse";
    case Termination::NewtonFailure: return "newton-failure";
  }
  return "unknown";
}

namespace {

BranchPoint make_point(const PeriodicProblem& p, const Orbit& o, const NewtonResult& nr,
                       int floquet_steps) {
  BranchPoint pt;
  pt.orbit = o;
  pt.beta = o.beta;
  pt.amplitude = orbit_amplitude(o, p.output);
  pt.multipliers = nontrivial_multipliers(floquet_multipliers(p, o, floquet_steps), o.mode);
  pt.multiplier_max_abs = pt.multipliers.size() ? pt.multipliers.cwiseAbs().maxCoeff() : 0.0;
  pt.stable = pt.multiplier_max_abs < 1.0 - 1e-6;
  pt.residual = nr.residual;
  pt.newton_iterations = nr.iterations;
  return pt;
}

}  // namespace

Branch continue_branch(const PeriodicProblem& problem, const Orbit& start, double range_lo,
                       double range_hi, const ContinuationOptions& opts) {
  problem.validate();
  if (!(range_hi > range_lo)) throw DataError("continuation range must satisfy lo < hi");
  if (!(opts.ds > 0)) throw DataError("ds must be positive");
  if (opts.max_points < 1) throw DataError("max_points must be positive");
  if (start.beta < range_lo || start.beta > range_hi)
    throw DataError("starting parameter lies outside the continuation range");

  int direction = opts.direction;
  if (direction == 0) direction = (range_hi - start.beta) >= (start.beta - range_lo) ? 1 : -1;

  const NewtonResult seed = newton_correct(problem, start, &start, nullptr, opts.newton);
  Branch branch;
  branch.ds0 = opts.ds;
  branch.weights = arc_weights(seed.orbit);
  const Eigen::VectorXd& w = branch.weights;
  branch.points.push_back(make_point(problem, seed.orbit, seed, opts.floquet_steps));

  Eigen::VectorXd beta_dir = Eigen::VectorXd::Zero(w.size());
  beta_dir(w.size() - 1) = 1.0;
  Eigen::VectorXd tangent = tangent_at(problem, seed.orbit, w, beta_dir);
  if (tangent(tangent.size() - 1) * direction < 0) tangent = -tangent;

  double ds = opts.ds;
  const double ds_min = opts.ds_min_factor * opts.ds;
  int fast = 0;
  int prev_sign = direction;
  double max_size = orbit_size(seed.orbit);
  branch.termination = Termination::PointBudget;

  while (static_cast<int>(branch.points.size()) < opts.max_points) {
    const Orbit& prev = branch.points.back().orbit;
    const Eigen::VectorXd u_prev = pack(prev);
    Orbit guess = prev;
    unpack(problem, guess, u_prev + ds * tangent, true);
    const ArcLength arc{u_prev, tangent, ds};
    NewtonResult nr;
    try {
      guess.z.row(guess.nodes() - 1) = guess.z.row(0);
      nr = newton_correct(problem, guess, &prev, &arc, opts.newton);
    } catch (const NumericalError& e) {
      spdlog::debug("continuation step failed at ds = {}: {}", ds, e.what());
      ds /= 2.0;
      fast = 0;
      if (ds < ds_min) {
        branch.termination = orbit_size(prev) < opts.collapse_fraction * max_size
                                 ? Termination::Collapse
                                 : Termination::NewtonFailure;
        break;
      }
      continue;
    } catch (const DataError& e) {
      ds /= 2.0;
      fast = 0;
      if (ds < ds_min) {
        branch.termination = Termination::NewtonFailure;
        break;
      }
      continue;
    }
    const Orbit& next = nr.orbit;
    const double size = orbit_size(next);
    if (size < opts.min_amplitude || next.tau < 1e-6 || next.tau > 1e6) {
      branch.termination = Termination::Collapse;
      break;
    }
    const double dbeta = next.beta - prev.beta;
    const int sign = dbeta > 0 ? 1 : (dbeta < 0 ? -1 : prev_sign);
    if (sign != prev_sign) {
      if (size < opts.collapse_fraction * max_size) {
        branch.termination = Termination::Collapse;
        break;
      }
      branch.folds.push_back(branch.points.size() - 1);
      if (opts.max_folds >= 0 && static_cast<int>(branch.folds.size()) > opts.max_folds) {
        branch.termination = Termination::FoldLimit;
        break;
      }
    }
    if (next.beta < range_lo || next.beta > range_hi) {
      // Land on the boundary with a fixed-parameter correction from the interpolated guess.
      const double edge = next.beta > range_hi ? range_hi : range_lo;
      const double frac = (edge - prev.beta) / dbeta;
      Orbit last = prev;
      unpack(problem, last, u_prev + frac * (pack(next) - u_prev), true);
      last.beta = edge;
      if (!autonomous(last)) last.tau = problem.forced_period(edge);
      last.z.row(last.nodes() - 1) = last.z.row(0);
      try {
        const NewtonResult end = newton_correct(problem, last, &prev, nullptr, opts.newton);
        branch.points.push_back(make_point(problem, end.orbit, end, opts.floquet_steps));
      } catch (const NumericalError& e) {
        spdlog::debug("could not land on the range boundary: {}", e.what());
      }
      branch.termination = Termination::RangeEnd;
      break;
    }
    tangent = tangent_at(problem, next, w, tangent);
    branch.points.push_back(make_point(problem, next, nr, opts.floquet_steps));
    max_size = std::max(max_size, size);
    prev_sign = sign;
    if (nr.iterations <= opts.fast_iterations) {
      if (++fast >= opts.grow_after) {
        ds = std::min(ds * opts.grow_factor, opts.ds);
        fast = 0;
      }
    } else {
      fast = 0;
    }
  }
  branch.ds_final = ds;
  return branch;
}

Branch continue_branch(const PeriodicProblem& problem, double beta_start, double range_lo,
                       double range_hi, const Eigen::VectorXd& z0, const ContinuationOptions& opts) {
  const Orbit start = initial_orbit(problem, beta_start, z0, opts.seed);
  return continue_branch(problem, start, range_lo, range_hi, opts);
}

std::vector<BranchSummary> latent_summaries(const Branch& branch) {
  std::vector<BranchSummary> out;
  for (const auto& p : branch.points)
    out.push_back({p.beta, p.orbit.tau, p.amplitude, p.stable, p.multiplier_max_abs});
  return out;
}

std::vector<BranchSummary> decode_branch(const TrainedModel& model, const Branch& branch,
                                         Eigen::Index output_node) {
  if (branch.points.empty()) throw DataError("empty branch");
  if (output_node < 0 || output_node >= model.pod.state_dim())
    throw DataError("output node " + std::to_string(output_node) + " out of range");
  const Eigen::RowVectorXd row = model.pod.basis.row(output_node);
  const double mean = model.pod.mean.size() ? model.pod.mean(output_node) : 0.0;
  auto g = [&](const Eigen::VectorXd& z) {
    return mean + row.dot(model.scaler.invert(forward(model.decoder, z)));
  };
  std::vector<BranchSummary> out;
  for (const auto& p : branch.points) {
    if (p.orbit.dim() != model.decoder.input_size()) throw DataError("decoder dimension mismatch");
    out.push_back({p.beta, p.orbit.tau, orbit_amplitude(p.orbit, g), p.stable, p.multiplier_max_abs});
  }
  return out;
}

std::string branch_to_csv(const std::vector<BranchSummary>& rows, const Branch& branch) {
  std::string out = "index,beta,period,amplitude,stability,multiplier_max_abs\n";
  char buf[256];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%s,%.17g\n", i, r.beta, r.period,
                  r.amplitude, r.stable ? "stable" : "unstable", r.multiplier_max_abs);
    out += buf;
  }
  out += "# amplitude: " + branch.amplitude_convention + "\n";
  out += "# termination: " + termination_name(branch.termination) + "\n";
  return out;
}

}  // namespace aesindy
