#include <cmath>
#include <random>

#include <doctest.h>

#include "aesindy/error.hpp"
#include "aesindy/neuralnet.hpp"
#include "aesindy/oracles.hpp"
#include "aesindy/sindy.hpp"

using namespace aesindy;

namespace {

Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Straight-line evaluation, written independently of forward().
Eigen::VectorXd reference_forward(const DenseNetwork& net, Eigen::VectorXd x) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Eigen::VectorXd y = net.layers[l].bias;
    for (Eigen::Index i = 0; i < y.size(); ++i)
      for (Eigen::Index j = 0; j < x.size(); ++j) y(i) += net.layers[l].weight(i, j) * x(j);
    if (l + 1 < net.layers.size())
      for (auto& v : y) v = std::tanh(v);
    x = y;
  }
  return x;
}

}  // namespace

TEST_CASE("forward pass") {
  DenseNetwork net = make_network({3, 5, 2}, 1);
  for (auto& l : net.layers) {
    l.weight.setZero();
    l.bias.setConstant(0.7);
  }
  CHECK(forward(net, random_vector(3, 2)).isApproxToConstant(0.7));

  const DenseNetwork id = make_affine_network(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3));
  const Eigen::VectorXd x = random_vector(3, 3);
  CHECK(forward(id, x) == x);

  DenseNetwork r = make_network({4, 6, 5, 3}, 4);
  for (auto& l : r.layers) l.bias = random_vector(l.bias.size(), 5, 0.5);
  const Eigen::VectorXd xr = random_vector(4, 6);
  CHECK((forward(r, xr) - reference_forward(r, xr)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("input Jacobian") {
  Eigen::MatrixXd w(2, 3);
  w << 1, 2, 3, -1, 0.5, 4;
  const DenseNetwork lin = make_affine_network(w, Eigen::Vector2d(1, 1));
  CHECK(input_jacobian(lin, random_vector(3, 7)) == w);

  DenseNetwork net = make_network({3, 8, 2}, 8);
  for (auto& l : net.layers) l.bias = random_vector(l.bias.size(), 9, 0.3);
  const Eigen::VectorXd x = random_vector(3, 10);
  const Eigen::MatrixXd j = input_jacobian(net, x);
  const double h = 1e-6;
  double worst = 0;
  for (Eigen::Index k = 0; k < 3; ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    const Eigen::VectorXd fd = (forward(net, xp) - forward(net, xm)) / (2 * h);
    for (Eigen::Index i = 0; i < 2; ++i)
      worst = std::max(worst, std::abs(fd(i) - j(i, k)) / std::max(std::abs(j(i, k)), 1e-3));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("tangent tape matches the Jacobian") {
  const DenseNetwork net = make_network({3, 4, 2}, 11);
  Eigen::MatrixXd x(3, 2), dx(3, 2);
  x << random_vector(3, 12), random_vector(3, 13);
  dx << random_vector(3, 14), random_vector(3, 15);
  const TangentTape tape = forward_tangent(net, x, dx);
  for (Eigen::Index c = 0; c < 2; ++c) {
    CHECK((tape.output().col(c) - forward(net, x.col(c))).norm() < 1e-14);
    CHECK((tape.output_tangent().col(c) - input_jacobian(net, x.col(c)) * dx.col(c)).norm() < 1e-13);
  }
}

TEST_CASE("parameter flattening round trip") {
  DenseNetwork net = make_network({2, 3, 1}, 16);
  const Eigen::VectorXd p = random_vector(net.parameter_count(), 17);
  assign_parameters(net, p);
  CHECK(flatten_parameters(net) == p);
  CHECK_THROWS_AS(assign_parameters(net, Eigen::VectorXd::Zero(3)), DataError);
}

TEST_CASE("ADAM") {
  SUBCASE("zero gradient") {
    AdamState s(2, {});
    Eigen::VectorXd p(2);
    p << 1, 2;
    adam_step(s, p, Eigen::VectorXd::Zero(2));
    CHECK(p == Eigen::Vector2d(1, 2));
    CHECK(s.step == 1);
  }
  SUBCASE("first step") {
    AdamConfig cfg;
    cfg.learning_rate = 0.1;
    AdamState s(1, cfg);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
    adam_step(s, p, Eigen::VectorXd::Ones(1));
    CHECK(p(0) == doctest::Approx(-0.1 / (1.0 + 1e-8)));
  }
  SUBCASE("constant gradient steps approach the learning rate") {
    AdamState s(1, {});
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
    double last = 0;
    for (int i = 0; i < 500; ++i) {
      const double before = p(0);
      adam_step(s, p, Eigen::VectorXd::Constant(1, 3.0));
      last = before - p(0);
    }
    CHECK(last == doctest::Approx(1e-3).epsilon(1e-6));
  }
  SUBCASE("mask and non-finite gradients") {
    AdamState s(2, {});
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
    const std::vector<bool> mask = {true, false};
    adam_step(s, p, Eigen::VectorXd::Ones(2), &mask);
    CHECK(p(0) < 0);
    CHECK(p(1) == 0);
    const Eigen::VectorXd before = p;
    CHECK_FALSE(adam_step(s, p, Eigen::VectorXd::Constant(2, std::nan(""))));
    CHECK(p == before);
  }
}

TEST_CASE("library sizes and ordering") {
  CHECK(build_polynomial_library(2, 0, 3, false, {{0, 1}}, 2).size() == 11);
  CHECK(beam_library().size() == 11);
  CHECK(build_polynomial_library(3, 1, 3, true).size() == 35);
  CHECK(build_polynomial_library(1, 0, 1, false).size() == 1);
  const FeatureLibrary lib = build_polynomial_library(2, 1, 2, true);
  CHECK(lib.name(0) == "1");
  CHECK(lib.name(1) == "z1");
  CHECK(lib.name(3) == "b1");
  CHECK(lib.name(4) == "z1^2");
  CHECK(lib.name(5) == "z1*z2");
  CHECK(lib.index_of("z2*b1") == 8);
  CHECK(beam_library().name(9) == "b1*cos(b2*t)");
}

TEST_CASE("feature evaluation") {
  const FeatureLibrary lib = build_polynomial_library(2, 1, 2, true);
  const Eigen::VectorXd v = evaluate_features(lib, Eigen::Vector2d::Zero(), Eigen::VectorXd::Zero(1), 0.0);
  CHECK(v(0) == 1.0);
  CHECK(v.tail(v.size() - 1).isZero());
  const FeatureLibrary beam = beam_library();
  const Eigen::VectorXd b = evaluate_features(beam, Eigen::Vector2d::Zero(), Eigen::Vector2d(0.125, 0.5), 0.0);
  CHECK(b(beam.index_of("b1*cos(b2*t)")) == 0.125);
}

TEST_CASE("published models") {
  const LatentModel beam = beam_published_model();
  const Eigen::VectorXd dz = beam.rhs(Eigen::Vector2d(0.1, 0.0), Eigen::Vector2d(0.0, 0.5), 0.0);
  CHECK(dz(0) == 0.0);
  CHECK(dz(1) == doctest::Approx(-0.030083).epsilon(1e-10));

  const LatentModel fluid = fluid_published_model();
  CHECK(fluid.library.size() == 35);
  const Eigen::VectorXd f = evaluate_dynamics(fluid.library, fluid.xi, Eigen::Vector3d::Zero(),
                                              Eigen::VectorXd::Constant(1, 20.0), 0.0);
  const Eigen::VectorXd g = fluid.rhs(Eigen::Vector3d::Zero(), Eigen::VectorXd::Constant(1, 50.0), 0.0);
  CHECK(f(2) == doctest::Approx(0.8));
  CHECK(g(2) == doctest::Approx(0.8));

  const FeatureLibrary lib = build_polynomial_library(2, 0, 1, false);
  CHECK(evaluate_dynamics(lib, CoefficientMatrix(2, 2), Eigen::Vector2d(1, 2), Eigen::VectorXd(), 0).isZero());
}

TEST_CASE("dynamics Jacobians") {
  SUBCASE("linear library") {
    const FeatureLibrary lib = build_polynomial_library(2, 0, 1, false);
    Eigen::Matrix2d a;
    a << 1, 2, 3, 4;
    const DynamicsJacobians j = dynamics_jacobians(lib, CoefficientMatrix(Eigen::MatrixXd(a)), Eigen::Vector2d(0.3, -1),
                                                   Eigen::VectorXd(), 0);
    CHECK(j.dz == a.transpose());
  }
  SUBCASE("finite differences") {
    const FeatureLibrary lib = build_polynomial_library(2, 1, 3, true, {{1, 2}}, 3);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::MatrixXd xi(lib.size(), 2);
    for (auto& v : xi.reshaped()) v = u(rng);
    const CoefficientMatrix c(xi);
    const Eigen::Vector2d z(0.4, -0.7);
    const Eigen::Vector3d beta(0.3, 0.8, 1.1);
    const double t = 0.9;
    const DynamicsJacobians j = dynamics_jacobians(lib, c, z, beta, t);
    const double h = 1e-6;
    double worst = 0;
    auto rel = [&](double a, double b) { return std::abs(a - b) / std::max(std::abs(a), 1e-3); };
    for (int k = 0; k < 2; ++k) {
      Eigen::Vector2d zp = z, zm = z;
      zp(k) += h;
      zm(k) -= h;
      const Eigen::VectorXd fd = (evaluate_dynamics(lib, c, zp, beta, t) - evaluate_dynamics(lib, c, zm, beta, t)) / (2 * h);
      for (int i = 0; i < 2; ++i) worst = std::max(worst, rel(j.dz(i, k), fd(i)));
    }
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d bp = beta, bm = beta;
      bp(k) += h;
      bm(k) -= h;
      const Eigen::VectorXd fd = (evaluate_dynamics(lib, c, z, bp, t) - evaluate_dynamics(lib, c, z, bm, t)) / (2 * h);
      for (int i = 0; i < 2; ++i) worst = std::max(worst, rel(j.dbeta(i, k), fd(i)));
    }
    const Eigen::VectorXd fdt = (evaluate_dynamics(lib, c, z, beta, t + h) - evaluate_dynamics(lib, c, z, beta, t - h)) / (2 * h);
    for (int i = 0; i < 2; ++i) worst = std::max(worst, rel(j.dt(i), fdt(i)));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("constraints and thresholding") {
  CoefficientMatrix xi(3, 2);
  xi = constrain(xi, {{0, 0, 1.0}, {2, 1, -0.3}});
  CHECK(xi.trainable_count() == 4);
  CHECK(xi.values(2, 1) == -0.3);

  // The fixed entries survive many optimizer steps.
  AdamState s(6, {});
  Eigen::VectorXd flat = xi.values.reshaped();
  std::vector<bool> mask(6);
  for (int k = 0; k < 6; ++k) mask[static_cast<std::size_t>(k)] = xi.trainable.reshaped()(k);
  for (int i = 0; i < 1000; ++i) adam_step(s, flat, Eigen::VectorXd::Ones(6), &mask);
  xi.values = flat.reshaped(3, 2);
  CHECK(xi.values(0, 0) == 1.0);
  CHECK(xi.values(2, 1) == -0.3);

  CoefficientMatrix small(Eigen::MatrixXd(Eigen::Vector2d(1e-6, 0.5)));
  CHECK(threshold(small, 0.0).values == small.values);
  const CoefficientMatrix t = threshold(small, 1e-3);
  CHECK(t.values(0, 0) == 0.0);
  CHECK_FALSE(t.trainable(0, 0));
  CHECK(t.values(1, 0) == 0.5);

  CHECK_THROWS_AS(constrain(xi, {{5, 0, 1.0}}), DataError);
}

TEST_CASE("thresholded regression keeps the true terms") {
  const FeatureLibrary lib = build_polynomial_library(2, 0, 3, false);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> noise(0, 1e-3);
  const Eigen::Index rows = 400;
  Eigen::MatrixXd theta(rows, lib.size());
  Eigen::VectorXd y(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Vector2d z(u(rng), u(rng));
    theta.row(r) = evaluate_features(lib, z, Eigen::VectorXd(), 0).transpose();
    y(r) = 0.8 * z(0) - 0.4 * z(1) * z(1) + 0.25 * z(0) * z(0) * z(1) + noise(rng);
  }
  const Eigen::VectorXd fit = theta.colPivHouseholderQr().solve(y);
  const CoefficientMatrix t = threshold(CoefficientMatrix(Eigen::MatrixXd(fit)), 0.05);
  CHECK((t.values.array() != 0.0).count() == 3);
}

TEST_CASE("parameter transforms") {
  ParamTransform t;
  t.components = {{"Re", ParamTransform::Kind::Reciprocal, 1000.0, 0.0},
                  {"F", ParamTransform::Kind::Affine, 2.0, 1.0}};
  const Eigen::VectorXd b = t.apply(Eigen::Vector2d(50.0, 0.5));
  CHECK(b(0) == doctest::Approx(20.0));
  CHECK(b(1) == doctest::Approx(2.0));
  const Eigen::VectorXd d = t.derivative(Eigen::Vector2d(50.0, 0.5));
  CHECK(d(0) == doctest::Approx(-1000.0 / 2500.0));
  CHECK(d(1) == doctest::Approx(2.0));
  CHECK(t.index_of("F") == 1);
  CHECK(t.index_of("mu") == -1);
}
