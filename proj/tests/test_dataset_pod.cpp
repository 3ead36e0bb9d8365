#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "aesindy/dataset.hpp"
#include "aesindy/error.hpp"
#include "aesindy/pod.hpp"

using namespace aesindy;
namespace fs = std::filesystem;

namespace {

SnapshotSet ramps(const std::vector<double>& slopes, Eigen::Index steps, double dt) {
  SnapshotSet s;
  const Eigen::Index rows = steps * static_cast<Eigen::Index>(slopes.size());
  s.states.resize(rows, 1);
  s.times.resize(rows);
  s.params.resize(rows, 1);
  for (std::size_t i = 0; i < slopes.size(); ++i)
    for (Eigen::Index k = 0; k < steps; ++k) {
      const Eigen::Index r = static_cast<Eigen::Index>(i) * steps + k;
      s.times(r) = k * dt;
      s.states(r, 0) = slopes[i] * k * dt;
      s.params(r, 0) = slopes[i];
      s.instance_ids.push_back(i);
    }
  return s;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.reshaped()(k) = d(rng);
  return m;
}

}  // namespace

TEST_CASE("snapshot file round trip is bit identical") {
  SnapshotSet s;
  s.states = random_matrix(10, 4, 1);
  s.derivatives = random_matrix(10, 4, 2);
  s.params = random_matrix(10, 2, 3);
  s.times.resize(10);
  for (int i = 0; i < 10; ++i) {
    s.times(i) = 0.1 * (i % 5);
    s.instance_ids.push_back(static_cast<std::uint64_t>(i / 5));
  }
  const fs::path p = fs::temp_directory_path() / "aesd_roundtrip.aesd";
  save_snapshots(s, p);
  const SnapshotSet r = load_snapshots(p);
  fs::remove(p);
  CHECK(r.states == s.states);
  REQUIRE(r.derivatives.has_value());
  CHECK(*r.derivatives == *s.derivatives);
  CHECK(r.params == s.params);
  CHECK(r.times == s.times);
  CHECK(r.instance_ids == s.instance_ids);
}

TEST_CASE("empty and malformed snapshot files are rejected") {
  SnapshotSet empty;
  empty.states.resize(0, 3);
  const fs::path p = fs::temp_directory_path() / "aesd_empty.aesd";
  CHECK_THROWS_AS(save_snapshots(empty, p), DataError);
  {
    std::ofstream out(p, std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_AS(load_snapshots(p), DataError);
  fs::remove(p);
  CHECK_THROWS_AS(load_snapshots(fs::temp_directory_path() / "does_not_exist.aesd"), DataError);
}

TEST_CASE("finite differences") {
  SUBCASE("linear ramp is exact") {
    const SnapshotSet d = finite_difference_derivatives(ramps({1.0}, 20, 0.1));
    for (Eigen::Index r = 0; r < d.rows(); ++r) CHECK((*d.derivatives)(r, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("sine against cosine") {
    SnapshotSet s;
    const Eigen::Index n = 2001;
    s.times = Eigen::VectorXd::LinSpaced(n, 0.0, 2.0);
    s.states = s.times.array().sin().matrix();
    s.params.resize(n, 0);
    s.instance_ids.assign(static_cast<std::size_t>(n), 0);
    const SnapshotSet d = finite_difference_derivatives(s);
    const double err = (d.derivatives->col(0) - s.times.array().cos().matrix()).cwiseAbs().maxCoeff();
    CHECK(err < 1e-6);
  }
  SUBCASE("no bleed across instances") {
    const SnapshotSet d = finite_difference_derivatives(ramps({1.0, -3.0}, 10, 0.5));
    for (Eigen::Index r = 0; r < 10; ++r) CHECK((*d.derivatives)(r, 0) == doctest::Approx(1.0));
    for (Eigen::Index r = 10; r < 20; ++r) CHECK((*d.derivatives)(r, 0) == doctest::Approx(-3.0));
  }
}

TEST_CASE("scaler") {
  SUBCASE("absmax maps into [-1, 1]") {
    Eigen::MatrixXd x(2, 2);
    x << -2, 0, 1, 0;
    const Scaler s = fit_scaler(x, ScalerMode::AbsMax);
    CHECK(s.factors(0) == 2.0);
    CHECK(s.factors(1) == 1.0);
    const Eigen::MatrixXd y = s.apply_rows(x);
    CHECK(y.cwiseAbs().maxCoeff() <= 1.0);
    CHECK(y.col(1).isZero());
    CHECK(s.invert_rows(y).isApprox(x));
  }
  SUBCASE("sqrt singular value weights") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 2);
    const Scaler s = fit_scaler(x, ScalerMode::SqrtSingularValue, Eigen::Vector2d(4.0, 1.0));
    const Eigen::MatrixXd y = s.apply_rows(x);
    // Weights 2 and 1 before the global normalization.
    CHECK(y(0, 0) == doctest::Approx(1.0));
    CHECK(y(0, 1) == doctest::Approx(0.5));
  }
}

TEST_CASE("split by instance") {
  std::vector<double> slopes(56, 1.0);
  const SnapshotSet s = ramps(slopes, 3, 1.0);
  const std::vector<std::uint64_t> test = {4, 30};
  auto [train, held] = split_by_instance(s, test);
  CHECK(train.instances().size() == 54);
  CHECK(held.instances().size() == 2);
  CHECK(train.rows() + held.rows() == s.rows());

  auto [all, none] = split_by_instance(s, std::vector<std::uint64_t>{});
  CHECK(all.rows() == s.rows());
  CHECK(none.rows() == 0);

  const SnapshotSet fluid = ramps(std::vector<double>(21, 1.0), 2, 1.0);
  const std::vector<std::uint64_t> re = {3, 15};
  CHECK(split_by_instance(fluid, re).first.instances().size() == 19);
}

TEST_CASE("POD") {
  SUBCASE("rank one") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(5, 3);
    x.col(0) << 1, 2, -1, 3, 0.5;
    const PodBasis pod = compute_pod(x, 1, false);
    CHECK(std::abs(pod.basis(0, 0)) == doctest::Approx(1.0));
    CHECK(pod.basis.col(0).tail(2).norm() < 1e-14);
  }
  SUBCASE("rank three construction") {
    const Eigen::MatrixXd x = random_matrix(50, 3, 4) * random_matrix(3, 10, 5);
    const PodBasis pod = compute_pod(x, 5, false);
    CHECK(pod.singular_values(3) < 1e-10 * pod.singular_values(0));
    CHECK(pod.singular_values(4) < 1e-10 * pod.singular_values(0));
  }
  SUBCASE("project and reconstruct") {
    const Eigen::MatrixXd x = random_matrix(30, 8, 6);
    const PodBasis pod = compute_pod(x, 3, true);
    CHECK(project(pod, pod.mean).norm() < 1e-12);
    const Eigen::VectorXd first = pod.basis.col(0) + pod.mean;
    CHECK((project(pod, first) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
    CHECK((reconstruct(pod, Eigen::Vector3d::Zero()) - pod.mean).norm() < 1e-14);

    const Eigen::VectorXd v = x.row(7).transpose();
    const Eigen::VectorXd c = v - pod.mean;
    const double discarded = c.squaredNorm() - (pod.basis.transpose() * c).squaredNorm();
    CHECK((reconstruct(pod, project(pod, v)) - v).squaredNorm() == doctest::Approx(discarded));
  }
  SUBCASE("full rank round trip") {
    const Eigen::MatrixXd x = random_matrix(20, 6, 7);
    const PodBasis pod = compute_pod(x, 6, false);
    CHECK((reconstruct_rows(pod, project_rows(pod, x)) - x).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("separate blocks") {
    const Eigen::MatrixXd x = random_matrix(40, 7, 8);
    const PodBasis pod = compute_pod_blocks(x, {{4, 2}, {3, 2}}, true);
    CHECK(pod.modes() == 4);
    CHECK(pod.basis.block(4, 0, 3, 2).isZero());
    CHECK(pod.basis.block(0, 2, 4, 2).isZero());
    CHECK((pod.basis.transpose() * pod.basis - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-12);
  }
  CHECK_THROWS_AS(compute_pod(random_matrix(5, 3, 9), 4, false), DataError);
}
