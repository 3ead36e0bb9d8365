#include "aesindy/sindy.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "aesindy/error.hpp"

namespace aesindy {

namespace {

double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void check_args(const FeatureLibrary& lib, const Eigen::VectorXd& z, const Eigen::VectorXd& beta,
                double t) {
  if (z.size() != lib.latent_dim() || beta.size() != lib.param_dim())
    throw DataError("library expects " + std::to_string(lib.latent_dim()) + " latent and " +
                    std::to_string(lib.param_dim()) + " parameter components, got " +
                    std::to_string(z.size()) + " and " + std::to_string(beta.size()));
  if (!z.allFinite() || !beta.allFinite() || !std::isfinite(t))
    throw DataError("non-finite library input");
}

std::string power_name(const std::string& var, int e) {
  return e == 1 ? var : var + "^" + std::to_string(e);
}

}  // namespace

int Monomial::degree() const {
  return std::accumulate(latent_exponents.begin(), latent_exponents.end(), 0) +
         std::accumulate(param_exponents.begin(), param_exponents.end(), 0);
}

FeatureLibrary::FeatureLibrary(Eigen::Index latent_dim, Eigen::Index param_dim,
                               std::vector<Feature> features)
    : latent_dim_(latent_dim), param_dim_(param_dim), features_(std::move(features)) {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    std::visit(overloaded{
                   [&](const Monomial& m) {
                     if (static_cast<Eigen::Index>(m.latent_exponents.size()) != latent_dim_ ||
                         static_cast<Eigen::Index>(m.param_exponents.size()) != param_dim_)
                       throw DataError("monomial exponent vector has wrong length");
                   },
                   [&](const Harmonic& h) {
                     if (h.amplitude < 0 || h.amplitude >= param_dim_ || h.frequency < 0 ||
                         h.frequency >= param_dim_)
                       throw DataError("harmonic feature references an invalid parameter index");
                   }},
               features_[i]);
    for (std::size_t j = 0; j < i; ++j)
      if (features_[i] == features_[j]) throw DataError("duplicate feature " + name(static_cast<Eigen::Index>(i)));
  }
}

bool FeatureLibrary::has_harmonics() const {
  for (const auto& f : features_)
    if (std::holds_alternative<Harmonic>(f)) return true;
  return false;
}

std::string FeatureLibrary::name(Eigen::Index j) const {
  return std::visit(
      overloaded{[](const Monomial& m) {
                   std::string out;
                   auto append = [&](const std::string& var, int e) {
                     if (e == 0) return;
                     if (!out.empty()) out += "*";
                     out += power_name(var, e);
                   };
                   for (std::size_t i = 0; i < m.latent_exponents.size(); ++i)
                     append("z" + std::to_string(i + 1), m.latent_exponents[i]);
                   for (std::size_t i = 0; i < m.param_exponents.size(); ++i)
                     append("b" + std::to_string(i + 1), m.param_exponents[i]);
                   return out.empty() ? std::string("1") : out;
                 },
                 [](const Harmonic& h) {
                   return "b" + std::to_string(h.amplitude + 1) +
                          (h.phase == HarmonicPhase::Cos ? "*cos(" : "*sin(") + "b" +
                          std::to_string(h.frequency + 1) + "*t)";
                 }},
      features_.at(static_cast<std::size_t>(j)));
}

Eigen::Index FeatureLibrary::index_of(const std::string& feature_name) const {
  for (Eigen::Index j = 0; j < size(); ++j)
    if (name(j) == feature_name) return j;
  return -1;
}

FeatureLibrary build_polynomial_library(Eigen::Index latent_dim, Eigen::Index poly_params,
                                        int max_degree, bool include_constant,
                                        const std::vector<HarmonicPair>& harmonics,
                                        Eigen::Index param_dim) {
  if (max_degree < 1) throw DataError("max_degree must be at least 1");
  if (latent_dim < 1) throw DataError("latent dimension must be positive");
  if (param_dim < 0) param_dim = poly_params;
  if (poly_params < 0 || poly_params > param_dim)
    throw DataError("polynomial parameter count exceeds parameter dimension");

  const auto vars = static_cast<std::size_t>(latent_dim + poly_params);
  std::vector<Feature> features;
  std::vector<int> exps(vars, 0);

  auto emit = [&] {
    Monomial m;
    m.latent_exponents.assign(exps.begin(), exps.begin() + latent_dim);
    m.param_exponents.assign(static_cast<std::size_t>(param_dim), 0);
    for (Eigen::Index i = 0; i < poly_params; ++i)
      m.param_exponents[static_cast<std::size_t>(i)] = exps[static_cast<std::size_t>(latent_dim + i)];
    features.emplace_back(std::move(m));
  };
  // Lexicographically descending exponent vectors of a fixed total degree.
  std::function<void(std::size_t, int)> fill = [&](std::size_t pos, int remaining) {
    if (pos + 1 == vars) {
      exps[pos] = remaining;
      emit();
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      exps[pos] = e;
      fill(pos + 1, remaining - e);
    }
  };

  if (include_constant) {
    std::fill(exps.begin(), exps.end(), 0);
    emit();
  }
  for (int d = 1; d <= max_degree; ++d) fill(0, d);
  for (const auto& h : harmonics) {
    features.emplace_back(Harmonic{h.amplitude, h.frequency, HarmonicPhase::Cos});
    features.emplace_back(Harmonic{h.amplitude, h.frequency, HarmonicPhase::Sin});
  }
  return FeatureLibrary(latent_dim, param_dim, std::move(features));
}

Eigen::VectorXd evaluate_features(const FeatureLibrary& lib, const Eigen::VectorXd& z,
                                  const Eigen::VectorXd& beta, double t) {
  check_args(lib, z, beta, t);
  Eigen::VectorXd theta(lib.size());
  for (Eigen::Index j = 0; j < lib.size(); ++j) {
    theta(j) = std::visit(
        overloaded{[&](const Monomial& m) {
                     double v = 1.0;
                     for (Eigen::Index i = 0; i < z.size(); ++i)
                       v *= ipow(z(i), m.latent_exponents[static_cast<std::size_t>(i)]);
                     for (Eigen::Index i = 0; i < beta.size(); ++i)
                       v *= ipow(beta(i), m.param_exponents[static_cast<std::size_t>(i)]);
                     return v;
                   },
                   [&](const Harmonic& h) {
                     const double arg = beta(h.frequency) * t;
                     return beta(h.amplitude) *
                            (h.phase == HarmonicPhase::Cos ? std::cos(arg) : std::sin(arg));
                   }},
        lib.features()[static_cast<std::size_t>(j)]);
  }
  return theta;
}

FeatureDerivatives differentiate_features(const FeatureLibrary& lib, const Eigen::VectorXd& z,
                                          const Eigen::VectorXd& beta, double t) {
  check_args(lib, z, beta, t);
  const Eigen::Index r = lib.size();
  const Eigen::Index n = z.size();
  const Eigen::Index p = beta.size();
  FeatureDerivatives d{Eigen::VectorXd(r), Eigen::MatrixXd::Zero(r, n), Eigen::MatrixXd::Zero(r, p),
                       Eigen::VectorXd::Zero(r)};

  // Monomial value with one variable's power replaced by its derivative.
  auto monomial = [&](const Monomial& m, Eigen::Index skip) {
    double v = 1.0;
    for (Eigen::Index i = 0; i < n + p; ++i) {
      const int e = i < n ? m.latent_exponents[static_cast<std::size_t>(i)]
                          : m.param_exponents[static_cast<std::size_t>(i - n)];
      const double x = i < n ? z(i) : beta(i - n);
      if (i == skip) {
        if (e == 0) return 0.0;
        v *= e * ipow(x, e - 1);
      } else {
        v *= ipow(x, e);
      }
    }
    return v;
  };

  for (Eigen::Index j = 0; j < r; ++j) {
    const auto& f = lib.features()[static_cast<std::size_t>(j)];
    if (const auto* m = std::get_if<Monomial>(&f)) {
      d.values(j) = monomial(*m, -1);
      for (Eigen::Index i = 0; i < n; ++i) d.dz(j, i) = monomial(*m, i);
      for (Eigen::Index i = 0; i < p; ++i) d.dbeta(j, i) = monomial(*m, n + i);
    } else {
      const auto& h = std::get<Harmonic>(f);
      const double w = beta(h.frequency);
      const double amp = beta(h.amplitude);
      const double c = std::cos(w * t);
      const double s = std::sin(w * t);
      const bool is_cos = h.phase == HarmonicPhase::Cos;
      d.values(j) = amp * (is_cos ? c : s);
      d.dbeta(j, h.amplitude) += is_cos ? c : s;
      d.dbeta(j, h.frequency) += amp * t * (is_cos ? -s : c);
      d.dt(j) = amp * w * (is_cos ? -s : c);
    }
  }
  return d;
}

CoefficientMatrix::CoefficientMatrix(Eigen::Index features, Eigen::Index latent_dim)
    : values(Eigen::MatrixXd::Zero(features, latent_dim)),
      trainable(Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(features, latent_dim,
                                                                              true)),
      fixed_values(Eigen::MatrixXd::Zero(features, latent_dim)) {}

CoefficientMatrix::CoefficientMatrix(const Eigen::MatrixXd& all_trainable)
    : CoefficientMatrix(all_trainable.rows(), all_trainable.cols()) {
  values = all_trainable;
}

double CoefficientMatrix::l1_norm() const {
  double s = 0.0;
  for (Eigen::Index j = 0; j < cols(); ++j)
    for (Eigen::Index i = 0; i < rows(); ++i)
      if (trainable(i, j)) s += std::abs(values(i, j));
  return s;
}

void CoefficientMatrix::enforce() {
  for (Eigen::Index j = 0; j < cols(); ++j)
    for (Eigen::Index i = 0; i < rows(); ++i)
      if (!trainable(i, j)) values(i, j) = fixed_values(i, j);
}

CoefficientMatrix constrain(CoefficientMatrix xi, const std::vector<FixedEntry>& entries) {
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= xi.rows() || e.col < 0 || e.col >= xi.cols())
      throw DataError("constraint index (" + std::to_string(e.row) + ", " +
                      std::to_string(e.col) + ") out of range");
    xi.trainable(e.row, e.col) = false;
    xi.fixed_values(e.row, e.col) = e.value;
    xi.values(e.row, e.col) = e.value;
  }
  return xi;
}

CoefficientMatrix threshold(CoefficientMatrix xi, double tol) {
  for (Eigen::Index j = 0; j < xi.cols(); ++j)
    for (Eigen::Index i = 0; i < xi.rows(); ++i)
      if (xi.trainable(i, j) && std::abs(xi.values(i, j)) < tol) {
        xi.trainable(i, j) = false;
        xi.fixed_values(i, j) = 0.0;
        xi.values(i, j) = 0.0;
      }
  return xi;
}

Eigen::VectorXd evaluate_dynamics(const FeatureLibrary& lib, const CoefficientMatrix& xi,
                                  const Eigen::VectorXd& z, const Eigen::VectorXd& beta, double t) {
  if (xi.rows() != lib.size() || xi.cols() != lib.latent_dim())
    throw DataError("coefficient matrix shape does not match the library");
  return xi.values.transpose() * evaluate_features(lib, z, beta, t);
}

DynamicsJacobians dynamics_jacobians(const FeatureLibrary& lib, const CoefficientMatrix& xi,
                                     const Eigen::VectorXd& z, const Eigen::VectorXd& beta,
                                     double t) {
  if (xi.rows() != lib.size() || xi.cols() != lib.latent_dim())
    throw DataError("coefficient matrix shape does not match the library");
  const auto d = differentiate_features(lib, z, beta, t);
  const Eigen::MatrixXd xt = xi.values.transpose();
  return {xt * d.dz, xt * d.dbeta, xt * d.dt};
}

std::string coefficients_to_csv(const FeatureLibrary& lib, const CoefficientMatrix& xi) {
  std::ostringstream os;
  os.precision(17);
  os << "feature";
  for (Eigen::Index i = 0; i < xi.cols(); ++i) os << ",dz" << i + 1 << "/dt";
  os << "\n";
  for (Eigen::Index j = 0; j < xi.rows(); ++j) {
    os << lib.name(j);
    for (Eigen::Index i = 0; i < xi.cols(); ++i) os << "," << xi.values(j, i);
    os << "\n";
  }
  return os.str();
}

ParamTransform ParamTransform::identity(const std::vector<std::string>& names) {
  ParamTransform tr;
  for (const auto& n : names) tr.components.push_back({n, Kind::Identity, 1.0, 0.0});
  return tr;
}

Eigen::VectorXd ParamTransform::apply(const Eigen::VectorXd& raw) const {
  if (raw.size() != size())
    throw DataError("expected " + std::to_string(size()) + " parameters, got " +
                    std::to_string(raw.size()));
  Eigen::VectorXd out(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const auto& c = components[static_cast<std::size_t>(i)];
    switch (c.kind) {
      case Kind::Identity: out(i) = raw(i); break;
      case Kind::Affine: out(i) = c.scale * raw(i) + c.offset; break;
      case Kind::Reciprocal: out(i) = c.scale / raw(i) + c.offset; break;
    }
  }
  return out;
}

Eigen::MatrixXd ParamTransform::apply_rows(const Eigen::MatrixXd& raw) const {
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index r = 0; r < raw.rows(); ++r)
    out.row(r) = apply(raw.row(r).transpose()).transpose();
  return out;
}

Eigen::VectorXd ParamTransform::derivative(const Eigen::VectorXd& raw) const {
  if (raw.size() != size()) throw DataError("parameter count mismatch");
  Eigen::VectorXd out(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const auto& c = components[static_cast<std::size_t>(i)];
    switch (c.kind) {
      case Kind::Identity: out(i) = 1.0; break;
      case Kind::Affine: out(i) = c.scale; break;
      case Kind::Reciprocal: out(i) = -c.scale / (raw(i) * raw(i)); break;
    }
  }
  return out;
}

Eigen::Index ParamTransform::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < components.size(); ++i)
    if (components[i].name == name) return static_cast<Eigen::Index>(i);
  return -1;
}

Eigen::VectorXd LatentModel::rhs(const Eigen::VectorXd& z, const Eigen::VectorXd& raw_params,
                                 double t) const {
  return evaluate_dynamics(library, xi, z, transform.apply(raw_params), t);
}

DynamicsJacobians LatentModel::jacobians(const Eigen::VectorXd& z,
                                         const Eigen::VectorXd& raw_params, double t) const {
  auto j = dynamics_jacobians(library, xi, z, transform.apply(raw_params), t);
  j.dbeta = j.dbeta * transform.derivative(raw_params).asDiagonal();
  return j;
}

}  // namespace aesindy
