#pragma once

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace aesindy {

/// Product of powers of latent variables and library parameters.
struct Monomial {
  std::vector<int> latent_exponents;  // length n
  std::vector<int> param_exponents;   // length p

  [[nodiscard]] int degree() const;
  friend bool operator==(const Monomial&, const Monomial&) = default;
};

enum class HarmonicPhase { Cos, Sin };

/// beta[amplitude] * cos(beta[frequency] * t), or the sin counterpart.
struct Harmonic {
  Eigen::Index amplitude = 0;
  Eigen::Index frequency = 0;
  HarmonicPhase phase = HarmonicPhase::Cos;
  friend bool operator==(const Harmonic&, const Harmonic&) = default;
};

using Feature = std::variant<Monomial, Harmonic>;

/// An (amplitude index, frequency index) pair that expands to one cos and one sin feature.
struct HarmonicPair {
  Eigen::Index amplitude = 0;
  Eigen::Index frequency = 0;
};

/// Ordered candidate functions Theta(z, beta, t).
class FeatureLibrary {
 public:
  FeatureLibrary() = default;
  FeatureLibrary(Eigen::Index latent_dim, Eigen::Index param_dim, std::vector<Feature> features);

  [[nodiscard]] Eigen::Index latent_dim() const { return latent_dim_; }
  [[nodiscard]] Eigen::Index param_dim() const { return param_dim_; }
  [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(features_.size()); }
  [[nodiscard]] const std::vector<Feature>& features() const { return features_; }
  [[nodiscard]] bool has_harmonics() const;

  /// Display name such as "z1^2*b1" or "b1*cos(b2*t)".
  [[nodiscard]] std::string name(Eigen::Index j) const;
  [[nodiscard]] Eigen::Index index_of(const std::string& feature_name) const;

 private:
  Eigen::Index latent_dim_ = 0;
  Eigen::Index param_dim_ = 0;
  std::vector<Feature> features_;
};

/// All monomials of total degree 1..max_degree (and the constant when
/// requested) in z_1..z_n and the first `poly_params` parameters, in graded
/// lexicographic order with z before beta, followed by cos/sin features of
/// each harmonic pair. `param_dim` defaults to `poly_params`.
FeatureLibrary build_polynomial_library(Eigen::Index latent_dim, Eigen::Index poly_params,
                                        int max_degree, bool include_constant,
                                        const std::vector<HarmonicPair>& harmonics = {},
                                        Eigen::Index param_dim = -1);

Eigen::VectorXd evaluate_features(const FeatureLibrary& lib, const Eigen::VectorXd& z,
                                  const Eigen::VectorXd& beta, double t);

/// Feature values and their partial derivatives.
struct FeatureDerivatives {
  Eigen::VectorXd values;  // r
  Eigen::MatrixXd dz;      // r x n
  Eigen::MatrixXd dbeta;   // r x p
  Eigen::VectorXd dt;      // r
};

FeatureDerivatives differentiate_features(const FeatureLibrary& lib, const Eigen::VectorXd& z,
                                          const Eigen::VectorXd& beta, double t);

/// Xi (r x n) with a per-entry trainable mask. Where the mask is false,
/// `values` equals `fixed_values`.
struct CoefficientMatrix {
  Eigen::MatrixXd values;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> trainable;
  Eigen::MatrixXd fixed_values;

  CoefficientMatrix() = default;
  CoefficientMatrix(Eigen::Index features, Eigen::Index latent_dim);
  explicit CoefficientMatrix(const Eigen::MatrixXd& all_trainable);

  [[nodiscard]] Eigen::Index rows() const { return values.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return values.cols(); }
  [[nodiscard]] Eigen::Index trainable_count() const { return trainable.count(); }
  [[nodiscard]] double l1_norm() const;  // over trainable entries
  /// Rewrites every frozen entry from fixed_values.
  void enforce();
};

struct FixedEntry {
  Eigen::Index row;
  Eigen::Index col;
  double value;
};

/// Freezes the given entries at the given values.
CoefficientMatrix constrain(CoefficientMatrix xi, const std::vector<FixedEntry>& entries);

/// Freezes trainable entries with |value| < tol at zero.
CoefficientMatrix threshold(CoefficientMatrix xi, double tol);

Eigen::VectorXd evaluate_dynamics(const FeatureLibrary& lib, const CoefficientMatrix& xi,
                                  const Eigen::VectorXd& z, const Eigen::VectorXd& beta, double t);

struct DynamicsJacobians {
  Eigen::MatrixXd dz;     // n x n
  Eigen::MatrixXd dbeta;  // n x p
  Eigen::VectorXd dt;     // n
};

DynamicsJacobians dynamics_jacobians(const FeatureLibrary& lib, const CoefficientMatrix& xi,
                                     const Eigen::VectorXd& z, const Eigen::VectorXd& beta,
                                     double t);

/// CSV export: header "feature,dz1/dt,...", then one row per feature.
std::string coefficients_to_csv(const FeatureLibrary& lib, const CoefficientMatrix& xi);

/// Map from raw (physical) parameters to the parameters the library sees,
/// applied component-wise, e.g. beta = 1000 / Re.
struct ParamTransform {
  enum class Kind { Identity, Affine, Reciprocal };
  struct Component {
    std::string name;
    Kind kind = Kind::Identity;
    double scale = 1.0;
    double offset = 0.0;
  };
  std::vector<Component> components;

  static ParamTransform identity(const std::vector<std::string>& names);

  [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(components.size()); }
  [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& raw) const;
  [[nodiscard]] Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& raw) const;
  /// d beta_i / d raw_i.
  [[nodiscard]] Eigen::VectorXd derivative(const Eigen::VectorXd& raw) const;
  /// Index of the named raw parameter; -1 when absent.
  [[nodiscard]] Eigen::Index index_of(const std::string& name) const;
};

/// A latent ODE dz/dt = Theta(z, T(raw), t) Xi, with T the parameter transform.
struct LatentModel {
  FeatureLibrary library;
  CoefficientMatrix xi;
  ParamTransform transform;

  [[nodiscard]] Eigen::Index latent_dim() const { return library.latent_dim(); }
  [[nodiscard]] Eigen::Index param_dim() const { return transform.size(); }
  [[nodiscard]] Eigen::VectorXd rhs(const Eigen::VectorXd& z, const Eigen::VectorXd& raw_params,
                                    double t) const;
  /// Jacobians with d/dbeta taken with respect to the raw parameters.
  [[nodiscard]] DynamicsJacobians jacobians(const Eigen::VectorXd& z,
                                            const Eigen::VectorXd& raw_params, double t) const;
};

}  // namespace aesindy
