#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace aesindy {

enum class Activation { Tanh, Linear };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Fully connected feedforward network. The activation applies to every
/// hidden layer; the output layer is affine.
struct DenseNetwork {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::Tanh;

  [[nodiscard]] Eigen::Index input_size() const;
  [[nodiscard]] Eigen::Index output_size() const;
  [[nodiscard]] std::vector<Eigen::Index> layer_sizes() const;
  [[nodiscard]] Eigen::Index parameter_count() const;

  /// Throws DataError unless the layer shapes chain and all parameters are finite.
  void validate() const;
};

/// Glorot-uniform weights, zero biases, drawn from a generator seeded with `seed`.
DenseNetwork make_network(const std::vector<Eigen::Index>& layer_sizes, std::uint64_t seed,
                          Activation activation = Activation::Tanh);

/// Single affine layer y = W x + b.
DenseNetwork make_affine_network(const Eigen::MatrixXd& weight, const Eigen::VectorXd& bias);

Eigen::VectorXd forward(const DenseNetwork& net, const Eigen::VectorXd& x);
Eigen::MatrixXd input_jacobian(const DenseNetwork& net, const Eigen::VectorXd& x);

/// Flattened parameters: per layer, weights column-major then biases.
Eigen::VectorXd flatten_parameters(const DenseNetwork& net);
void assign_parameters(DenseNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& flat);

/// Forward pass that also carries a tangent direction, i.e. evaluates
/// y = net(x) and dy = J(x) dx together, for a batch stored column-wise.
/// Kept for the reverse sweep.
struct TangentTape {
  std::vector<Eigen::MatrixXd> values;    // values[0] = x, back() = y; one column per sample
  std::vector<Eigen::MatrixXd> tangents;  // matching tangents
  std::vector<Eigen::MatrixXd> slopes;    // activation' at each hidden layer

  [[nodiscard]] const Eigen::MatrixXd& output() const { return values.back(); }
  [[nodiscard]] const Eigen::MatrixXd& output_tangent() const { return tangents.back(); }
};

TangentTape forward_tangent(const DenseNetwork& net, const Eigen::MatrixXd& x,
                            const Eigen::MatrixXd& dx);

/// Reverse sweep through a TangentTape.
///
/// Given adjoints of the output value and of the output tangent, accumulates
/// parameter gradients into `grad` (same layout as flatten_parameters) and
/// writes adjoints of the input value and input tangent when requested.
void backward_tangent(const DenseNetwork& net, const TangentTape& tape,
                      const Eigen::MatrixXd& value_adjoint,
                      const Eigen::MatrixXd& tangent_adjoint, Eigen::Ref<Eigen::VectorXd> grad,
                      Eigen::MatrixXd* input_adjoint, Eigen::MatrixXd* input_tangent_adjoint);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;

  AdamState() = default;
  AdamState(Eigen::Index size, AdamConfig cfg);
};

/// One bias-corrected ADAM update. Entries with mask == false are left alone.
/// Returns false, without touching anything, when a gradient is non-finite.
bool adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads,
               const std::vector<bool>* mask = nullptr);

}  // namespace aesindy
