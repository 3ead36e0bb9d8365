#include "aesindy/neuralnet.hpp"

#include <cmath>
#include <random>
#include <string>

#include "aesindy/error.hpp"

namespace aesindy {

namespace {

Eigen::VectorXd activate(Activation a, const Eigen::VectorXd& h) {
  return a == Activation::Tanh ? Eigen::VectorXd(h.array().tanh()) : h;
}

// Derivative of the activation expressed through its output value.
Eigen::VectorXd activation_slope(Activation a, const Eigen::VectorXd& out) {
  if (a == Activation::Linear) return Eigen::VectorXd::Ones(out.size());
  return 1.0 - out.array().square();
}

void check_input(const DenseNetwork& net, const Eigen::VectorXd& x) {
  if (net.layers.empty()) throw DataError("network has no layers");
  if (x.size() != net.input_size())
    throw DataError("network input size " + std::to_string(net.input_size()) + ", got " +
                    std::to_string(x.size()));
  if (!x.allFinite()) throw DataError("non-finite network input");
}

}  // namespace

Eigen::Index DenseNetwork::input_size() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}
Eigen::Index DenseNetwork::output_size() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

std::vector<Eigen::Index> DenseNetwork::layer_sizes() const {
  std::vector<Eigen::Index> sizes;
  if (layers.empty()) return sizes;
  sizes.push_back(input_size());
  for (const auto& l : layers) sizes.push_back(l.weight.rows());
  return sizes;
}

Eigen::Index DenseNetwork::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void DenseNetwork::validate() const {
  if (layers.empty()) throw DataError("network has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.bias.size() != l.weight.rows())
      throw DataError("layer " + std::to_string(k) + ": bias size differs from weight rows");
    if (k > 0 && l.weight.cols() != layers[k - 1].weight.rows())
      throw DataError("layer " + std::to_string(k) + ": shape does not chain");
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw DataError("layer " + std::to_string(k) + ": non-finite parameters");
  }
}

DenseNetwork make_network(const std::vector<Eigen::Index>& layer_sizes, std::uint64_t seed,
                          Activation activation) {
  if (layer_sizes.size() < 2) throw DataError("a network needs at least input and output sizes");
  std::mt19937_64 rng(seed);
  DenseNetwork net;
  net.activation = activation;
  for (std::size_t k = 1; k < layer_sizes.size(); ++k) {
    const Eigen::Index in = layer_sizes[k - 1];
    const Eigen::Index out = layer_sizes[k];
    if (in <= 0 || out <= 0) throw DataError("layer sizes must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index j = 0; j < in; ++j)
      for (Eigen::Index i = 0; i < out; ++i) layer.weight(i, j) = dist(rng);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

DenseNetwork make_affine_network(const Eigen::MatrixXd& weight, const Eigen::VectorXd& bias) {
  DenseNetwork net;
  net.layers.push_back({weight, bias});
  net.validate();
  return net;
}

Eigen::VectorXd forward(const DenseNetwork& net, const Eigen::VectorXd& x) {
  check_input(net, x);
  Eigen::VectorXd a = x;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Eigen::VectorXd h = net.layers[k].weight * a + net.layers[k].bias;
    a = k + 1 < net.layers.size() ? activate(net.activation, h) : h;
  }
  return a;
}

Eigen::MatrixXd input_jacobian(const DenseNetwork& net, const Eigen::VectorXd& x) {
  check_input(net, x);
  Eigen::VectorXd a = x;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(x.size(), x.size());
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    Eigen::VectorXd h = l.weight * a + l.bias;
    jac = l.weight * jac;
    if (k + 1 < net.layers.size()) {
      a = activate(net.activation, h);
      jac = activation_slope(net.activation, a).asDiagonal() * jac;
    } else {
      a = h;
    }
  }
  return jac;
}

Eigen::VectorXd flatten_parameters(const DenseNetwork& net) {
  Eigen::VectorXd flat(net.parameter_count());
  Eigen::Index pos = 0;
  for (const auto& l : net.layers) {
    flat.segment(pos, l.weight.size()) = l.weight.reshaped();
    pos += l.weight.size();
    flat.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  return flat;
}

void assign_parameters(DenseNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != net.parameter_count()) throw DataError("parameter vector size mismatch");
  Eigen::Index pos = 0;
  for (auto& l : net.layers) {
    l.weight.reshaped() = flat.segment(pos, l.weight.size());
    pos += l.weight.size();
    l.bias = flat.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
}

TangentTape forward_tangent(const DenseNetwork& net, const Eigen::MatrixXd& x,
                            const Eigen::MatrixXd& dx) {
  if (net.layers.empty()) throw DataError("network has no layers");
  if (x.rows() != net.input_size())
    throw DataError("network input size " + std::to_string(net.input_size()) + ", got " +
                    std::to_string(x.rows()));
  if (dx.rows() != x.rows() || dx.cols() != x.cols())
    throw DataError("tangent shape differs from input shape");
  TangentTape tape;
  tape.values.reserve(net.layers.size() + 1);
  tape.tangents.reserve(net.layers.size() + 1);
  tape.values.push_back(x);
  tape.tangents.push_back(dx);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    Eigen::MatrixXd h = (l.weight * tape.values.back()).colwise() + l.bias;
    Eigen::MatrixXd ht = l.weight * tape.tangents.back();
    if (k + 1 < net.layers.size()) {
      Eigen::MatrixXd a = net.activation == Activation::Tanh ? Eigen::MatrixXd(h.array().tanh()) : h;
      Eigen::MatrixXd s = net.activation == Activation::Tanh
                              ? Eigen::MatrixXd(1.0 - a.array().square())
                              : Eigen::MatrixXd::Ones(a.rows(), a.cols());
      tape.tangents.push_back(s.cwiseProduct(ht));
      tape.values.push_back(std::move(a));
      tape.slopes.push_back(std::move(s));
    } else {
      tape.values.push_back(std::move(h));
      tape.tangents.push_back(std::move(ht));
    }
  }
  return tape;
}

void backward_tangent(const DenseNetwork& net, const TangentTape& tape,
                      const Eigen::MatrixXd& value_adjoint,
                      const Eigen::MatrixXd& tangent_adjoint, Eigen::Ref<Eigen::VectorXd> grad,
                      Eigen::MatrixXd* input_adjoint, Eigen::MatrixXd* input_tangent_adjoint) {
  if (grad.size() != net.parameter_count()) throw DataError("gradient buffer size mismatch");
  Eigen::MatrixXd a_bar = value_adjoint;
  Eigen::MatrixXd t_bar = tangent_adjoint;

  std::vector<Eigen::Index> offsets(net.layers.size());
  Eigen::Index pos = 0;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    offsets[k] = pos;
    pos += net.layers[k].weight.size() + net.layers[k].bias.size();
  }

  for (std::size_t kk = net.layers.size(); kk-- > 0;) {
    const auto& l = net.layers[kk];
    const Eigen::MatrixXd& a_in = tape.values[kk];
    const Eigen::MatrixXd& t_in = tape.tangents[kk];
    Eigen::MatrixXd h_bar;
    Eigen::MatrixXd ht_bar;
    if (kk + 1 < net.layers.size()) {
      const Eigen::MatrixXd& out = tape.values[kk + 1];
      const Eigen::MatrixXd& slope = tape.slopes[kk];
      ht_bar = t_bar.cwiseProduct(slope);
      h_bar = a_bar.cwiseProduct(slope);
      if (net.activation == Activation::Tanh) {
        // tanh'' = -2 tanh tanh'
        const Eigen::MatrixXd ht = l.weight * t_in;
        h_bar.array() -= 2.0 * t_bar.array() * out.array() * slope.array() * ht.array();
      }
    } else {
      h_bar = a_bar;
      ht_bar = t_bar;
    }
    auto w_grad =
        grad.segment(offsets[kk], l.weight.size()).reshaped(l.weight.rows(), l.weight.cols());
    w_grad.noalias() += h_bar * a_in.transpose();
    w_grad.noalias() += ht_bar * t_in.transpose();
    grad.segment(offsets[kk] + l.weight.size(), l.bias.size()) += h_bar.rowwise().sum();
    if (kk > 0 || input_adjoint) a_bar = l.weight.transpose() * h_bar;
    if (kk > 0 || input_tangent_adjoint) t_bar = l.weight.transpose() * ht_bar;
  }
  if (input_adjoint) *input_adjoint = std::move(a_bar);
  if (input_tangent_adjoint) *input_tangent_adjoint = std::move(t_bar);
}

AdamState::AdamState(Eigen::Index size, AdamConfig cfg)
    : config(cfg),
      first_moment(Eigen::VectorXd::Zero(size)),
      second_moment(Eigen::VectorXd::Zero(size)) {}

bool adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads, const std::vector<bool>* mask) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size() ||
      (mask && static_cast<Eigen::Index>(mask->size()) != params.size()))
    throw DataError("adam_step: shape mismatch");
  if (!grads.allFinite()) return false;

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(i)]) continue;
    double& m = state.first_moment(i);
    double& v = state.second_moment(i);
    m = c.beta1 * m + (1.0 - c.beta1) * grads(i);
    v = c.beta2 * v + (1.0 - c.beta2) * grads(i) * grads(i);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params(i) -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
  return true;
}

}  // namespace aesindy
