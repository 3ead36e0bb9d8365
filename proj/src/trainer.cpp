#include "aesindy/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "aesindy/error.hpp"

namespace aesindy {

namespace {

constexpr Eigen::Index kEncodeChunk = 4096;

std::vector<Eigen::Index> iota_rows(Eigen::Index n) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

LossWeights weights_of(const TrainConfig& cfg) { return {cfg.lambda1, cfg.lambda2, cfg.lambda3}; }

// Xi entries are packed column-major after the two networks.
Eigen::VectorXd pack(const TrainedModel& m) {
  const Eigen::VectorXd enc = flatten_parameters(m.encoder);
  const Eigen::VectorXd dec = flatten_parameters(m.decoder);
  Eigen::VectorXd all(enc.size() + dec.size() + m.latent.xi.values.size());
  all << enc, dec, m.latent.xi.values.reshaped();
  return all;
}

void unpack(TrainedModel& m, const Eigen::VectorXd& all) {
  const Eigen::Index ne = m.encoder.parameter_count();
  const Eigen::Index nd = m.decoder.parameter_count();
  assign_parameters(m.encoder, all.head(ne));
  assign_parameters(m.decoder, all.segment(ne, nd));
  m.latent.xi.values.reshaped() = all.tail(m.latent.xi.values.size());
  m.latent.xi.enforce();
}

std::vector<bool> trainable_mask(const TrainedModel& m) {
  std::vector<bool> mask(static_cast<std::size_t>(m.encoder.parameter_count() +
                                                  m.decoder.parameter_count()),
                         true);
  const auto& tr = m.latent.xi.trainable;
  for (Eigen::Index k = 0; k < tr.size(); ++k) mask.push_back(tr.reshaped()(k));
  return mask;
}

void check_finite(const TrainLogEntry& e) {
  if (!std::isfinite(e.total))
    throw NumericalError("training diverged: non-finite loss in " + e.phase + " epoch " +
                         std::to_string(e.epoch));
}

}  // namespace

std::vector<std::string> TrainConfig::regime_warnings() const {
  std::vector<std::string> w;
  if (lambda1 >= 1.0) w.push_back("lambda1 >= 1; recommended regime keeps it below unity");
  auto ratio_check = [&](double other, const char* name) {
    if (other > 0.0) {
      const double ratio = lambda1 / other;
      if (ratio < 10.0 || ratio > 1000.0)
        w.push_back(std::string("lambda1/") + name + " = " + std::to_string(ratio) +
                    "; recommended about 100");
    }
  };
  ratio_check(lambda2, "lambda2");
  ratio_check(lambda3, "lambda3");
  return w;
}

void TrainConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw DataError("loss weights must be >= 0");
  if (!(learning_rate > 0)) throw DataError("learning_rate must be positive");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw DataError("lr_decay must lie in (0, 1]");
  if (batch_size < 1) throw DataError("batch_size must be positive");
  if (epochs < 0 || fine_tune_epochs < 0) throw DataError("epoch counts must be >= 0");
  if (threshold < 0) throw DataError("threshold must be >= 0");
  if (latent_dim < 1) throw DataError("latent_dim must be positive");
  if (n_pod < 1) throw DataError("n_pod must be positive");
  for (auto h : encoder_hidden)
    if (h < 1) throw DataError("hidden layer widths must be positive");
  if (library.max_degree < 1) throw DataError("library max_degree must be >= 1");
}

void TrainedModel::validate() const {
  encoder.validate();
  decoder.validate();
  const Eigen::Index n = latent.latent_dim();
  if (encoder.output_size() != n || decoder.input_size() != n || latent.xi.cols() != n)
    throw DataError("encoder output, decoder input and Xi columns must all equal the latent dim");
  if (encoder.input_size() != pod.modes() || decoder.output_size() != pod.modes() ||
      scaler.size() != pod.modes())
    throw DataError("network widths do not match the POD dimension");
  if (latent.xi.rows() != latent.library.size())
    throw DataError("Xi rows do not match the feature library");
  if (latent.transform.size() != latent.library.param_dim())
    throw DataError("parameter transform size does not match the library");
}

ReducedData ReducedData::select(const std::vector<Eigen::Index>& rows) const {
  return {x(rows, Eigen::all), xdot(rows, Eigen::all), beta(rows, Eigen::all), t(rows)};
}

ReducedData reduce(const TrainedModel& model, const SnapshotSet& data) {
  if (!data.derivatives) throw DataError("snapshot set has no derivatives");
  if (data.param_dim() != model.latent.param_dim())
    throw DataError("data has " + std::to_string(data.param_dim()) +
                    " parameters, model expects " + std::to_string(model.latent.param_dim()));
  ReducedData r;
  r.x = model.scaler.apply_rows(project_rows(model.pod, data.states));
  r.xdot = model.scaler.apply_rate_rows(project_rate_rows(model.pod, *data.derivatives));
  r.beta = model.latent.transform.apply_rows(data.params);
  r.t = data.times;
  return r;
}

LossTerms joint_loss(const TrainedModel& model, const ReducedData& batch,
                     const LossWeights& weights, LossGradient* grad) {
  const Eigen::Index b = batch.rows();
  if (b == 0) throw DataError("joint_loss: empty batch");
  const auto& lib = model.latent.library;
  const auto& xi = model.latent.xi;
  const Eigen::Index n = model.latent_dim();
  const Eigen::Index r = lib.size();

  const Eigen::MatrixXd x = batch.x.transpose();
  const Eigen::MatrixXd xdot = batch.xdot.transpose();
  const TangentTape enc = forward_tangent(model.encoder, x, xdot);
  const Eigen::MatrixXd& z = enc.output();
  const Eigen::MatrixXd& zdot_enc = enc.output_tangent();

  Eigen::MatrixXd theta(r, b);
  std::vector<Eigen::MatrixXd> dtheta_dz;
  if (grad) dtheta_dz.resize(static_cast<std::size_t>(b));
  for (Eigen::Index k = 0; k < b; ++k) {
    if (!z.col(k).allFinite())
      throw NumericalError("non-finite encoder activation at batch row " + std::to_string(k));
    const Eigen::VectorXd beta = batch.beta.row(k).transpose();
    if (grad) {
      auto d = differentiate_features(lib, z.col(k), beta, batch.t(k));
      theta.col(k) = d.values;
      dtheta_dz[static_cast<std::size_t>(k)] = std::move(d.dz);
    } else {
      theta.col(k) = evaluate_features(lib, z.col(k), beta, batch.t(k));
    }
  }
  const Eigen::MatrixXd f = xi.values.transpose() * theta;  // n x b

  const TangentTape dec = forward_tangent(model.decoder, z, f);
  const Eigen::MatrixXd r_ae = dec.output() - x;
  const Eigen::MatrixXd r_s = zdot_enc - f;
  const Eigen::MatrixXd r_c = xdot - dec.output_tangent();
  for (Eigen::Index k = 0; k < b; ++k)
    if (!r_ae.col(k).allFinite() || !r_c.col(k).allFinite())
      throw NumericalError("non-finite decoder activation at batch row " + std::to_string(k));

  const double inv_b = 1.0 / static_cast<double>(b);
  LossTerms terms;
  terms.ae = r_ae.squaredNorm() * inv_b;
  terms.sindy = weights.lambda1 * r_s.squaredNorm() * inv_b;
  terms.consistency = weights.lambda3 * r_c.squaredNorm() * inv_b;
  terms.l1 = weights.lambda2 * xi.l1_norm();
  terms.total = terms.ae + terms.sindy + terms.l1 + terms.consistency;
  if (!grad) return terms;

  grad->encoder = Eigen::VectorXd::Zero(model.encoder.parameter_count());
  grad->decoder = Eigen::VectorXd::Zero(model.decoder.parameter_count());
  grad->xi = Eigen::MatrixXd::Zero(r, n);

  const Eigen::MatrixXd out_bar = 2.0 * inv_b * r_ae;
  const Eigen::MatrixXd dx_bar = -2.0 * weights.lambda3 * inv_b * r_c;
  Eigen::MatrixXd z_bar;
  Eigen::MatrixXd f_bar;
  backward_tangent(model.decoder, dec, out_bar, dx_bar, grad->decoder, &z_bar, &f_bar);

  const Eigen::MatrixXd zdot_bar = 2.0 * weights.lambda1 * inv_b * r_s;
  f_bar -= zdot_bar;

  grad->xi.noalias() = theta * f_bar.transpose();
  const Eigen::MatrixXd xi_fbar = xi.values * f_bar;  // r x b
  for (Eigen::Index k = 0; k < b; ++k)
    z_bar.col(k).noalias() += dtheta_dz[static_cast<std::size_t>(k)].transpose() * xi_fbar.col(k);

  backward_tangent(model.encoder, enc, z_bar, zdot_bar, grad->encoder, nullptr, nullptr);

  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < r; ++i) {
      if (!xi.trainable(i, j)) {
        grad->xi(i, j) = 0.0;
        continue;
      }
      const double v = xi.values(i, j);
      if (v != 0.0) grad->xi(i, j) += weights.lambda2 * (v > 0 ? 1.0 : -1.0);
    }
  return terms;
}

TrainedModel initialize_model(const SnapshotSet& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.rows() == 0) throw DataError("empty dataset");
  for (const auto& w : cfg.regime_warnings()) spdlog::warn("{}", w);

  TrainedModel m;
  m.config = cfg;
  m.pod = cfg.pod_blocks.empty() ? compute_pod(data.states, cfg.n_pod, cfg.center)
                                 : compute_pod_blocks(data.states, cfg.pod_blocks, cfg.center);
  const Eigen::MatrixXd reduced = project_rows(m.pod, data.states);
  m.scaler = fit_scaler(reduced, cfg.scaler,
                        cfg.scaler == ScalerMode::SqrtSingularValue
                            ? std::optional<Eigen::VectorXd>(m.pod.singular_values)
                            : std::nullopt);

  const Eigen::Index modes = m.pod.modes();
  std::vector<Eigen::Index> enc_sizes{modes};
  enc_sizes.insert(enc_sizes.end(), cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
  enc_sizes.push_back(cfg.latent_dim);
  std::vector<Eigen::Index> dec_sizes(enc_sizes.rbegin(), enc_sizes.rend());
  m.encoder = make_network(enc_sizes, cfg.seed);
  m.decoder = make_network(dec_sizes, cfg.seed + 1);

  const Eigen::Index p = data.param_dim();
  if (cfg.param_transform.components.empty()) {
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < p; ++i) names.push_back("b" + std::to_string(i + 1));
    m.latent.transform = ParamTransform::identity(names);
  } else {
    m.latent.transform = cfg.param_transform;
  }
  if (m.latent.transform.size() != p)
    throw DataError("parameter transform has " + std::to_string(m.latent.transform.size()) +
                    " components but data has " + std::to_string(p) + " parameters");

  const auto& ls = cfg.library;
  m.latent.library = build_polynomial_library(cfg.latent_dim, ls.poly_params < 0 ? p : ls.poly_params,
                                              ls.max_degree, ls.include_constant, ls.harmonics, p);
  std::vector<FixedEntry> fixed;
  for (const auto& c : cfg.constraints) {
    const Eigen::Index row = m.latent.library.index_of(c.feature);
    if (row < 0) throw DataError("constraint references unknown feature '" + c.feature + "'");
    fixed.push_back({row, c.equation, c.value});
  }
  m.latent.xi = constrain(CoefficientMatrix(m.latent.library.size(), cfg.latent_dim), fixed);
  m.validate();
  return m;
}

TrainedModel train(const SnapshotSet& data, const TrainConfig& cfg) {
  if (!data.derivatives) throw DataError("training data has no derivatives");
  TrainedModel m = initialize_model(data, cfg);
  const ReducedData all = reduce(m, data);

  Eigen::VectorXd params = pack(m);
  const std::vector<bool> mask = trainable_mask(m);
  AdamState adam(params.size(), AdamConfig{cfg.learning_rate});
  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order = iota_rows(all.rows());
  const LossWeights w = weights_of(cfg);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    TrainLogEntry entry{"joint", epoch};
    for (Eigen::Index start = 0; start < all.rows(); start += cfg.batch_size) {
      const Eigen::Index len = std::min(cfg.batch_size, all.rows() - start);
      const std::vector<Eigen::Index> rows(order.begin() + start, order.begin() + start + len);
      LossGradient g;
      const LossTerms t = joint_loss(m, all.select(rows), w, &g);
      const double frac = static_cast<double>(len) / static_cast<double>(all.rows());
      entry.total += frac * t.total;
      entry.ae += frac * t.ae;
      entry.sindy += frac * t.sindy;
      entry.l1 += frac * t.l1;
      entry.consistency += frac * t.consistency;

      Eigen::VectorXd flat(params.size());
      flat << g.encoder, g.decoder, g.xi.reshaped();
      if (!adam_step(adam, params, flat, &mask))
        throw NumericalError("training diverged: non-finite gradient in joint epoch " +
                             std::to_string(epoch));
      unpack(m, params);
    }
    check_finite(entry);
    m.log.push_back(entry);
    adam.config.learning_rate *= cfg.lr_decay;
    if (epoch % 100 == 0 || epoch + 1 == cfg.epochs)
      spdlog::debug("joint epoch {}: total {:.6e} ae {:.3e} sindy {:.3e} l1 {:.3e} cons {:.3e}",
                    epoch, entry.total, entry.ae, entry.sindy, entry.l1, entry.consistency);
  }
  return m;
}

CoefficientMatrix fit_latent_sindy(const FeatureLibrary& lib, CoefficientMatrix xi,
                                   const Eigen::MatrixXd& z, const Eigen::MatrixXd& zdot,
                                   const Eigen::MatrixXd& beta, const Eigen::VectorXd& t,
                                   const TrainConfig& cfg, std::vector<TrainLogEntry>* log) {
  const Eigen::Index rows = z.rows();
  if (zdot.rows() != rows || beta.rows() != rows || t.size() != rows)
    throw DataError("fit_latent_sindy: row count mismatch");
  if (xi.rows() != lib.size() || xi.cols() != lib.latent_dim() || z.cols() != lib.latent_dim())
    throw DataError("fit_latent_sindy: shape mismatch");
  if (cfg.threshold > 0.0) xi = threshold(std::move(xi), cfg.threshold);
  if (rows == 0 || cfg.fine_tune_epochs == 0) return xi;

  Eigen::MatrixXd theta(rows, lib.size());
  for (Eigen::Index k = 0; k < rows; ++k)
    theta.row(k) = evaluate_features(lib, z.row(k).transpose(), beta.row(k).transpose(), t(k));

  std::vector<bool> mask;
  for (Eigen::Index k = 0; k < xi.trainable.size(); ++k) mask.push_back(xi.trainable.reshaped()(k));
  Eigen::VectorXd params = xi.values.reshaped();
  AdamState adam(params.size(), AdamConfig{cfg.learning_rate});
  std::mt19937_64 rng(cfg.seed + 7);
  std::vector<Eigen::Index> order = iota_rows(rows);

  for (int epoch = 0; epoch < cfg.fine_tune_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    TrainLogEntry entry{"fine_tune", epoch};
    for (Eigen::Index start = 0; start < rows; start += cfg.batch_size) {
      const Eigen::Index len = std::min(cfg.batch_size, rows - start);
      const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + len);
      const Eigen::MatrixXd th = theta(idx, Eigen::all);
      const Eigen::MatrixXd res = zdot(idx, Eigen::all) - th * xi.values;
      const double inv_b = 1.0 / static_cast<double>(len);
      const double frac = static_cast<double>(len) / static_cast<double>(rows);
      entry.sindy += frac * cfg.lambda1 * res.squaredNorm() * inv_b;
      entry.l1 += frac * cfg.lambda2 * xi.l1_norm();

      Eigen::MatrixXd g = -2.0 * cfg.lambda1 * inv_b * th.transpose() * res;
      for (Eigen::Index k = 0; k < g.size(); ++k) {
        const double v = xi.values.reshaped()(k);
        if (v != 0.0) g.reshaped()(k) += cfg.lambda2 * (v > 0 ? 1.0 : -1.0);
      }
      if (!adam_step(adam, params, g.reshaped(), &mask))
        throw NumericalError("fine-tuning diverged: non-finite gradient in epoch " +
                             std::to_string(epoch));
      xi.values.reshaped() = params;
      xi.enforce();
    }
    entry.total = entry.sindy + entry.l1;
    check_finite(entry);
    adam.config.learning_rate *= cfg.lr_decay;
    if (log) log->push_back(entry);
  }
  return xi;
}

void encode_rows(const TrainedModel& model, const ReducedData& data, Eigen::MatrixXd& z,
                 Eigen::MatrixXd& zdot) {
  const Eigen::Index n = model.latent_dim();
  z.resize(data.rows(), n);
  zdot.resize(data.rows(), n);
  for (Eigen::Index start = 0; start < data.rows(); start += kEncodeChunk) {
    const Eigen::Index len = std::min(kEncodeChunk, data.rows() - start);
    const TangentTape tape =
        forward_tangent(model.encoder, data.x.middleRows(start, len).transpose(),
                        data.xdot.middleRows(start, len).transpose());
    z.middleRows(start, len) = tape.output().transpose();
    zdot.middleRows(start, len) = tape.output_tangent().transpose();
  }
}

TrainedModel fine_tune_sindy(const TrainedModel& model, const SnapshotSet& data,
                             const TrainConfig& cfg) {
  TrainedModel out = model;
  if (cfg.fine_tune_epochs == 0 && cfg.threshold == 0.0) return out;
  const ReducedData all = reduce(model, data);
  Eigen::MatrixXd z, zdot;
  encode_rows(model, all, z, zdot);
  out.latent.xi = fit_latent_sindy(model.latent.library, model.latent.xi, z, zdot, all.beta,
                                   all.t, cfg, &out.log);
  return out;
}

std::vector<SweepPoint> latent_dimension_sweep(const SnapshotSet& data, TrainConfig cfg,
                                               Eigen::Index max_latent_dim) {
  cfg.constraints.clear();
  std::vector<SweepPoint> out;
  for (Eigen::Index n = 1; n <= max_latent_dim; ++n) {
    cfg.latent_dim = n;
    const TrainedModel m = train(data, cfg);
    const ReducedData all = reduce(m, data);
    const LossTerms t = joint_loss(m, all, weights_of(cfg));
    out.push_back({n, t.ae, t.total});
    spdlog::info("latent dim {}: ae {:.4e} total {:.4e}", n, t.ae, t.total);
  }
  return out;
}

}  // namespace aesindy
