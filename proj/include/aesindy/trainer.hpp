#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aesindy/dataset.hpp"
#include "aesindy/neuralnet.hpp"
#include "aesindy/pod.hpp"
#include "aesindy/sindy.hpp"

namespace aesindy {

struct LibrarySpec {
  int max_degree = 3;
  bool include_constant = false;
  Eigen::Index poly_params = -1;  // parameters entering monomials; -1 means all
  std::vector<HarmonicPair> harmonics;
};

/// A coefficient pinned by name: feature `feature` in equation `equation` (0-based).
struct CoefficientConstraint {
  std::string feature;
  Eigen::Index equation = 0;
  double value = 0.0;
};

struct TrainConfig {
  // Loss weights.
  double lambda1 = 0.1;   // SINDy residual
  double lambda2 = 1e-3;  // L1 on Xi
  double lambda3 = 1e-3;  // consistency

  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // per-epoch multiplier
  Eigen::Index batch_size = 256;
  int epochs = 1000;
  int fine_tune_epochs = 0;
  double threshold = 0.0;  // applied once before fine-tuning when > 0
  std::uint64_t seed = 0;

  Eigen::Index latent_dim = 2;
  std::vector<Eigen::Index> encoder_hidden = {64, 32, 16};

  Eigen::Index n_pod = 8;
  std::vector<PodBasis::Block> pod_blocks;  // empty: one block over all columns
  bool center = false;
  ScalerMode scaler = ScalerMode::AbsMax;

  LibrarySpec library;
  ParamTransform param_transform;  // empty: identity over data parameters
  std::vector<CoefficientConstraint> constraints;
  std::vector<std::uint64_t> test_instances;  // excluded from training by the CLI

  /// Human-readable warnings when the weights leave the recommended regime
  /// (lambda1 < 1, about 100x larger than lambda2 and lambda3).
  [[nodiscard]] std::vector<std::string> regime_warnings() const;
  /// Throws DataError for invalid values.
  void validate() const;
};

struct TrainLogEntry {
  std::string phase;  // "joint" or "fine_tune"
  int epoch = 0;
  double total = 0;
  double ae = 0;
  double sindy = 0;
  double l1 = 0;
  double consistency = 0;
};

struct TrainedModel {
  PodBasis pod;
  Scaler scaler;
  DenseNetwork encoder;
  DenseNetwork decoder;
  LatentModel latent;
  std::vector<TrainLogEntry> log;
  TrainConfig config;

  [[nodiscard]] Eigen::Index latent_dim() const { return latent.latent_dim(); }
  /// Throws DataError unless encoder, decoder and Xi agree on dimensions.
  void validate() const;
};

/// Training rows in scaled POD coordinates, one row per sample.
struct ReducedData {
  Eigen::MatrixXd x;     // rows x N_POD
  Eigen::MatrixXd xdot;  // rows x N_POD
  Eigen::MatrixXd beta;  // rows x p, library parameters (already transformed)
  Eigen::VectorXd t;     // rows

  [[nodiscard]] Eigen::Index rows() const { return x.rows(); }
  [[nodiscard]] ReducedData select(const std::vector<Eigen::Index>& rows) const;
};

/// Projects, scales and transforms a snapshot set with the model's pipeline.
ReducedData reduce(const TrainedModel& model, const SnapshotSet& data);

struct LossWeights {
  double lambda1 = 0.1;
  double lambda2 = 1e-3;
  double lambda3 = 1e-3;
};

struct LossTerms {
  double total = 0;
  double ae = 0;
  double sindy = 0;
  double l1 = 0;
  double consistency = 0;
};

/// Gradient of the joint loss, laid out like flatten_parameters and Xi.
struct LossGradient {
  Eigen::VectorXd encoder;
  Eigen::VectorXd decoder;
  Eigen::MatrixXd xi;  // zero on frozen entries
};

/// Joint loss over a batch: autoencoder reconstruction, SINDy residual of the
/// encoded derivative, L1 on trainable Xi, and consistency of the decoded
/// derivative. Row terms are averaged over the batch. Fills `grad` when given.
LossTerms joint_loss(const TrainedModel& model, const ReducedData& batch,
                     const LossWeights& weights, LossGradient* grad = nullptr);

/// Builds an untrained model: POD, scaler, Glorot networks, zero Xi with constraints.
TrainedModel initialize_model(const SnapshotSet& data, const TrainConfig& cfg);

/// Joint ADAM training of encoder, decoder and Xi. Requires derivatives.
TrainedModel train(const SnapshotSet& data, const TrainConfig& cfg);

/// Sparse regression of Xi on given latent states and derivatives with the
/// autoencoder out of the loop. Minimizes the SINDy residual plus L1.
CoefficientMatrix fit_latent_sindy(const FeatureLibrary& lib, CoefficientMatrix xi,
                                   const Eigen::MatrixXd& z, const Eigen::MatrixXd& zdot,
                                   const Eigen::MatrixXd& beta, const Eigen::VectorXd& t,
                                   const TrainConfig& cfg, std::vector<TrainLogEntry>* log = nullptr);

/// Freezes the autoencoder, optionally thresholds Xi, and refits the trainable Xi entries.
TrainedModel fine_tune_sindy(const TrainedModel& model, const SnapshotSet& data,
                             const TrainConfig& cfg);

/// Latent states and encoder-implied derivatives for every row.
void encode_rows(const TrainedModel& model, const ReducedData& data, Eigen::MatrixXd& z,
                 Eigen::MatrixXd& zdot);

struct SweepPoint {
  Eigen::Index latent_dim;
  double ae;
  double total;
};

/// Trains at latent dimensions 1..max_latent_dim (constraints dropped) and
/// reports the final autoencoder term of each run.
std::vector<SweepPoint> latent_dimension_sweep(const SnapshotSet& data, TrainConfig cfg,
                                               Eigen::Index max_latent_dim);

}  // namespace aesindy
