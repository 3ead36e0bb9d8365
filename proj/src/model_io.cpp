#include "aesindy/model_io.hpp"

#include <fstream>
#include <sstream>

#include "aesindy/error.hpp"

namespace aesindy {

using nlohmann::json;

namespace {

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw DataError(what + ": expected a number");
  return j.get<double>();
}

Eigen::VectorXd json_vec(const json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], what);
  return v;
}

Eigen::MatrixXd json_mat(const json& j, Eigen::Index cols, const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array of rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Eigen::VectorXd row = json_vec(j[i], what);
    if (row.size() != cols) throw DataError(what + ": ragged rows");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

Eigen::MatrixXd json_mat(const json& j, const std::string& what) {
  const Eigen::Index cols =
      j.is_array() && !j.empty() && j[0].is_array() ? static_cast<Eigen::Index>(j[0].size()) : 0;
  return json_mat(j, cols, what);
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw DataError(std::string("missing key '") + key + "'");
  return j.at(key);
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string scaler_mode_name(ScalerMode m) {
  switch (m) {
    case ScalerMode::None: return "none";
    case ScalerMode::AbsMax: return "absmax";
    case ScalerMode::SqrtSingularValue: return "sqrt_singular_value";
  }
  return "none";
}

ScalerMode scaler_mode_from(const std::string& s) {
  if (s == "none") return ScalerMode::None;
  if (s == "absmax") return ScalerMode::AbsMax;
  if (s == "sqrt_singular_value") return ScalerMode::SqrtSingularValue;
  throw DataError("unknown scaler mode '" + s + "'");
}

std::string kind_name(ParamTransform::Kind k) {
  switch (k) {
    case ParamTransform::Kind::Identity: return "identity";
    case ParamTransform::Kind::Affine: return "affine";
    case ParamTransform::Kind::Reciprocal: return "reciprocal";
  }
  return "identity";
}

json network_json(const DenseNetwork& net) {
  json layers = json::array();
  for (const auto& l : net.layers)
    layers.push_back({{"weight", mat_json(l.weight)}, {"bias", vec_json(l.bias)}});
  return {{"activation", net.activation == Activation::Tanh ? "tanh" : "linear"},
          {"layers", layers}};
}

DenseNetwork network_from(const json& j, const std::string& what) {
  DenseNetwork net;
  const auto act = get<std::string>(j, "activation");
  if (act == "tanh")
    net.activation = Activation::Tanh;
  else if (act == "linear")
    net.activation = Activation::Linear;
  else
    throw DataError(what + ": unknown activation '" + act + "'");
  for (const auto& l : field(j, "layers")) {
    DenseLayer layer;
    layer.weight = json_mat(field(l, "weight"), what + " weight");
    layer.bias = json_vec(field(l, "bias"), what + " bias");
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

json log_json(const std::vector<TrainLogEntry>& log) {
  json a = json::array();
  for (const auto& e : log)
    a.push_back({{"phase", e.phase},
                 {"epoch", e.epoch},
                 {"total", e.total},
                 {"ae", e.ae},
                 {"sindy", e.sindy},
                 {"l1", e.l1},
                 {"consistency", e.consistency}});
  return a;
}

std::vector<TrainLogEntry> log_from(const json& j) {
  std::vector<TrainLogEntry> log;
  for (const auto& e : j)
    log.push_back({get<std::string>(e, "phase"), get<int>(e, "epoch"), get<double>(e, "total"),
                   get<double>(e, "ae"), get<double>(e, "sindy"), get<double>(e, "l1"),
                   get<double>(e, "consistency")});
  return log;
}

}  // namespace

json to_json(const TrainConfig& c) {
  json harmonics = json::array();
  for (const auto& h : c.library.harmonics) harmonics.push_back({h.amplitude, h.frequency});
  json blocks = json::array();
  for (const auto& b : c.pod_blocks) blocks.push_back({b.state_dim, b.modes});
  json constraints = json::array();
  for (const auto& k : c.constraints)
    constraints.push_back({{"feature", k.feature}, {"equation", k.equation}, {"value", k.value}});
  return {{"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"lambda3", c.lambda3},
          {"learning_rate", c.learning_rate},
          {"lr_decay", c.lr_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"fine_tune_epochs", c.fine_tune_epochs},
          {"threshold", c.threshold},
          {"seed", c.seed},
          {"latent_dim", c.latent_dim},
          {"encoder_hidden", c.encoder_hidden},
          {"n_pod", c.n_pod},
          {"pod_blocks", blocks},
          {"center", c.center},
          {"scaler", scaler_mode_name(c.scaler)},
          {"library",
           {{"max_degree", c.library.max_degree},
            {"include_constant", c.library.include_constant},
            {"poly_params", c.library.poly_params},
            {"harmonics", harmonics}}},
          {"param_transform", to_json(c.param_transform)},
          {"constraints", constraints},
          {"test_instances", c.test_instances}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw DataError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "lambda1") c.lambda1 = v.get<double>();
      else if (key == "lambda2") c.lambda2 = v.get<double>();
      else if (key == "lambda3") c.lambda3 = v.get<double>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "lr_decay") c.lr_decay = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<Eigen::Index>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "fine_tune_epochs") c.fine_tune_epochs = v.get<int>();
      else if (key == "threshold") c.threshold = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "latent_dim") c.latent_dim = v.get<Eigen::Index>();
      else if (key == "encoder_hidden") c.encoder_hidden = v.get<std::vector<Eigen::Index>>();
      else if (key == "n_pod") c.n_pod = v.get<Eigen::Index>();
      else if (key == "pod_blocks") {
        c.pod_blocks.clear();
        for (const auto& b : v) c.pod_blocks.push_back({b.at(0).get<Eigen::Index>(), b.at(1).get<Eigen::Index>()});
      } else if (key == "center") c.center = v.get<bool>();
      else if (key == "scaler") c.scaler = scaler_mode_from(v.get<std::string>());
      else if (key == "library") {
        for (const auto& [lk, lv] : v.items()) {
          if (lk == "max_degree") c.library.max_degree = lv.get<int>();
          else if (lk == "include_constant") c.library.include_constant = lv.get<bool>();
          else if (lk == "poly_params") c.library.poly_params = lv.get<Eigen::Index>();
          else if (lk == "harmonics") {
            c.library.harmonics.clear();
            for (const auto& h : lv)
              c.library.harmonics.push_back({h.at(0).get<Eigen::Index>(), h.at(1).get<Eigen::Index>()});
          } else throw DataError("unknown library key '" + lk + "'");
        }
      } else if (key == "param_transform") c.param_transform = param_transform_from_json(v);
      else if (key == "constraints") {
        c.constraints.clear();
        for (const auto& k : v)
          c.constraints.push_back({get<std::string>(k, "feature"), get<Eigen::Index>(k, "equation"),
                                   get<double>(k, "value")});
      } else if (key == "test_instances") c.test_instances = v.get<std::vector<std::uint64_t>>();
      else throw DataError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("bad config value: ") + e.what());
  }
  return c;
}

json to_json(const ParamTransform& t) {
  json a = json::array();
  for (const auto& c : t.components)
    a.push_back({{"name", c.name}, {"kind", kind_name(c.kind)}, {"scale", c.scale}, {"offset", c.offset}});
  return a;
}

ParamTransform param_transform_from_json(const json& j) {
  if (!j.is_array()) throw DataError("param_transform must be an array");
  ParamTransform t;
  for (const auto& c : j) {
    ParamTransform::Component comp;
    comp.name = get<std::string>(c, "name");
    const auto kind = c.value("kind", std::string("identity"));
    if (kind == "identity") comp.kind = ParamTransform::Kind::Identity;
    else if (kind == "affine") comp.kind = ParamTransform::Kind::Affine;
    else if (kind == "reciprocal") comp.kind = ParamTransform::Kind::Reciprocal;
    else throw DataError("unknown parameter transform kind '" + kind + "'");
    comp.scale = c.value("scale", 1.0);
    comp.offset = c.value("offset", 0.0);
    t.components.push_back(std::move(comp));
  }
  return t;
}

json to_json(const FeatureLibrary& lib) {
  json features = json::array();
  for (Eigen::Index k = 0; k < lib.size(); ++k) {
    const auto& f = lib.features()[static_cast<std::size_t>(k)];
    if (const auto* m = std::get_if<Monomial>(&f)) {
      features.push_back({{"type", "monomial"},
                          {"name", lib.name(k)},
                          {"latent", m->latent_exponents},
                          {"param", m->param_exponents}});
    } else {
      const auto& h = std::get<Harmonic>(f);
      features.push_back({{"type", "harmonic"},
                          {"name", lib.name(k)},
                          {"amplitude", h.amplitude},
                          {"frequency", h.frequency},
                          {"phase", h.phase == HarmonicPhase::Cos ? "cos" : "sin"}});
    }
  }
  return {{"latent_dim", lib.latent_dim()}, {"param_dim", lib.param_dim()}, {"features", features}};
}

FeatureLibrary feature_library_from_json(const json& j) {
  std::vector<Feature> features;
  try {
    for (const auto& f : field(j, "features")) {
      const auto type = get<std::string>(f, "type");
      if (type == "monomial") {
        features.emplace_back(Monomial{get<std::vector<int>>(f, "latent"), get<std::vector<int>>(f, "param")});
      } else if (type == "harmonic") {
        const auto phase = get<std::string>(f, "phase");
        if (phase != "cos" && phase != "sin") throw DataError("unknown harmonic phase '" + phase + "'");
        features.emplace_back(Harmonic{get<Eigen::Index>(f, "amplitude"), get<Eigen::Index>(f, "frequency"),
                                       phase == "cos" ? HarmonicPhase::Cos : HarmonicPhase::Sin});
      } else {
        throw DataError("unknown feature type '" + type + "'");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("bad library: ") + e.what());
  }
  return FeatureLibrary(get<Eigen::Index>(j, "latent_dim"), get<Eigen::Index>(j, "param_dim"),
                        std::move(features));
}

json to_json(const TrainedModel& m) {
  json blocks = json::array();
  for (const auto& b : m.pod.blocks) blocks.push_back({b.state_dim, b.modes});
  json trainable = json::array();
  for (Eigen::Index i = 0; i < m.latent.xi.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.latent.xi.cols(); ++k) row.push_back(bool(m.latent.xi.trainable(i, k)));
    trainable.push_back(row);
  }
  return {{"format_version", kModelFormatVersion},
          {"pod",
           {{"basis", mat_json(m.pod.basis)},
            {"singular_values", vec_json(m.pod.singular_values)},
            {"full_spectrum_energy", m.pod.full_spectrum_energy},
            {"mean", vec_json(m.pod.mean)},
            {"blocks", blocks}}},
          {"scaler",
           {{"mode", scaler_mode_name(m.scaler.mode)},
            {"factors", vec_json(m.scaler.factors)},
            {"shift", vec_json(m.scaler.shift)}}},
          {"encoder", network_json(m.encoder)},
          {"decoder", network_json(m.decoder)},
          {"library", to_json(m.latent.library)},
          {"xi",
           {{"values", mat_json(m.latent.xi.values)},
            {"trainable", trainable},
            {"fixed_values", mat_json(m.latent.xi.fixed_values)}}},
          {"param_transform", to_json(m.latent.transform)},
          {"train_log", log_json(m.log)},
          {"config", to_json(m.config)}};
}

TrainedModel model_from_json(const json& j) {
  if (get<int>(j, "format_version") != kModelFormatVersion)
    throw DataError("unsupported model format_version");
  TrainedModel m;
  const json& pod = field(j, "pod");
  const Eigen::VectorXd mean = json_vec(field(pod, "mean"), "pod mean");
  const Eigen::VectorXd sv = json_vec(field(pod, "singular_values"), "pod singular values");
  m.pod.basis = json_mat(field(pod, "basis"), sv.size(), "pod basis");
  m.pod.singular_values = sv;
  m.pod.full_spectrum_energy = get<double>(pod, "full_spectrum_energy");
  m.pod.mean = mean;
  for (const auto& b : field(pod, "blocks"))
    m.pod.blocks.push_back({b.at(0).get<Eigen::Index>(), b.at(1).get<Eigen::Index>()});
  if (m.pod.mean.size() != m.pod.basis.rows()) throw DataError("pod mean size mismatch");

  const json& sc = field(j, "scaler");
  m.scaler.mode = scaler_mode_from(get<std::string>(sc, "mode"));
  m.scaler.factors = json_vec(field(sc, "factors"), "scaler factors");
  m.scaler.shift = json_vec(field(sc, "shift"), "scaler shift");
  if (m.scaler.shift.size() != m.scaler.factors.size()) throw DataError("scaler size mismatch");

  m.encoder = network_from(field(j, "encoder"), "encoder");
  m.decoder = network_from(field(j, "decoder"), "decoder");
  m.latent.library = feature_library_from_json(field(j, "library"));
  const Eigen::Index n = m.latent.library.latent_dim();
  const json& xi = field(j, "xi");
  m.latent.xi.values = json_mat(field(xi, "values"), n, "xi values");
  m.latent.xi.fixed_values = json_mat(field(xi, "fixed_values"), n, "xi fixed values");
  const json& tr = field(xi, "trainable");
  m.latent.xi.trainable.resize(m.latent.xi.values.rows(), n);
  if (!tr.is_array() || static_cast<Eigen::Index>(tr.size()) != m.latent.xi.values.rows())
    throw DataError("xi trainable mask shape mismatch");
  for (Eigen::Index i = 0; i < m.latent.xi.values.rows(); ++i) {
    const auto& row = tr[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
      throw DataError("xi trainable mask shape mismatch");
    for (Eigen::Index k = 0; k < n; ++k) m.latent.xi.trainable(i, k) = row[static_cast<std::size_t>(k)].get<bool>();
  }
  if (m.latent.xi.fixed_values.rows() != m.latent.xi.values.rows())
    throw DataError("xi fixed values shape mismatch");
  m.latent.transform = param_transform_from_json(field(j, "param_transform"));
  m.log = log_from(field(j, "train_log"));
  m.config = train_config_from_json(field(j, "config"));
  m.validate();
  return m;
}

std::string serialize_model(const TrainedModel& model) { return to_json(model).dump(1) + "\n"; }

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  const std::string text = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

TrainedModel load_model(const std::filesystem::path& path) {
  try {
    return model_from_json(read_json_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace aesindy
