#include "aesindy/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

#include "aesindy/error.hpp"

namespace aesindy {

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'E', 'S', 'D'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kFlagDerivatives = 1u << 0;
constexpr std::uint64_t kFlagParams = 1u << 1;

template <typename T>
T byteswap_if_needed(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&value, bytes.data(), sizeof(T));
  }
  return value;
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open '" + path.string() + "' for writing");
  }
  template <typename T>
  void put(T value) {
    value = byteswap_if_needed(value);
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void put_rows(const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put(m(i, j));
  }
  void finish() {
    out_.flush();
    if (!out_) throw DataError("write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size())
      throw DataError("shape mismatch: payload shorter than header declares");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_needed(value);
  }
  Eigen::MatrixXd get_rows(std::uint64_t rows, std::uint64_t cols) {
    if ((bytes_.size() - pos_) / sizeof(double) < rows * cols)
      throw DataError("shape mismatch: payload shorter than header declares");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>();
    return m;
  }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint64_t> SnapshotSet::instances() const {
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < instance_ids.size(); ++i)
    if (i == 0 || instance_ids[i] != instance_ids[i - 1]) ids.push_back(instance_ids[i]);
  return ids;
}

std::vector<Eigen::Index> SnapshotSet::instance_offsets() const {
  std::vector<Eigen::Index> offsets;
  for (std::size_t i = 0; i < instance_ids.size(); ++i)
    if (i == 0 || instance_ids[i] != instance_ids[i - 1])
      offsets.push_back(static_cast<Eigen::Index>(i));
  offsets.push_back(static_cast<Eigen::Index>(instance_ids.size()));
  return offsets;
}

Eigen::Index SnapshotSet::steps_per_instance() const {
  const auto offsets = instance_offsets();
  if (offsets.size() < 2) return 0;
  return offsets[1] - offsets[0];
}

void SnapshotSet::validate() const {
  const Eigen::Index n = rows();
  if (times.size() != n || params.rows() != n ||
      static_cast<Eigen::Index>(instance_ids.size()) != n)
    throw DataError("row count mismatch between states, times, params and instance ids");
  if (derivatives && (derivatives->rows() != n || derivatives->cols() != states.cols()))
    throw DataError("derivative block shape differs from states");
  if (!states.allFinite() || !times.allFinite() || !params.allFinite() ||
      (derivatives && !derivatives->allFinite()))
    throw DataError("non-finite values in snapshot set");

  const auto offsets = instance_offsets();
  std::set<std::uint64_t> seen;
  const Eigen::Index steps = n == 0 ? 0 : offsets[1] - offsets[0];
  for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
    const Eigen::Index begin = offsets[k];
    const Eigen::Index end = offsets[k + 1];
    if (!seen.insert(instance_ids[static_cast<std::size_t>(begin)]).second)
      throw DataError("rows of instance " +
                      std::to_string(instance_ids[static_cast<std::size_t>(begin)]) +
                      " are not contiguous");
    if (end - begin != steps) throw DataError("instances have different step counts");
    if (end - begin < 2) continue;
    const double dt = times(begin + 1) - times(begin);
    for (Eigen::Index i = begin + 1; i < end; ++i) {
      const double step = times(i) - times(i - 1);
      if (!(step > 0.0)) throw DataError("non-monotone time grid");
      if (std::abs(step - dt) > 1e-12 * std::max(std::abs(dt), std::abs(times(i))) + 1e-15)
        throw DataError("non-uniform time step in instance " +
                        std::to_string(instance_ids[static_cast<std::size_t>(begin)]));
    }
  }
}

SnapshotSet load_snapshots(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));

  std::array<char, 4> magic{};
  for (auto& c : magic) c = r.get<char>();
  if (magic != kMagic) throw DataError("bad magic: not an AESD snapshot file");
  if (const auto version = r.get<std::uint32_t>(); version != kVersion)
    throw DataError("unsupported format version " + std::to_string(version));

  const auto n_instances = r.get<std::uint64_t>();
  const auto n_steps = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint64_t>();
  const auto p = r.get<std::uint64_t>();
  const auto flags = r.get<std::uint64_t>();
  if (n_instances == 0 || n_steps == 0) throw DataError("empty dataset");
  if ((flags & kFlagParams) == 0 && p != 0)
    throw DataError("shape mismatch: p > 0 but params flag not set");

  const std::uint64_t rows = n_instances * n_steps;
  const bool has_derivs = (flags & kFlagDerivatives) != 0;
  const std::uint64_t expected_doubles =
      rows * (1 + dim * (has_derivs ? 2 : 1) + ((flags & kFlagParams) ? p : 0));
  if (r.remaining() != expected_doubles * sizeof(double) + rows * sizeof(std::uint64_t))
    throw DataError("shape mismatch between header and payload");

  SnapshotSet set;
  set.times = r.get_rows(rows, 1).col(0);
  set.states = r.get_rows(rows, dim);
  if (has_derivs) set.derivatives = r.get_rows(rows, dim);
  set.params = (flags & kFlagParams) ? r.get_rows(rows, p)
                                     : Eigen::MatrixXd(static_cast<Eigen::Index>(rows), 0);
  set.instance_ids.resize(rows);
  for (auto& id : set.instance_ids) id = r.get<std::uint64_t>();

  set.validate();
  return set;
}

void save_snapshots(const SnapshotSet& set, const std::filesystem::path& path) {
  set.validate();
  const auto ids = set.instances();
  if (ids.empty()) throw DataError("empty dataset");

  Writer w(path);
  for (char c : kMagic) w.put(c);
  w.put(kVersion);
  w.put(static_cast<std::uint64_t>(ids.size()));
  w.put(static_cast<std::uint64_t>(set.steps_per_instance()));
  w.put(static_cast<std::uint64_t>(set.state_dim()));
  w.put(static_cast<std::uint64_t>(set.param_dim()));
  std::uint64_t flags = 0;
  if (set.derivatives) flags |= kFlagDerivatives;
  if (set.param_dim() > 0) flags |= kFlagParams;
  w.put(flags);

  for (Eigen::Index i = 0; i < set.times.size(); ++i) w.put(set.times(i));
  w.put_rows(set.states);
  if (set.derivatives) w.put_rows(*set.derivatives);
  if (set.param_dim() > 0) w.put_rows(set.params);
  for (auto id : set.instance_ids) w.put(id);
  w.finish();
}

SnapshotSet finite_difference_derivatives(const SnapshotSet& set) {
  if (set.derivatives) throw DataError("derivatives already present");
  const auto offsets = set.instance_offsets();
  Eigen::MatrixXd d(set.states.rows(), set.states.cols());

  for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
    const Eigen::Index b = offsets[k];
    const Eigen::Index e = offsets[k + 1];
    if (e - b < 3)
      throw DataError("instance " + std::to_string(set.instance_ids[static_cast<std::size_t>(b)]) +
                      " has fewer than 3 time points");
    const double dt = (set.times(e - 1) - set.times(b)) / static_cast<double>(e - b - 1);
    const auto& x = set.states;
    d.row(b) = (-3.0 * x.row(b) + 4.0 * x.row(b + 1) - x.row(b + 2)) / (2.0 * dt);
    for (Eigen::Index i = b + 1; i + 1 < e; ++i)
      d.row(i) = (x.row(i + 1) - x.row(i - 1)) / (2.0 * dt);
    d.row(e - 1) = (3.0 * x.row(e - 1) - 4.0 * x.row(e - 2) + x.row(e - 3)) / (2.0 * dt);
  }

  SnapshotSet out = set;
  out.derivatives = std::move(d);
  return out;
}

Eigen::VectorXd Scaler::apply(const Eigen::VectorXd& x) const {
  return (x - shift).cwiseQuotient(factors);
}
Eigen::VectorXd Scaler::invert(const Eigen::VectorXd& scaled) const {
  return scaled.cwiseProduct(factors) + shift;
}
Eigen::VectorXd Scaler::apply_rate(const Eigen::VectorXd& xdot) const {
  return xdot.cwiseQuotient(factors);
}
Eigen::VectorXd Scaler::invert_rate(const Eigen::VectorXd& scaled) const {
  return scaled.cwiseProduct(factors);
}

Eigen::MatrixXd Scaler::apply_rows(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - shift.transpose()).array().rowwise() / factors.transpose().array();
}
Eigen::MatrixXd Scaler::apply_rate_rows(const Eigen::MatrixXd& xdot) const {
  return xdot.array().rowwise() / factors.transpose().array();
}
Eigen::MatrixXd Scaler::invert_rows(const Eigen::MatrixXd& scaled) const {
  return (scaled.array().rowwise() * factors.transpose().array()).matrix().rowwise() +
         shift.transpose();
}

Scaler fit_scaler(const Eigen::MatrixXd& features, ScalerMode mode,
                  std::optional<Eigen::VectorXd> singular_values, bool center) {
  const Eigen::Index cols = features.cols();
  Scaler s;
  s.mode = mode;
  s.shift = Eigen::VectorXd::Zero(cols);
  if (center && features.rows() > 0) s.shift = features.colwise().mean().transpose();
  s.factors = Eigen::VectorXd::Ones(cols);

  const Eigen::MatrixXd centered = features.rowwise() - s.shift.transpose();
  switch (mode) {
    case ScalerMode::None:
      break;
    case ScalerMode::AbsMax:
      for (Eigen::Index j = 0; j < cols; ++j) {
        const double m = centered.rows() > 0 ? centered.col(j).cwiseAbs().maxCoeff() : 0.0;
        s.factors(j) = m > 0.0 ? m : 1.0;
      }
      break;
    case ScalerMode::SqrtSingularValue: {
      if (!singular_values || singular_values->size() != cols)
        throw DataError("sqrt-singular-value scaling needs one singular value per feature");
      Eigen::VectorXd weights = singular_values->cwiseMax(0.0).cwiseSqrt();
      double global = 0.0;
      for (Eigen::Index j = 0; j < cols; ++j)
        if (centered.rows() > 0)
          global = std::max(global, weights(j) * centered.col(j).cwiseAbs().maxCoeff());
      if (global == 0.0) global = 1.0;
      for (Eigen::Index j = 0; j < cols; ++j)
        s.factors(j) = weights(j) > 0.0 ? global / weights(j) : 1.0;
      break;
    }
  }
  return s;
}

Scaler fit_scaler(const SnapshotSet& set, ScalerMode mode,
                  std::optional<Eigen::VectorXd> singular_values, bool center) {
  return fit_scaler(set.states, mode, std::move(singular_values), center);
}

std::pair<SnapshotSet, SnapshotSet> split_by_instance(const SnapshotSet& set,
                                                       std::span<const std::uint64_t> test_ids) {
  const auto all = set.instances();
  const std::set<std::uint64_t> test(test_ids.begin(), test_ids.end());
  for (auto id : test)
    if (std::find(all.begin(), all.end(), id) == all.end())
      throw DataError("unknown instance id " + std::to_string(id));
  if (!all.empty() && test.size() == all.size())
    throw DataError("test ids cover every instance; training set would be empty");

  std::vector<Eigen::Index> train_rows, test_rows;
  for (std::size_t i = 0; i < set.instance_ids.size(); ++i)
    (test.contains(set.instance_ids[i]) ? test_rows : train_rows)
        .push_back(static_cast<Eigen::Index>(i));

  auto take = [&](const std::vector<Eigen::Index>& rows) {
    SnapshotSet out;
    out.states = set.states(rows, Eigen::all);
    if (set.derivatives) out.derivatives = (*set.derivatives)(rows, Eigen::all);
    out.params = set.params(rows, Eigen::all);
    out.times = set.times(rows);
    for (auto r : rows) out.instance_ids.push_back(set.instance_ids[static_cast<std::size_t>(r)]);
    return out;
  };
  return {take(train_rows), take(test_rows)};
}

}  // namespace aesindy
