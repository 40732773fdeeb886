#include "gtpde/pde_learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "gtpde/common.hpp"
#include "gtpde/field_ops.hpp"
#include "gtpde/fv_reference.hpp"
#include "gtpde/parallel.hpp"

namespace gtpde {

Arch parse_arch(const std::string& name) {
  if (name == "F" || name == "f") return Arch::kF;
  if (name == "G" || name == "g") return Arch::kG;
  throw ConfigError("unknown architecture '" + name + "' (expected F or G)");
}

std::string arch_name(Arch arch) { return arch == Arch::kF ? "F" : "G"; }

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

namespace {

std::vector<double> central_first(std::span<const double> v, double dx) {
  const std::size_t n = v.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = (v[(i + 1) % n] - v[(i + n - 1) % n]) / (2.0 * dx);
  return d;
}

std::vector<double> central_second(std::span<const double> v, double dx) {
  const std::size_t n = v.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = (v[(i + 1) % n] - 2.0 * v[i] + v[(i + n - 1) % n]) / (dx * dx);
  return d;
}

}  // namespace

Eigen::MatrixXd derivative_features(std::span<const double> v, double dx, int n_derivs) {
  if (n_derivs < 0) throw ConfigError("n_derivs must be >= 0");
  if (v.size() < 3) throw ConfigError("derivative features need at least 3 grid points");
  if (!(dx > 0.0)) throw ConfigError("grid spacing must be > 0");
  const auto n = static_cast<Eigen::Index>(v.size());
  Eigen::MatrixXd f(n_derivs + 1, n);
  std::vector<std::vector<double>> order(static_cast<std::size_t>(n_derivs) + 1);
  order[0].assign(v.begin(), v.end());
  for (int k = 1; k <= n_derivs; ++k) {
    order[static_cast<std::size_t>(k)] = k == 1 ? central_first(v, dx) : central_second(order[static_cast<std::size_t>(k - 2)], dx);
  }
  for (int k = 0; k <= n_derivs; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) f(k, i) = order[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
  }
  return f;
}

Eigen::MatrixXd stencil_windows(std::span<const double> v, int radius) {
  if (radius < 0) throw ConfigError("stencil radius must be >= 0");
  const auto n = static_cast<Eigen::Index>(v.size());
  Eigen::MatrixXd w(2 * radius + 1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = -radius; k <= radius; ++k) {
      const Eigen::Index j = (((i + k) % n) + n) % n;
      w(k + radius, i) = v[static_cast<std::size_t>(j)];
    }
  }
  return w;
}

std::size_t Dataset::points() const {
  return arch == Arch::kF ? samples() : samples() * grid_size;
}

std::size_t Dataset::count(Split s) const {
  return static_cast<std::size_t>(std::count(split.begin(), split.end(), s));
}

Dataset Dataset::subset(Split s) const {
  Dataset out;
  out.arch = arch;
  out.options = options;
  out.grid_size = grid_size;
  out.dx = dx;
  std::vector<Eigen::Index> cols;
  for (std::size_t j = 0; j < split.size(); ++j) {
    if (split[j] == s) cols.push_back(static_cast<Eigen::Index>(j));
  }
  out.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(cols.size()));
  out.targets.resize(targets.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.inputs.col(static_cast<Eigen::Index>(k)) = inputs.col(cols[k]);
    out.targets.col(static_cast<Eigen::Index>(k)) = targets.col(cols[k]);
    out.split.push_back(s);
    out.trajectory.push_back(trajectory[static_cast<std::size_t>(cols[k])]);
    out.time.push_back(time[static_cast<std::size_t>(cols[k])]);
  }
  return out;
}

namespace {

void append(Dataset& into, const Dataset& more) {
  if (into.samples() == 0) {
    into = more;
    return;
  }
  if (into.arch != more.arch || into.grid_size != more.grid_size || into.inputs.rows() != more.inputs.rows()) {
    throw ConfigError("cannot merge datasets with different layouts");
  }
  const Eigen::Index a = into.inputs.cols();
  const Eigen::Index b = more.inputs.cols();
  into.inputs.conservativeResize(Eigen::NoChange, a + b);
  into.inputs.rightCols(b) = more.inputs;
  into.targets.conservativeResize(Eigen::NoChange, a + b);
  into.targets.rightCols(b) = more.targets;
  into.split.insert(into.split.end(), more.split.begin(), more.split.end());
  into.trajectory.insert(into.trajectory.end(), more.trajectory.begin(), more.trajectory.end());
  into.time.insert(into.time.end(), more.time.begin(), more.time.end());
}

}  // namespace

Dataset build_dataset(std::span<const DensityField> snapshots, Arch arch, const DatasetOptions& options,
                      Split split, int trajectory) {
  if (options.stride < 1) throw ConfigError("build_dataset: stride must be >= 1");
  if (options.difference_step < 1) throw ConfigError("build_dataset: difference_step must be >= 1");
  const auto k = static_cast<std::size_t>(options.difference_step);
  if (snapshots.size() < 2 * k + 1) {
    throw ConfigError("build_dataset: need at least " + std::to_string(2 * k + 1) + " snapshots for difference_step " +
                      std::to_string(k));
  }
  if (options.smooth_sigma < 0.0) throw ConfigError("build_dataset: smoothing width must be >= 0");
  const std::size_t n = snapshots.front().size();
  const double dx = snapshots.front().dx;
  const double dt = snapshots[1].t - snapshots[0].t;
  if (!(dt > 0.0)) throw ConfigError("build_dataset: snapshot times must increase");
  for (std::size_t j = 0; j < snapshots.size(); ++j) {
    if (!same_grid(snapshots[j], snapshots.front())) throw ConfigError("build_dataset: snapshots on different grids");
    const double expected = snapshots.front().t + dt * static_cast<double>(j);
    if (std::abs(snapshots[j].t - expected) > 1e-6 * dt) throw ConfigError("build_dataset: snapshots must be equispaced in time");
  }
  std::vector<std::vector<double>> v(snapshots.size());
  for (std::size_t j = 0; j < snapshots.size(); ++j) {
    const auto& raw = snapshots[j].values;
    for (double x : raw) {
      if (!std::isfinite(x)) throw NumericError("build_dataset: non-finite density in snapshot " + std::to_string(j));
    }
    v[j] = options.smooth_sigma > 0.0 ? gaussian_smooth(raw, options.smooth_sigma) : raw;
  }

  Dataset d;
  d.arch = arch;
  d.options = options;
  d.grid_size = n;
  d.dx = dx;
  std::vector<std::size_t> keep;
  for (std::size_t j = k; j + k < snapshots.size(); j += static_cast<std::size_t>(options.stride)) keep.push_back(j);
  const auto m = static_cast<Eigen::Index>(keep.size());
  const auto N = static_cast<Eigen::Index>(n);
  if (arch == Arch::kF) {
    d.inputs.resize(options.n_derivs + 1, m * N);
    d.targets.resize(1, m * N);
  } else {
    d.inputs.resize(N, m);
    d.targets.resize(N, m);
  }
  for (Eigen::Index c = 0; c < m; ++c) {
    const std::size_t j = keep[static_cast<std::size_t>(c)];
    Eigen::VectorXd dvdt(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      dvdt(i) = (v[j + k][ii] - v[j - k][ii]) / (2.0 * static_cast<double>(k) * dt);
    }
    if (arch == Arch::kF) {
      d.inputs.middleCols(c * N, N) = derivative_features(v[j], dx, options.n_derivs);
      d.targets.middleCols(c * N, N) = dvdt.transpose();
      for (Eigen::Index i = 0; i < N; ++i) {
        d.split.push_back(split);
        d.trajectory.push_back(trajectory);
        d.time.push_back(snapshots[j].t);
      }
    } else {
      d.inputs.col(c) = Eigen::Map<const Eigen::VectorXd>(v[j].data(), N);
      d.targets.col(c) = dvdt;
      d.split.push_back(split);
      d.trajectory.push_back(trajectory);
      d.time.push_back(snapshots[j].t);
    }
  }
  if (!d.inputs.allFinite() || !d.targets.allFinite()) throw NumericError("build_dataset: non-finite features");
  return d;
}

Dataset build_dataset(std::span<const Trajectory> trajectories, Arch arch, const DatasetOptions& options) {
  Dataset all;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    append(all, build_dataset(trajectories[k].snapshots, arch, options, trajectories[k].split, static_cast<int>(k)));
  }
  if (all.samples() == 0) throw ConfigError("build_dataset: no trajectories");
  return all;
}

// ---- model ----

PdeModel PdeModel::architecture_f(int n_derivs, std::vector<int> hidden, Rng& rng) {
  if (hidden.empty()) throw ConfigError("architecture F needs at least one hidden layer");
  std::vector<Layer> layers;
  int in = n_derivs + 1;
  for (int h : hidden) {
    layers.push_back(Layer::dense(in, h, Activation::kRelu));
    in = h;
  }
  layers.push_back(Layer::dense(in, 1, Activation::kLinear));
  PdeModel m;
  m.arch = Arch::kF;
  m.n_derivs = n_derivs;
  m.net = Network(std::move(layers));
  m.net.initialize(rng);
  m.norm.in_mean = Eigen::VectorXd::Zero(n_derivs + 1);
  m.norm.in_scale = Eigen::VectorXd::Ones(n_derivs + 1);
  return m;
}

PdeModel PdeModel::architecture_g(std::vector<int> hidden, int kernel_width, Rng& rng) {
  if (hidden.empty()) throw ConfigError("architecture G needs at least one hidden layer");
  std::vector<Layer> layers;
  int in = 1;
  for (int h : hidden) {
    layers.push_back(Layer::conv1d(in, h, kernel_width, Activation::kRelu));
    in = h;
  }
  layers.push_back(Layer::conv1d(in, 1, 1, Activation::kLinear));
  PdeModel m;
  m.arch = Arch::kG;
  m.n_derivs = 0;
  m.net = Network(std::move(layers));
  m.net.initialize(rng);
  m.norm.in_mean = Eigen::VectorXd::Zero(1);
  m.norm.in_scale = Eigen::VectorXd::Ones(1);
  return m;
}

PdeModel PdeModel::make(Arch arch, bool phi_variable, Rng& rng, int n_derivs, int kernel_width) {
  if (arch == Arch::kF) {
    return architecture_f(n_derivs, phi_variable ? std::vector<int>{64, 64, 64} : std::vector<int>{48, 48}, rng);
  }
  return architecture_g(phi_variable ? std::vector<int>{64, 64, 64, 64} : std::vector<int>{48, 48, 48}, kernel_width, rng);
}

void PdeModel::fit_normalization(const Dataset& data) {
  std::vector<Eigen::Index> cols;
  for (std::size_t j = 0; j < data.split.size(); ++j) {
    if (data.split[j] == Split::kTrain) cols.push_back(static_cast<Eigen::Index>(j));
  }
  if (cols.empty()) throw ConfigError("normalization: no training samples");
  auto stats = [](double sum, double sq, double count, double& mean, double& scale) {
    mean = sum / count;
    const double var = std::max(0.0, sq / count - mean * mean);
    scale = var > 0.0 ? std::sqrt(var) : 1.0;
  };
  const double count = static_cast<double>(cols.size() * static_cast<std::size_t>(data.inputs.rows()));
  if (arch == Arch::kF) {
    const Eigen::Index f = data.inputs.rows();
    norm.in_mean.resize(f);
    norm.in_scale.resize(f);
    for (Eigen::Index k = 0; k < f; ++k) {
      double s = 0.0, q = 0.0;
      for (auto c : cols) {
        s += data.inputs(k, c);
        q += data.inputs(k, c) * data.inputs(k, c);
      }
      stats(s, q, static_cast<double>(cols.size()), norm.in_mean(k), norm.in_scale(k));
    }
  } else {
    double s = 0.0, q = 0.0;
    for (auto c : cols) {
      s += data.inputs.col(c).sum();
      q += data.inputs.col(c).squaredNorm();
    }
    norm.in_mean.resize(1);
    norm.in_scale.resize(1);
    stats(s, q, count, norm.in_mean(0), norm.in_scale(0));
  }
  double s = 0.0, q = 0.0;
  for (auto c : cols) {
    s += data.targets.col(c).sum();
    q += data.targets.col(c).squaredNorm();
  }
  stats(s, q, static_cast<double>(cols.size() * static_cast<std::size_t>(data.targets.rows())), norm.out_mean, norm.out_scale);
}

namespace {

// Network-space inputs for dataset columns; G columns become one row of blocks.
Eigen::MatrixXd normalized_inputs(const PdeModel& m, const Eigen::MatrixXd& raw) {
  if (m.arch == Arch::kF) {
    if (raw.rows() != m.norm.in_mean.size()) throw ConfigError("input feature count does not match the model");
    return ((raw.colwise() - m.norm.in_mean).array().colwise() / m.norm.in_scale.array()).matrix();
  }
  Eigen::MatrixXd x = (raw.array() - m.norm.in_mean(0)) / m.norm.in_scale(0);
  return Eigen::Map<const Eigen::MatrixXd>(x.data(), 1, x.size());
}

Eigen::MatrixXd normalized_targets(const PdeModel& m, const Eigen::MatrixXd& raw) {
  Eigen::MatrixXd y = (raw.array() - m.norm.out_mean) / m.norm.out_scale;
  if (m.arch == Arch::kF) return y;
  return Eigen::Map<const Eigen::MatrixXd>(y.data(), 1, y.size());
}

}  // namespace

std::vector<double> PdeModel::rhs(std::span<const double> v, double dx) const {
  const auto n = static_cast<Eigen::Index>(v.size());
  Eigen::MatrixXd x;
  if (arch == Arch::kF) {
    x = normalized_inputs(*this, derivative_features(v, dx, n_derivs));
  } else {
    x = normalized_inputs(*this, Eigen::Map<const Eigen::MatrixXd>(v.data(), n, 1));
  }
  const Eigen::MatrixXd y = net.forward(x, arch == Arch::kG ? n : 1);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = norm.out_mean + norm.out_scale * y(0, i);
  return out;
}

Eigen::MatrixXd PdeModel::predict(const Dataset& data) const {
  if (data.arch != arch) throw ConfigError("dataset architecture does not match the model");
  const auto block = arch == Arch::kG ? static_cast<Eigen::Index>(data.grid_size) : Eigen::Index{1};
  Eigen::MatrixXd y = net.forward(normalized_inputs(*this, data.inputs), block);
  y = (y.array() * norm.out_scale + norm.out_mean).matrix();
  if (arch == Arch::kF) return y;
  return Eigen::Map<const Eigen::MatrixXd>(y.data(), data.targets.rows(), data.targets.cols());
}

namespace {

const char* kind_name(LayerKind k) { return k == LayerKind::kDense ? "dense" : "conv1d"; }

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::string PdeModel::to_json() const {
  nlohmann::json j;
  j["arch"] = arch_name(arch);
  j["n_derivs"] = n_derivs;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& L : net.layers()) {
    nlohmann::json l;
    l["kind"] = kind_name(L.kind);
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(L.W.size()));
    if (L.kind == LayerKind::kDense) {
      l["shape"] = {L.out, L.in};
      for (int o = 0; o < L.out; ++o) {
        for (int i = 0; i < L.in; ++i) w.push_back(L.W(o, i));
      }
    } else {
      l["shape"] = {L.out, L.in, L.width};
      for (int o = 0; o < L.out; ++o) {
        for (int c = 0; c < L.in; ++c) {
          for (int k = 0; k < L.width; ++k) w.push_back(L.W(o, static_cast<Eigen::Index>(k) * L.in + c));
        }
      }
    }
    l["weights"] = w;
    l["bias"] = to_vec(L.b);
    l["activation"] = L.activation == Activation::kRelu ? "relu" : "linear";
    layers.push_back(l);
  }
  j["layers"] = layers;
  j["normalization"] = {{"in_mean", to_vec(norm.in_mean)},
                        {"in_scale", to_vec(norm.in_scale)},
                        {"out_mean", norm.out_mean},
                        {"out_scale", norm.out_scale}};
  return j.dump(1);
}

PdeModel PdeModel::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model JSON: ") + e.what());
  }
  try {
    PdeModel m;
    m.arch = parse_arch(j.at("arch").get<std::string>());
    m.n_derivs = j.value("n_derivs", m.arch == Arch::kF ? 2 : 0);
    std::vector<Layer> layers;
    std::size_t idx = 0;
    for (const auto& l : j.at("layers")) {
      const std::string kind = l.at("kind").get<std::string>();
      const auto shape = l.at("shape").get<std::vector<int>>();
      const auto w = l.at("weights").get<std::vector<double>>();
      const auto b = l.at("bias").get<std::vector<double>>();
      const std::string act_name = l.at("activation").get<std::string>();
      if (act_name != "relu" && act_name != "linear") throw ConfigError("layer " + std::to_string(idx) + ": unknown activation " + act_name);
      const Activation act = act_name == "relu" ? Activation::kRelu : Activation::kLinear;
      Layer L;
      if (kind == "dense") {
        if (shape.size() != 2) throw ConfigError("layer " + std::to_string(idx) + ": dense shape must be [out, in]");
        L = Layer::dense(shape[1], shape[0], act);
      } else if (kind == "conv1d") {
        if (shape.size() != 3) throw ConfigError("layer " + std::to_string(idx) + ": conv1d shape must be [out, in, width]");
        L = Layer::conv1d(shape[1], shape[0], shape[2], act);
      } else {
        throw ConfigError("layer " + std::to_string(idx) + ": unknown kind " + kind);
      }
      if (w.size() != static_cast<std::size_t>(L.W.size()) || b.size() != static_cast<std::size_t>(L.out)) {
        throw ConfigError("layer " + std::to_string(idx) + ": weight or bias length does not match shape");
      }
      std::size_t k = 0;
      for (int o = 0; o < L.out; ++o) {
        for (int c = 0; c < L.in; ++c) {
          for (int q = 0; q < L.width; ++q) L.W(o, static_cast<Eigen::Index>(q) * L.in + c) = w[k++];
        }
      }
      L.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
      layers.push_back(std::move(L));
      ++idx;
    }
    m.net = Network(std::move(layers));
    const auto& nj = j.at("normalization");
    const auto im = nj.at("in_mean").get<std::vector<double>>();
    const auto is = nj.at("in_scale").get<std::vector<double>>();
    m.norm.in_mean = Eigen::Map<const Eigen::VectorXd>(im.data(), static_cast<Eigen::Index>(im.size()));
    m.norm.in_scale = Eigen::Map<const Eigen::VectorXd>(is.data(), static_cast<Eigen::Index>(is.size()));
    m.norm.out_mean = nj.at("out_mean").get<double>();
    m.norm.out_scale = nj.at("out_scale").get<double>();
    const Eigen::Index expected_in = m.arch == Arch::kF ? m.n_derivs + 1 : 1;
    if (m.norm.in_mean.size() != expected_in || m.norm.in_scale.size() != expected_in || m.net.input_channels() != expected_in) {
      throw ConfigError("model JSON: input width does not match the architecture");
    }
    if (!m.net.all_finite()) throw ConfigError("model JSON: non-finite weights");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model JSON: ") + e.what());
  }
}

// ---- training ----

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("train: betas must lie in (0, 1)");
  if (!(eps_adam > 0.0)) throw ConfigError("train: eps_adam must be > 0");
}

namespace {

// Gradient of a batch split into a fixed number of shards, so the sum is
// reduced in the same order for any thread count.
double batch_gradient(const Network& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::Index block,
                      Gradients& grad) {
  constexpr Eigen::Index kShardCols = 128;
  const Eigen::Index blocks = x.cols() / block;
  const Eigen::Index blocks_per_shard = std::max<Eigen::Index>(1, kShardCols / block);
  const Eigen::Index shards = std::max<Eigen::Index>(1, blocks / blocks_per_shard);
  if (shards == 1) return net.loss_and_gradient(x, y, block, grad);
  std::vector<Gradients> parts(static_cast<std::size_t>(shards));
  std::vector<double> losses(static_cast<std::size_t>(shards));
  std::vector<double> weight(static_cast<std::size_t>(shards));
  parallel_for(static_cast<std::size_t>(shards), [&](std::size_t s) {
    const Eigen::Index b0 = static_cast<Eigen::Index>(s) * blocks / shards;
    const Eigen::Index b1 = static_cast<Eigen::Index>(s + 1) * blocks / shards;
    const Eigen::Index c0 = b0 * block;
    const Eigen::Index nc = (b1 - b0) * block;
    losses[s] = net.loss_and_gradient(x.middleCols(c0, nc), y.middleCols(c0, nc), block, parts[s]);
    weight[s] = static_cast<double>(nc) / static_cast<double>(x.cols());
  });
  grad = net.zero_gradients();
  double total = 0.0;
  for (std::size_t s = 0; s < parts.size(); ++s) {
    for (std::size_t l = 0; l < grad.dW.size(); ++l) {
      grad.dW[l] += weight[s] * parts[s].dW[l];
      grad.db[l] += weight[s] * parts[s].db[l];
    }
    total += weight[s] * losses[s];
  }
  return total;
}

}  // namespace

TrainHistory train(PdeModel& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.arch != model.arch) throw ConfigError("train: dataset architecture does not match the model");
  const Dataset tr = data.subset(Split::kTrain);
  const Dataset va = data.subset(Split::kVal);
  if (tr.samples() == 0 || va.samples() == 0) throw ConfigError("train: need non-empty train and val splits");
  model.fit_normalization(data);

  const Eigen::Index block = model.arch == Arch::kG ? static_cast<Eigen::Index>(data.grid_size) : 1;
  const Eigen::MatrixXd X = normalized_inputs(model, tr.inputs);
  const Eigen::MatrixXd Y = normalized_targets(model, tr.targets);
  const Eigen::MatrixXd Xv = normalized_inputs(model, va.inputs);
  const Eigen::MatrixXd Yv = normalized_targets(model, va.targets);
  const double unit = model.norm.out_scale * model.norm.out_scale;

  const Eigen::Index units = X.cols() / block;  // samples (F) or snapshots (G)
  const Eigen::Index per_batch = std::max<Eigen::Index>(1, cfg.batch_size / block);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(units));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  Adam adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_adam);

  TrainHistory hist;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_params = model.net.parameters();
  int since_best = 0;
  Eigen::MatrixXd xb, yb;
  Gradients grad;
  long long batch_index = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double sum = 0.0;
    for (Eigen::Index start = 0; start < units; start += per_batch) {
      const Eigen::Index nb = std::min(per_batch, units - start);
      xb.resize(X.rows(), nb * block);
      yb.resize(Y.rows(), nb * block);
      for (Eigen::Index k = 0; k < nb; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + k)];
        xb.middleCols(k * block, block) = X.middleCols(src * block, block);
        yb.middleCols(k * block, block) = Y.middleCols(src * block, block);
      }
      const double l = batch_gradient(model.net, xb, yb, block, grad);
      if (!std::isfinite(l)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      adam.step(model.net, grad);
      if (!model.net.all_finite()) {
        throw NumericError("train: non-finite weights after batch " + std::to_string(batch_index));
      }
      sum += l * static_cast<double>(nb);
      ++batch_index;
    }
    hist.train_mse.push_back(unit * sum / static_cast<double>(units));
    const double val = unit * model.net.loss(Xv, Yv, block);
    hist.val_mse.push_back(val);
    if (val < best) {
      best = val;
      best_params = model.net.parameters();
      hist.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      hist.stopped_early = true;
      break;
    }
  }
  model.net.set_parameters(best_params);
  return hist;
}

EvalResult evaluate(const PdeModel& model, const Dataset& data, Split s) {
  const Dataset part = data.subset(s);
  if (part.samples() == 0) throw ConfigError("evaluate: split " + split_name(s) + " is empty");
  const Eigen::MatrixXd pred = model.predict(part);
  EvalResult r;
  r.mse = (pred - part.targets).squaredNorm() / static_cast<double>(part.targets.size());
  const double ref = part.targets.squaredNorm() / static_cast<double>(part.targets.size());
  r.relative_mse = ref > 0.0 ? r.mse / ref : r.mse;
  return r;
}

// ---- rollout ----

RhsFunction burgers_rhs_oracle(double nu) {
  return [nu](std::span<const double> v, double dx, std::span<double> out) {
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double vm = v[(i + n - 1) % n];
      const double vp = v[(i + 1) % n];
      out[i] = -v[i] * (vp - vm) / (2.0 * dx) + nu * (vp - 2.0 * v[i] + vm) / (dx * dx);
    }
  };
}

RhsFunction model_rhs(const PdeModel& model) {
  return [&model](std::span<const double> v, double dx, std::span<double> out) {
    const auto r = model.rhs(v, dx);
    std::copy(r.begin(), r.end(), out.begin());
  };
}

RolloutResult rollout(const RhsFunction& rhs, const DensityField& v0, const RolloutOptions& options) {
  if (!(options.dt > 0.0)) throw ConfigError("rollout: dt must be > 0");
  if (!(options.t_end >= 0.0)) throw ConfigError("rollout: t_end must be >= 0");
  if (!(options.record_dt > 0.0)) throw ConfigError("rollout: record_dt must be > 0");
  const long long total = steps_for(options.t_end, options.dt, "rollout t_end");
  const long long every = steps_for(options.record_dt, options.dt, "rollout record_dt");
  const std::size_t n = v0.size();
  RolloutResult res;
  DensityField cur = v0;
  res.fields.push_back(cur);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  const double h = options.dt;
  for (long long s = 1; s <= total; ++s) {
    auto& v = cur.values;
    rhs(v, cur.dx, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + 0.5 * h * k1[i];
    rhs(tmp, cur.dx, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + 0.5 * h * k2[i];
    rhs(tmp, cur.dx, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + h * k3[i];
    rhs(tmp, cur.dx, k4);
    double vmax = 0.0;
    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      finite = finite && std::isfinite(v[i]);
      vmax = std::max(vmax, std::abs(v[i]));
    }
    cur.t = v0.t + static_cast<double>(s) * h;
    if (!finite || vmax > options.divergence_bound) {
      res.diverged = true;
      std::ostringstream msg;
      msg << "rollout diverged at t=" << cur.t << " (max |v| = " << vmax << ")";
      res.diagnostic = msg.str();
      break;
    }
    if (s % every == 0) res.fields.push_back(cur);
  }
  return res;
}

RolloutResult rollout(const PdeModel& model, const DensityField& v0, const RolloutOptions& options) {
  return rollout(model_rhs(model), v0, options);
}

// ---- training data ----

void IcSamplerOptions::validate() const {
  if (n_modes < 1 || max_wavenumber < 1) throw ConfigError("ic: need at least one mode and wavenumber");
  if (!(amplitude >= 0.0)) throw ConfigError("ic: amplitude must be >= 0");
  if (max_draws < 1) throw ConfigError("ic: max_draws must be >= 1");
}

std::function<double(double)> sample_initial_condition(Rng& rng, const IcSamplerOptions& options) {
  options.validate();
  constexpr int kCheck = 2048;
  for (int draw = 0; draw < options.max_draws; ++draw) {
    std::vector<double> A(static_cast<std::size_t>(options.n_modes));
    std::vector<double> l(A.size());
    std::vector<double> ph(A.size());
    for (std::size_t k = 0; k < A.size(); ++k) {
      A[k] = rng.uniform(-0.5, 0.5);
      l[k] = static_cast<double>(1 + rng.index(static_cast<std::size_t>(options.max_wavenumber)));
      ph[k] = rng.uniform(0.0, kTwoPi);
    }
    auto S = [A, l, ph](double x) {
      double s = 0.0;
      for (std::size_t k = 0; k < A.size(); ++k) s += A[k] * std::sin(l[k] * x + ph[k]);
      return s;
    };
    // Grid maximum of |S|, then golden-section refinement around every grid
    // local maximum so the rescaled amplitude is exact, not just on the grid.
    const double cell = kTwoPi / kCheck;
    std::vector<double> grid(kCheck);
    for (int i = 0; i < kCheck; ++i) grid[static_cast<std::size_t>(i)] = std::abs(S(cell * i));
    double smax = 0.0;
    for (int i = 0; i < kCheck; ++i) {
      const double here = grid[static_cast<std::size_t>(i)];
      if (here < grid[static_cast<std::size_t>((i + kCheck - 1) % kCheck)] ||
          here < grid[static_cast<std::size_t>((i + 1) % kCheck)]) {
        continue;
      }
      double lo = cell * (i - 1), hi = cell * (i + 1);
      constexpr double kGolden = 0.6180339887498949;
      for (int it = 0; it < 60; ++it) {
        const double a = hi - kGolden * (hi - lo), b = lo + kGolden * (hi - lo);
        if (std::abs(S(a)) < std::abs(S(b))) lo = a; else hi = b;
      }
      smax = std::max({smax, here, std::abs(S(0.5 * (lo + hi)))});
    }
    if (smax < 1e-12) continue;
    const double scale = options.amplitude / smax;
    const double base = options.baseline;
    auto rho = [S, scale, base](double x) { return base + scale * S(x); };
    double mn = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kCheck; ++i) mn = std::min(mn, rho(kTwoPi * (i + 0.5) / kCheck));
    if (mn >= options.min_density) return rho;
  }
  throw ConfigError("initial condition sampler: no draw with min density >= " + std::to_string(options.min_density) +
                    " within " + std::to_string(options.max_draws) + " draws");
}

Backend parse_backend(const std::string& name) {
  if (name == "full") return Backend::kFull;
  if (name == "gap_tooth") return Backend::kGapTooth;
  if (name == "fv") return Backend::kFv;
  throw ConfigError("unknown backend '" + name + "' (expected full, gap_tooth or fv)");
}

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::kFull: return "full";
    case Backend::kGapTooth: return "gap_tooth";
    case Backend::kFv: return "fv";
  }
  return "fv";
}

std::vector<Split> default_splits(int n_traj) {
  if (n_traj < 3) throw ConfigError("need at least 3 trajectories for train/val/test");
  const int n_val = std::max(1, n_traj / 6);
  const int n_test = n_val;
  std::vector<Split> s(static_cast<std::size_t>(n_traj), Split::kTrain);
  for (int k = 0; k < n_val; ++k) s[static_cast<std::size_t>(n_traj - n_test - n_val + k)] = Split::kVal;
  for (int k = 0; k < n_test; ++k) s[static_cast<std::size_t>(n_traj - n_test + k)] = Split::kTest;
  return s;
}

std::vector<Trajectory> generate_training_runs(const TrainingRunOptions& options, std::uint64_t seed) {
  if (options.n_traj < 1) throw ConfigError("generate_training_runs: n_traj must be >= 1");
  std::vector<Split> splits = options.splits;
  if (splits.empty()) splits = default_splits(options.n_traj);
  if (splits.size() != static_cast<std::size_t>(options.n_traj)) throw ConfigError("generate_training_runs: one split per trajectory");
  options.grid.validate();
  Rng master(seed);
  std::vector<Trajectory> out;
  const auto N = static_cast<std::size_t>(options.grid.N);
  for (int k = 0; k < options.n_traj; ++k) {
    Rng ic_rng = master.split(2 * static_cast<std::uint64_t>(k) + 1);
    const std::uint64_t sim_seed = master.split(2 * static_cast<std::uint64_t>(k) + 2).bits();
    const auto f = sample_initial_condition(ic_rng, options.ic);
    Trajectory tr;
    tr.split = splits[static_cast<std::size_t>(k)];
    switch (options.backend) {
      case Backend::kGapTooth: {
        DensityField rho0 = make_field(N);
        for (std::size_t i = 0; i < N; ++i) rho0.values[i] = f(options.grid.center(static_cast<int>(i)));
        GapToothOptions go;
        go.t_end = options.t_end;
        go.record_dt = options.record_dt;
        tr.snapshots = simulate_gap_tooth(rho0, options.grid, options.micro, go, sim_seed).fields;
        break;
      }
      case Backend::kFull: {
        DensityField rho0 = make_field(N);
        for (std::size_t i = 0; i < N; ++i) rho0.values[i] = f(rho0.grid_x[i]);
        FullSimulationOptions fo;
        fo.n_intervals = N;
        fo.t_end = options.t_end;
        fo.record_dt = options.record_dt;
        Rng rng(sim_seed);
        tr.snapshots = simulate_full(rho0, options.micro, fo, rng);
        break;
      }
      case Backend::kFv: {
        FvConfig fc;
        fc.n_cells = static_cast<std::size_t>(options.fv_cells);
        fc.nu = options.micro.nu;
        fc.t_end = options.t_end;
        fc.record_dt = options.record_dt;
        const DensityField like = make_field(N);
        for (const auto& fld : fv_solve(cell_averages(f, fc.n_cells), fc)) tr.snapshots.push_back(resample(fld, like));
        break;
      }
    }
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace gtpde
