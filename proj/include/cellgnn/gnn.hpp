#pragma once

// Three graph-convolution layers, mean-pool readout and two fully connected
// layers, with hand-written reverse mode, Adam and the halving schedule.
// Templated on the scalar so training can run in float while gradient checks
// run in double. Checkpoints always hold 64-bit weights.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cellgnn/cellgraph.hpp"
#include "cellgnn/dataset.hpp"
#include "cellgnn/error.hpp"
#include "cellgnn/util.hpp"

namespace cellgnn {

inline constexpr int kHidden = 128;

// How the last linear unit y becomes a prediction: y * scale, or
// exp(y) * scale.
enum class OutputHead : int { Linear = 0, Exp = 1 };

inline const char* to_string(OutputHead h) { return h == OutputHead::Linear ? "linear" : "exp"; }

inline OutputHead parse_head(std::string_view s) {
  if (s == "linear") return OutputHead::Linear;
  if (s == "exp") return OutputHead::Exp;
  config_error("unknown output head '" + std::string(s) + "'");
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Flat parameter vector, row-major blocks in the order
// W1 (in x H), W2, W3, W4 (H x H), b4 (H), w5 (H), b5 (1).
template <typename T>
struct ModelParams {
  FeatureLayout layout = FeatureLayout::DelayPower;
  int in_dim = 0;
  int hidden = kHidden;
  OutputHead head = OutputHead::Linear;
  double scale = 1.0;
  Vec<T> theta;

  static std::size_t count(int in_dim, int hidden) {
    const std::size_t h = hidden;
    return in_dim * h + 3 * h * h + 2 * h + 1;
  }

  std::size_t off_w(int layer) const {  // layer 1..4
    const std::size_t h = hidden;
    return layer == 1 ? 0 : in_dim * h + (layer - 2) * h * h;
  }
  std::size_t off_b4() const { return off_w(4) + static_cast<std::size_t>(hidden) * hidden; }
  std::size_t off_w5() const { return off_b4() + hidden; }
  std::size_t off_b5() const { return off_w5() + hidden; }

  int rows(int layer) const { return layer == 1 ? in_dim : hidden; }

  Eigen::Map<const RowMat<T>> W(int layer) const {
    return {theta.data() + off_w(layer), rows(layer), hidden};
  }
  Eigen::Map<RowMat<T>> W(int layer) { return {theta.data() + off_w(layer), rows(layer), hidden}; }
  Eigen::Map<const Vec<T>> b4() const { return {theta.data() + off_b4(), hidden}; }
  Eigen::Map<const Vec<T>> w5() const { return {theta.data() + off_w5(), hidden}; }
  T b5() const { return theta[off_b5()]; }
  T& b5() { return theta[off_b5()]; }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> p;
    p.layout = layout;
    p.in_dim = in_dim;
    p.hidden = hidden;
    p.head = head;
    p.scale = scale;
    p.theta = theta.template cast<U>();
    return p;
  }

  bool operator==(const ModelParams& o) const {
    return layout == o.layout && in_dim == o.in_dim && hidden == o.hidden && head == o.head &&
           scale == o.scale && theta.size() == o.theta.size() && theta == o.theta;
  }
};

// He normal init: N(0, sqrt(2 / fan_in)) for every weight, zero biases.
template <typename T>
ModelParams<T> init_params(FeatureLayout layout, std::uint64_t seed, int hidden = kHidden) {
  ModelParams<T> p;
  p.layout = layout;
  p.in_dim = feature_width(layout);
  p.hidden = hidden;
  p.theta = Vec<T>::Zero(ModelParams<T>::count(p.in_dim, hidden));
  std::mt19937_64 rng(derive_seed(seed, "he-init"));
  auto fill = [&](std::size_t off, std::size_t n, int fan_in) {
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
    for (std::size_t i = 0; i < n; ++i) p.theta[off + i] = static_cast<T>(d(rng));
  };
  const std::size_t h = hidden;
  fill(p.off_w(1), p.in_dim * h, p.in_dim);
  for (int l = 2; l <= 4; ++l) fill(p.off_w(l), h * h, hidden);
  fill(p.off_w5(), h, hidden);
  return p;
}

// A set of graphs stacked block-diagonally: node rows are concatenated and
// the propagation operator is kept as one CSR over the stacked rows.
template <typename T>
struct GraphBatch {
  RowMat<T> x;
  std::vector<int> row_ptr{0};
  std::vector<int> col;
  std::vector<T> val;
  std::vector<int> offsets{0};  // node offset of each graph, size B+1
  Vec<T> target;

  int num_graphs() const { return static_cast<int>(offsets.size()) - 1; }
  int num_nodes() const { return offsets.back(); }
};

// Per-graph data prepared once (features cast, operator built).
template <typename T>
struct PreparedGraph {
  RowMat<T> x;
  Propagation prop;
  double target = 0.0;
};

template <typename T>
PreparedGraph<T> prepare(const CellGraph& g) {
  PreparedGraph<T> p;
  p.x.resize(g.num_nodes(), g.width());
  for (int i = 0; i < g.num_nodes(); ++i)
    for (int s = 0; s < g.width(); ++s) p.x(i, s) = static_cast<T>(g.feature(i, s));
  p.prop = adjacency(g);
  p.target = g.target;
  return p;
}

template <typename T>
GraphBatch<T> make_batch(const std::vector<PreparedGraph<T>>& graphs,
                         const std::vector<std::size_t>& idx, std::size_t begin,
                         std::size_t end) {
  GraphBatch<T> b;
  int nodes = 0, nnz = 0;
  for (std::size_t k = begin; k < end; ++k) {
    nodes += static_cast<int>(graphs[idx[k]].x.rows());
    nnz += static_cast<int>(graphs[idx[k]].prop.col.size());
  }
  const int width = graphs[idx[begin]].x.cols();
  b.x.resize(nodes, width);
  b.row_ptr.reserve(nodes + 1);
  b.col.reserve(nnz);
  b.val.reserve(nnz);
  b.target.resize(static_cast<Eigen::Index>(end - begin));
  int base = 0;
  for (std::size_t k = begin; k < end; ++k) {
    const auto& g = graphs[idx[k]];
    if (g.x.cols() != width) data_error("batch mixes feature layouts");
    const int n = static_cast<int>(g.x.rows());
    b.x.middleRows(base, n) = g.x;
    for (int i = 0; i < n; ++i) {
      for (int e = g.prop.row_ptr[i]; e < g.prop.row_ptr[i + 1]; ++e) {
        b.col.push_back(base + g.prop.col[e]);
        b.val.push_back(static_cast<T>(g.prop.val[e]));
      }
      b.row_ptr.push_back(static_cast<int>(b.col.size()));
    }
    base += n;
    b.offsets.push_back(base);
    b.target[static_cast<Eigen::Index>(k - begin)] = static_cast<T>(g.target);
  }
  return b;
}

template <typename T>
GraphBatch<T> make_batch(const std::vector<PreparedGraph<T>>& graphs) {
  std::vector<std::size_t> idx(graphs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(graphs, idx, 0, idx.size());
}

namespace detail {

// out = A * in over the stacked CSR; with `relu` the input is read as
// max(in, 0).
template <typename T>
void propagate(const GraphBatch<T>& b, const RowMat<T>& in, RowMat<T>& out, bool relu = false) {
  const Eigen::Index w = in.cols();
  out.resize(in.rows(), w);
  for (int i = 0; i < b.num_nodes(); ++i) {
    T* dst = out.data() + i * w;
    for (Eigen::Index k = 0; k < w; ++k) dst[k] = T(0);
    for (int e = b.row_ptr[i]; e < b.row_ptr[i + 1]; ++e) {
      const T v = b.val[e];
      const T* src = in.data() + static_cast<Eigen::Index>(b.col[e]) * w;
      if (relu)
        for (Eigen::Index k = 0; k < w; ++k) dst[k] += v * std::max(src[k], T(0));
      else
        for (Eigen::Index k = 0; k < w; ++k) dst[k] += v * src[k];
    }
  }
}

// out = A^T * in.
template <typename T>
void propagate_transpose(const GraphBatch<T>& b, const RowMat<T>& in, RowMat<T>& out) {
  const Eigen::Index w = in.cols();
  out.setZero(in.rows(), w);
  for (int i = 0; i < b.num_nodes(); ++i) {
    const T* src = in.data() + i * w;
    for (int e = b.row_ptr[i]; e < b.row_ptr[i + 1]; ++e) {
      const T v = b.val[e];
      T* dst = out.data() + static_cast<Eigen::Index>(b.col[e]) * w;
      for (Eigen::Index k = 0; k < w; ++k) dst[k] += v * src[k];
    }
  }
}

}  // namespace detail

template <typename T>
struct ForwardCache {
  RowMat<T> p[3];  // A * H_{l-1}
  RowMat<T> z[3];  // pre-activation; H_l = max(z, 0)
  RowMat<T> g;  // pooled, B x H
  RowMat<T> a;  // FC1 pre-activation
  RowMat<T> r;
  Vec<T> y;     // last linear unit
  Vec<T> pred;
  // Reverse-mode scratch, kept to avoid reallocating per step.
  RowMat<T> dh, dp;
};

template <typename T>
void forward(const ModelParams<T>& m, const GraphBatch<T>& b, ForwardCache<T>& c) {
  if (b.x.cols() != m.in_dim)
    data_error("forward: feature width " + std::to_string(b.x.cols()) + " does not match model " +
               std::to_string(m.in_dim));
  for (int l = 0; l < 3; ++l) {
    detail::propagate(b, l == 0 ? b.x : c.z[l - 1], c.p[l], l > 0);
    c.z[l].noalias() = c.p[l] * m.W(l + 1);
  }
  const int B = b.num_graphs();
  c.g.resize(B, m.hidden);
  for (int k = 0; k < B; ++k) {
    const int n0 = b.offsets[k], n = b.offsets[k + 1] - n0;
    c.g.row(k) = c.z[2].middleRows(n0, n).cwiseMax(T(0)).colwise().sum() / static_cast<T>(n);
  }
  c.a.noalias() = c.g * m.W(4);
  c.a.rowwise() += m.b4().transpose();
  c.r = c.a.cwiseMax(T(0));
  c.y.noalias() = c.r * m.w5();
  c.y.array() += m.b5();
  const T s = static_cast<T>(m.scale);
  c.pred = m.head == OutputHead::Linear ? Vec<T>(c.y * s) : Vec<T>(c.y.array().exp() * s);
}

template <typename T>
Vec<T> forward(const ModelParams<T>& m, const GraphBatch<T>& b) {
  ForwardCache<T> c;
  forward(m, b, c);
  return c.pred;
}

// Mean absolute percentage error (in percent) and its gradient w.r.t. pred.
template <typename T>
T mape_loss(const Vec<T>& pred, const Vec<T>& target, Vec<T>* grad = nullptr) {
  const auto n = target.size();
  if (n == 0 || pred.size() != n) config_error("mape_loss: size mismatch or empty batch");
  T loss = 0;
  if (grad) grad->resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(target[i] > 0)) data_error("mape_loss: target must be positive");
    const T d = pred[i] - target[i];
    loss += std::abs(d) / target[i];
    if (grad) {
      const T sign = d > 0 ? T(1) : d < 0 ? T(-1) : T(0);
      (*grad)[i] = T(100) * sign / (target[i] * static_cast<T>(n));
    }
  }
  return T(100) * loss / static_cast<T>(n);
}

// Reverse mode of forward() given dL/dpred. Returns gradient in theta layout.
template <typename T>
Vec<T> backward(const ModelParams<T>& m, const GraphBatch<T>& b, ForwardCache<T>& c,
                const Vec<T>& dpred) {
  Vec<T> grad = Vec<T>::Zero(m.theta.size());
  const T s = static_cast<T>(m.scale);
  Vec<T> dy = m.head == OutputHead::Linear ? Vec<T>(dpred * s)
                                           : Vec<T>(dpred.cwiseProduct(c.pred));
  Eigen::Map<Vec<T>>(grad.data() + m.off_w5(), m.hidden).noalias() = c.r.transpose() * dy;
  grad[m.off_b5()] = dy.sum();
  RowMat<T> da = dy * m.w5().transpose();
  da = (c.a.array() > T(0)).select(da, T(0));
  Eigen::Map<RowMat<T>>(grad.data() + m.off_w(4), m.hidden, m.hidden).noalias() =
      c.g.transpose() * da;
  Eigen::Map<Vec<T>>(grad.data() + m.off_b4(), m.hidden) = da.colwise().sum().transpose();
  RowMat<T> dg = da * m.W(4).transpose();

  auto& dh = c.dh;
  auto& dp = c.dp;
  dh.resize(b.num_nodes(), m.hidden);
  for (int k = 0; k < b.num_graphs(); ++k) {
    const int n0 = b.offsets[k], n = b.offsets[k + 1] - n0;
    dh.middleRows(n0, n).rowwise() = dg.row(k) / static_cast<T>(n);
  }
  for (int l = 2; l >= 0; --l) {
    // dh becomes dZ in place.
    const T* z = c.z[l].data();
    T* d = dh.data();
    for (Eigen::Index k = 0; k < dh.size(); ++k) d[k] = z[k] > T(0) ? d[k] : T(0);
    Eigen::Map<RowMat<T>>(grad.data() + m.off_w(l + 1), m.rows(l + 1), m.hidden).noalias() =
        c.p[l].transpose() * dh;
    if (l == 0) break;
    dp.noalias() = dh * m.W(l + 1).transpose();
    detail::propagate_transpose(b, dp, dh);
  }
  return grad;
}

struct TrainConfig {
  int batch_size = 512;
  int epochs = 5000;
  double lr0 = 1e-4;
  int lr_halving_period = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  int valid_interval = 10;
  OutputHead head = OutputHead::Linear;
  // false keeps predictions in raw target units; true fixes the head's
  // multiplier to the mean training target.
  bool scale_by_mean_target = false;

  void validate() const {
    if (batch_size <= 0 || epochs <= 0 || lr0 < 0 || lr_halving_period <= 0 || valid_interval <= 0)
      config_error("train config: batch_size, epochs, lr_halving_period, valid_interval must be > 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0))
      config_error("train config: bad Adam constants");
  }
};

// Learning rate for a 1-based epoch.
inline double learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.lr0 * std::pow(0.5, (epoch - 1) / cfg.lr_halving_period);
}

template <typename T>
struct AdamState {
  Vec<T> m;
  Vec<T> v;
  std::uint64_t step = 0;
};

template <typename T>
void adam_step(Vec<T>& theta, const Vec<T>& grad, AdamState<T>& st, double lr,
               const TrainConfig& cfg) {
  if (st.m.size() != theta.size()) {
    st.m = Vec<T>::Zero(theta.size());
    st.v = Vec<T>::Zero(theta.size());
  }
  ++st.step;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  st.m = b1 * st.m + (T(1) - b1) * grad;
  st.v = b2 * st.v + (T(1) - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  const T step = static_cast<T>(lr / c1);
  const T root_c2 = static_cast<T>(std::sqrt(c2));
  const T eps = static_cast<T>(cfg.eps);
  theta.array() -= step * st.m.array() / ((st.v.array().sqrt() / root_c2) + eps);
}

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_mape = 0.0;
  std::optional<double> valid_mape;
};

inline std::string log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,lr,train_mape,valid_mape\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,", e.epoch, e.lr, e.train_mape);
    out += buf;
    if (e.valid_mape) {
      std::snprintf(buf, sizeof buf, "%.9g", *e.valid_mape);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

// Everything needed to continue a run exactly where it stopped.
template <typename T>
struct TrainState {
  ModelParams<T> params;
  ModelParams<T> best;
  double best_valid = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  AdamState<T> adam;
  int epoch = 0;  // completed epochs
  std::vector<EpochLog> log;
};

// Mean MAPE over a prepared set, evaluated in chunks.
template <typename T>
double evaluate_mape(const ModelParams<T>& m, const std::vector<PreparedGraph<T>>& set,
                     int chunk = 512) {
  std::vector<std::size_t> idx(set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  double sum = 0.0;
  ForwardCache<T> c;
  for (std::size_t b = 0; b < set.size(); b += chunk) {
    const std::size_t e = std::min(set.size(), b + chunk);
    auto batch = make_batch(set, idx, b, e);
    forward(m, batch, c);
    for (Eigen::Index i = 0; i < c.pred.size(); ++i)
      sum += std::abs(static_cast<double>(c.pred[i]) - static_cast<double>(batch.target[i])) /
             static_cast<double>(batch.target[i]);
  }
  return 100.0 * sum / static_cast<double>(set.size());
}

template <typename T>
TrainState<T> start_training(FeatureLayout layout, const std::vector<PreparedGraph<T>>& train,
                             const TrainConfig& cfg) {
  TrainState<T> st;
  st.params = init_params<T>(layout, cfg.seed);
  st.params.head = cfg.head;
  if (cfg.scale_by_mean_target) {
    // Arithmetic mean for the linear head, geometric mean for the exp head.
    double mean = 0.0;
    for (const auto& g : train) mean += cfg.head == OutputHead::Exp ? std::log(g.target) : g.target;
    mean /= static_cast<double>(train.size());
    st.params.scale = cfg.head == OutputHead::Exp ? std::exp(mean) : mean;
  }
  st.best = st.params;
  return st;
}

// Runs epochs st.epoch+1 .. cfg.epochs. Shuffling is seeded per epoch so a
// resumed run matches an uninterrupted one. `on_epoch` may request a stop by
// returning false.
template <typename T>
void continue_training(TrainState<T>& st, const std::vector<PreparedGraph<T>>& train,
                       const std::vector<PreparedGraph<T>>& valid, const TrainConfig& cfg,
                       const std::function<bool(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (train.empty() || valid.empty()) config_error("train: empty training or validation set");
  std::vector<std::size_t> idx(train.size());
  ForwardCache<T> cache;
  Vec<T> dpred;
  for (int epoch = st.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(derive_seed(cfg.seed, "shuffle/" + std::to_string(epoch)));
    std::shuffle(idx.begin(), idx.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < idx.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(idx.size(), b + static_cast<std::size_t>(cfg.batch_size));
      auto batch = make_batch(train, idx, b, e);
      forward(st.params, batch, cache);
      const double loss = static_cast<double>(mape_loss(cache.pred, batch.target, &dpred));
      if (!std::isfinite(loss))
        numeric_error("training diverged at epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(e - b);
      auto grad = backward(st.params, batch, cache, dpred);
      adam_step(st.params.theta, grad, st.adam, lr, cfg);
    }
    if (!st.params.theta.allFinite())
      numeric_error("training diverged at epoch " + std::to_string(epoch) + " (non-finite weights)");
    EpochLog entry{epoch, lr, loss_sum / static_cast<double>(idx.size()), std::nullopt};
    if (epoch % cfg.valid_interval == 0 || epoch == cfg.epochs) {
      const double v = evaluate_mape(st.params, valid);
      entry.valid_mape = v;
      if (v < st.best_valid) {
        st.best_valid = v;
        st.best_epoch = epoch;
        st.best = st.params;
      }
    }
    st.epoch = epoch;
    st.log.push_back(entry);
    if (on_epoch && !on_epoch(entry)) break;
  }
}

template <typename T>
TrainState<T> train(FeatureLayout layout, const std::vector<PreparedGraph<T>>& train_set,
                    const std::vector<PreparedGraph<T>>& valid_set, const TrainConfig& cfg,
                    const std::function<bool(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty() || valid_set.empty())
    config_error("train: empty training or validation set");
  auto st = start_training(layout, train_set, cfg);
  continue_training(st, train_set, valid_set, cfg, on_epoch);
  return st;
}

// Single-graph prediction on already-normalized features.
template <typename T>
double predict_one(const ModelParams<T>& m, const CellGraph& g) {
  std::vector<PreparedGraph<T>> one{prepare<T>(g)};
  return static_cast<double>(forward(m, make_batch(one))[0]);
}

// Normalizes then evaluates each graph on its own, so every result is
// independent of what else is in the batch.
template <typename T>
std::vector<double> predict_batch(const ModelParams<T>& m, const NormalizationSpec& spec,
                                  const std::vector<CellGraph>& graphs, int jobs = 1) {
  for (const auto& g : graphs)
    if (g.layout != m.layout || g.layout != spec.layout)
      data_error("predict_batch: layout mismatch for " + g.cell);
  std::vector<double> out(graphs.size());
  const std::size_t chunk = 256;
  const std::size_t n_chunks = (graphs.size() + chunk - 1) / chunk;
  parallel_for(n_chunks, jobs, [&](std::size_t ci) {
    for (std::size_t i = ci * chunk; i < std::min(graphs.size(), (ci + 1) * chunk); ++i)
      out[i] = predict_one(m, apply(spec, graphs[i]));
  });
  return out;
}

// Checkpoint: "CGNN" u32 version u32 layout u32 in_dim u32 hidden u32 head
// f64 scale u64 n f64[n] theta, normalization (u32 width, f64 min[], f64
// max[]), u8 has_state; state = u32 epoch u64 step f64 best_valid u32
// best_epoch f64[n] best f64[n] m f64[n] v.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams<double> params;
  NormalizationSpec norm;
  std::optional<TrainState<double>> state;
};

template <typename T>
std::string serialize_checkpoint(const ModelParams<T>& params, const NormalizationSpec& norm,
                                 const TrainState<T>* state = nullptr) {
  std::string out = "CGNN";
  binio::put<std::uint32_t>(out, kCheckpointVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.layout));
  binio::put<std::uint32_t>(out, params.in_dim);
  binio::put<std::uint32_t>(out, params.hidden);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.head));
  binio::put<double>(out, params.scale);
  auto put_vec = [&](const Vec<T>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) binio::put<double>(out, static_cast<double>(v[i]));
  };
  binio::put<std::uint64_t>(out, params.theta.size());
  put_vec(params.theta);
  binio::put<std::uint32_t>(out, norm.min.size());
  for (double x : norm.min) binio::put<double>(out, x);
  for (double x : norm.max) binio::put<double>(out, x);
  binio::put<std::uint8_t>(out, state ? 1 : 0);
  if (state) {
    binio::put<std::uint32_t>(out, state->epoch);
    binio::put<std::uint64_t>(out, state->adam.step);
    binio::put<double>(out, state->best_valid);
    binio::put<std::uint32_t>(out, state->best_epoch);
    put_vec(state->best.theta);
    const auto n = params.theta.size();
    put_vec(state->adam.m.size() == n ? state->adam.m : Vec<T>::Zero(n));
    put_vec(state->adam.v.size() == n ? state->adam.v : Vec<T>::Zero(n));
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  binio::Reader r(bytes, "checkpoint");
  if (r.bytes(4) != "CGNN") data_error("checkpoint: bad magic");
  if (r.get<std::uint32_t>() != kCheckpointVersion) data_error("checkpoint: unsupported version");
  Checkpoint c;
  auto& p = c.params;
  const auto layout = r.get<std::uint32_t>();
  if (layout > 2) data_error("checkpoint: bad layout id");
  p.layout = static_cast<FeatureLayout>(layout);
  p.in_dim = static_cast<int>(r.get<std::uint32_t>());
  p.hidden = static_cast<int>(r.get<std::uint32_t>());
  if (p.in_dim != feature_width(p.layout) || p.hidden <= 0)
    data_error("checkpoint: layer dimensions do not match layout");
  const auto head = r.get<std::uint32_t>();
  if (head > 1) data_error("checkpoint: bad output head");
  p.head = static_cast<OutputHead>(head);
  p.scale = r.get<double>();
  const auto n = r.get<std::uint64_t>();
  if (n != ModelParams<double>::count(p.in_dim, p.hidden))
    data_error("checkpoint: parameter count mismatch");
  auto get_vec = [&] {
    Vec<double> v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = r.get<double>();
    return v;
  };
  p.theta = get_vec();
  const auto w = r.get<std::uint32_t>();
  if (static_cast<int>(w) != p.in_dim) data_error("checkpoint: normalization width mismatch");
  c.norm.layout = p.layout;
  c.norm.min.resize(w);
  c.norm.max.resize(w);
  for (auto& x : c.norm.min) x = r.get<double>();
  for (auto& x : c.norm.max) x = r.get<double>();
  if (r.get<std::uint8_t>()) {
    TrainState<double> st;
    st.params = p;
    st.epoch = static_cast<int>(r.get<std::uint32_t>());
    st.adam.step = r.get<std::uint64_t>();
    st.best_valid = r.get<double>();
    st.best_epoch = static_cast<int>(r.get<std::uint32_t>());
    st.best = p;
    st.best.theta = get_vec();
    st.adam.m = get_vec();
    st.adam.v = get_vec();
    c.state = std::move(st);
  }
  if (!r.done()) data_error("checkpoint: trailing bytes");
  if (!p.theta.allFinite()) data_error("checkpoint: non-finite weights");
  return c;
}

template <typename U>
TrainState<U> cast_state(const TrainState<double>& s) {
  TrainState<U> t;
  t.params = s.params.template cast<U>();
  t.best = s.best.template cast<U>();
  t.best_valid = s.best_valid;
  t.best_epoch = s.best_epoch;
  t.adam.m = s.adam.m.template cast<U>();
  t.adam.v = s.adam.v.template cast<U>();
  t.adam.step = s.adam.step;
  t.epoch = s.epoch;
  return t;
}

}  // namespace cellgnn
