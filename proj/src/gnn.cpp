#include "mpgnn/gnn.hpp"

#include <cmath>

#include "mpgnn/errors.hpp"
#include "mpgnn/rng.hpp"

namespace mpgnn {

namespace {

// Std aggregation is sqrt(var + eps) - sqrt(eps): finite derivative at var = 0
// and exactly zero for a single incoming message.
constexpr double kStdEpsilon = 1e-8;

}  // namespace

std::string GnnArch::fingerprint() const {
  return "gnn/v1;layers=" + std::to_string(kGnnLayerCount) + ";k=" + std::to_string(k) +
         ";d_embed=" + std::to_string(d_embed) + ";attention_hidden=" +
         std::to_string(attention_hidden) + ";update_hidden=" + std::to_string(update_hidden);
}

MessageGraph::MessageGraph(const ConflictGraph& g) : node_count(g.node_count()) {
  in_offsets.assign(node_count + 1, 0);
  for (int v = 0; v < node_count; ++v) in_offsets[v + 1] = in_offsets[v] + g.degree(v);
  src.reserve(2 * g.edge_count());
  dst.reserve(2 * g.edge_count());
  in_edges.reserve(2 * g.edge_count());
  // edge id = position in (dst, src) order, so in_edges is the identity permutation
  for (int v = 0; v < node_count; ++v) {
    for (int u : g.neighbors(v)) {
      in_edges.push_back(static_cast<int>(src.size()));
      src.push_back(u);
      dst.push_back(v);
    }
  }
}

GnnModel::GnnModel(GnnArch arch, std::uint64_t seed) : arch_(arch) {
  if (arch_.k < 1 || arch_.d_embed < 1 || arch_.attention_hidden < 1 || arch_.update_hidden < 1)
    throw InvalidParameter("GNN widths must be positive");
  const int k = arch_.k;
  const int d = arch_.d_embed;
  for (int l = 0; l < kGnnLayerCount; ++l) {
    const std::string p = "layer" + std::to_string(l);
    layers_[l].attention =
        Mlp(params_, p + ".attention", {2 * k, arch_.attention_hidden, 1}, Activation::Sigmoid);
    layers_[l].embed =
        Mlp(params_, p + ".embed", {d + 4 * k, arch_.update_hidden, d}, Activation::None);
    layers_[l].color =
        Mlp(params_, p + ".color", {k + d, arch_.update_hidden, k}, Activation::Softmax);
  }
  params_.init(seed);
}

void GnnModel::check_state(const MessageGraph& mg, const NodeState& s) const {
  if (s.f1.rows() != mg.node_count || s.f1.cols() != arch_.k)
    throw ContractViolation("f1 must be node_count x k (" + std::to_string(mg.node_count) + "x" +
                            std::to_string(arch_.k) + "), got " + std::to_string(s.f1.rows()) +
                            "x" + std::to_string(s.f1.cols()));
  if (s.f2.rows() != mg.node_count || s.f2.cols() != arch_.d_embed)
    throw ContractViolation("f2 must be node_count x d_embed");
}

NodeState GnnModel::layer_forward(std::size_t layer, const MessageGraph& mg, const NodeState& in,
                                  LayerCache* cache) const {
  check_state(mg, in);
  const auto& L = layers_.at(layer);
  const int n = mg.node_count;
  const int k = arch_.k;
  const int d = arch_.d_embed;
  const auto m = static_cast<Eigen::Index>(mg.message_count());

  // 1. messages f1[src] - f1[dst], scaled by attention over concat(f1[src], f1[dst]).
  // The first attention layer is split into per-node projections of the source
  // and destination halves, so each message costs one add per hidden unit.
  const auto& w1 = params_[L.attention.weight_index(0)].value;
  const auto& b1 = params_[L.attention.bias_index(0)].value;
  const auto& w2 = params_[L.attention.weight_index(1)].value;
  const double b2 = params_[L.attention.bias_index(1)].value(0, 0);
  const Eigen::Index hidden = w1.cols();
  const Matrix proj_src = in.f1 * w1.topRows(k);
  const Matrix proj_dst = (in.f1 * w1.bottomRows(k)).rowwise() + b1.row(0);

  Matrix diff(m, k);
  Matrix scores(m, 1);
  Matrix att_pre;
  if (cache) att_pre.resize(m, hidden);
  const Eigen::Map<const Eigen::ArrayXd> w2_col(w2.data(), hidden);
  Eigen::ArrayXd a(hidden);
  for (Eigen::Index e = 0; e < m; ++e) {
    const int s = mg.src[e];
    const int t = mg.dst[e];
    diff.row(e) = in.f1.row(s) - in.f1.row(t);
    const Eigen::Map<const Eigen::ArrayXd> ps(proj_src.row(s).data(), hidden);
    const Eigen::Map<const Eigen::ArrayXd> pt(proj_dst.row(t).data(), hidden);
    a = ps + pt;
    if (cache) att_pre.row(e) = a.matrix().transpose();
    const double z = b2 + ((a.max(0.0) + kLeakySlope * a.min(0.0)) * w2_col).sum();
    scores(e, 0) = 1.0 / (1.0 + std::exp(-z));
  }
  Matrix messages = (diff.array().colwise() * scores.col(0).array()).matrix();

  // 2. per-node max | min | mean | std over incoming messages
  Matrix h(n, d + 4 * k);
  h.leftCols(d) = in.f2;
  h.rightCols(4 * k).setZero();
  std::vector<int> arg_max(static_cast<std::size_t>(n) * k, -1);
  std::vector<int> arg_min(static_cast<std::size_t>(n) * k, -1);
  Matrix mean = Matrix::Zero(n, k);
  Matrix var = Matrix::Zero(n, k);
  std::vector<double> sum(static_cast<std::size_t>(k));
  std::vector<double> sq(static_cast<std::size_t>(k));
  for (int v = 0; v < n; ++v) {
    const int begin = mg.in_offsets[v];
    const int end = mg.in_offsets[v + 1];
    if (begin == end) continue;
    const double count = end - begin;
    int* imax = &arg_max[static_cast<std::size_t>(v) * k];
    int* imin = &arg_min[static_cast<std::size_t>(v) * k];
    const double* first = messages.row(mg.in_edges[begin]).data();
    for (int c = 0; c < k; ++c) {
      imax[c] = imin[c] = mg.in_edges[begin];
      sum[c] = first[c];
      sq[c] = 0.0;
    }
    for (int i = begin + 1; i < end; ++i) {
      const int e = mg.in_edges[i];
      const double* x = messages.row(e).data();
      for (int c = 0; c < k; ++c) {
        if (x[c] > messages(imax[c], c)) imax[c] = e;
        if (x[c] < messages(imin[c], c)) imin[c] = e;
        sum[c] += x[c];
      }
    }
    for (int c = 0; c < k; ++c) sum[c] /= count;
    for (int i = begin; i < end; ++i) {
      const double* x = messages.row(mg.in_edges[i]).data();
      for (int c = 0; c < k; ++c) {
        const double dx = x[c] - sum[c];
        sq[c] += dx * dx;
      }
    }
    for (int c = 0; c < k; ++c) {
      const double variance = sq[c] / count;
      mean(v, c) = sum[c];
      var(v, c) = variance;
      h(v, d + c) = messages(imax[c], c);
      h(v, d + k + c) = messages(imin[c], c);
      h(v, d + 2 * k + c) = sum[c];
      h(v, d + 3 * k + c) = std::sqrt(variance + kStdEpsilon) - std::sqrt(kStdEpsilon);
    }
  }

  // 3. f2' = MLP(f2, agg);  4. f1' = softmax MLP(f1, f2')
  NodeState out;
  out.f2 = cache ? L.embed.forward(params_, h, cache->embed) : L.embed.forward(params_, h);
  Matrix g(n, k + d);
  g.leftCols(k) = in.f1;
  g.rightCols(d) = out.f2;
  out.f1 = cache ? L.color.forward(params_, g, cache->color) : L.color.forward(params_, g);

  if (cache) {
    cache->attention.pre = {std::move(att_pre)};
    cache->attention.recorded = true;
    cache->diff = std::move(diff);
    cache->scores = std::move(scores);
    cache->messages = std::move(messages);
    cache->arg_max = std::move(arg_max);
    cache->arg_min = std::move(arg_min);
    cache->mean = std::move(mean);
    cache->var = std::move(var);
  }
  return out;
}

std::pair<Matrix, Matrix> GnnModel::layer_backward(std::size_t layer, const MessageGraph& mg,
                                                   const NodeState& in, const LayerCache& cache,
                                                   const Matrix& d_f1_out, const Matrix& d_f2_out) {
  const auto& L = layers_.at(layer);
  const int n = mg.node_count;
  const int k = arch_.k;
  const int d = arch_.d_embed;
  const auto m = static_cast<Eigen::Index>(mg.message_count());

  const Matrix d_g = L.color.backward(params_, cache.color, d_f1_out);
  Matrix d_f1_in = d_g.leftCols(k);
  Matrix d_f2_new = d_g.rightCols(d);
  if (d_f2_out.size() != 0) d_f2_new += d_f2_out;

  const Matrix d_h = L.embed.backward(params_, cache.embed, d_f2_new);
  Matrix d_f2_in = d_h.leftCols(d);

  Matrix d_msg = Matrix::Zero(m, k);
  for (int v = 0; v < n; ++v) {
    const int begin = mg.in_offsets[v];
    const int end = mg.in_offsets[v + 1];
    if (begin == end) continue;
    const double count = end - begin;
    for (int c = 0; c < k; ++c) {
      const std::size_t slot = static_cast<std::size_t>(v) * k + c;
      d_msg(cache.arg_max[slot], c) += d_h(v, d + c);
      d_msg(cache.arg_min[slot], c) += d_h(v, d + k + c);
      const double d_mean = d_h(v, d + 2 * k + c) / count;
      const double d_std = d_h(v, d + 3 * k + c);
      const double std_scale = d_std / (count * std::sqrt(cache.var(v, c) + kStdEpsilon));
      const double mu = cache.mean(v, c);
      for (int i = begin; i < end; ++i) {
        const int e = mg.in_edges[i];
        d_msg(e, c) += d_mean + std_scale * (cache.messages(e, c) - mu);
      }
    }
  }

  // attention backward through the split first layer
  const Matrix d_scores = (d_msg.array() * cache.diff.array()).rowwise().sum().matrix();
  const Matrix d_diff = (d_msg.array().colwise() * cache.scores.col(0).array()).matrix();
  auto& w1 = params_[L.attention.weight_index(0)];
  auto& b1 = params_[L.attention.bias_index(0)];
  auto& w2 = params_[L.attention.weight_index(1)];
  auto& b2 = params_[L.attention.bias_index(1)];
  const Matrix& att_pre = cache.attention.pre.at(0);
  const Eigen::Index hidden = att_pre.cols();
  Matrix scatter_src = Matrix::Zero(n, hidden);
  Matrix scatter_dst = Matrix::Zero(n, hidden);
  Matrix d_pre(1, hidden);
  double d_b2 = 0.0;
  for (Eigen::Index e = 0; e < m; ++e) {
    const double s = cache.scores(e, 0);
    const double dz = d_scores(e, 0) * s * (1.0 - s);
    d_b2 += dz;
    for (Eigen::Index j = 0; j < hidden; ++j) {
      const double a = att_pre(e, j);
      w2.grad(j, 0) += (a > 0.0 ? a : kLeakySlope * a) * dz;
      d_pre(0, j) = (a > 0.0 ? 1.0 : kLeakySlope) * dz * w2.value(j, 0);
    }
    scatter_src.row(mg.src[e]) += d_pre;
    scatter_dst.row(mg.dst[e]) += d_pre;
  }
  b2.grad(0, 0) += d_b2;
  const Matrix& f1 = in.f1;
  w1.grad.topRows(k) += f1.transpose() * scatter_src;
  w1.grad.bottomRows(k) += f1.transpose() * scatter_dst;
  b1.grad.row(0) += scatter_dst.colwise().sum();
  d_f1_in += scatter_src * w1.value.topRows(k).transpose() +
             scatter_dst * w1.value.bottomRows(k).transpose();
  for (Eigen::Index e = 0; e < m; ++e) {
    d_f1_in.row(mg.src[e]) += d_diff.row(e);
    d_f1_in.row(mg.dst[e]) -= d_diff.row(e);
  }
  return {std::move(d_f1_in), std::move(d_f2_in)};
}

Matrix GnnModel::forward(const MessageGraph& mg, const Matrix& f1_init, ForwardTape* tape) const {
  NodeState state{f1_init, Matrix::Zero(mg.node_count, arch_.d_embed)};
  if (tape) {
    tape->inputs.clear();
    tape->layers.assign(kGnnLayerCount, LayerCache{});
    tape->graph = &mg;
    tape->recorded = false;
  }
  for (std::size_t l = 0; l < kGnnLayerCount; ++l) {
    if (tape) tape->inputs.push_back(state);
    state = layer_forward(l, mg, state, tape ? &tape->layers[l] : nullptr);
  }
  if (tape) tape->recorded = true;
  return std::move(state.f1);
}

Matrix GnnModel::forward(const ConflictGraph& g, const Matrix& f1_init) const {
  const MessageGraph mg(g);
  return forward(mg, f1_init);
}

Matrix GnnModel::backward(const ForwardTape& tape, const Matrix& d_f1_out) {
  if (!tape.recorded || tape.graph == nullptr)
    throw StateError("backward called before a recorded forward pass");
  const auto& mg = *tape.graph;
  if (d_f1_out.rows() != mg.node_count || d_f1_out.cols() != arch_.k)
    throw ContractViolation("output gradient must be node_count x k");
  Matrix d_f1 = d_f1_out;
  Matrix d_f2;  // no gradient flows into the last layer's f2 output
  for (std::size_t l = kGnnLayerCount; l-- > 0;) {
    auto [g1, g2] = layer_backward(l, mg, tape.inputs[l], tape.layers[l], d_f1, d_f2);
    d_f1 = std::move(g1);
    d_f2 = std::move(g2);
  }
  return d_f1;
}

SoftAssignment model_forward(const GnnModel& m, const ConflictGraph& g,
                             const SoftAssignment& f1_init) {
  return SoftAssignment(m.forward(g, f1_init.probs()));
}

void clamp_anchors(const ConflictGraph& g, Matrix& f1) {
  for (const auto& [v, color] : g.anchors()) {
    f1.row(v).setZero();
    f1(v, color) = 1.0;
  }
}

Matrix random_initial_f1(const ConflictGraph& g, int k, std::uint64_t seed, double init_noise) {
  if (init_noise < 0.0 || init_noise > 1.0) throw InvalidParameter("init_noise must be in [0, 1]");
  Rng rng(seed);
  Rng noise_rng(derive_seed(seed, "init-noise"));
  Matrix f1 = Matrix::Zero(g.node_count(), k);
  for (int v = 0; v < g.node_count(); ++v) {
    const auto c = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(k)));
    f1(v, c) = 1.0;
    if (init_noise > 0.0) {
      // uniform point on the simplex via normalized exponentials
      RowVector r(k);
      for (int j = 0; j < k; ++j) r(j) = -std::log1p(-noise_rng.uniform01());
      r /= r.sum();
      f1.row(v) = (1.0 - init_noise) * f1.row(v) + init_noise * r;
    }
  }
  clamp_anchors(g, f1);
  return f1;
}

SoftAssignment iterative_inference(const GnnModel& m, const ConflictGraph& g,
                                   const InferenceConfig& cfg) {
  if (cfg.forward_passes < 1) throw InvalidParameter("forward_passes must be >= 1");
  if (g.k() != m.k())
    throw ContractViolation("model trained for k=" + std::to_string(m.k()) + ", graph has k=" +
                            std::to_string(g.k()));
  const MessageGraph mg(g);
  Matrix f1 = random_initial_f1(g, m.k(), cfg.init_seed, cfg.init_noise);
  for (int pass = 0; pass < cfg.forward_passes; ++pass) {
    clamp_anchors(g, f1);
    f1 = m.forward(mg, f1);
  }
  clamp_anchors(g, f1);
  return SoftAssignment(std::move(f1));
}

nlohmann::json checkpoint_to_json(const GnnModel& m, const std::string& config_fingerprint,
                                  const nlohmann::json& training) {
  const auto& a = m.arch();
  nlohmann::json j;
  j["format"] = "mpgnn-checkpoint/1";
  j["architecture"] = {{"layers", kGnnLayerCount},
                       {"k", a.k},
                       {"d_embed", a.d_embed},
                       {"attention_hidden", a.attention_hidden},
                       {"update_hidden", a.update_hidden}};
  j["fingerprint"] = a.fingerprint();
  j["config_fingerprint"] = config_fingerprint;
  j["params"] = params_to_json(m.params());
  if (!training.is_null()) j["training"] = training;
  return j;
}

GnnModel model_from_checkpoint(const nlohmann::json& j, std::optional<GnnArch> expected) {
  try {
    if (j.at("format").get<std::string>() != "mpgnn-checkpoint/1")
      throw ContractViolation("unsupported checkpoint format");
    const auto& a = j.at("architecture");
    if (a.at("layers").get<int>() != kGnnLayerCount)
      throw ContractViolation("checkpoint layer count differs from " +
                              std::to_string(kGnnLayerCount));
    GnnArch arch;
    arch.k = a.at("k").get<int>();
    arch.d_embed = a.at("d_embed").get<int>();
    arch.attention_hidden = a.at("attention_hidden").get<int>();
    arch.update_hidden = a.at("update_hidden").get<int>();
    if (j.at("fingerprint").get<std::string>() != arch.fingerprint())
      throw ContractViolation("checkpoint fingerprint does not match its architecture");
    if (expected && !(*expected == arch))
      throw ContractViolation("checkpoint architecture " + arch.fingerprint() +
                              " does not match expected " + expected->fingerprint());
    GnnModel model(arch);
    params_from_json(j.at("params"), model.params());
    return model;
  } catch (const nlohmann::json::exception& ex) {
    throw ContractViolation(std::string("malformed checkpoint: ") + ex.what());
  }
}

}  // namespace mpgnn
