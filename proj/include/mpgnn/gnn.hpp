#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpgnn/graph.hpp"
#include "mpgnn/nn.hpp"

namespace mpgnn {

constexpr int kGnnLayerCount = 5;

struct GnnArch {
  int k = 3;
  int d_embed = 32;
  int attention_hidden = 32;
  int update_hidden = 64;

  std::string fingerprint() const;
  friend bool operator==(const GnnArch&, const GnnArch&) = default;
};

// Directed view of an undirected graph: both directions of every edge, with
// incoming-edge lists grouped per destination node.
struct MessageGraph {
  int node_count = 0;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> in_offsets;  // size node_count + 1
  std::vector<int> in_edges;    // directed-edge ids grouped by dst, ascending src

  explicit MessageGraph(const ConflictGraph& g);
  std::size_t message_count() const noexcept { return src.size(); }
};

struct NodeState {
  Matrix f1;  // node_count x k, row-stochastic
  Matrix f2;  // node_count x d_embed
};

struct LayerCache {
  MlpCache attention;
  MlpCache embed;
  MlpCache color;
  Matrix diff;     // f1[src] - f1[dst]
  Matrix scores;   // sigmoid attention, one per directed edge
  Matrix messages;
  std::vector<int> arg_max;  // node_count x k directed-edge ids (-1 for isolated nodes)
  std::vector<int> arg_min;
  Matrix mean;
  Matrix var;
};

struct ForwardTape {
  std::vector<NodeState> inputs;  // input state of each layer
  std::vector<LayerCache> layers;
  const MessageGraph* graph = nullptr;
  bool recorded = false;
};

// Five message-passing layers, each with an attention MLP (2k -> 1, sigmoid),
// an embedding-update MLP (d + 4k -> d) and a coloring-update MLP (k + d -> k, softmax).
class GnnModel {
 public:
  struct Layer {
    Mlp attention;
    Mlp embed;
    Mlp color;
  };

  explicit GnnModel(GnnArch arch = {}, std::uint64_t seed = 0);

  const GnnArch& arch() const noexcept { return arch_; }
  int k() const noexcept { return arch_.k; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }
  const std::array<Layer, kGnnLayerCount>& layers() const noexcept { return layers_; }

  NodeState layer_forward(std::size_t layer, const MessageGraph& mg, const NodeState& in,
                          LayerCache* cache = nullptr) const;
  // Returns (dL/df1_in, dL/df2_in); accumulates parameter gradients.
  std::pair<Matrix, Matrix> layer_backward(std::size_t layer, const MessageGraph& mg,
                                           const NodeState& in, const LayerCache& cache,
                                           const Matrix& d_f1_out, const Matrix& d_f2_out);

  // f2 starts at zero; returns the final f1.
  Matrix forward(const ConflictGraph& g, const Matrix& f1_init) const;
  Matrix forward(const MessageGraph& mg, const Matrix& f1_init, ForwardTape* tape = nullptr) const;

  // Reverse pass through a recorded forward. Throws StateError when the tape
  // holds no recorded forward. Returns dL/df1_init.
  Matrix backward(const ForwardTape& tape, const Matrix& d_f1_out);

 private:
  void check_state(const MessageGraph& mg, const NodeState& s) const;

  GnnArch arch_;
  ParamSet params_;
  std::array<Layer, kGnnLayerCount> layers_;
};

SoftAssignment model_forward(const GnnModel& m, const ConflictGraph& g,
                             const SoftAssignment& f1_init);

struct InferenceConfig {
  int forward_passes = 10;
  std::uint64_t init_seed = 0;
  // Weight of a random simplex point mixed into the one-hot start rows (0 = pure one-hot).
  double init_noise = 0.0;
};

// Random one-hot rows (optionally blended with noise), anchors clamped.
Matrix random_initial_f1(const ConflictGraph& g, int k, std::uint64_t seed, double init_noise);
void clamp_anchors(const ConflictGraph& g, Matrix& f1);

// f1^0 random, f1^t = forward(f1^{t-1}) with anchors clamped before every pass
// and on the returned rows.
SoftAssignment iterative_inference(const GnnModel& m, const ConflictGraph& g,
                                   const InferenceConfig& cfg);

// `training` (optional) carries resumable optimizer/controller state.
nlohmann::json checkpoint_to_json(const GnnModel& m, const std::string& config_fingerprint,
                                  const nlohmann::json& training = nullptr);
// Rejects architecture or shape mismatches with ContractViolation.
GnnModel model_from_checkpoint(const nlohmann::json& j,
                               std::optional<GnnArch> expected = std::nullopt);

}  // namespace mpgnn
