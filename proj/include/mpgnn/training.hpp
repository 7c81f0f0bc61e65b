#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpgnn/gnn.hpp"
#include "mpgnn/losses.hpp"
#include "mpgnn/nn.hpp"

namespace mpgnn {

enum class TrainScheme { DynamicWeighting, GradientReweighting, DualOptimizer };
enum class TrainStage { JointInit, FineTune };

std::string_view scheme_name(TrainScheme s);
std::optional<TrainScheme> scheme_from_name(std::string_view name);
std::string_view stage_name(TrainStage s);
std::optional<TrainStage> stage_from_name(std::string_view name);

struct TrainConfig {
  TrainScheme scheme = TrainScheme::DynamicWeighting;
  TrainStage stage = TrainStage::FineTune;
  int epochs = 500;
  double lr = 1e-3;
  // second optimizer (balance losses) under DualOptimizer
  std::optional<double> lr_balance;
  std::uint64_t seed = 0;
  int forward_passes = 10;
  // Draw each example's pass count uniformly from [1, forward_passes] instead
  // of always running forward_passes.
  bool sample_passes = true;
  double init_noise = 0.0;
  bool shuffle = true;
  // Scale each graph's coloring-loss gradient by 1 / edge count so dense graphs
  // do not dominate the optimizer's moment estimates. Reported losses stay raw.
  bool normalize_by_edges = false;

  // Throws InvalidParameter (e.g. DualOptimizer without a second learning rate).
  void validate() const;
  std::string fingerprint() const;
};

// Decays beta once L1 has stayed above its best value for `patience` epochs.
class BetaController {
 public:
  BetaController() = default;
  explicit BetaController(BetaSettings s) : settings_(s), beta_(s.initial) {}

  // Feeds one epoch-mean L1; returns the beta for the next epoch.
  double observe(double epoch_l1);
  double beta() const noexcept { return beta_; }

  nlohmann::json to_json() const;
  static BetaController from_json(const nlohmann::json& j, BetaSettings s);

 private:
  BetaSettings settings_;
  double beta_ = 1.0;
  double best_l1_ = 0.0;
  bool has_best_ = false;
  int regressions_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // global index, continues across resumed runs
  std::map<LossTerm, double> terms;  // epoch means of enabled terms
  double l1 = 0.0;
  double l2 = 0.0;
  double beta = 0.0;
};

// Resumable state stored next to the parameters in a checkpoint.
struct TrainingState {
  int epochs_completed = 0;
  BetaController beta;
  std::optional<Adam> optimizer;
  std::optional<Adam> balance_optimizer;

  nlohmann::json to_json() const;
  static TrainingState from_json(const nlohmann::json& j, const ParamSet& params, BetaSettings s);
};

struct TrainResult {
  std::vector<EpochRecord> history;
  TrainingState state;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains on the whole corpus (one optimizer step per graph, corpus shuffled each
// epoch). Each example runs its passes but the last without gradient and
// back-propagates through the final pass. Throws TrainingDivergence on NaN.
TrainResult train(GnnModel& model, std::span<const ConflictGraph> corpus, const LossConfig& lc,
                  const TrainConfig& tc, std::optional<TrainingState> resume = std::nullopt,
                  const EpochCallback& on_epoch = {});

std::string history_to_csv(const std::vector<EpochRecord>& history, const LossConfig& lc);

}  // namespace mpgnn
