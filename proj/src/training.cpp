#include "mpgnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mpgnn/errors.hpp"
#include "mpgnn/rng.hpp"

namespace mpgnn {

std::string_view scheme_name(TrainScheme s) {
  switch (s) {
    case TrainScheme::DynamicWeighting: return "dynamic_weighting";
    case TrainScheme::GradientReweighting: return "gradient_reweighting";
    case TrainScheme::DualOptimizer: return "dual_optimizer";
  }
  return "?";
}

std::optional<TrainScheme> scheme_from_name(std::string_view name) {
  for (auto s : {TrainScheme::DynamicWeighting, TrainScheme::GradientReweighting,
                 TrainScheme::DualOptimizer})
    if (scheme_name(s) == name) return s;
  return std::nullopt;
}

std::string_view stage_name(TrainStage s) {
  return s == TrainStage::JointInit ? "joint_init" : "fine_tune";
}

std::optional<TrainStage> stage_from_name(std::string_view name) {
  if (name == "joint_init") return TrainStage::JointInit;
  if (name == "fine_tune") return TrainStage::FineTune;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidParameter("epochs must be non-negative");
  if (!(lr > 0.0)) throw InvalidParameter("learning rate must be positive");
  if (forward_passes < 1) throw InvalidParameter("forward_passes must be >= 1");
  if (init_noise < 0.0 || init_noise > 1.0) throw InvalidParameter("init_noise must be in [0, 1]");
  if (scheme == TrainScheme::DualOptimizer && stage == TrainStage::FineTune) {
    if (!lr_balance) throw InvalidParameter("dual_optimizer requires two learning rates");
    if (!(*lr_balance > 0.0)) throw InvalidParameter("balance learning rate must be positive");
  }
}

std::string TrainConfig::fingerprint() const {
  std::ostringstream ss;
  ss << "train;scheme=" << scheme_name(scheme) << ";stage=" << stage_name(stage)
     << ";epochs=" << epochs << ";lr=" << lr;
  if (lr_balance) ss << ";lr_balance=" << *lr_balance;
  ss << ";seed=" << seed << ";passes=" << forward_passes << ";sample_passes=" << sample_passes
     << ";init_noise=" << init_noise << ";shuffle=" << shuffle
     << ";normalize_by_edges=" << normalize_by_edges;
  return ss.str();
}

double BetaController::observe(double epoch_l1) {
  if (!has_best_ || epoch_l1 < best_l1_) {
    best_l1_ = epoch_l1;
    has_best_ = true;
    regressions_ = 0;
    return beta_;
  }
  if (epoch_l1 > best_l1_ * (1.0 + settings_.tolerance)) {
    if (++regressions_ >= settings_.patience) {
      // floor at the minimum, but a beta already below it is never raised
      beta_ = std::min(beta_, std::max(settings_.minimum, beta_ * settings_.decay));
      regressions_ = 0;
    }
  }
  return beta_;
}

nlohmann::json BetaController::to_json() const {
  return {{"beta", beta_}, {"best_l1", best_l1_}, {"has_best", has_best_},
          {"regressions", regressions_}};
}

BetaController BetaController::from_json(const nlohmann::json& j, BetaSettings s) {
  BetaController c(s);
  c.beta_ = j.at("beta").get<double>();
  c.best_l1_ = j.at("best_l1").get<double>();
  c.has_best_ = j.at("has_best").get<bool>();
  c.regressions_ = j.at("regressions").get<int>();
  return c;
}

nlohmann::json TrainingState::to_json() const {
  nlohmann::json j = {{"epochs_completed", epochs_completed}, {"beta", beta.to_json()}};
  if (optimizer) j["optimizer"] = optimizer->to_json();
  if (balance_optimizer) j["balance_optimizer"] = balance_optimizer->to_json();
  return j;
}

TrainingState TrainingState::from_json(const nlohmann::json& j, const ParamSet& params,
                                       BetaSettings s) {
  TrainingState st;
  st.epochs_completed = j.at("epochs_completed").get<int>();
  st.beta = BetaController::from_json(j.at("beta"), s);
  if (j.contains("optimizer")) st.optimizer = Adam::from_json(j.at("optimizer"), params);
  if (j.contains("balance_optimizer"))
    st.balance_optimizer = Adam::from_json(j.at("balance_optimizer"), params);
  return st;
}

namespace {

struct Example {
  const ConflictGraph* graph;
  MessageGraph messages;
  CliqueSet cliques;
};

std::vector<Matrix> copy_grads(const ParamSet& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.grad);
  return out;
}

}  // namespace

TrainResult train(GnnModel& model, std::span<const ConflictGraph> corpus, const LossConfig& lc,
                  const TrainConfig& tc, std::optional<TrainingState> resume,
                  const EpochCallback& on_epoch) {
  lc.validate();
  tc.validate();
  if (corpus.empty()) throw InvalidParameter("training corpus is empty");

  std::vector<Example> examples;
  examples.reserve(corpus.size());
  for (const auto& g : corpus) {
    if (g.k() != model.k())
      throw ContractViolation("corpus graph has k=" + std::to_string(g.k()) + ", model k=" +
                              std::to_string(model.k()));
    examples.push_back({&g, MessageGraph(g), lc.needs_cliques() ? enumerate_triangles(g) : CliqueSet{}});
  }

  TrainResult result;
  auto& state = result.state;
  if (resume) {
    state = std::move(*resume);
  } else {
    state.beta = BetaController(lc.beta);
  }
  auto& params = model.params();
  if (!state.optimizer) state.optimizer = Adam(params, AdamConfig{});
  state.optimizer->set_lr(tc.lr);
  const bool dual = tc.stage == TrainStage::FineTune && tc.scheme == TrainScheme::DualOptimizer;
  if (dual) {
    if (!state.balance_optimizer) state.balance_optimizer = Adam(params, AdamConfig{});
    state.balance_optimizer->set_lr(*tc.lr_balance);
  }
  params.zero_grad();

  std::vector<std::size_t> order(examples.size());
  Matrix grad_primary;
  Matrix grad_balance;
  ForwardTape tape;

  for (int e = 0; e < tc.epochs; ++e) {
    const int epoch = state.epochs_completed;
    const std::uint64_t epoch_seed = derive_seed(tc.seed, "epoch", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (tc.shuffle) Rng(derive_seed(epoch_seed, "order")).shuffle(std::span<std::size_t>(order));

    const bool joint = tc.stage == TrainStage::JointInit;
    const double beta = joint ? 1.0 : (dual ? 1.0 : state.beta.beta());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.beta = beta;

    for (std::size_t idx : order) {
      auto& ex = examples[idx];
      const auto& g = *ex.graph;
      const std::uint64_t seed = derive_seed(epoch_seed, "init", idx);
      const int passes =
          tc.sample_passes
              ? 1 + static_cast<int>(Rng(derive_seed(seed, "passes"))
                                         .below(static_cast<std::uint64_t>(tc.forward_passes)))
              : tc.forward_passes;

      // Runs the truncated iterative inference and returns the recorded final pass output.
      auto run_passes = [&]() {
        Matrix f1 = random_initial_f1(g, model.k(), seed, tc.init_noise);
        for (int pass = 0; pass + 1 < passes; ++pass) {
          clamp_anchors(g, f1);
          f1 = model.forward(ex.messages, f1);
        }
        clamp_anchors(g, f1);
        return model.forward(ex.messages, f1, &tape);
      };

      Matrix out = run_passes();
      const auto losses = evaluate_losses(lc, g, ex.cliques, out, &grad_primary, &grad_balance);
      if (!std::isfinite(losses.l1) || !std::isfinite(losses.l2))
        throw TrainingDivergence(epoch, "loss is not finite on graph " + std::to_string(idx));
      if (tc.normalize_by_edges)
        grad_primary /= static_cast<double>(std::max<std::size_t>(1, g.edge_count()));
      for (const auto& [term, value] : losses.terms) rec.terms[term] += value;
      rec.l1 += losses.l1;
      rec.l2 += losses.l2;

      if (dual) {
        model.backward(tape, grad_primary);
        state.optimizer->step(params);
        out = run_passes();
        evaluate_losses(lc, g, ex.cliques, out, nullptr, &grad_balance);
        model.backward(tape, grad_balance);
        if (!params.grads_finite()) throw TrainingDivergence(epoch, "non-finite gradient");
        state.balance_optimizer->step(params);
        continue;
      }
      if (!joint && tc.scheme == TrainScheme::GradientReweighting) {
        model.backward(tape, grad_primary);
        auto g1 = copy_grads(params);
        params.zero_grad();
        model.backward(tape, grad_balance);
        for (std::size_t i = 0; i < params.size(); ++i)
          params[i].grad = g1[i] + beta * params[i].grad;
      } else {
        model.backward(tape, grad_primary + beta * grad_balance);
      }
      if (!params.grads_finite()) throw TrainingDivergence(epoch, "non-finite gradient");
      state.optimizer->step(params);
    }

    const double count = static_cast<double>(examples.size());
    for (auto& [term, value] : rec.terms) value /= count;
    rec.l1 /= count;
    rec.l2 /= count;
    if (!std::isfinite(rec.l1) || !std::isfinite(rec.l2))
      throw TrainingDivergence(epoch, "epoch loss is not finite");
    if (!joint && !dual) state.beta.observe(rec.l1);
    ++state.epochs_completed;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

std::string history_to_csv(const std::vector<EpochRecord>& history, const LossConfig& lc) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "epoch";
  for (const auto& [term, w] : lc.weights) ss << "," << loss_name(term);
  ss << ",l1,l2,beta\n";
  for (const auto& rec : history) {
    ss << rec.epoch;
    for (const auto& [term, w] : lc.weights) {
      auto it = rec.terms.find(term);
      ss << "," << (it == rec.terms.end() ? 0.0 : it->second);
    }
    ss << "," << rec.l1 << "," << rec.l2 << "," << rec.beta << "\n";
  }
  return ss.str();
}

}  // namespace mpgnn
