#include <doctest.h>

#include <cmath>
#include <limits>

#include "../support/oracles.hpp"
#include "mpgnn/errors.hpp"
#include "mpgnn/instance_io.hpp"
#include "mpgnn/training.hpp"

using namespace mpgnn;

namespace {

std::vector<ConflictGraph> small_corpus(int count) {
  std::vector<ConflictGraph> out;
  for (int i = 0; i < count; ++i) out.push_back(generate_planted(8 + i, 3, 0.4, 50 + i).graph);
  return out;
}

LossConfig pair_and_balance() {
  LossConfig lc;
  lc.weights = {{LossTerm::Pairwise, 1.0}, {LossTerm::BalanceJs, 1.0}};
  return lc;
}


// Runs ten passes from each of the 27 one-hot starts of a triangle and counts
// the starts that end conflict-free, split by whether the start colors are
// pairwise distinct. Nodes with equal starts are exchangeable, so an
// equivariant model gives them equal rows; only distinct starts are solvable.
std::pair<int, int> triangle_starts_solved(const GnnModel& m, const ConflictGraph& tri) {
  int distinct = 0, other = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        Matrix f1 = Matrix::Zero(3, 3);
        f1(0, a) = f1(1, b) = f1(2, c) = 1.0;
        for (int pass = 0; pass < 10; ++pass) f1 = m.forward(tri, f1);
        const bool ok = conflict_count(tri, harden(f1)) == 0;
        (a != b && b != c && a != c ? distinct : other) += ok;
      }
  return {distinct, other};
}

}  // namespace

TEST_CASE("beta decays when coloring loss regresses") {
  BetaSettings s;
  s.patience = 2;
  BetaController c(s);
  CHECK(c.observe(10.0) == 1.0);
  CHECK(c.observe(9.0) == 1.0);
  CHECK(c.observe(9.5) == 1.0);
  CHECK(c.observe(9.7) == 0.5);  // second regression in a row
  CHECK(c.observe(8.0) == 0.5);  // improvement resets the count
  c.observe(8.5);
  CHECK(c.observe(8.6) == 0.25);
  // never below the floor
  for (int i = 0; i < 100; ++i) c.observe(100.0);
  CHECK(c.beta() == s.minimum);
  const BetaController back = BetaController::from_json(c.to_json(), s);
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("beta strictly decreases on a rising history with default settings") {
  BetaController c{BetaSettings{}};
  double last = c.beta();
  c.observe(1.0);
  for (int i = 1; i <= 3; ++i) c.observe(1.0 + i);
  CHECK(c.beta() < last);
}

TEST_CASE("triangle corpus with the pairwise loss is learned in 500 epochs") {
  GnnModel m({}, 4);
  const std::vector<ConflictGraph> corpus{ConflictGraph(3, 3, {{0, 1}, {1, 2}, {0, 2}})};
  TrainConfig tc;
  tc.seed = 9;
  const TrainResult r = train(m, corpus, LossConfig{}, tc);
  CHECK(r.history.size() == 500);
  CHECK(r.state.epochs_completed == 500);
  const auto [distinct, other] = triangle_starts_solved(m, corpus[0]);
  CHECK(distinct == 6);
  CHECK(other == 0);  // equal starts stay equal
}

TEST_CASE("gradient reweighting with zero beta follows dynamic weighting") {
  const auto corpus = small_corpus(4);
  LossConfig lc = pair_and_balance();
  lc.beta.initial = 0.0;
  lc.beta.minimum = 0.0;
  TrainConfig tc;
  tc.epochs = 5;
  tc.seed = 3;
  GnnModel a({}, 1), b({}, 1);
  tc.scheme = TrainScheme::DynamicWeighting;
  const auto ra = train(a, corpus, lc, tc);
  tc.scheme = TrainScheme::GradientReweighting;
  const auto rb = train(b, corpus, lc, tc);
  CHECK(a.params() == b.params());
  for (std::size_t i = 0; i < ra.history.size(); ++i) CHECK(ra.history[i].l1 == rb.history[i].l1);
}

TEST_CASE("dual optimizer needs a second learning rate and runs") {
  const auto corpus = small_corpus(2);
  TrainConfig tc;
  tc.scheme = TrainScheme::DualOptimizer;
  tc.epochs = 2;
  CHECK_THROWS_AS(tc.validate(), InvalidParameter);
  tc.lr_balance = 1e-4;
  GnnModel m({}, 2);
  const auto r = train(m, corpus, pair_and_balance(), tc);
  CHECK(r.state.balance_optimizer.has_value());
  CHECK(r.history.size() == 2);
}

TEST_CASE("training is deterministic and resumes exactly") {
  const auto corpus = small_corpus(5);
  const LossConfig lc = pair_and_balance();
  TrainConfig tc;
  tc.epochs = 6;
  tc.seed = 11;
  GnnModel whole({}, 5);
  const auto full = train(whole, corpus, lc, tc);

  GnnModel again({}, 5);
  train(again, corpus, lc, tc);
  CHECK(again.params() == whole.params());

  GnnModel split({}, 5);
  tc.epochs = 3;
  const auto first = train(split, corpus, lc, tc);
  // round trip the resumable state through JSON, as a checkpoint would
  const auto restored = TrainingState::from_json(first.state.to_json(), split.params(), lc.beta);
  const auto second = train(split, corpus, lc, tc, restored);
  CHECK(split.params() == whole.params());
  REQUIRE(second.history.size() == 3);
  CHECK(second.history.front().epoch == 3);
  CHECK(second.history.back().l1 == full.history.back().l1);
}

TEST_CASE("non-finite parameters raise a divergence error with the epoch") {
  const auto corpus = small_corpus(2);
  GnnModel m({}, 6);
  m.params()[0].value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 3;
  try {
    train(m, corpus, LossConfig{}, tc);
    FAIL("expected divergence");
  } catch (const TrainingDivergence& e) {
    CHECK(e.epoch() == 0);
  }
}

TEST_CASE("training input validation") {
  GnnModel m({}, 7);
  CHECK_THROWS_AS(train(m, std::vector<ConflictGraph>{}, LossConfig{}, TrainConfig{}), InvalidParameter);
  const std::vector<ConflictGraph> wrong_k{ConflictGraph(3, 4, {{0, 1}})};
  CHECK_THROWS_AS(train(m, wrong_k, LossConfig{}, TrainConfig{}), ContractViolation);
  for (auto s : {TrainScheme::DynamicWeighting, TrainScheme::GradientReweighting, TrainScheme::DualOptimizer})
    CHECK(scheme_from_name(scheme_name(s)) == s);
  CHECK(stage_from_name(stage_name(TrainStage::JointInit)) == TrainStage::JointInit);
}

TEST_CASE("history csv lists enabled terms") {
  const auto corpus = small_corpus(2);
  GnnModel m({}, 8);
  TrainConfig tc;
  tc.epochs = 2;
  const LossConfig lc = pair_and_balance();
  const auto r = train(m, corpus, lc, tc);
  const std::string csv = history_to_csv(r.history, lc);
  CHECK(csv.rfind("epoch,pairwise,balance_js,l1,l2,beta\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
