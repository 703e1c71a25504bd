#include <cmath>
#include <limits>

#include "doctest.h"
#include "instances.hpp"
#include "mass/adapt.hpp"

using namespace mass;
using testing::MetaInstance;
using testing::ScalarToy;

namespace {

struct LogToy {
  std::size_t size() const { return 1; }
  template <class S>
  std::vector<ad::Var<S>> example_losses(const ParamVars<S>& theta) const {
    return {ad::sum_all(ad::log(theta.at("theta")))};
  }
};

double theta_value(const ParamVector& p) { return p.at("theta").data[0]; }

}  // namespace

TEST_CASE("scalar toy: one step of weighted descent") {
  const ScalarToy toy;
  InnerConfig cfg;
  cfg.steps = 1;
  cfg.lr = 0.1;
  const auto tr = adapt(toy, ScalarToy::theta(0.0), std::vector<double>{1.0}, cfg);
  CHECK(theta_value(tr.final) == doctest::Approx(0.1).epsilon(1e-15));

  cfg.steps = 0;
  CHECK(adapt(toy, ScalarToy::theta(0.3), std::vector<double>{1.0}, cfg).final.bit_equal(ScalarToy::theta(0.3)));
}

TEST_CASE("inner loss is a weighted sum") {
  MetaInstance inst(3, 2);
  const auto& p = inst.problem;
  CHECK(inner_loss_value(p, inst.theta0, std::vector<double>{0.0, 0.0}) == 0.0);

  const double l0 = nll_value(inst.cfg, inst.base, &inst.theta0, p.examples[0].train);
  CHECK(inner_loss_value(p, inst.theta0, std::vector<double>{1.0, 0.0}) == doctest::Approx(l0).epsilon(1e-14));

  ModelMetaProblem twin = p;
  twin.examples = {p.examples[0], p.examples[0]};
  CHECK(std::abs(inner_loss_value(twin, inst.theta0, std::vector<double>{0.5, 0.5}) - l0) <= 1e-14);

  CHECK_THROWS_AS(inner_loss_value(p, inst.theta0, std::vector<double>{1.0}), ContractError);
}

TEST_CASE("zero scores and empty batches leave the adapter unchanged") {
  MetaInstance inst(4, 3);
  InnerConfig cfg;
  cfg.steps = 3;
  const auto tr = adapt(inst.problem, inst.theta0, std::vector<double>(3, 0.0), cfg);
  CHECK(tr.final.bit_equal(inst.theta0));

  ModelMetaProblem empty = inst.problem;
  empty.examples.clear();
  CHECK(adapt_unweighted(empty, inst.theta0, cfg).final.bit_equal(inst.theta0));
}

TEST_CASE("unweighted adaptation equals unit scores bit-for-bit") {
  MetaInstance inst(5, 3);
  const InnerConfig cfg;
  const auto a = adapt_unweighted(inst.problem, inst.theta0, cfg);
  const auto b = adapt(inst.problem, inst.theta0, std::vector<double>(3, 1.0), cfg);
  CHECK(a.final.bit_equal(b.final));
  CHECK_FALSE(a.final.bit_equal(inst.theta0));
}

TEST_CASE("one unweighted step reduces the training loss on the default model") {
  const ModelConfig cfg;
  const ParamVector base = init_model(cfg, 11);
  const Task task = sample_task(21, TaskConfig{});
  ModelInnerProblem problem{&cfg, &base, {}};
  for (const char* text : {"EX 1 -> 2 END", "EX 5 -> 0 END", "EX 3 -> 3 END"})
    problem.sequences.push_back(make_aux_example(task, vocab().encode(text)).train);
  InnerConfig inner;
  inner.steps = 1;
  const ParamVector theta0 = init_lora(cfg, 12);
  const auto tr = adapt_unweighted(problem, theta0, inner);
  const std::vector<double> ones(3, 1.0);
  CHECK(inner_loss_value(problem, tr.final, ones) < inner_loss_value(problem, theta0, ones));
}

TEST_CASE("replay from checkpoints reproduces the final adapter exactly") {
  MetaInstance inst(6, 3);
  const auto scores = inst.scores_at(inst.eta);
  for (int block : {1, 2, 3}) {
    InnerConfig cfg;
    cfg.steps = 4;
    cfg.block_size = block;
    const auto tr = adapt(inst.problem, inst.theta0, scores, cfg);
    CHECK(tr.store.num_snapshots() == CheckpointStore::capacity(4, block));
    const Stepper step = inner_stepper(inst.problem, scores, cfg.lr);
    ParamVector theta = inst.theta0;
    for (int k = 0; k < cfg.steps; ++k) theta = step(k, theta);
    CHECK(theta.bit_equal(tr.final));
    CHECK(checkpoint_replay(tr.store, 4, step).bit_equal(tr.final));
  }
}

TEST_CASE("doubling scores and halving the rate gives the same first step") {
  MetaInstance inst(7, 4);
  auto scores = inst.scores_at(inst.eta);
  InnerConfig cfg;
  cfg.steps = 1;
  const auto a = adapt(inst.problem, inst.theta0, scores, cfg);
  for (double& s : scores) s *= 2.0;
  cfg.lr /= 2.0;
  const auto b = adapt(inst.problem, inst.theta0, scores, cfg);
  CHECK(a.final.bit_equal(b.final));
}

TEST_CASE("adaptation never touches base parameters") {
  MetaInstance inst(8, 3);
  const auto before = inst.base.hash();
  const auto tr = adapt(inst.problem, inst.theta0, inst.scores_at(inst.eta), InnerConfig{});
  CHECK(inst.base.hash() == before);
  CHECK(tr.final.layout() == inst.theta0.layout());
}

TEST_CASE("non-finite inner loss is a numeric fault") {
  const LogToy toy;
  InnerConfig cfg;
  cfg.steps = 1;
  CHECK_THROWS_AS(adapt(toy, ScalarToy::theta(-1.0), std::vector<double>{1.0}, cfg), NumericFault);
  cfg.lr = 0.0;
  CHECK_THROWS_AS(adapt(toy, ScalarToy::theta(1.0), std::vector<double>{1.0}, cfg), ContractError);
}
