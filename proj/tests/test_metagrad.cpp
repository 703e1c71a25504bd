#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "instances.hpp"
#include "mass/metagrad.hpp"
#include "oracles.hpp"

using namespace mass;
using testing::MetaInstance;
using testing::ScalarToy;
namespace t = mass::testing;

namespace {

InnerConfig inner(int steps, int block = 1) {
  InnerConfig c;
  c.steps = steps;
  c.block_size = block;
  return c;
}

double max_abs_diff(const MetaGrads& a, const MetaGrads& b) {
  double d = t::max_abs_diff(a.g_eta.flatten(), b.g_eta.flatten());
  d = std::max(d, t::max_abs_diff(a.sensitivities, b.sensitivities));
  return std::max(d, std::abs(a.outer_loss - b.outer_loss));
}

}  // namespace

TEST_CASE("scalar quadratic oracle, both backends") {
  const ScalarToy toy;
  for (Backend b : {Backend::kUnroll, Backend::kAdjoint}) {
    const MetaGrads r = meta_grad(b, toy, ScalarToy::theta(0.0), toy.eta(0.0), inner(1));
    CHECK(std::abs(r.adapted.at("theta").data[0] - 0.05) <= 1e-15);
    CHECK(std::abs(r.sensitivities[0] - (-0.095)) <= 1e-12);
    CHECK(std::abs(r.g_eta.at("eta").data[0] - (-0.02375)) <= 1e-12);
  }
}

TEST_CASE("degenerate cases give zero meta-gradients") {
  ScalarToy toy;
  toy.centers = {1.0, -2.0};
  for (Backend b : {Backend::kUnroll, Backend::kAdjoint}) {
    const MetaGrads k0 = meta_grad(b, toy, ScalarToy::theta(0.3), toy.eta(0.2), inner(0));
    CHECK(k0.g_eta.max_abs() == 0.0);
    CHECK(*std::max_element(k0.sensitivities.begin(), k0.sensitivities.end()) == 0.0);

    ScalarToy flat = toy;
    flat.flat_outer = true;
    const MetaGrads f = meta_grad(b, flat, ScalarToy::theta(0.3), flat.eta(0.2), inner(2));
    CHECK(f.g_eta.max_abs() == 0.0);
    for (double s : f.sensitivities) CHECK(s == 0.0);
    CHECK(f.outer_loss == 0.25);
  }
}

TEST_CASE("closed-form sign analysis") {
  ParamVector g = ScalarToy::theta(2.0);
  const std::vector<ParamVector> grads{ScalarToy::theta(0.0), ScalarToy::theta(-3.0)};
  const auto s = sensitivity_closed_form_k1(g, grads, 0.1);
  CHECK(s[0] == 0.0);
  CHECK(s[1] > 0.0);
  CHECK(std::abs(s[1] - 0.6) <= 1e-15);
}

TEST_CASE("K=1 closed form matches both backends on the model") {
  MetaInstance inst(21, 4);
  const auto unroll = meta_grad_unroll(inst.problem, inst.theta0, inst.eta, inner(1));
  const auto adjoint = meta_grad_adjoint(inst.problem, inst.theta0, inst.eta, inner(1));

  const auto g_outer = grad([&](const auto& v) { return inst.problem.outer_loss(v); }, unroll.adapted);
  std::vector<ParamVector> ex_grads;
  for (std::size_t i = 0; i < inst.problem.size(); ++i) {
    ex_grads.push_back(grad(
        [&](const auto& v) { return inst.problem.example_losses(v)[i]; }, inst.theta0));
  }
  const auto closed = sensitivity_closed_form_k1(g_outer, ex_grads, InnerConfig{}.lr);
  CHECK(t::max_abs_diff(closed, unroll.sensitivities) <= 1e-10);
  CHECK(t::max_abs_diff(closed, adjoint.sensitivities) <= 1e-10);
}

TEST_CASE("backends agree on random model instances") {
  for (std::uint64_t seed = 30; seed < 35; ++seed) {
    MetaInstance inst(seed, 4);
    const auto u = meta_grad_unroll(inst.problem, inst.theta0, inst.eta, inner(2));
    const auto a = meta_grad_adjoint(inst.problem, inst.theta0, inst.eta, inner(2));
    CHECK(max_abs_diff(u, a) <= 1e-8);
    CHECK(u.adapted.bit_equal(a.adapted));
    CHECK(u.g_eta.max_abs() > 0.0);
  }
}

TEST_CASE("meta-gradients match finite differences") {
  MetaInstance inst(40, 4);
  const InnerConfig cfg = inner(2);
  const auto r = meta_grad_adjoint(inst.problem, inst.theta0, inst.eta, cfg);

  SUBCASE("sensitivities") {
    const auto scores = inst.scores_at(inst.eta);
    std::vector<double> fd;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      auto up = scores, down = scores;
      up[i] += 1e-4;
      down[i] -= 1e-4;
      fd.push_back((inst.outer_after(up, cfg) - inst.outer_after(down, cfg)) / 2e-4);
    }
    CHECK(t::rel_err(fd, r.sensitivities) <= 1e-4);
  }

  SUBCASE("scorer parameters") {
    const auto flat = inst.eta.flatten();
    const auto g = r.g_eta.flatten();
    // The largest components plus a strided sample of the rest.
    std::vector<std::size_t> idx(flat.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::partial_sort(idx.begin(), idx.begin() + 10, idx.end(),
                      [&](std::size_t a, std::size_t b) { return std::abs(g[a]) > std::abs(g[b]); });
    idx.resize(10);
    for (std::size_t i = 0; i < flat.size(); i += 97) idx.push_back(i);

    std::vector<double> fd, an;
    for (std::size_t i : idx) {
      auto up = flat, down = flat;
      up[i] += 1e-4;
      down[i] -= 1e-4;
      const double fu = inst.outer_after(inst.scores_at(ParamVector::unflatten(inst.eta.layout(), up)), cfg);
      const double fl = inst.outer_after(inst.scores_at(ParamVector::unflatten(inst.eta.layout(), down)), cfg);
      fd.push_back((fu - fl) / 2e-4);
      an.push_back(g[i]);
    }
    CHECK(t::rel_err(fd, an) <= 1e-4);
  }
}

TEST_CASE("retained state: adjoint keeps ceil(K/B)+1 snapshots, unroll keeps every step") {
  MetaInstance inst(50, 2);
  for (int k : {1, 2, 4, 8}) {
    for (int block : {1, 2, 4}) {
      const auto a = meta_grad_adjoint(inst.problem, inst.theta0, inst.eta, inner(k, block));
      CHECK(a.counters.retained_states == static_cast<std::int64_t>(CheckpointStore::capacity(k, block)));
    }
    const auto u = meta_grad_unroll(inst.problem, inst.theta0, inst.eta, inner(k));
    const auto a = meta_grad_adjoint(inst.problem, inst.theta0, inst.eta, inner(k));
    if (k >= 2) {
      CHECK(a.counters.retained_states < u.counters.retained_states);
      CHECK(a.counters.peak_graph_bytes < u.counters.peak_graph_bytes);
    }
  }
}

TEST_CASE("outer losses") {
  MetaInstance inst(60, 2);
  const auto base = make_constants<double>(inst.base);
  const ParamVector zero = init_lora(inst.cfg, 1);
  const auto delta = make_constants<double>(zero);

  const double gold = outer_loss_gold(inst.cfg, base, delta, inst.task).item();
  CHECK(gold == doctest::Approx(nll_value(inst.cfg, inst.base, nullptr, gold_sequence(inst.task))).epsilon(1e-14));

  const auto right = make_attempt(inst.task, vocab().encode(std::to_string(inst.task.gold) + " END"));
  const auto padded = make_attempt(inst.task, vocab().encode("0" + std::to_string(inst.task.gold) + " END"));
  const auto wrong = make_attempt(inst.task, vocab().encode(std::to_string(inst.task.gold + 1) + " END"));
  REQUIRE(right.verified);
  REQUIRE(padded.verified);
  REQUIRE_FALSE(wrong.verified);

  const std::vector<Attempt> none{wrong, wrong};
  CHECK_FALSE(outer_loss_verified(inst.cfg, base, delta, inst.task, none).has_value());

  const std::vector<Attempt> same{right, right, wrong};
  CHECK(outer_loss_verified(inst.cfg, base, delta, inst.task, same)->item() == doctest::Approx(gold).epsilon(1e-14));

  const std::vector<Attempt> two{right, padded};
  const double l1 = nll_value(inst.cfg, inst.base, &zero, continuation(inst.task.prompt, right.response));
  const double l2 = nll_value(inst.cfg, inst.base, &zero, continuation(inst.task.prompt, padded.response));
  CHECK(l1 != l2);
  CHECK(outer_loss_verified(inst.cfg, base, delta, inst.task, two)->item() ==
        doctest::Approx((l1 + l2) / 2).epsilon(1e-14));
}

TEST_CASE("single-symbol vocabulary forces zero outer loss") {
  ModelConfig cfg = testing::tiny_model();
  cfg.vocab = 1;
  const auto base = make_constants<double>(init_model(cfg, 1));
  const auto delta = make_constants<double>(init_lora(cfg, 2));
  const std::vector<MaskedSequence> targets{continuation(std::vector<int>{0, 0}, std::vector<int>{0})};
  CHECK(outer_loss(cfg, base, delta, std::span<const MaskedSequence>(targets)).item() == 0.0);
}
