#include <cmath>
#include <numeric>

#include "doctest.h"
#include "instances.hpp"
#include "mass/derivatives.hpp"
#include "mass/policy.hpp"
#include "oracles.hpp"

using namespace mass;
namespace t = mass::testing;

namespace {

struct GroupFixture {
  ModelConfig cfg = t::tiny_model();
  ParamVector params = init_model(cfg, 9);
  Task task = sample_task(4, TaskConfig{});
  RolloutGroup group;

  explicit GroupFixture(int m) {
    const auto prompt = generator_prompt(task);
    for (int i = 0; i < m; ++i) {
      SamplerConfig s;
      s.temperature = 1.0;
      s.max_new_tokens = 5;
      s.seed = 100 + i;
      const Sample out = sample(cfg, params, nullptr, prompt, s);
      group.rollouts.push_back({prompt, out.tokens, out.logprob, true, 0.0, 0.0});
    }
    std::vector<double> rewards(m);
    for (int i = 0; i < m; ++i) rewards[i] = std::sin(1.0 + i);
    assign_advantages(group, rewards);
  }

  double surrogate_value(const ParamVector& p, double clip = 0.2) const {
    ad::NoGradGuard ng;
    return aux_surrogate(cfg, make_constants<double>(p), group, clip).item();
  }
};

}  // namespace

TEST_CASE("rewards are sign-flipped sensitivities with a parse penalty") {
  const std::vector<double> sens{-0.095, 0.2, 0.7};
  const bool parsed[] = {true, true, false};
  const auto r = rewards_from_sensitivities(sens, parsed);
  CHECK(r[0] == 0.095);
  CHECK(r[1] == -0.2);
  CHECK(r[2] == -1.0);
  CHECK(rewards_from_sensitivities(sens, parsed, 2.5)[2] == -2.5);

  const bool all[] = {true, true, true};
  const std::vector<double> zero(3, 0.0);
  for (double x : rewards_from_sensitivities(zero, all)) CHECK(x == 0.0);
  const auto twice = rewards_from_sensitivities(rewards_from_sensitivities(sens, all), all);
  for (std::size_t i = 0; i < sens.size(); ++i) CHECK(twice[i] == sens[i]);
}

TEST_CASE("group advantages") {
  for (double a : group_advantages(std::vector<double>{1, 1, 1})) CHECK(a == 0.0);
  const auto two = group_advantages(std::vector<double>{2, 0});
  CHECK(two[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(two[1] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(group_advantages(std::vector<double>{3.5}) == std::vector<double>{0.0});
  CHECK_THROWS_AS(group_advantages(std::vector<double>{}), ContractError);

  const std::vector<double> r{0.3, -1.2, 4.0, 0.01, 0.5, -0.7};
  const auto a = group_advantages(r);
  CHECK(std::abs(std::accumulate(a.begin(), a.end(), 0.0) / a.size()) <= 1e-12);
  double var = 0.0;
  for (double x : a) var += x * x;
  CHECK(std::sqrt(var / a.size()) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("surrogate at the old policy") {
  GroupFixture f(5);
  CHECK(std::abs(f.surrogate_value(f.params)) <= 1e-12);

  // Gradient equals the vanilla policy gradient -(1/m) sum A_i grad logprob(y_i).
  const auto g = grad([&](const auto& v) { return aux_surrogate(f.cfg, v, f.group, 0.2); }, f.params);
  ParamVector pg(f.params.layout());
  for (const auto& r : f.group.rollouts) {
    const auto seq = continuation(r.prompt, r.output);
    pg.axpy(-r.advantage / f.group.rollouts.size(),
            grad([&](const auto& v) { return logprob(f.cfg, v, nullptr, seq); }, f.params));
  }
  CHECK(t::max_abs_diff(g.flatten(), pg.flatten()) <= 1e-10);
  CHECK(pg.max_abs() > 1e-3);

  RolloutGroup flat = f.group;
  for (auto& r : flat.rollouts) {
    r.advantage = 0.0;
    r.old_logprob += 0.7;
  }
  ad::NoGradGuard ng;
  CHECK(aux_surrogate(f.cfg, make_constants<double>(f.params), flat, 0.2).item() == 0.0);
}

TEST_CASE("clipped branch has zero gradient") {
  GroupFixture f(1);
  auto& r = f.group.rollouts[0];
  r.advantage = 1.0;
  const double eps = 0.2;
  const double lp = logprob_value(f.cfg, f.params, nullptr, continuation(r.prompt, r.output));
  r.old_logprob = lp - std::log(1.0 + 2 * eps);
  CHECK(f.surrogate_value(f.params) == doctest::Approx(-(1.0 + eps)).epsilon(1e-12));

  const auto g = grad([&](const auto& v) { return aux_surrogate(f.cfg, v, f.group, eps); }, f.params);
  CHECK(g.max_abs() == 0.0);
  // Finite differences along a random direction agree that the branch is flat.
  const ParamVector dir = t::random_like(f.params.layout(), 3, 1.0);
  const double h = 1e-5;
  const double fd = (f.surrogate_value(f.params + h * dir) - f.surrogate_value(f.params - h * dir)) / (2 * h);
  CHECK(std::abs(fd) <= 1e-9);

  // Same ratio with a negative advantage is on the unclipped branch.
  r.advantage = -1.0;
  const auto g2 = grad([&](const auto& v) { return aux_surrogate(f.cfg, v, f.group, eps); }, f.params);
  CHECK(g2.max_abs() > 0.0);
}

TEST_CASE("verifier solve loss") {
  GroupFixture f(1);
  const Task& task = f.task;
  auto attempt = [&](int value) {
    auto ids = number_tokens(value);
    ids.push_back(Vocab::kEnd);
    const double lp = logprob_value(f.cfg, f.params, nullptr, continuation(task.prompt, ids));
    return make_attempt(task, ids, lp);
  };
  const Attempt right = attempt(task.gold);
  const Attempt wrong = attempt(task.gold + 1);
  REQUIRE(right.verified);
  REQUIRE_FALSE(wrong.verified);

  const auto value = [&](const ParamVector& p, std::span<const Attempt> as) {
    ad::NoGradGuard ng;
    return solve_loss_verifier(f.cfg, make_constants<double>(p), task, as, 0.2).item();
  };
  CHECK(value(f.params, std::vector<Attempt>{wrong, wrong}) == 0.0);
  CHECK(value(f.params, std::vector<Attempt>{right, right}) == 0.0);
  CHECK_THROWS_AS(value(f.params, std::vector<Attempt>{}), ContractError);

  const std::vector<Attempt> mixed{right, wrong};
  CHECK(std::abs(value(f.params, mixed)) <= 1e-12);
  const auto g = grad([&](const auto& v) { return solve_loss_verifier(f.cfg, v, task, std::span(mixed), 0.2); },
                      f.params);
  CHECK(g.max_abs() > 0.0);
  // A small descent step raises the verified attempt's probability.
  const ParamVector stepped = f.params - 1e-3 * g;
  const auto right_seq = continuation(task.prompt, right.response);
  CHECK(logprob_value(f.cfg, stepped, nullptr, right_seq) > logprob_value(f.cfg, f.params, nullptr, right_seq));
  const double h = 1e-5;
  const double fd = (value(f.params + h * g, mixed) - value(f.params - h * g, mixed)) / (2 * h);
  CHECK(fd > 0.0);
}

TEST_CASE("generator loss combines the terms") {
  const auto aux = ad::scalar<double>(0.2);
  const auto solve = ad::scalar<double>(0.4);
  CHECK(generator_loss(aux, solve, 0.5).item() == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(generator_loss(aux, solve, 0.0).item() == 0.2);
  CHECK(generator_loss(ad::scalar<double>(0.0), solve, 0.5).item() == 0.2);
}
