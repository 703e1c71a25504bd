#include "mass/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "mass/derivatives.hpp"
#include "mass/rng.hpp"
#include "mass/vocab.hpp"

namespace mass {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Accumulates max |a - b| / max(|a|, |b|) over every compared pair.
struct ErrorTally {
  double diff = 0.0;
  double scale = 0.0;
  int n = 0;

  void add(double a, double b) {
    diff = std::max(diff, std::abs(a - b));
    scale = std::max({scale, std::abs(a), std::abs(b)});
    ++n;
  }
  void add(const ParamVector& a, const ParamVector& b) {
    const auto fa = a.flatten();
    const auto fb = b.flatten();
    for (std::size_t i = 0; i < fa.size(); ++i) add(fa[i], fb[i]);
  }
  CheckResult result(std::string name, double tol) const {
    return {std::move(name), scale == 0.0 ? diff : diff / scale, tol, n};
  }
};

ParamVector random_direction(const LayoutPtr& layout, Rng& rng, double scale) {
  ParamVector v(layout);
  for (std::size_t s = 0; s < v.num_segments(); ++s)
    for (double& x : v[s].data) x = scale * rng.normal();
  return v;
}

/// Flat coordinates spread over every segment.
std::vector<std::size_t> probe_coordinates(const ParamVector& p, Rng& rng, int per_segment) {
  std::vector<std::size_t> out;
  std::size_t offset = 0;
  for (std::size_t s = 0; s < p.num_segments(); ++s) {
    const std::size_t n = p[s].data.size();
    for (int j = 0; j < per_segment; ++j) out.push_back(offset + static_cast<std::size_t>(rng.range(0, static_cast<int>(n) - 1)));
    offset += n;
  }
  return out;
}

template <class F>
double central(const F& f, const ParamVector& x, const ParamVector& dir, double h) {
  return (f(x + h * dir) - f(x - h * dir)) / (2.0 * h);
}

ParamVector unit(const LayoutPtr& layout, std::size_t flat) {
  std::vector<double> e(layout->total_size(), 0.0);
  e[flat] = 1.0;
  return ParamVector::unflatten(layout, e);
}

struct MetaFixture {
  ModelConfig cfg;
  ScorerConfig scfg;
  ParamVector base, eta, theta0;
  Task task;
  ModelMetaProblem problem;
  InnerConfig inner;

  MetaFixture(const ModelConfig& m, const ScorerConfig& s, std::uint64_t seed, int examples, int steps)
      : cfg(m), scfg(s) {
    base = init_model(cfg, seed);
    eta = init_scorer(scfg, derive_seed(seed, {1}));
    Rng rng(seed, {2});
    for (double& x : eta.at("head.w").data) x = rng.normal();
    theta0 = init_lora(cfg, derive_seed(seed, {3}));
    for (std::size_t i = 0; i < theta0.num_segments(); ++i)
      if (theta0.name(i).ends_with(".B"))
        for (double& x : theta0[i].data) x = 0.2 * rng.normal();
    task = sample_task(seed, TaskConfig{});
    problem.cfg = &cfg;
    problem.base = &base;
    problem.scorer = &scfg;
    problem.task = &task;
    for (int i = 0; i < examples; ++i) {
      const int x = rng.range(0, task.rule.modulus - 1);
      const int y = rng.range(0, task.rule.modulus - 1);
      problem.examples.push_back(
          make_aux_example(task, vocab().encode(fmt::format("EX {} -> {} END", x, y))));
    }
    problem.targets = {gold_sequence(task)};
    inner.steps = steps;
    inner.lr = 0.1;
  }
  MetaFixture(const MetaFixture&) = delete;

  double outer_after(const std::vector<double>& scores) const {
    const auto tr = adapt(problem, theta0, scores, inner);
    ad::NoGradGuard ng;
    return problem.outer_loss(make_constants<double>(tr.final)).item();
  }
  std::vector<double> scores_at(const ParamVector& e) const {
    return score_all(scfg, e, task, std::span<const AuxExample>(problem.examples));
  }
};

}  // namespace

bool GradcheckReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.ok(); });
}

GradcheckReport run_gradcheck(const ModelConfig& model, const ScorerConfig& scorer, std::uint64_t seed,
                              int examples, int inner_steps) {
  const auto t0 = Clock::now();
  GradcheckReport rep;
  MetaFixture fx(model, scorer, seed, examples, inner_steps);
  Rng rng(seed, {4});
  const MaskedSequence seq = gold_sequence(fx.task);

  // f(params) with the adapter fixed; f2(adapter, params) for mixed partials.
  const auto f = [&](const auto& p) {
    using S = typename std::decay_t<decltype(p)>::scalar_type;
    const auto lora = make_constants<S>(fx.theta0);
    return nll(fx.cfg, p, &lora, seq);
  };
  const auto f_value = [&](const ParamVector& p) { return nll_value(fx.cfg, p, &fx.theta0, seq); };
  const auto f2 = [&](const auto& x, const auto& y) { return nll(fx.cfg, y, &x, seq); };

  {
    ErrorTally t;
    const ParamVector g = grad(f, fx.base);
    const auto flat = g.flatten();
    for (std::size_t c : probe_coordinates(fx.base, rng, 2))
      t.add(flat[c], central(f_value, fx.base, unit(fx.base.layout(), c), 1e-5));
    for (int d = 0; d < 4; ++d) {
      const ParamVector v = random_direction(fx.base.layout(), rng, 1.0);
      t.add(g.dot(v), central(f_value, fx.base, v, 1e-5));
    }
    rep.checks.push_back(t.result("grad", 1e-5));
  }
  {
    ErrorTally t;
    const ParamVector v = random_direction(fx.base.layout(), rng, 1.0);
    const double h = 1e-6;
    ParamVector fd = grad(f, fx.base + h * v);
    fd -= grad(f, fx.base - h * v);
    fd *= 1.0 / (2.0 * h);
    t.add(hvp(f, fx.base, v), fd);
    rep.checks.push_back(t.result("hvp", 1e-5));
  }
  {
    ErrorTally t;
    const ParamVector lambda = random_direction(fx.theta0.layout(), rng, 1.0);
    const double h = 1e-6;
    const auto grad_y = [&](const ParamVector& x) {
      return grad([&](const auto& y) {
        using S = typename std::decay_t<decltype(y)>::scalar_type;
        const auto xc = make_constants<S>(x);
        return nll(fx.cfg, y, &xc, seq);
      }, fx.base);
    };
    ParamVector fd = grad_y(fx.theta0 + h * lambda);
    fd -= grad_y(fx.theta0 - h * lambda);
    fd *= 1.0 / (2.0 * h);
    t.add(mixed_partial(f2, fx.theta0, fx.base, lambda), fd);
    rep.checks.push_back(t.result("mixed", 1e-5));
  }
  for (Backend b : {Backend::kUnroll, Backend::kAdjoint}) {
    const MetaGrads mg = meta_grad(b, fx.problem, fx.theta0, fx.eta, fx.inner);
    ErrorTally t;
    const auto s0 = fx.scores_at(fx.eta);
    const double h = 1e-5;
    for (std::size_t i = 0; i < s0.size(); ++i) {
      auto up = s0, down = s0;
      up[i] += h;
      down[i] -= h;
      t.add(mg.sensitivities[i], (fx.outer_after(up) - fx.outer_after(down)) / (2.0 * h));
    }
    const auto outer_eta = [&](const ParamVector& e) { return fx.outer_after(fx.scores_at(e)); };
    Rng dirs(seed, {5});
    for (int d = 0; d < 4; ++d) {
      const ParamVector v = random_direction(fx.eta.layout(), dirs, 1.0);
      t.add(mg.g_eta.dot(v), central(outer_eta, fx.eta, v, h));
    }
    rep.checks.push_back(t.result(fmt::format("meta-{}", to_string(b)), 1e-4));
  }
  rep.seconds = seconds_since(t0);
  return rep;
}

std::vector<BenchRow> bench_metagrad(const ModelConfig& model, const ScorerConfig& scorer, std::uint64_t seed,
                                     int examples, int inner_steps, int block_size, int repeats) {
  MetaFixture fx(model, scorer, seed, examples, inner_steps);
  fx.inner.block_size = block_size;
  std::vector<BenchRow> rows;
  MetaGrads reference;
  for (Backend b : {Backend::kUnroll, Backend::kAdjoint}) {
    BenchRow row{b, inner_steps, block_size};
    MetaGrads mg;
    const auto t0 = Clock::now();
    for (int r = 0; r < std::max(1, repeats); ++r) mg = meta_grad(b, fx.problem, fx.theta0, fx.eta, fx.inner);
    row.seconds = seconds_since(t0) / std::max(1, repeats);
    row.retained_states = mg.counters.retained_states;
    row.peak_graph_bytes = mg.counters.peak_graph_bytes;
    if (b == Backend::kUnroll) {
      reference = mg;
    } else {
      for (std::size_t i = 0; i < mg.sensitivities.size(); ++i)
        row.max_abs_diff = std::max(row.max_abs_diff, std::abs(mg.sensitivities[i] - reference.sensitivities[i]));
      ParamVector d = mg.g_eta - reference.g_eta;
      row.max_abs_diff = std::max(row.max_abs_diff, d.max_abs());
    }
    rows.push_back(row);
  }
  return rows;
}

std::string gradcheck_table(const GradcheckReport& report) {
  std::string out = fmt::format("{:<14} {:>12} {:>10} {:>9}  {}\n", "check", "max rel err", "tolerance", "compared", "");
  for (const auto& c : report.checks)
    out += fmt::format("{:<14} {:>12.3e} {:>10.0e} {:>9}  {}\n", c.name, c.rel_err, c.tolerance, c.compared,
                       c.ok() ? "ok" : "FAIL");
  out += fmt::format("elapsed {:.2f}s\n", report.seconds);
  return out;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::string out = fmt::format("{:<8} {:>3} {:>3} {:>9} {:>14} {:>10} {:>12}\n", "backend", "K", "B", "retained",
                                "peak bytes", "seconds", "max |diff|");
  for (const auto& r : rows)
    out += fmt::format("{:<8} {:>3} {:>3} {:>9} {:>14} {:>10.4f} {:>12.3e}\n", to_string(r.backend), r.inner_steps,
                       r.block_size, r.retained_states, r.peak_graph_bytes, r.seconds, r.max_abs_diff);
  return out;
}

}  // namespace mass
