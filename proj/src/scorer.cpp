#include "mass/scorer.hpp"

#include <cmath>
#include <numeric>

#include "mass/errors.hpp"
#include "mass/nn.hpp"
#include "mass/rng.hpp"

namespace mass {

using ad::Var;

LayoutPtr scorer_layout(const ScorerConfig& cfg) {
  std::vector<SegmentShape> shapes;
  shapes.push_back({"tok_emb", cfg.vocab, cfg.width});
  shapes.push_back({"pos_emb", cfg.context, cfg.width});
  nn::append_block_shapes(shapes, "enc", cfg.width, cfg.ffn_mult * cfg.width);
  shapes.push_back({"lnf.g", 1, cfg.width});
  shapes.push_back({"lnf.b", 1, cfg.width});
  shapes.push_back({"head.w", 1, cfg.width});
  shapes.push_back({"head.b", 1, 1});
  return make_layout(std::move(shapes));
}

ParamVector init_scorer(const ScorerConfig& cfg, std::uint64_t seed) {
  ParamVector p(scorer_layout(cfg));
  Rng rng(seed, {id(Stream::kInit), 1});
  for (std::size_t i = 0; i < p.num_segments(); ++i) {
    const std::string& name = p.name(i);
    auto& m = p[i];
    if (name.ends_with(".g")) {
      std::fill(m.data.begin(), m.data.end(), 1.0);
    } else if (name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2")) {
      continue;
    } else {
      double stddev = 1.0 / std::sqrt(m.cols);
      if (name == "tok_emb" || name == "pos_emb") stddev = 0.3;
      if (name == "head.w") stddev = 0.1;
      for (double& x : m.data) x = stddev * rng.normal();
    }
  }
  return p;
}

template <class S>
Var<S> score_tokens(const ScorerConfig& cfg, const ParamVars<S>& eta, std::span<const int> ids) {
  const auto n = static_cast<int>(ids.size());
  if (n == 0) throw ContractError("score: empty input");
  if (n > cfg.context) throw ContractError("score: input exceeds scorer context");
  for (int t : ids)
    if (t < 0 || t >= cfg.vocab) throw ContractError("score: token id out of vocabulary");

  std::vector<int> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var<S> x = ad::add(ad::gather_rows(eta.at("tok_emb"), ids),
                     ad::gather_rows(eta.at("pos_emb"), std::span<const int>(positions)));
  x = nn::block(x, eta, "enc", cfg.heads, /*causal=*/false, nn::Adapters<S>{});
  x = nn::layer_norm(x, eta.at("lnf.g"), eta.at("lnf.b"));
  Matrix<S> pool(1, n);
  for (auto& w : pool.data) w = S(1.0 / n);
  const Var<S> pooled = ad::matmul(ad::constant(std::move(pool)), x);
  return ad::sigmoid(ad::add(ad::matmul_nt(pooled, eta.at("head.w")), eta.at("head.b")));
}

ScoreVector score_all(const ScorerConfig& cfg, const ParamVector& eta, const Task& task,
                      std::span<const AuxExample> examples) {
  ad::NoGradGuard ng;
  const auto vars = make_constants<double>(eta);
  ScoreVector out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(score(cfg, vars, task, ex).item());
  return out;
}

template Var<double> score_tokens(const ScorerConfig&, const ParamVars<double>&, std::span<const int>);
template Var<Dual> score_tokens(const ScorerConfig&, const ParamVars<Dual>&, std::span<const int>);

}  // namespace mass
