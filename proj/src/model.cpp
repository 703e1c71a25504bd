#include "mass/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mass/errors.hpp"
#include "mass/nn.hpp"
#include "mass/rng.hpp"
#include "mass/vocab.hpp"

namespace mass {

using ad::Var;

namespace {

std::string block_prefix(int l) { return "b" + std::to_string(l); }

void check_tokens(const ModelConfig& cfg, std::span<const int> tokens) {
  for (int t : tokens) {
    if (t < 0 || t >= cfg.vocab) throw ContractError("model: token id out of vocabulary");
  }
  if (static_cast<int>(tokens.size()) > cfg.context) throw ContractError("model: sequence exceeds context");
}

template <class S>
Var<S> masked_logprob_sum(const ModelConfig& cfg, const ParamVars<S>& params,
                          const std::type_identity_t<ParamVars<S>>* lora, const MaskedSequence& seq, int& count) {
  const auto n = static_cast<int>(seq.tokens.size());
  if (n < 2) throw ContractError("model: sequence needs at least two tokens");
  if (seq.mask.size() != seq.tokens.size()) throw ContractError("model: mask length differs from tokens");
  check_tokens(cfg, seq.tokens);

  count = seq.active();
  if (count == 0) throw ContractError("model: loss mask has no active position");

  const auto inputs = std::span<const int>(seq.tokens).first(n - 1);
  const auto logp = nn::log_softmax_rows(forward_logits(cfg, params, lora, inputs));
  Matrix<S> pick(n - 1, cfg.vocab);
  for (int t = 1; t < n; ++t) {
    if (seq.mask[t]) pick(t - 1, seq.tokens[t]) = S(1.0);
  }
  return ad::sum_all(ad::mul(logp, ad::constant(std::move(pick))));
}

}  // namespace

int MaskedSequence::active() const {
  int c = 0;
  for (std::size_t t = 1; t < mask.size(); ++t) c += mask[t] ? 1 : 0;
  return c;
}

MaskedSequence continuation(std::span<const int> prompt, std::span<const int> completion) {
  MaskedSequence s;
  s.tokens.assign(prompt.begin(), prompt.end());
  s.tokens.insert(s.tokens.end(), completion.begin(), completion.end());
  s.mask.assign(prompt.size(), 0);
  s.mask.insert(s.mask.end(), completion.size(), 1);
  return s;
}

LayoutPtr model_layout(const ModelConfig& cfg) {
  std::vector<SegmentShape> shapes;
  shapes.push_back({"tok_emb", cfg.vocab, cfg.width});
  shapes.push_back({"pos_emb", cfg.context, cfg.width});
  for (int l = 0; l < cfg.blocks; ++l) {
    nn::append_block_shapes(shapes, block_prefix(l), cfg.width, cfg.ffn_mult * cfg.width);
  }
  shapes.push_back({"lnf.g", 1, cfg.width});
  shapes.push_back({"lnf.b", 1, cfg.width});
  shapes.push_back({"head.w", cfg.vocab, cfg.width});
  shapes.push_back({"head.b", 1, cfg.vocab});
  return make_layout(std::move(shapes));
}

std::vector<std::string> adapted_matrices(const ModelConfig& cfg) {
  std::vector<std::string> names;
  for (int l = 0; l < cfg.blocks; ++l) {
    for (auto& n : nn::adapted_projections(block_prefix(l))) names.push_back(std::move(n));
  }
  return names;
}

std::vector<std::string> model_segment_names(const ModelConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& s : model_layout(cfg)->segments()) names.push_back(s.name);
  return names;
}

LayoutPtr lora_layout(const ModelConfig& cfg) {
  std::vector<SegmentShape> shapes;
  for (const auto& m : adapted_matrices(cfg)) {
    shapes.push_back({m + ".A", cfg.lora_rank, cfg.width});
    shapes.push_back({m + ".B", cfg.width, cfg.lora_rank});
  }
  return make_layout(std::move(shapes));
}

ParamVector init_model(const ModelConfig& cfg, std::uint64_t seed) {
  ParamVector p(model_layout(cfg));
  Rng rng(seed, {id(Stream::kInit)});
  for (std::size_t i = 0; i < p.num_segments(); ++i) {
    const std::string& name = p.name(i);
    auto& m = p[i];
    const bool is_gain = name.ends_with(".g");
    const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2");
    if (is_gain) {
      std::fill(m.data.begin(), m.data.end(), 1.0);
    } else if (!is_bias) {
      const double stddev = (name == "tok_emb" || name == "pos_emb") ? 0.3 : 1.0 / std::sqrt(m.cols);
      for (double& x : m.data) x = stddev * rng.normal();
    }
  }
  return p;
}

ParamVector init_lora(const ModelConfig& cfg, std::uint64_t seed) {
  ParamVector p(lora_layout(cfg));
  Rng rng(seed, {id(Stream::kLoraInit)});
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.width));
  for (std::size_t i = 0; i < p.num_segments(); ++i) {
    if (p.name(i).ends_with(".A")) {
      for (double& x : p[i].data) x = stddev * rng.normal();
    }
  }
  return p;
}

template <class S>
Var<S> forward_logits(const ModelConfig& cfg, const ParamVars<S>& params, const std::type_identity_t<ParamVars<S>>* lora,
                      std::span<const int> tokens) {
  check_tokens(cfg, tokens);
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var<S> x = ad::add(ad::gather_rows(params.at("tok_emb"), tokens),
                     ad::gather_rows(params.at("pos_emb"), std::span<const int>(positions)));
  const nn::Adapters<S> adapters{lora, cfg.lora_scale};
  for (int l = 0; l < cfg.blocks; ++l) {
    x = nn::block(x, params, block_prefix(l), cfg.heads, /*causal=*/true, adapters);
  }
  x = nn::layer_norm(x, params.at("lnf.g"), params.at("lnf.b"));
  return ad::add_row(ad::matmul_nt(x, params.at("head.w")), params.at("head.b"));
}

template <class S>
Var<S> nll(const ModelConfig& cfg, const ParamVars<S>& params, const std::type_identity_t<ParamVars<S>>* lora,
           const MaskedSequence& seq) {
  int count = 0;
  const auto total = masked_logprob_sum(cfg, params, lora, seq, count);
  return ad::scale(total, -1.0 / count);
}

template <class S>
Var<S> logprob(const ModelConfig& cfg, const ParamVars<S>& params, const std::type_identity_t<ParamVars<S>>* lora,
               const MaskedSequence& seq) {
  int count = 0;
  return masked_logprob_sum(cfg, params, lora, seq, count);
}

double nll_value(const ModelConfig& cfg, const ParamVector& params, const ParamVector* lora,
                 const MaskedSequence& seq) {
  ad::NoGradGuard ng;
  const auto p = make_constants<double>(params);
  if (lora == nullptr) return nll<double>(cfg, p, nullptr, seq).item();
  const auto d = make_constants<double>(*lora);
  return nll<double>(cfg, p, &d, seq).item();
}

double logprob_value(const ModelConfig& cfg, const ParamVector& params, const ParamVector* lora,
                     const MaskedSequence& seq) {
  ad::NoGradGuard ng;
  const auto p = make_constants<double>(params);
  if (lora == nullptr) return logprob<double>(cfg, p, nullptr, seq).item();
  const auto d = make_constants<double>(*lora);
  return logprob<double>(cfg, p, &d, seq).item();
}

ParamVector lora_merge(const ModelConfig& cfg, const ParamVector& params, const ParamVector& lora) {
  ParamVector merged = params;
  for (const auto& name : adapted_matrices(cfg)) {
    if (!lora.layout()->contains(name + ".A")) continue;
    const MatrixD& a = lora.at(name + ".A");
    const MatrixD& b = lora.at(name + ".B");
    MatrixD& w = merged.at(name);
    if (a.cols != w.cols || b.rows != w.rows || a.rows != b.cols) {
      throw ContractError("lora_merge: adapter shape mismatch for " + name);
    }
    for (int i = 0; i < w.rows; ++i)
      for (int j = 0; j < w.cols; ++j) {
        double acc = 0.0;
        for (int r = 0; r < a.rows; ++r) acc += b(i, r) * a(r, j);
        w(i, j) += cfg.lora_scale * acc;
      }
  }
  return merged;
}

Sample sample(const ModelConfig& cfg, const ParamVector& params, const ParamVector* lora,
              std::span<const int> prompt, const SamplerConfig& sampler) {
  const auto p = make_constants<double>(params);
  if (lora == nullptr) return sample(cfg, p, nullptr, prompt, sampler);
  const auto d = make_constants<double>(*lora);
  return sample(cfg, p, &d, prompt, sampler);
}

Sample sample(const ModelConfig& cfg, const ParamVars<double>& params,
              const ParamVars<double>* lora, std::span<const int> prompt,
              const SamplerConfig& sampler) {
  if (prompt.empty()) throw ContractError("sample: empty prompt");
  ad::NoGradGuard ng;
  Rng rng(sampler.seed);
  std::vector<int> seq(prompt.begin(), prompt.end());
  Sample out;
  out.truncated = true;
  for (int step = 0; step < sampler.max_new_tokens; ++step) {
    if (static_cast<int>(seq.size()) >= cfg.context) break;
    const auto logits = forward_logits<double>(cfg, params, lora, seq);
    const int last = logits.rows() - 1;
    std::vector<double> row(logits.value().row(last), logits.value().row(last) + cfg.vocab);

    const double mx = *std::max_element(row.begin(), row.end());
    double lse = 0.0;
    for (double z : row) lse += std::exp(z - mx);
    lse = mx + std::log(lse);

    int next = 0;
    if (sampler.temperature <= 0.0) {
      next = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    } else {
      std::vector<double> w(row.size());
      double total = 0.0;
      for (std::size_t i = 0; i < row.size(); ++i) total += w[i] = std::exp((row[i] - mx) / sampler.temperature);
      double u = rng.uniform() * total;
      next = cfg.vocab - 1;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (u < w[i]) {
          next = static_cast<int>(i);
          break;
        }
        u -= w[i];
      }
    }
    out.logprob += row[next] - lse;
    out.tokens.push_back(next);
    seq.push_back(next);
    if (next == Vocab::kEnd) {
      out.truncated = false;
      break;
    }
  }
  return out;
}

#define MASS_MODEL_INSTANTIATE(S)                                                              \
  template Var<S> forward_logits(const ModelConfig&, const ParamVars<S>&, const ParamVars<S>*, \
                                 std::span<const int>);                                        \
  template Var<S> nll(const ModelConfig&, const ParamVars<S>&, const ParamVars<S>*,            \
                      const MaskedSequence&);                                                  \
  template Var<S> logprob(const ModelConfig&, const ParamVars<S>&, const ParamVars<S>*,        \
                          const MaskedSequence&);

MASS_MODEL_INSTANTIATE(double)
MASS_MODEL_INSTANTIATE(Dual)

#undef MASS_MODEL_INSTANTIATE

}  // namespace mass
