#include "mass/metagrad.hpp"

#include <string>

namespace mass {

std::string_view to_string(OuterVariant v) { return v == OuterVariant::kGold ? "gold" : "verified"; }
std::string_view to_string(Backend b) { return b == Backend::kUnroll ? "unroll" : "adjoint"; }

OuterVariant parse_outer_variant(std::string_view s) {
  if (s == "gold") return OuterVariant::kGold;
  if (s == "verified") return OuterVariant::kVerified;
  throw ContractError("unknown outer variant: " + std::string(s));
}

Backend parse_backend(std::string_view s) {
  if (s == "unroll") return Backend::kUnroll;
  if (s == "adjoint") return Backend::kAdjoint;
  throw ContractError("unknown backend: " + std::string(s));
}

std::vector<MaskedSequence> outer_targets(const OuterLossSpec& spec, const Task& task,
                                          std::span<const Attempt> attempts) {
  if (spec.variant == OuterVariant::kGold) return {gold_sequence(task)};
  if (spec.attempts < 1) throw ContractError("outer_targets: verified variant needs at least one attempt");
  std::vector<MaskedSequence> out;
  for (const auto& a : attempts)
    if (a.verified) out.push_back(continuation(task.prompt, a.response));
  return out;
}

std::vector<double> sensitivity_closed_form_k1(const ParamVector& g_outer,
                                               std::span<const ParamVector> example_grads, double lr) {
  std::vector<double> out;
  out.reserve(example_grads.size());
  for (const auto& g : example_grads) out.push_back(-lr * g_outer.dot(g));
  return out;
}

}  // namespace mass
