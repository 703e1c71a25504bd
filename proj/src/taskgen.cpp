#include "mass/taskgen.hpp"

#include <algorithm>

#include "mass/errors.hpp"
#include "mass/rng.hpp"
#include "mass/vocab.hpp"

namespace mass {

namespace {

std::vector<int> digits_of(const std::string& s) {
  std::vector<int> ids;
  for (char c : s) ids.push_back(c - '0');
  return ids;
}

void append(std::vector<int>& out, std::span<const int> more) { out.insert(out.end(), more.begin(), more.end()); }

}  // namespace

bool is_eval_rule(const Rule& rule) {
  const std::uint64_t h =
      derive_seed(0x5eed, {static_cast<std::uint64_t>(rule.a), static_cast<std::uint64_t>(rule.b),
                           static_cast<std::uint64_t>(rule.modulus)});
  return h % 5 == 0;
}

std::vector<std::string> families(const TaskConfig& cfg) {
  std::vector<std::string> out;
  const int span = cfg.max_modulus - cfg.min_modulus + 1;
  for (int band = 0; band < 3; ++band) {
    const int lo = cfg.min_modulus + band * span / 3;
    const int hi = cfg.min_modulus + (band + 1) * span / 3 - 1;
    char buf[32];
    std::snprintf(buf, sizeof buf, "M%02d-%02d", lo, hi);
    out.emplace_back(buf);
  }
  return out;
}

std::string family_of(int modulus, const TaskConfig& cfg) {
  const int span = cfg.max_modulus - cfg.min_modulus + 1;
  const int band = std::clamp((modulus - cfg.min_modulus) * 3 / span, 0, 2);
  return families(cfg)[band];
}

Task make_task(const Rule& rule, std::vector<std::pair<int, int>> demos, int query,
               std::uint64_t seed, const TaskConfig& cfg) {
  Task t;
  t.rule = rule;
  t.demos = std::move(demos);
  t.query = query;
  t.gold = rule.apply(query);
  t.family = family_of(rule.modulus, cfg);
  t.seed = seed;
  t.prompt = render(t);
  return t;
}

Task sample_task(std::uint64_t seed, const TaskConfig& cfg) {
  const int moduli = cfg.max_modulus - cfg.min_modulus + 1;
  const int m = cfg.min_modulus + static_cast<int>(seed % moduli);
  const std::uint64_t combos = static_cast<std::uint64_t>(m - 1) * m * m;
  // Affine permutation of (a, b, query) combinations; 7919 is prime and larger
  // than every prime factor of `combos`.
  const std::uint64_t idx = ((seed / moduli) * 7919 + 104729) % combos;
  const Rule rule{1 + static_cast<int>(idx / (static_cast<std::uint64_t>(m) * m)),
                  static_cast<int>((idx / m) % m), m};
  const int query = static_cast<int>(idx % m);
  if (cfg.demos > m - 1) throw ContractError("sample_task: more demonstrations than inputs");

  std::vector<int> pool;
  for (int x = 0; x < m; ++x)
    if (x != query) pool.push_back(x);
  Rng rng(seed, {id(Stream::kTaskDemos)});
  std::vector<std::pair<int, int>> demos;
  for (int j = 0; j < cfg.demos; ++j) {
    const int pick = rng.range(j, static_cast<int>(pool.size()) - 1);
    std::swap(pool[j], pool[pick]);
    demos.emplace_back(pool[j], rule.apply(pool[j]));
  }
  return make_task(rule, std::move(demos), query, seed, cfg);
}

std::vector<Task> make_task_set(Split split, int count, std::uint64_t first_seed,
                                const TaskConfig& cfg) {
  std::vector<Task> out;
  for (std::uint64_t seed = first_seed; static_cast<int>(out.size()) < count; ++seed) {
    Task t = sample_task(seed, cfg);
    if (is_eval_rule(t.rule) == (split == Split::kEval)) out.push_back(std::move(t));
  }
  return out;
}

std::vector<int> render_with_query(const Task& task, std::span<const int> query) {
  std::vector<int> ids{Vocab::kTask};
  for (const auto& [x, y] : task.demos) {
    append(ids, number_tokens(x));
    ids.push_back(Vocab::kArrow);
    append(ids, number_tokens(y));
    ids.push_back(Vocab::kSemi);
  }
  ids.push_back(Vocab::kQuery);
  append(ids, query);
  ids.push_back(Vocab::kAnswer);
  return ids;
}

std::vector<int> render(const Task& task) { return render_with_query(task, number_tokens(task.query)); }

std::vector<int> generator_prompt(const Task& task) {
  std::vector<int> ids = render(task);
  ids.back() = Vocab::kExample;
  return ids;
}

std::string normalize_number(const std::string& digits) {
  if (digits.empty()) return digits;
  const auto first = digits.find_first_not_of('0');
  return first == std::string::npos ? "0" : digits.substr(first);
}

std::optional<AuxPair> parse_aux(std::span<const int> raw) {
  std::size_t i = 0;
  auto number = [&]() -> std::optional<std::string> {
    std::string s;
    while (i < raw.size() && Vocab::is_digit(raw[i])) s += static_cast<char>('0' + raw[i++]);
    if (s.empty()) return std::nullopt;
    return normalize_number(s);
  };
  if (raw.empty() || raw[i++] != Vocab::kExample) return std::nullopt;
  const auto p = number();
  if (!p || i >= raw.size() || raw[i++] != Vocab::kArrow) return std::nullopt;
  const auto a = number();
  if (!a || i >= raw.size() || raw[i++] != Vocab::kEnd) return std::nullopt;
  if (i != raw.size()) return std::nullopt;
  return AuxPair{*p, *a};
}

AuxExample make_aux_example(const Task& task, std::vector<int> raw) {
  AuxExample ex;
  ex.raw = std::move(raw);
  if (auto pair = parse_aux(ex.raw)) {
    ex.parsed = true;
    ex.pair = *pair;
    std::vector<int> answer = digits_of(pair->answer);
    answer.push_back(Vocab::kEnd);
    ex.train = continuation(render_with_query(task, digits_of(pair->problem)), answer);
  }
  return ex;
}

AuxExample example_from_task(const Task& task) {
  std::vector<int> raw{Vocab::kExample};
  append(raw, number_tokens(task.query));
  raw.push_back(Vocab::kArrow);
  append(raw, number_tokens(task.gold));
  raw.push_back(Vocab::kEnd);
  return make_aux_example(task, std::move(raw));
}

MaskedSequence gold_sequence(const Task& task) {
  std::vector<int> answer = number_tokens(task.gold);
  answer.push_back(Vocab::kEnd);
  return continuation(task.prompt, answer);
}

std::optional<std::string> extract_answer(std::span<const int> response) {
  std::string s;
  std::size_t i = 0;
  while (i < response.size() && Vocab::is_digit(response[i])) s += static_cast<char>('0' + response[i++]);
  if (s.empty()) return std::nullopt;
  if (i < response.size() && response[i] != Vocab::kEnd) return std::nullopt;
  if (i + 1 < response.size()) return std::nullopt;
  return normalize_number(s);
}

Attempt make_attempt(const Task& task, std::vector<int> response, double logprob) {
  Attempt a;
  a.response = std::move(response);
  a.answer = extract_answer(a.response);
  a.verified = a.answer.has_value() && *a.answer == std::to_string(task.gold);
  a.logprob = logprob;
  return a;
}

bool verify_tokens(const Task& task, std::span<const int> response) {
  const auto ans = extract_answer(response);
  return ans.has_value() && *ans == std::to_string(task.gold);
}

bool verify(const Task& task, const std::string& attempt_text) {
  std::vector<int> ids;
  try {
    ids = vocab().encode(attempt_text);
  } catch (const ContractError&) {
    return false;
  }
  return verify_tokens(task, ids);
}

std::vector<int> scorer_input(const Task& task, const AuxExample& example) {
  if (!example.parsed) throw ContractError("scorer_input: example did not parse");
  std::vector<int> ids = task.prompt;
  ids.push_back(Vocab::kSep);
  append(ids, digits_of(example.pair.problem));
  ids.push_back(Vocab::kSep);
  append(ids, digits_of(example.pair.answer));
  return ids;
}

}  // namespace mass
