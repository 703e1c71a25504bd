#include "mass/vocab.hpp"

#include <cctype>
#include <string>

#include "mass/errors.hpp"

namespace mass {

Vocab::Vocab()
    : symbols_{"0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "+", "-", "*",
               "=", "%", "->", ";", "|", "TASK", "QUERY", "ANSWER", "EX", "END", "<pad>"} {}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    int best = -1;
    std::size_t best_len = 0;
    for (int id = 0; id < size(); ++id) {
      const auto& s = symbols_[id];
      if (s.size() > best_len && text.substr(i, s.size()) == s) {
        best = id;
        best_len = s.size();
      }
    }
    if (best < 0) throw ContractError("vocab: cannot encode text at offset " + std::to_string(i));
    ids.push_back(best);
    i += best_len;
  }
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0 && !(is_digit(ids[i]) && is_digit(ids[i - 1]))) out += ' ';
    out += symbol(ids[i]);
  }
  return out;
}

const Vocab& vocab() {
  static const Vocab v;
  return v;
}

std::vector<int> number_tokens(int value) {
  if (value < 0) throw ContractError("number_tokens: negative value");
  const std::string s = std::to_string(value);
  std::vector<int> ids;
  for (char c : s) ids.push_back(c - '0');
  return ids;
}

}  // namespace mass
