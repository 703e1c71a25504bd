#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mass {

/// Fixed symbol inventory shared by the generator, solver and scorer.
class Vocab {
 public:
  // Role markers and punctuation, after the ten digits.
  static constexpr int kPlus = 10;
  static constexpr int kMinus = 11;
  static constexpr int kTimes = 12;
  static constexpr int kEquals = 13;
  static constexpr int kMod = 14;
  static constexpr int kArrow = 15;  // solution separator inside a pair
  static constexpr int kSemi = 16;   // demonstration separator
  static constexpr int kSep = 17;    // field separator for the scorer
  static constexpr int kTask = 18;
  static constexpr int kQuery = 19;
  static constexpr int kAnswer = 20;
  static constexpr int kExample = 21;
  static constexpr int kEnd = 22;
  static constexpr int kPad = 23;

  Vocab();

  int size() const { return static_cast<int>(symbols_.size()); }
  const std::string& symbol(int id) const { return symbols_.at(id); }
  static bool is_digit(int id) { return id >= 0 && id <= 9; }

  /// Text to ids; throws ContractError on text that is not a symbol sequence.
  std::vector<int> encode(std::string_view text) const;
  /// Ids to text: symbols separated by single spaces, digits of a number joined.
  std::string decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> symbols_;
};

const Vocab& vocab();

/// Decimal digits of a non-negative integer as token ids.
std::vector<int> number_tokens(int value);

}  // namespace mass
