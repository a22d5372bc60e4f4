#include "rangesort/key_order.hpp"

#include <string>

#include "rangesort/error.hpp"

namespace rangesort {

KeyMode parse_key_mode(std::string_view text) {
  if (text == "lexicographic" || text == "lex") return KeyMode::kLexicographic;
  if (text == "numeric" || text == "fixed-width-numeric") return KeyMode::kNumeric;
  throw ValidationError("unknown key mode '" + std::string(text) +
                        "' (expected lexicographic or numeric)");
}

std::string_view to_string(KeyMode mode) {
  switch (mode) {
    case KeyMode::kLexicographic:
      return "lexicographic";
    case KeyMode::kNumeric:
      return "numeric";
  }
  return "?";
}

namespace {

std::string_view strip_leading_zeros(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && s[i] == '0') ++i;
  return s.substr(i);
}

int sign(int v) { return (v > 0) - (v < 0); }

}  // namespace

int KeyOrder::compare(std::string_view a, std::string_view b) const noexcept {
  if (mode == KeyMode::kNumeric) {
    const auto na = strip_leading_zeros(a);
    const auto nb = strip_leading_zeros(b);
    if (na.size() != nb.size()) return na.size() < nb.size() ? -1 : 1;
    if (const int c = na.compare(nb); c != 0) return sign(c);
  }
  return sign(a.compare(b));
}

}  // namespace rangesort
