#pragma once

#include <string_view>

namespace rangesort {

enum class KeyMode {
  kLexicographic,
  // Keys are decimal numbers, possibly zero-padded. Leading zeros are
  // ignored for the numeric comparison; ties fall back to byte order so the
  // order stays total over byte strings.
  kNumeric,
};

KeyMode parse_key_mode(std::string_view text);
std::string_view to_string(KeyMode mode);

// Total order over record keys. Two keys compare equal only when their
// bytes are identical, in every mode.
struct KeyOrder {
  using is_transparent = void;

  KeyMode mode = KeyMode::kLexicographic;

  int compare(std::string_view a, std::string_view b) const noexcept;
  bool less(std::string_view a, std::string_view b) const noexcept {
    return compare(a, b) < 0;
  }
  bool operator()(std::string_view a, std::string_view b) const noexcept {
    return less(a, b);
  }
};

}  // namespace rangesort
