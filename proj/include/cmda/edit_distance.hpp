#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cmda {

enum class Granularity { chars, words };

// UTF-8 helpers. Invalid byte sequences decode to U+FFFD one byte at a time.
std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(std::u32string_view text);
bool is_unicode_space(char32_t c);

// Splits on runs of Unicode whitespace; punctuation stays attached to tokens.
std::vector<std::string> tokenize_words(std::string_view text);

// Unit-cost Levenshtein distance over code points or whitespace tokens.
std::size_t edit_distance(std::string_view a, std::string_view b, Granularity granularity);

template <typename Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
  const Seq& shorter = a.size() <= b.size() ? a : b;
  const Seq& longer = a.size() <= b.size() ? b : a;
  std::vector<std::size_t> row(shorter.size() + 1);
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = i;
  for (std::size_t j = 1; j <= longer.size(); ++j) {
    std::size_t diagonal = row[0];
    row[0] = j;
    for (std::size_t i = 1; i <= shorter.size(); ++i) {
      const std::size_t above = row[i];
      const std::size_t substitute = diagonal + (shorter[i - 1] == longer[j - 1] ? 0 : 1);
      row[i] = std::min({row[i - 1] + 1, above + 1, substitute});
      diagonal = above;
    }
  }
  return row[shorter.size()];
}

enum class HunkOp { equal, insert, remove };

std::string_view to_string(HunkOp op);  // "equal" | "insert" | "delete"

struct DiffHunk {
  HunkOp op = HunkOp::equal;
  std::string text;

  bool operator==(const DiffHunk&) const = default;
};

// Character-level diff (Myers, linear-space bisection). Adjacent hunks never
// share an op; within a change region deletions precede insertions.
std::vector<DiffHunk> compute_diff(std::string_view a, std::string_view b);

// Rebuild either side from a hunk list: equal+remove gives the old text,
// equal+insert gives the new text.
std::string reconstruct_old(const std::vector<DiffHunk>& hunks);
std::string reconstruct_new(const std::vector<DiffHunk>& hunks);

}  // namespace cmda
