#include "cmda/edit_distance.hpp"

#include <algorithm>

namespace cmda {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

using Ops = std::vector<std::pair<HunkOp, std::u32string>>;

void push_op(Ops& out, HunkOp op, std::u32string_view text) {
  if (text.empty()) return;
  if (!out.empty() && out.back().first == op) {
    out.back().second.append(text);
  } else {
    out.emplace_back(op, std::u32string(text));
  }
}

void diff_main(std::u32string_view a, std::u32string_view b, Ops& out);

void diff_split(std::u32string_view a, std::u32string_view b, std::size_t x, std::size_t y, Ops& out) {
  diff_main(a.substr(0, x), b.substr(0, y), out);
  diff_main(a.substr(x), b.substr(y), out);
}

// Finds the middle snake of the edit graph and recurses on both halves.
void diff_bisect(std::u32string_view a, std::u32string_view b, Ops& out) {
  const long n = static_cast<long>(a.size());
  const long m = static_cast<long>(b.size());
  const long max_d = (n + m + 1) / 2;
  const long v_offset = max_d;
  const long v_length = 2 * max_d + 2;
  std::vector<long> v1(v_length, -1);
  std::vector<long> v2(v_length, -1);
  v1[v_offset + 1] = 0;
  v2[v_offset + 1] = 0;
  const long delta = n - m;
  const bool front = (delta % 2 != 0);
  long k1start = 0, k1end = 0, k2start = 0, k2end = 0;

  for (long d = 0; d < max_d; ++d) {
    for (long k1 = -d + k1start; k1 <= d - k1end; k1 += 2) {
      const long k1_offset = v_offset + k1;
      long x1;
      if (k1 == -d || (k1 != d && v1[k1_offset - 1] < v1[k1_offset + 1])) {
        x1 = v1[k1_offset + 1];
      } else {
        x1 = v1[k1_offset - 1] + 1;
      }
      long y1 = x1 - k1;
      while (x1 < n && y1 < m && a[x1] == b[y1]) {
        ++x1;
        ++y1;
      }
      v1[k1_offset] = x1;
      if (x1 > n) {
        k1end += 2;
      } else if (y1 > m) {
        k1start += 2;
      } else if (front) {
        const long k2_offset = v_offset + delta - k1;
        if (k2_offset >= 0 && k2_offset < v_length && v2[k2_offset] != -1) {
          const long x2 = n - v2[k2_offset];
          if (x1 >= x2) {
            diff_split(a, b, static_cast<std::size_t>(x1), static_cast<std::size_t>(y1), out);
            return;
          }
        }
      }
    }
    for (long k2 = -d + k2start; k2 <= d - k2end; k2 += 2) {
      const long k2_offset = v_offset + k2;
      long x2;
      if (k2 == -d || (k2 != d && v2[k2_offset - 1] < v2[k2_offset + 1])) {
        x2 = v2[k2_offset + 1];
      } else {
        x2 = v2[k2_offset - 1] + 1;
      }
      long y2 = x2 - k2;
      while (x2 < n && y2 < m && a[n - x2 - 1] == b[m - y2 - 1]) {
        ++x2;
        ++y2;
      }
      v2[k2_offset] = x2;
      if (x2 > n) {
        k2end += 2;
      } else if (y2 > m) {
        k2start += 2;
      } else if (!front) {
        const long k1_offset = v_offset + delta - k2;
        if (k1_offset >= 0 && k1_offset < v_length && v1[k1_offset] != -1) {
          const long x1 = v1[k1_offset];
          const long y1 = v_offset + x1 - k1_offset;
          if (x1 >= n - x2) {
            diff_split(a, b, static_cast<std::size_t>(x1), static_cast<std::size_t>(y1), out);
            return;
          }
        }
      }
    }
  }
  push_op(out, HunkOp::remove, a);
  push_op(out, HunkOp::insert, b);
}

void diff_main(std::u32string_view a, std::u32string_view b, Ops& out) {
  if (a == b) {
    push_op(out, HunkOp::equal, a);
    return;
  }
  std::size_t prefix = 0;
  while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
  std::size_t suffix = 0;
  while (suffix < a.size() - prefix && suffix < b.size() - prefix &&
         a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix]) {
    ++suffix;
  }
  push_op(out, HunkOp::equal, a.substr(0, prefix));
  const auto mid_a = a.substr(prefix, a.size() - prefix - suffix);
  const auto mid_b = b.substr(prefix, b.size() - prefix - suffix);
  if (mid_a.empty()) {
    push_op(out, HunkOp::insert, mid_b);
  } else if (mid_b.empty()) {
    push_op(out, HunkOp::remove, mid_a);
  } else {
    diff_bisect(mid_a, mid_b, out);
  }
  push_op(out, HunkOp::equal, a.substr(a.size() - suffix));
}

// Coalesces each run of non-equal ops into at most one delete followed by one insert.
Ops normalize(const Ops& raw) {
  Ops out;
  std::u32string removed, inserted;
  auto flush = [&] {
    push_op(out, HunkOp::remove, removed);
    push_op(out, HunkOp::insert, inserted);
    removed.clear();
    inserted.clear();
  };
  for (const auto& [op, text] : raw) {
    switch (op) {
      case HunkOp::remove: removed += text; break;
      case HunkOp::insert: inserted += text; break;
      case HunkOp::equal:
        flush();
        push_op(out, HunkOp::equal, text);
        break;
    }
  }
  flush();
  return out;
}

}  // namespace

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      extra = 1;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      extra = 2;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      extra = 3;
      cp = lead & 0x07;
    } else {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    bool valid = i + static_cast<std::size_t>(extra) < text.size();
    for (int k = 1; valid && k <= extra; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0) != 0x80) {
        valid = false;
      } else {
        cp = (cp << 6) | (cont & 0x3F);
      }
    }
    const bool overlong = (extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000);
    if (!valid || overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(extra) + 1;
  }
  return out;
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F ||
         c == 0x3000;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::u32string current;
  for (char32_t c : decode_utf8(text)) {
    if (is_unicode_space(c)) {
      if (!current.empty()) tokens.push_back(encode_utf8(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) tokens.push_back(encode_utf8(current));
  return tokens;
}

std::size_t edit_distance(std::string_view a, std::string_view b, Granularity granularity) {
  if (granularity == Granularity::words) {
    return levenshtein(tokenize_words(a), tokenize_words(b));
  }
  if (a == b) return 0;
  return levenshtein(decode_utf8(a), decode_utf8(b));
}

std::string_view to_string(HunkOp op) {
  switch (op) {
    case HunkOp::equal: return "equal";
    case HunkOp::insert: return "insert";
    case HunkOp::remove: return "delete";
  }
  return "equal";
}

std::vector<DiffHunk> compute_diff(std::string_view a, std::string_view b) {
  const auto ua = decode_utf8(a);
  const auto ub = decode_utf8(b);
  Ops raw;
  diff_main(ua, ub, raw);
  std::vector<DiffHunk> hunks;
  for (auto& [op, text] : normalize(raw)) hunks.push_back({op, encode_utf8(text)});
  return hunks;
}

std::string reconstruct_old(const std::vector<DiffHunk>& hunks) {
  std::string out;
  for (const auto& h : hunks) {
    if (h.op != HunkOp::insert) out += h.text;
  }
  return out;
}

std::string reconstruct_new(const std::vector<DiffHunk>& hunks) {
  std::string out;
  for (const auto& h : hunks) {
    if (h.op != HunkOp::remove) out += h.text;
  }
  return out;
}

}  // namespace cmda
