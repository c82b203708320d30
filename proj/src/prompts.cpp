#include "cmda/prompts.hpp"

#include <cctype>

namespace cmda::prompts {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_marker_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::string render(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && is_marker_char(tmpl[j])) ++j;
      if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
        auto it = values.find(tmpl.substr(i + 1, j - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = j + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

std::string strip_code_fence(std::string_view raw) {
  auto body = trim(raw);
  if (body.substr(0, 3) == "```") {
    auto newline = body.find('\n');
    body = newline == std::string_view::npos ? std::string_view{} : body.substr(newline + 1);
    auto close = body.rfind("```");
    if (close != std::string_view::npos) body = body.substr(0, close);
    body = trim(body);
  }
  return std::string(body);
}

}  // namespace cmda::prompts
