#pragma once

#include <map>
#include <string>
#include <string_view>

namespace cmda::prompts {

inline constexpr std::string_view kTemplateVersion = "v1";
inline constexpr std::string_view kDefaultDomain = "Visualization Literacy";

// Versioned templates shipped under resources/prompts/*.v1.txt.
std::string_view generation_template();
std::string_view extraction_template();
std::string_view regeneration_template();

// Single left-to-right pass replacing `{name}` markers. Substituted values are
// never rescanned, so braces inside paper text survive untouched; unknown
// markers are left as-is.
std::string render(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values);

// Strips a surrounding ``` / ```json fence and outer whitespace.
std::string strip_code_fence(std::string_view raw);

}  // namespace cmda::prompts
