#include <doctest.h>

#include "cmda/prompts.hpp"

using namespace cmda;

TEST_SUITE("prompts") {
  TEST_CASE("render substitutes once, left to right") {
    auto out = prompts::render("Hello {name}, {missing} {name}!", {{"name", "{name}"}});
    CHECK(out == "Hello {name}, {missing} {name}!");
    CHECK(prompts::render("{a}{b}", {{"a", "1"}, {"b", "2"}}) == "12");
    CHECK(prompts::render("open { brace", {}) == "open { brace");
  }

  TEST_CASE("templates carry their placeholders") {
    auto g = prompts::generation_template();
    CHECK(g.find("{knowledge_context}") != std::string_view::npos);
    CHECK(g.find("{paper_full_text}") != std::string_view::npos);
    auto e = prompts::extraction_template();
    for (auto key : {"domain_terminology_evolution", "methodological_refinements", "conceptual_depth_changes",
                     "{existing_knowledge}", "{final_question}"}) {
      CHECK(e.find(key) != std::string_view::npos);
    }
    CHECK(prompts::regeneration_template().find("{user_prompt}") != std::string_view::npos);
  }

  TEST_CASE("code fences are stripped") {
    CHECK(prompts::strip_code_fence("```json\n[1]\n```") == "[1]");
    CHECK(prompts::strip_code_fence("```\n[]\n```\n") == "[]");
    CHECK(prompts::strip_code_fence("  [2]  ") == "[2]");
    CHECK(prompts::strip_code_fence("no fence") == "no fence");
  }
}
