#include "cmda/document_fetcher.hpp"

#include <fstream>
#include <sstream>

#include "cmda/errors.hpp"

namespace cmda::fetch {

namespace {

std::optional<std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string str(const Json& j, const char* key) {
  auto it = j.find(key);
  return it != j.end() && it->is_string() ? it->get<std::string>() : std::string{};
}

}  // namespace

void StubFetcher::add(std::string key, FetchedDocument doc) {
  std::lock_guard lock(mu_);
  docs_[std::move(key)] = std::move(doc);
}

std::optional<FetchedDocument> StubFetcher::fetch(const PaperRecord& paper) {
  std::lock_guard lock(mu_);
  if (auto it = docs_.find(paper.id); it != docs_.end()) return it->second;
  if (paper.source_url) {
    if (auto it = docs_.find(*paper.source_url); it != docs_.end()) return it->second;
  }
  return std::nullopt;
}

PaperRecord parse_paper_file(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::validation_failed, "paper file must hold a JSON object");
  PaperRecord p;
  p.id = str(j, "id");
  p.title = str(j, "title");
  p.authors = str(j, "authors");
  p.abstract_text = str(j, "abstract");
  p.full_text = str(j, "full_text");
  if (auto url = str(j, "source_url"); !url.empty()) p.source_url = url;
  return p;
}

std::optional<FetchedDocument> DirectoryFetcher::fetch(const PaperRecord& paper) {
  if (auto text = read_file(dir_ / (paper.id + ".json"))) {
    auto j = Json::parse(*text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::validation_failed, "malformed paper file for '" + paper.id + "'");
    auto p = parse_paper_file(j);
    return FetchedDocument{p.title, p.authors, p.abstract_text, p.full_text};
  }
  if (auto text = read_file(dir_ / (paper.id + ".txt"))) return FetchedDocument{{}, {}, {}, *text};
  return std::nullopt;
}

FetchResult fetch_paper_content(Store& store, DocumentFetcher& fetcher, const std::string& paper_id,
                                const std::optional<std::string>& task_id) {
  auto paper = store.get<PaperRecord>(paper_id);
  if (!paper) throw Error(ErrorCode::not_found, "unknown paper '" + paper_id + "'", "paper_id");
  auto doc = fetcher.fetch(*paper);

  ApiLog log;
  log.id = store.next_id("apilog");
  log.task_id = task_id;
  log.search_terms = paper->source_url.value_or(paper->title.empty() ? paper->id : paper->title);
  log.papers_found = doc ? 1 : 0;
  log.created_at = store.now();
  store.put(log);

  if (doc) {
    if (!doc->title.empty()) paper->title = doc->title;
    if (!doc->authors.empty()) paper->authors = doc->authors;
    if (!doc->abstract_text.empty()) paper->abstract_text = doc->abstract_text;
    if (!doc->full_text.empty()) paper->full_text = doc->full_text;
  }
  // Text supplied at creation time is kept when no source has the document.
  if (paper->full_text.empty()) {
    throw Error(ErrorCode::not_found, "document for paper '" + paper_id + "' has no full text", "full_text");
  }
  store.put(*paper);
  return {*paper, doc.has_value()};
}

}  // namespace cmda::fetch
