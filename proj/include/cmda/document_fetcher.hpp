#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "cmda/domain.hpp"
#include "cmda/storage.hpp"

namespace cmda::fetch {

struct FetchedDocument {
  std::string title;
  std::string authors;
  std::string abstract_text;
  std::string full_text;
};

class DocumentFetcher {
 public:
  virtual ~DocumentFetcher() = default;
  virtual std::string name() const = 0;
  virtual std::optional<FetchedDocument> fetch(const PaperRecord& paper) = 0;
};

// In-memory table keyed by paper id or source url.
class StubFetcher : public DocumentFetcher {
 public:
  void add(std::string key, FetchedDocument doc);
  std::string name() const override { return "stub"; }
  std::optional<FetchedDocument> fetch(const PaperRecord& paper) override;

 private:
  std::mutex mu_;
  std::map<std::string, FetchedDocument> docs_;
};

// Reads <dir>/<paper id>.json ({title, authors, abstract, full_text}) or
// <dir>/<paper id>.txt (full text only).
class DirectoryFetcher : public DocumentFetcher {
 public:
  explicit DirectoryFetcher(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string name() const override { return "directory"; }
  std::optional<FetchedDocument> fetch(const PaperRecord& paper) override;

 private:
  std::filesystem::path dir_;
};

// Parses the paper JSON format used by DirectoryFetcher and the harness.
PaperRecord parse_paper_file(const Json& j);

struct FetchResult {
  PaperRecord paper;
  bool found = false;
};

// Fills in the stored paper from the fetcher and writes one api_logs row.
// Throws Error{not_found} for an unknown paper id, or when neither the fetcher
// nor the stored record has full text.
FetchResult fetch_paper_content(Store& store, DocumentFetcher& fetcher, const std::string& paper_id,
                                const std::optional<std::string>& task_id = std::nullopt);

}  // namespace cmda::fetch
