#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pagedep/document.hpp"

namespace pagedep {

/// I/O or format error; message carries the line number and offending field
/// where applicable.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Line-delimited corpus: one JSON record per line with fields
/// id, pages (tokens + visual per page), seg_tags, heads, labels, classes.
/// Writing validates every document; reading re-validates and reports
/// violations with their line number. Round-trips are bit-exact.
void write_corpus(std::ostream& out, std::span<const AnnotatedDocument> docs);
void write_corpus(const std::filesystem::path& path, std::span<const AnnotatedDocument> docs);
std::vector<AnnotatedDocument> read_corpus(std::istream& in);
std::vector<AnnotatedDocument> read_corpus(const std::filesystem::path& path);

/// A stream of pages without annotations, as consumed by the parse command.
/// Accepts full corpus records too (annotations are ignored).
struct PageStream {
  std::string id;
  std::vector<Page> pages;
};
std::vector<PageStream> read_page_streams(const std::filesystem::path& path);

/// Predicted annotations for one stream.
struct DocumentPrediction {
  std::string id;
  std::vector<SegTag> seg_tags;
  PageDependencyTree tree;
  std::vector<int> classes;

  friend bool operator==(const DocumentPrediction&, const DocumentPrediction&) = default;
};

/// CoNLL-P prediction format: `#id:<docid>` comment line, then one
/// tab-separated line `INDEX SEG HEAD DEPREL CLASS` per page, documents
/// separated by a blank line.
void write_conllp(std::ostream& out, std::span<const DocumentPrediction> preds);
void write_conllp(const std::filesystem::path& path, std::span<const DocumentPrediction> preds);
std::vector<DocumentPrediction> read_conllp(std::istream& in);
std::vector<DocumentPrediction> read_conllp(const std::filesystem::path& path);

}  // namespace pagedep
