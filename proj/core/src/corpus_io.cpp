#include "pagedep/corpus_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pagedep {

using nlohmann::json;

namespace {

json to_json(const AnnotatedDocument& doc) {
  json pages = json::array();
  for (const Page& p : doc.pages) pages.push_back({{"tokens", p.tokens}, {"visual", p.visual}});
  json seg = json::array();
  for (SegTag t : doc.seg_tags) seg.push_back(std::string(to_string(t)));
  std::vector<int> heads(doc.pages.size(), -1);
  std::vector<std::string> labels(doc.pages.size());
  for (const Arc& a : doc.tree.arcs) {
    heads[static_cast<size_t>(a.dependent - 1)] = a.head;
    labels[static_cast<size_t>(a.dependent - 1)] = std::string(to_string(a.label));
  }
  return json{{"id", doc.id},     {"pages", pages},   {"seg_tags", seg},
              {"heads", heads},   {"labels", labels}, {"classes", doc.classes}};
}

[[noreturn]] void fail(size_t line, const std::string& what) {
  throw CorpusError("line " + std::to_string(line) + ": " + what);
}

template <class T>
T get_field(const json& record, const char* field, size_t line) {
  auto it = record.find(field);
  if (it == record.end()) fail(line, std::string("missing field '") + field + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(line, std::string("field '") + field + "' has the wrong type");
  }
}

AnnotatedDocument document_from_json(const json& record, size_t line) {
  if (!record.is_object()) fail(line, "record is not an object");
  AnnotatedDocument doc;
  doc.id = get_field<std::string>(record, "id", line);

  auto pages_it = record.find("pages");
  if (pages_it == record.end() || !pages_it->is_array()) fail(line, "missing field 'pages'");
  int index = 1;
  for (const json& p : *pages_it) {
    if (!p.is_object()) fail(line, "field 'pages' contains a non-object entry");
    Page page;
    page.index = index++;
    page.tokens = get_field<std::vector<std::string>>(p, "tokens", line);
    page.visual = get_field<std::vector<double>>(p, "visual", line);
    doc.pages.push_back(std::move(page));
  }

  auto tags = get_field<std::vector<std::string>>(record, "seg_tags", line);
  for (const std::string& t : tags) {
    auto tag = seg_tag_from_string(t);
    if (!tag) fail(line, "field 'seg_tags' holds unknown tag '" + t + "'");
    doc.seg_tags.push_back(*tag);
  }

  auto heads = get_field<std::vector<int>>(record, "heads", line);
  auto labels = get_field<std::vector<std::string>>(record, "labels", line);
  if (heads.size() != labels.size()) fail(line, "fields 'heads' and 'labels' disagree in length");
  doc.tree.n_pages = static_cast<int>(doc.pages.size());
  for (size_t i = 0; i < heads.size(); ++i) {
    auto label = arc_label_from_string(labels[i]);
    if (!label) fail(line, "field 'labels' holds unknown label '" + labels[i] + "'");
    doc.tree.arcs.push_back({heads[i], *label, static_cast<int>(i) + 1});
  }

  doc.classes = get_field<std::vector<int>>(record, "classes", line);
  return doc;
}

void check_document(const AnnotatedDocument& doc, size_t line_for_errors, bool writing) {
  std::vector<std::string> problems;
  try {
    problems = document_violations(doc);
  } catch (const StructuralError& e) {
    problems.push_back(e.what());
  }
  if (problems.empty()) return;
  std::ostringstream os;
  if (writing) {
    os << "document '" << doc.id << "' fails invariants:";
  } else {
    os << "line " << line_for_errors << ": document '" << doc.id << "' fails invariants:";
  }
  for (const std::string& p : problems) os << "\n  - " << p;
  throw CorpusError(os.str());
}

}  // namespace

void write_corpus(std::ostream& out, std::span<const AnnotatedDocument> docs) {
  for (const AnnotatedDocument& doc : docs) {
    check_document(doc, 0, /*writing=*/true);
    out << to_json(doc).dump() << '\n';
  }
  if (!out) throw CorpusError("write failed");
}

void write_corpus(const std::filesystem::path& path, std::span<const AnnotatedDocument> docs) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot open '" + path.string() + "' for writing");
  write_corpus(out, docs);
}

std::vector<AnnotatedDocument> read_corpus(std::istream& in) {
  std::vector<AnnotatedDocument> docs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded()) fail(line_no, "not valid JSON");
    AnnotatedDocument doc = document_from_json(record, line_no);
    try {
      check_document(doc, line_no, /*writing=*/false);
    } catch (const StructuralError& e) {
      fail(line_no, e.what());
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<AnnotatedDocument> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open '" + path.string() + "' for reading");
  return read_corpus(in);
}

std::vector<PageStream> read_page_streams(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open '" + path.string() + "' for reading");
  std::vector<PageStream> streams;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded()) fail(line_no, "not valid JSON");
    if (!record.is_object()) fail(line_no, "record is not an object");
    PageStream stream;
    stream.id = get_field<std::string>(record, "id", line_no);
    auto pages_it = record.find("pages");
    if (pages_it == record.end() || !pages_it->is_array()) fail(line_no, "missing field 'pages'");
    int index = 1;
    for (const json& p : *pages_it) {
      Page page;
      page.index = index++;
      page.tokens = get_field<std::vector<std::string>>(p, "tokens", line_no);
      page.visual = get_field<std::vector<double>>(p, "visual", line_no);
      stream.pages.push_back(std::move(page));
    }
    streams.push_back(std::move(stream));
  }
  return streams;
}

void write_conllp(std::ostream& out, std::span<const DocumentPrediction> preds) {
  bool first = true;
  for (const DocumentPrediction& pred : preds) {
    if (!first) out << '\n';
    first = false;
    out << "#id:" << pred.id << '\n';
    std::vector<int> heads(pred.seg_tags.size(), 0);
    std::vector<std::string> labels(pred.seg_tags.size(), "root");
    for (const Arc& a : pred.tree.arcs) {
      heads[static_cast<size_t>(a.dependent - 1)] = a.head;
      labels[static_cast<size_t>(a.dependent - 1)] = std::string(to_string(a.label));
    }
    for (size_t i = 0; i < pred.seg_tags.size(); ++i) {
      out << (i + 1) << '\t' << to_string(pred.seg_tags[i]) << '\t' << heads[i] << '\t'
          << labels[i] << '\t' << pred.classes[i] << '\n';
    }
  }
  if (!out) throw CorpusError("write failed");
}

void write_conllp(const std::filesystem::path& path, std::span<const DocumentPrediction> preds) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot open '" + path.string() + "' for writing");
  write_conllp(out, preds);
}

std::vector<DocumentPrediction> read_conllp(std::istream& in) {
  std::vector<DocumentPrediction> preds;
  DocumentPrediction current;
  bool in_document = false;
  std::string line;
  size_t line_no = 0;
  auto flush = [&] {
    if (!in_document) return;
    current.tree.n_pages = static_cast<int>(current.seg_tags.size());
    preds.push_back(std::move(current));
    current = {};
    in_document = false;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("#id:", 0) == 0) {
      flush();
      in_document = true;
      current.id = line.substr(4);
      continue;
    }
    if (!in_document) fail(line_no, "page line before any #id: comment");
    std::istringstream fields(line);
    int index = 0, head = 0, cls = 0;
    std::string seg, label;
    if (!(fields >> index >> seg >> head >> label >> cls))
      fail(line_no, "expected INDEX SEG HEAD DEPREL CLASS");
    if (index != static_cast<int>(current.seg_tags.size()) + 1)
      fail(line_no, "page index " + std::to_string(index) + " out of order");
    auto tag = seg_tag_from_string(seg);
    if (!tag) fail(line_no, "unknown seg tag '" + seg + "'");
    auto arc_label = arc_label_from_string(label);
    if (!arc_label) fail(line_no, "unknown arc label '" + label + "'");
    current.seg_tags.push_back(*tag);
    current.tree.arcs.push_back({head, *arc_label, index});
    current.classes.push_back(cls);
  }
  flush();
  return preds;
}

std::vector<DocumentPrediction> read_conllp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open '" + path.string() + "' for reading");
  return read_conllp(in);
}

}  // namespace pagedep
