#include "pagedep/document.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace pagedep {

std::string_view to_string(ArcLabel label) {
  switch (label) {
    case ArcLabel::Atch: return "atch";
    case ArcLabel::Copy: return "copy";
    case ArcLabel::Back: return "back";
    case ArcLabel::Next: return "next";
    case ArcLabel::Root: return "root";
  }
  return "?";
}

std::optional<ArcLabel> arc_label_from_string(std::string_view s) {
  for (ArcLabel l : kArcLabels)
    if (to_string(l) == s) return l;
  return std::nullopt;
}

std::string_view to_string(SegTag tag) {
  switch (tag) {
    case SegTag::Head: return "HEAD";
    case SegTag::Inter: return "INTER";
    case SegTag::Empty: return "EMPTY";
  }
  return "?";
}

std::optional<SegTag> seg_tag_from_string(std::string_view s) {
  for (SegTag t : kSegTags)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

std::optional<Arc> PageDependencyTree::incoming(int dependent) const {
  std::optional<Arc> found;
  for (const Arc& a : arcs) {
    if (a.dependent != dependent) continue;
    if (found) return std::nullopt;
    found = a;
  }
  return found;
}

std::vector<int> PageDependencyTree::head_vector() const {
  std::vector<int> heads(static_cast<size_t>(n_pages) + 1, -1);
  std::vector<int> count(static_cast<size_t>(n_pages) + 1, 0);
  for (const Arc& a : arcs) {
    if (a.dependent >= 1 && a.dependent <= n_pages) {
      heads[static_cast<size_t>(a.dependent)] = a.head;
      ++count[static_cast<size_t>(a.dependent)];
    }
  }
  for (int p = 1; p <= n_pages; ++p)
    if (count[static_cast<size_t>(p)] != 1) heads[static_cast<size_t>(p)] = -1;
  return heads;
}

std::string_view to_string(TreeViolation::Code code) {
  using Code = TreeViolation::Code;
  switch (code) {
    case Code::MissingHead: return "constraint 3 (missing head)";
    case Code::ArcIntoRoot: return "constraint 4 (arc into root)";
    case Code::DuplicateLabel: return "constraint 5 (duplicate label on pair)";
    case Code::MultipleHeads: return "constraint 6 (multiple heads)";
    case Code::Cycle: return "acyclicity";
    case Code::Disconnected: return "connectivity";
    case Code::RootLabelMisuse: return "root label iff head 0";
  }
  return "?";
}

ValidationResult validate_tree(const PageDependencyTree& tree) {
  if (tree.n_pages < 0) throw StructuralError("negative page count");
  for (const Arc& a : tree.arcs) {
    if (a.head < 0 || a.head > tree.n_pages || a.dependent < 0 || a.dependent > tree.n_pages) {
      std::ostringstream os;
      os << "arc (" << a.head << "," << to_string(a.label) << "," << a.dependent
         << ") references a page outside [0," << tree.n_pages << "]";
      throw StructuralError(os.str());
    }
  }

  ValidationResult result;
  auto add = [&](TreeViolation::Code code, std::string detail) {
    result.violations.push_back({code, std::move(detail)});
  };

  // Incoming-arc bookkeeping per dependent.
  std::vector<int> in_count(static_cast<size_t>(tree.n_pages) + 1, 0);
  std::map<std::pair<int, int>, std::set<ArcLabel>> pair_labels;
  for (const Arc& a : tree.arcs) {
    if (a.dependent == 0) {
      std::ostringstream os;
      os << "arc from " << a.head << " into page 0";
      add(TreeViolation::Code::ArcIntoRoot, os.str());
      continue;
    }
    ++in_count[static_cast<size_t>(a.dependent)];
    pair_labels[{a.head, a.dependent}].insert(a.label);
    if ((a.label == ArcLabel::Root) != (a.head == 0)) {
      std::ostringstream os;
      os << "arc (" << a.head << "," << to_string(a.label) << "," << a.dependent << ")";
      add(TreeViolation::Code::RootLabelMisuse, os.str());
    }
  }
  for (const auto& [pair, labels] : pair_labels) {
    if (labels.size() > 1) {
      std::ostringstream os;
      os << labels.size() << " labels on pair (" << pair.first << "," << pair.second << ")";
      add(TreeViolation::Code::DuplicateLabel, os.str());
    }
  }
  for (int p = 1; p <= tree.n_pages; ++p) {
    int c = in_count[static_cast<size_t>(p)];
    if (c == 0) {
      add(TreeViolation::Code::MissingHead, "page " + std::to_string(p) + " has no head");
    } else if (c > 1) {
      std::ostringstream os;
      os << "page " << p << " has " << c << " incoming arcs";
      add(TreeViolation::Code::MultipleHeads, os.str());
    }
  }

  // Reachability from the root over head->dependent edges.
  std::vector<std::vector<int>> children(static_cast<size_t>(tree.n_pages) + 1);
  for (const Arc& a : tree.arcs)
    if (a.dependent != 0) children[static_cast<size_t>(a.head)].push_back(a.dependent);
  std::vector<char> reached(static_cast<size_t>(tree.n_pages) + 1, 0);
  std::vector<int> frontier = {0};
  reached[0] = 1;
  while (!frontier.empty()) {
    int node = frontier.back();
    frontier.pop_back();
    for (int child : children[static_cast<size_t>(node)]) {
      if (!reached[static_cast<size_t>(child)]) {
        reached[static_cast<size_t>(child)] = 1;
        frontier.push_back(child);
      }
    }
  }
  std::vector<int> unreachable;
  for (int p = 1; p <= tree.n_pages; ++p)
    if (!reached[static_cast<size_t>(p)]) unreachable.push_back(p);

  // Cycle detection over head->dependent edges. A cycle can coexist with full
  // reachability when a page has several heads, so this is not gated on the
  // reachability result.
  {
    std::vector<char> state(static_cast<size_t>(tree.n_pages) + 1, 0);  // 0 new, 1 open, 2 done
    auto dfs = [&](auto&& self, int node) -> bool {
      state[static_cast<size_t>(node)] = 1;
      for (int next : children[static_cast<size_t>(node)]) {
        if (state[static_cast<size_t>(next)] == 1) return true;
        if (state[static_cast<size_t>(next)] == 0 && self(self, next)) return true;
      }
      state[static_cast<size_t>(node)] = 2;
      return false;
    };
    bool any_cycle = false;
    for (int p = 0; p <= tree.n_pages && !any_cycle; ++p)
      if (state[static_cast<size_t>(p)] == 0) any_cycle = dfs(dfs, p);
    if (any_cycle) add(TreeViolation::Code::Cycle, "arc set contains a cycle");
  }
  if (!unreachable.empty()) {
    std::ostringstream os;
    os << unreachable.size() << " page(s) unreachable from root";
    add(TreeViolation::Code::Disconnected, os.str());
  }

  result.ok = result.violations.empty();
  return result;
}

bool is_projective(const PageDependencyTree& tree) {
  ValidationResult v = validate_tree(tree);
  if (!v.ok) throw std::invalid_argument("is_projective: tree fails validation");
  for (size_t i = 0; i < tree.arcs.size(); ++i) {
    int a_lo = std::min(tree.arcs[i].head, tree.arcs[i].dependent);
    int a_hi = std::max(tree.arcs[i].head, tree.arcs[i].dependent);
    for (size_t j = i + 1; j < tree.arcs.size(); ++j) {
      int b_lo = std::min(tree.arcs[j].head, tree.arcs[j].dependent);
      int b_hi = std::max(tree.arcs[j].head, tree.arcs[j].dependent);
      if ((a_lo < b_lo && b_lo < a_hi && a_hi < b_hi) ||
          (b_lo < a_lo && a_lo < b_hi && b_hi < a_hi)) {
        return false;
      }
    }
  }
  return true;
}

std::vector<SegTag> derive_seg_tags(const PageDependencyTree& tree,
                                    const std::set<int>& empty_pages) {
  ValidationResult v = validate_tree(tree);
  if (!v.ok) throw std::invalid_argument("derive_seg_tags: tree fails validation");
  for (int p : empty_pages)
    if (p < 1 || p > tree.n_pages)
      throw std::invalid_argument("derive_seg_tags: empty page " + std::to_string(p) +
                                  " out of range");
  std::vector<SegTag> tags(static_cast<size_t>(tree.n_pages), SegTag::Inter);
  for (const Arc& a : tree.arcs) {
    SegTag tag = (a.label == ArcLabel::Next || a.label == ArcLabel::Back) ? SegTag::Inter
                                                                          : SegTag::Head;
    tags[static_cast<size_t>(a.dependent - 1)] = tag;
  }
  for (int p : empty_pages) tags[static_cast<size_t>(p - 1)] = SegTag::Empty;
  return tags;
}

std::vector<std::string> document_violations(const AnnotatedDocument& doc) {
  std::vector<std::string> problems;
  size_t n = doc.pages.size();
  if (doc.tree.n_pages != static_cast<int>(n))
    problems.push_back("tree covers " + std::to_string(doc.tree.n_pages) + " pages, document has " +
                       std::to_string(n));
  if (doc.seg_tags.size() != n) problems.push_back("seg_tags length mismatch");
  if (doc.classes.size() != n) problems.push_back("classes length mismatch");
  for (size_t i = 0; i < doc.pages.size(); ++i) {
    if (doc.pages[i].index != static_cast<int>(i) + 1)
      problems.push_back("page " + std::to_string(i + 1) + " carries index " +
                         std::to_string(doc.pages[i].index));
  }
  for (size_t i = 0; i < doc.classes.size(); ++i)
    if (doc.classes[i] < 0)
      problems.push_back("page " + std::to_string(i + 1) + " has negative class");
  if (!problems.empty()) return problems;

  try {
    ValidationResult v = validate_tree(doc.tree);
    if (!v.ok) {
      for (const TreeViolation& tv : v.violations)
        problems.push_back(std::string(to_string(tv.code)) + ": " + tv.detail);
      return problems;
    }
  } catch (const StructuralError& e) {
    problems.push_back(std::string("structural: ") + e.what());
    return problems;
  }

  for (const Arc& a : doc.tree.arcs) {
    SegTag tag = doc.seg_tags[static_cast<size_t>(a.dependent - 1)];
    bool continuation = a.label == ArcLabel::Next || a.label == ArcLabel::Back;
    if (continuation && tag == SegTag::Head)
      problems.push_back("page " + std::to_string(a.dependent) +
                         " has continuation label but HEAD tag");
    if (!continuation && tag != SegTag::Head)
      problems.push_back("page " + std::to_string(a.dependent) + " has label " +
                         std::string(to_string(a.label)) + " but tag " +
                         std::string(to_string(tag)));
  }
  return problems;
}

}  // namespace pagedep
