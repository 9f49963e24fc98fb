#pragma once

#include <array>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pagedep {

/// Relation type on a page dependency arc. `Root` is only legal on arcs
/// whose head is the artificial root page 0.
enum class ArcLabel { Atch, Copy, Back, Next, Root };

inline constexpr std::array<ArcLabel, 5> kArcLabels = {
    ArcLabel::Atch, ArcLabel::Copy, ArcLabel::Back, ArcLabel::Next, ArcLabel::Root};

std::string_view to_string(ArcLabel label);
std::optional<ArcLabel> arc_label_from_string(std::string_view s);

/// Page stream segmentation tag.
enum class SegTag { Head, Inter, Empty };

inline constexpr std::array<SegTag, 3> kSegTags = {SegTag::Head, SegTag::Inter, SegTag::Empty};

std::string_view to_string(SegTag tag);
std::optional<SegTag> seg_tag_from_string(std::string_view s);

/// One page of a stream. Text enters as a token sequence (OCR output
/// surrogate); visual content enters as a fixed-width feature vector in [0,1].
struct Page {
  int index = 1;  // 1-based position in the stream
  std::vector<std::string> tokens;
  std::vector<double> visual;
};

struct Arc {
  int head = 0;  // 0..N; 0 is the artificial root
  ArcLabel label = ArcLabel::Root;
  int dependent = 1;  // 1..N

  friend bool operator==(const Arc&, const Arc&) = default;
};

/// Labeled dependency tree over the pages 0..N of one stream, page 0 being
/// the artificial root. The arc set is stored as given; use validate_tree to
/// check the tree constraints.
struct PageDependencyTree {
  int n_pages = 0;
  std::vector<Arc> arcs;

  /// Incoming arc of `dependent`, or nullopt when none (or several) exist.
  std::optional<Arc> incoming(int dependent) const;

  /// head per page 1..N (index 0 unused, -1 where no unique head exists).
  std::vector<int> head_vector() const;

  friend bool operator==(const PageDependencyTree&, const PageDependencyTree&) = default;
};

/// Thrown when arcs reference pages outside [0, n_pages]; distinct from the
/// enumerable constraint violations below.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One violated tree constraint. Numbered codes follow the formalism's
/// constraint list; the remaining codes cover tree-shape requirements.
struct TreeViolation {
  enum class Code {
    MissingHead,      // constraint 3: some page has no incoming arc
    ArcIntoRoot,      // constraint 4: arc with dependent 0
    DuplicateLabel,   // constraint 5: two labels on one (head, dependent) pair
    MultipleHeads,    // constraint 6: two arcs into one dependent
    Cycle,            // arc set contains a cycle
    Disconnected,     // some page unreachable from the root
    RootLabelMisuse,  // label root iff head is 0, violated
  };
  Code code;
  std::string detail;
};

std::string_view to_string(TreeViolation::Code code);

struct ValidationResult {
  bool ok = false;
  std::vector<TreeViolation> violations;
};

/// Checks the tree constraints. Throws StructuralError when an arc references
/// an index outside [0, n_pages].
ValidationResult validate_tree(const PageDependencyTree& tree);

/// True iff no two arcs cross when drawn above the ordered pages 0..N.
/// Requires a valid tree; throws std::invalid_argument otherwise.
bool is_projective(const PageDependencyTree& tree);

/// Segmentation tags induced by the tree: EMPTY for listed pages, HEAD where
/// the incoming label is root/atch/copy, INTER otherwise.
std::vector<SegTag> derive_seg_tags(const PageDependencyTree& tree,
                                    const std::set<int>& empty_pages);

/// A fully annotated stream: pages, gold tree, segmentation tags and
/// per-page class indices.
struct AnnotatedDocument {
  std::string id;
  std::vector<Page> pages;
  PageDependencyTree tree;
  std::vector<SegTag> seg_tags;
  std::vector<int> classes;

  friend bool operator==(const AnnotatedDocument&, const AnnotatedDocument&) = default;
};

/// Invariant check for a document: length agreement, valid tree, classes
/// nonnegative, and tag/label consistency (next/back pages are INTER or
/// EMPTY; root/atch/copy pages are HEAD). Empty list means the document is
/// well formed.
std::vector<std::string> document_violations(const AnnotatedDocument& doc);

}  // namespace pagedep
