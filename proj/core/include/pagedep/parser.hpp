#pragma once

#include <array>
#include <span>
#include <vector>

#include "pagedep/document.hpp"
#include "pagedep/tensor.hpp"

namespace pagedep {

/// Arc-eager transition. RIGHT_ARC carries any of the five labels (root only
/// from the artificial root); LEFT_ARC carries the four non-root labels.
struct Transition {
  enum class Kind { Shift, Reduce, LeftArc, RightArc };
  Kind kind = Kind::Shift;
  ArcLabel label = ArcLabel::Next;  // meaningful for arc transitions only

  friend bool operator==(const Transition&, const Transition&) = default;
};

std::string transition_name(const Transition& t);

/// Fixed action inventory and tie-break order:
/// SHIFT, REDUCE, LEFT_ARC(atch,copy,back,next), RIGHT_ARC(atch,copy,back,next,root).
inline constexpr int kNumActions = 11;
int action_index(const Transition& t);
Transition action_from_index(int index);

/// Arc-eager configuration: stack (bottom holds page 0), buffer of upcoming
/// pages in ascending order, and the partial arc set.
class ParserState {
 public:
  static ParserState initial(int n_pages);

  int n_pages() const { return n_; }
  bool buffer_empty() const { return buffer_front_ > n_; }
  int buffer_front() const { return buffer_front_; }
  int buffer_size() const { return n_ - buffer_front_ + 1; }
  const std::vector<int>& stack() const { return stack_; }
  int stack_top() const { return stack_.back(); }
  const std::vector<Arc>& arcs() const { return arcs_; }
  bool has_head(int page) const { return head_[static_cast<size_t>(page)] >= 0; }
  int head_of(int page) const { return head_[static_cast<size_t>(page)]; }
  bool terminal() const;

  std::array<bool, kNumActions> valid_mask() const;
  std::vector<Transition> valid_transitions() const;

  /// Applies a valid transition; throws std::invalid_argument naming the
  /// violated precondition otherwise.
  void apply(const Transition& t);

  /// Feature pages for the 9 scorer slots: s0 s1 s2 b0 b1 b2,
  /// leftmost_child(s0), rightmost_child(s0), leftmost_child(b0).
  /// 0 denotes the root slot, -1 an absent slot.
  std::array<int, 9> feature_slots() const;

 private:
  int n_ = 0;
  std::vector<int> stack_;
  int buffer_front_ = 1;
  std::vector<Arc> arcs_;
  std::vector<int> head_;  // -1 where unassigned
  std::vector<int> leftmost_child_, rightmost_child_;
};

/// Raised by the oracle on non-projective gold trees.
class NonProjectiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Canonical next action for a state under a gold tree (static arc-eager
/// oracle). `gold_heads`/`gold_labels` are indexed by page (entry 0 unused).
Transition static_oracle(const ParserState& state, const std::vector<int>& gold_heads,
                         const std::vector<ArcLabel>& gold_labels);
Transition static_oracle(const ParserState& state, const PageDependencyTree& gold);

struct OracleStep {
  std::array<int, 9> slots;
  std::array<bool, kNumActions> valid;
  int action;
};

/// Replays the oracle from the initial state until the buffer empties.
/// Throws NonProjectiveError when the gold tree is not projective.
std::vector<OracleStep> oracle_sequence(const PageDependencyTree& gold);

/// Tree reconstructed by applying `actions` from the initial state, with the
/// root fallback applied to any page left headless.
PageDependencyTree replay_actions(int n_pages, std::span<const Transition> actions);

struct ParserNetConfig {
  int embedding_dim = 96;
  int hidden = 64;
  int maxout_pieces = 2;
  static constexpr int feature_count = 9;
};

/// State scorer: concatenated slot embeddings -> lower linear -> maxout ->
/// upper linear -> one score per action. Absent slots contribute zero
/// vectors; the root slot uses a learned embedding.
struct ParserNet {
  ParserNetConfig config;
  ad::TensorPtr lower_w;  // [9*d, hidden*pieces]
  ad::TensorPtr lower_b;  // [hidden*pieces]
  ad::TensorPtr upper_w;  // [hidden, 11]
  ad::TensorPtr upper_b;  // [11]
  ad::TensorPtr root_embedding;  // [d]

  static ParserNet init(const ParserNetConfig& config, Rng& rng);
  std::vector<std::pair<std::string, ad::TensorPtr>> named_parameters() const;
};

/// Scores one state from raw contextual embeddings (inference path, no tape).
std::array<double, kNumActions> score_transitions(const ParserNet& net,
                                                  std::span<const double> contextual,
                                                  const std::array<int, 9>& slots);

/// Batched taped scoring of precomputed states for training:
/// returns [n_states, 11] logits.
ad::TensorPtr score_states(ad::Tape& tape, const ParserNet& net, const ad::TensorPtr& contextual,
                           std::span<const OracleStep> steps);

/// Greedy decoding with validity masking; ties break towards the lowest
/// action index. The output always passes validate_tree; pages left without
/// a head attach to the root.
PageDependencyTree greedy_decode(const ParserNet& net, std::span<const double> contextual,
                                 int n_pages);

}  // namespace pagedep
