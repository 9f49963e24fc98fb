#include "pagedep/parser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pagedep {

namespace {

constexpr std::array<ArcLabel, 4> kArcTransitionLabels = {ArcLabel::Atch, ArcLabel::Copy,
                                                          ArcLabel::Back, ArcLabel::Next};

int arc_label_offset(ArcLabel label) {
  for (int i = 0; i < 4; ++i)
    if (kArcTransitionLabels[static_cast<size_t>(i)] == label) return i;
  return -1;
}

}  // namespace

std::string transition_name(const Transition& t) {
  switch (t.kind) {
    case Transition::Kind::Shift: return "SHIFT";
    case Transition::Kind::Reduce: return "REDUCE";
    case Transition::Kind::LeftArc: return "LEFT_ARC(" + std::string(to_string(t.label)) + ")";
    case Transition::Kind::RightArc: return "RIGHT_ARC(" + std::string(to_string(t.label)) + ")";
  }
  return "?";
}

int action_index(const Transition& t) {
  switch (t.kind) {
    case Transition::Kind::Shift: return 0;
    case Transition::Kind::Reduce: return 1;
    case Transition::Kind::LeftArc: {
      int off = arc_label_offset(t.label);
      if (off < 0) throw std::invalid_argument("LEFT_ARC cannot carry label root");
      return 2 + off;
    }
    case Transition::Kind::RightArc:
      return t.label == ArcLabel::Root ? 10 : 6 + arc_label_offset(t.label);
  }
  throw std::invalid_argument("unknown transition kind");
}

Transition action_from_index(int index) {
  if (index == 0) return {Transition::Kind::Shift, ArcLabel::Next};
  if (index == 1) return {Transition::Kind::Reduce, ArcLabel::Next};
  if (index >= 2 && index <= 5)
    return {Transition::Kind::LeftArc, kArcTransitionLabels[static_cast<size_t>(index - 2)]};
  if (index >= 6 && index <= 9)
    return {Transition::Kind::RightArc, kArcTransitionLabels[static_cast<size_t>(index - 6)]};
  if (index == 10) return {Transition::Kind::RightArc, ArcLabel::Root};
  throw std::invalid_argument("action index " + std::to_string(index) + " outside [0,11)");
}

ParserState ParserState::initial(int n_pages) {
  if (n_pages < 1) throw std::invalid_argument("initial state needs n_pages >= 1");
  ParserState s;
  s.n_ = n_pages;
  s.stack_ = {0};
  s.buffer_front_ = 1;
  s.head_.assign(static_cast<size_t>(n_pages) + 1, -1);
  s.leftmost_child_.assign(static_cast<size_t>(n_pages) + 1, -1);
  s.rightmost_child_.assign(static_cast<size_t>(n_pages) + 1, -1);
  return s;
}

bool ParserState::terminal() const {
  auto mask = valid_mask();
  return std::none_of(mask.begin(), mask.end(), [](bool b) { return b; });
}

std::array<bool, kNumActions> ParserState::valid_mask() const {
  std::array<bool, kNumActions> mask{};
  bool have_buffer = !buffer_empty();
  int top = stack_top();
  mask[0] = have_buffer;                                     // SHIFT
  mask[1] = top != 0 && has_head(top);                       // REDUCE
  bool left_ok = have_buffer && top != 0 && !has_head(top);  // LEFT_ARC(*)
  for (int i = 2; i <= 5; ++i) mask[static_cast<size_t>(i)] = left_ok;
  bool right_ok = have_buffer && top != 0;  // RIGHT_ARC(non-root)
  for (int i = 6; i <= 9; ++i) mask[static_cast<size_t>(i)] = right_ok;
  mask[10] = have_buffer && top == 0;  // RIGHT_ARC(root)
  return mask;
}

std::vector<Transition> ParserState::valid_transitions() const {
  std::vector<Transition> out;
  auto mask = valid_mask();
  for (int i = 0; i < kNumActions; ++i)
    if (mask[static_cast<size_t>(i)]) out.push_back(action_from_index(i));
  return out;
}

void ParserState::apply(const Transition& t) {
  auto record_arc = [&](int head, ArcLabel label, int dependent) {
    arcs_.push_back({head, label, dependent});
    head_[static_cast<size_t>(dependent)] = head;
    int& lmc = leftmost_child_[static_cast<size_t>(head)];
    int& rmc = rightmost_child_[static_cast<size_t>(head)];
    if (lmc < 0 || dependent < lmc) lmc = dependent;
    if (rmc < 0 || dependent > rmc) rmc = dependent;
  };
  switch (t.kind) {
    case Transition::Kind::Shift:
      if (buffer_empty()) throw std::invalid_argument("SHIFT requires a nonempty buffer");
      stack_.push_back(buffer_front_++);
      return;
    case Transition::Kind::Reduce:
      if (stack_top() == 0) throw std::invalid_argument("REDUCE cannot pop the root");
      if (!has_head(stack_top()))
        throw std::invalid_argument("REDUCE requires the stack top to have a head");
      stack_.pop_back();
      return;
    case Transition::Kind::LeftArc:
      if (buffer_empty()) throw std::invalid_argument("LEFT_ARC requires a nonempty buffer");
      if (stack_top() == 0) throw std::invalid_argument("LEFT_ARC cannot attach the root");
      if (has_head(stack_top()))
        throw std::invalid_argument("LEFT_ARC requires a headless stack top");
      if (t.label == ArcLabel::Root)
        throw std::invalid_argument("LEFT_ARC cannot carry label root");
      record_arc(buffer_front_, t.label, stack_top());
      stack_.pop_back();
      return;
    case Transition::Kind::RightArc:
      if (buffer_empty()) throw std::invalid_argument("RIGHT_ARC requires a nonempty buffer");
      if ((t.label == ArcLabel::Root) != (stack_top() == 0))
        throw std::invalid_argument(t.label == ArcLabel::Root
                                        ? "RIGHT_ARC(root) requires the root on top"
                                        : "RIGHT_ARC(non-root) requires a non-root top");
      record_arc(stack_top(), t.label, buffer_front_);
      stack_.push_back(buffer_front_++);
      return;
  }
  throw std::invalid_argument("unknown transition kind");
}

std::array<int, 9> ParserState::feature_slots() const {
  std::array<int, 9> slots;
  slots.fill(-1);
  size_t depth = stack_.size();
  for (int i = 0; i < 3; ++i)
    if (depth > static_cast<size_t>(i)) slots[static_cast<size_t>(i)] = stack_[depth - 1 - i];
  for (int i = 0; i < 3; ++i)
    if (buffer_front_ + i <= n_) slots[static_cast<size_t>(3 + i)] = buffer_front_ + i;
  int s0 = stack_.back();
  slots[6] = leftmost_child_[static_cast<size_t>(s0)];
  slots[7] = rightmost_child_[static_cast<size_t>(s0)];
  if (!buffer_empty()) slots[8] = leftmost_child_[static_cast<size_t>(buffer_front_)];
  return slots;
}

Transition static_oracle(const ParserState& state, const std::vector<int>& gold_heads,
                         const std::vector<ArcLabel>& gold_labels) {
  if (state.buffer_empty())
    throw std::invalid_argument("static_oracle: buffer is empty, no action needed");
  int s0 = state.stack_top();
  int b0 = state.buffer_front();
  if (s0 != 0 && gold_heads[static_cast<size_t>(s0)] == b0)
    return {Transition::Kind::LeftArc, gold_labels[static_cast<size_t>(s0)]};
  if (gold_heads[static_cast<size_t>(b0)] == s0)
    return {Transition::Kind::RightArc, gold_labels[static_cast<size_t>(b0)]};
  if (s0 != 0 && state.has_head(s0)) {
    // REDUCE once a gold arc connects the buffer front below the stack top.
    const std::vector<int>& stack = state.stack();
    for (size_t i = 0; i + 1 < stack.size(); ++i) {
      int k = stack[i];
      if (gold_heads[static_cast<size_t>(b0)] == k ||
          (k != 0 && gold_heads[static_cast<size_t>(k)] == b0))
        return {Transition::Kind::Reduce, ArcLabel::Next};
    }
  }
  return {Transition::Kind::Shift, ArcLabel::Next};
}

Transition static_oracle(const ParserState& state, const PageDependencyTree& gold) {
  std::vector<int> heads(static_cast<size_t>(gold.n_pages) + 1, -1);
  std::vector<ArcLabel> labels(static_cast<size_t>(gold.n_pages) + 1, ArcLabel::Next);
  for (const Arc& a : gold.arcs) {
    heads[static_cast<size_t>(a.dependent)] = a.head;
    labels[static_cast<size_t>(a.dependent)] = a.label;
  }
  return static_oracle(state, heads, labels);
}

std::vector<OracleStep> oracle_sequence(const PageDependencyTree& gold) {
  if (!is_projective(gold))
    throw NonProjectiveError("non-projective gold tree, oracle undefined");
  std::vector<int> heads(static_cast<size_t>(gold.n_pages) + 1, -1);
  std::vector<ArcLabel> labels(static_cast<size_t>(gold.n_pages) + 1, ArcLabel::Next);
  for (const Arc& a : gold.arcs) {
    heads[static_cast<size_t>(a.dependent)] = a.head;
    labels[static_cast<size_t>(a.dependent)] = a.label;
  }
  std::vector<OracleStep> steps;
  ParserState state = ParserState::initial(gold.n_pages);
  while (!state.buffer_empty()) {
    Transition t = static_oracle(state, heads, labels);
    int action = action_index(t);
    auto mask = state.valid_mask();
    if (!mask[static_cast<size_t>(action)])
      throw std::logic_error("oracle chose invalid action " + transition_name(t));
    steps.push_back({state.feature_slots(), mask, action});
    state.apply(t);
  }
  return steps;
}

PageDependencyTree replay_actions(int n_pages, std::span<const Transition> actions) {
  ParserState state = ParserState::initial(n_pages);
  for (const Transition& t : actions) state.apply(t);
  PageDependencyTree tree;
  tree.n_pages = n_pages;
  tree.arcs = state.arcs();
  for (int p = 1; p <= n_pages; ++p)
    if (!state.has_head(p)) tree.arcs.push_back({0, ArcLabel::Root, p});
  std::sort(tree.arcs.begin(), tree.arcs.end(),
            [](const Arc& a, const Arc& b) { return a.dependent < b.dependent; });
  return tree;
}

ParserNet ParserNet::init(const ParserNetConfig& config, Rng& rng) {
  auto glorot = [&rng](int rows, int cols) {
    double bound = std::sqrt(6.0 / (rows + cols));
    std::vector<double> v(static_cast<size_t>(rows) * cols);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return ad::make_tensor({rows, cols}, std::move(v), true);
  };
  ParserNet net;
  net.config = config;
  int input = ParserNetConfig::feature_count * config.embedding_dim;
  int wide = config.hidden * config.maxout_pieces;
  net.lower_w = glorot(input, wide);
  net.lower_b = ad::make_tensor({wide}, true);
  net.upper_w = glorot(config.hidden, kNumActions);
  net.upper_b = ad::make_tensor({kNumActions}, true);
  std::vector<double> root(static_cast<size_t>(config.embedding_dim));
  for (double& x : root) x = rng.uniform(-0.1, 0.1);
  net.root_embedding = ad::make_tensor({config.embedding_dim}, std::move(root), true);
  return net;
}

std::vector<std::pair<std::string, ad::TensorPtr>> ParserNet::named_parameters() const {
  return {{"parser.lower_w", lower_w},
          {"parser.lower_b", lower_b},
          {"parser.upper_w", upper_w},
          {"parser.upper_b", upper_b},
          {"parser.root_embedding", root_embedding}};
}

std::array<double, kNumActions> score_transitions(const ParserNet& net,
                                                  std::span<const double> contextual,
                                                  const std::array<int, 9>& slots) {
  int d = net.config.embedding_dim;
  int wide = net.config.hidden * net.config.maxout_pieces;
  int pieces = net.config.maxout_pieces;
  std::vector<double> pre(static_cast<size_t>(wide));
  std::copy(net.lower_b->value.begin(), net.lower_b->value.end(), pre.begin());
  for (int s = 0; s < 9; ++s) {
    int page = slots[static_cast<size_t>(s)];
    if (page < 0) continue;  // absent slot: exact zero vector
    const double* src = page == 0 ? net.root_embedding->value.data()
                                  : contextual.data() + static_cast<size_t>(page - 1) * d;
    const double* w_base = net.lower_w->value.data() + static_cast<size_t>(s) * d * wide;
    for (int i = 0; i < d; ++i) {
      double x = src[i];
      if (x == 0.0) continue;
      const double* w_row = w_base + static_cast<size_t>(i) * wide;
      for (int j = 0; j < wide; ++j) pre[static_cast<size_t>(j)] += x * w_row[j];
    }
  }
  std::vector<double> hidden(static_cast<size_t>(net.config.hidden));
  for (int g = 0; g < net.config.hidden; ++g) {
    double best = pre[static_cast<size_t>(g) * pieces];
    for (int p = 1; p < pieces; ++p)
      best = std::max(best, pre[static_cast<size_t>(g) * pieces + static_cast<size_t>(p)]);
    hidden[static_cast<size_t>(g)] = best;
  }
  std::array<double, kNumActions> scores;
  std::copy(net.upper_b->value.begin(), net.upper_b->value.end(), scores.begin());
  for (int g = 0; g < net.config.hidden; ++g) {
    double h = hidden[static_cast<size_t>(g)];
    const double* u_row = net.upper_w->value.data() + static_cast<size_t>(g) * kNumActions;
    for (int a = 0; a < kNumActions; ++a) scores[static_cast<size_t>(a)] += h * u_row[a];
  }
  return scores;
}

ad::TensorPtr score_states(ad::Tape& tape, const ParserNet& net, const ad::TensorPtr& contextual,
                           std::span<const OracleStep> steps) {
  int d = net.config.embedding_dim;
  if (contextual->shape.size() != 2 || contextual->shape[1] != d)
    throw ad::ShapeError("score_states: contextual embeddings must be [n_pages," +
                         std::to_string(d) + "]");
  int n = contextual->shape[0];
  // Extended table: page rows, then the root embedding, then a zero row.
  ad::TensorPtr root_row = tape.reshape(net.root_embedding, {1, d});
  ad::TensorPtr zero_row = ad::make_tensor({1, d});
  std::array<ad::TensorPtr, 3> parts = {contextual, root_row, zero_row};
  ad::TensorPtr table = tape.concat_rows(parts);
  int root_idx = n, zero_idx = n + 1;

  std::vector<int> gather;
  gather.reserve(steps.size() * 9);
  for (const OracleStep& step : steps)
    for (int slot : step.slots) {
      if (slot < 0)
        gather.push_back(zero_idx);
      else if (slot == 0)
        gather.push_back(root_idx);
      else
        gather.push_back(slot - 1);
    }
  ad::TensorPtr features = tape.rows(table, gather);  // [steps*9, d]
  features = tape.reshape(features, {static_cast<int>(steps.size()), 9 * d});
  ad::TensorPtr pre = tape.add_rows(tape.matmul(features, net.lower_w), net.lower_b);
  ad::TensorPtr hidden = tape.maxout(pre, net.config.maxout_pieces);
  return tape.add_rows(tape.matmul(hidden, net.upper_w), net.upper_b);
}

PageDependencyTree greedy_decode(const ParserNet& net, std::span<const double> contextual,
                                 int n_pages) {
  ParserState state = ParserState::initial(n_pages);
  std::vector<Transition> actions;
  int limit = 4 * n_pages + 4;
  int steps = 0;
  while (true) {
    auto mask = state.valid_mask();
    auto scores = score_transitions(net, contextual, state.feature_slots());
    int best = -1;
    for (int a = 0; a < kNumActions; ++a) {
      if (!mask[static_cast<size_t>(a)]) continue;
      if (best < 0 || scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(best)]) best = a;
    }
    if (best < 0) break;  // terminal
    actions.push_back(action_from_index(best));
    state.apply(actions.back());
    if (++steps > limit)
      throw std::logic_error("greedy_decode exceeded the step bound");
  }
  return replay_actions(n_pages, actions);
}

}  // namespace pagedep
