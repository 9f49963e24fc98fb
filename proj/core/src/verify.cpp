#include "pagedep/verify.hpp"

#include <cmath>

#include "pagedep/model.hpp"
#include "pagedep/parser.hpp"

namespace pagedep {

namespace {

constexpr std::array<ArcLabel, 4> kContentLabels = {ArcLabel::Atch, ArcLabel::Copy,
                                                    ArcLabel::Back, ArcLabel::Next};

}  // namespace

void enumerate_projective_trees(int n_pages,
                                const std::function<void(const PageDependencyTree&)>& fn) {
  if (n_pages < 1) throw std::invalid_argument("enumerate_projective_trees: n_pages must be >= 1");
  std::vector<int> heads(static_cast<size_t>(n_pages) + 1, 0);

  auto emit_labelings = [&](PageDependencyTree& tree) {
    std::vector<size_t> free_slots;  // arcs free to range over the content labels
    for (size_t i = 0; i < tree.arcs.size(); ++i)
      if (tree.arcs[i].head != 0) free_slots.push_back(i);
    std::vector<int> choice(free_slots.size(), 0);
    while (true) {
      for (size_t i = 0; i < free_slots.size(); ++i)
        tree.arcs[free_slots[i]].label = kContentLabels[static_cast<size_t>(choice[i])];
      fn(tree);
      size_t pos = 0;
      while (pos < choice.size() && ++choice[pos] == 4) choice[pos++] = 0;
      if (pos == choice.size()) break;
    }
  };

  // Odometer over head assignments; heads[p] ranges over {0..n_pages} \ {p}.
  auto next_head = [&](int page) {
    ++heads[static_cast<size_t>(page)];
    if (heads[static_cast<size_t>(page)] == page) ++heads[static_cast<size_t>(page)];
    return heads[static_cast<size_t>(page)] <= n_pages;
  };

  while (true) {
    PageDependencyTree tree;
    tree.n_pages = n_pages;
    for (int p = 1; p <= n_pages; ++p) {
      int h = heads[static_cast<size_t>(p)];
      tree.arcs.push_back({h, h == 0 ? ArcLabel::Root : ArcLabel::Next, p});
    }
    if (validate_tree(tree).ok && is_projective(tree)) emit_labelings(tree);

    int page = 1;
    while (page <= n_pages && !next_head(page)) {
      heads[static_cast<size_t>(page)] = 0;
      ++page;
    }
    if (page > n_pages) break;
  }
}

OracleCheckResult oracle_roundtrip_check(int max_pages) {
  OracleCheckResult result;
  for (int n = 1; n <= max_pages; ++n) {
    enumerate_projective_trees(n, [&result, n](const PageDependencyTree& gold) {
      ++result.trees;
      std::vector<Transition> actions;
      try {
        ParserState state = ParserState::initial(n);
        while (!state.buffer_empty()) {
          Transition t = static_oracle(state, gold);
          actions.push_back(t);
          state.apply(t);
        }
      } catch (const std::exception&) {
        ++result.failures;
        return;
      }
      PageDependencyTree rebuilt = replay_actions(n, actions);
      if (!(rebuilt == gold)) ++result.failures;
    });
  }
  return result;
}

double max_relative_gradient_error(const std::vector<ad::TensorPtr>& params,
                                   const std::function<ad::TensorPtr(ad::Tape&)>& forward,
                                   double step) {
  constexpr double kFloor = 1e-8;
  for (const ad::TensorPtr& p : params) p->zero_grad();
  ad::Tape tape;
  ad::TensorPtr loss = forward(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const ad::TensorPtr& p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    ad::Tensor& p = *params[pi];
    for (size_t i = 0; i < p.value.size(); ++i) {
      double original = p.value[i];
      p.value[i] = original + step;
      ad::Tape plus_tape;
      double f_plus = forward(plus_tape)->value[0];
      p.value[i] = original - step;
      ad::Tape minus_tape;
      double f_minus = forward(minus_tape)->value[0];
      p.value[i] = original;
      double fd = (f_plus - f_minus) / (2.0 * step);
      double g = analytic[pi][i];
      double diff = std::abs(g - fd);
      // Differences under the floor count as matching near-zero entries.
      double rel = diff <= kFloor ? 0.0 : diff / std::max({kFloor, std::abs(g), std::abs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace {

ad::TensorPtr random_tensor(Rng& rng, std::vector<int> shape, bool requires_grad,
                            double lo = -1.0, double hi = 1.0) {
  int n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return ad::make_tensor(std::move(shape), std::move(v), requires_grad);
}

/// Values kept away from relu/maxout kinks so finite differences stay smooth.
ad::TensorPtr spread_tensor(Rng& rng, std::vector<int> shape, bool requires_grad) {
  ad::TensorPtr t = random_tensor(rng, std::move(shape), requires_grad);
  for (double& x : t->value)
    if (std::abs(x) < 0.05) x += x >= 0.0 ? 0.1 : -0.1;
  return t;
}

AnnotatedDocument gradcheck_fixture(int visual_dim) {
  AnnotatedDocument doc;
  doc.id = "fixture-3p";
  const char* words[3][6] = {{"alpha", "beta", "gamma", "alpha", "delta", nullptr},
                             {"page", "2", "of", "2", "beta", nullptr},
                             {"copy", "gamma", "epsilon", nullptr, nullptr, nullptr}};
  for (int p = 0; p < 3; ++p) {
    Page page;
    page.index = p + 1;
    for (int w = 0; words[p][w]; ++w) page.tokens.push_back(words[p][w]);
    for (int v = 0; v < visual_dim; ++v)
      page.visual.push_back(0.1 + 0.07 * static_cast<double>(v % 7) + 0.13 * p);
    doc.pages.push_back(std::move(page));
  }
  doc.tree.n_pages = 3;
  doc.tree.arcs = {{0, ArcLabel::Root, 1}, {1, ArcLabel::Next, 2}, {1, ArcLabel::Atch, 3}};
  doc.seg_tags = {SegTag::Head, SegTag::Inter, SegTag::Head};
  doc.classes = {0, 0, 1};
  return doc;
}

}  // namespace

GradCheckReport run_gradcheck(uint64_t seed) {
  GradCheckReport report;
  Rng rng(seed);
  auto check = [&report](const std::string& name, const std::vector<ad::TensorPtr>& params,
                         const std::function<ad::TensorPtr(ad::Tape&)>& forward) {
    double err = max_relative_gradient_error(params, forward);
    report.per_op.push_back({name, err});
  };
  // Scalarizes a non-scalar op output with a fixed weighting so the finite
  // differences see every output coordinate.
  auto weigh = [](ad::Tape& tape, const ad::TensorPtr& out, const ad::TensorPtr& weights) {
    return tape.sum(tape.elementwise_mul(out, weights));
  };

  {
    auto a = random_tensor(rng, {3, 4}, true), b = random_tensor(rng, {4, 5}, true);
    auto r = random_tensor(rng, {3, 5}, false);
    check("matmul", {a, b}, [&](ad::Tape& t) { return weigh(t, t.matmul(a, b), r); });
    auto x = random_tensor(rng, {4}, true);
    auto rv = random_tensor(rng, {3}, false);
    check("matmul_vec", {a, x}, [&](ad::Tape& t) { return weigh(t, t.matmul(a, x), rv); });
  }
  {
    auto a = random_tensor(rng, {2, 3}, true), b = random_tensor(rng, {2, 3}, true);
    auto r = random_tensor(rng, {2, 3}, false);
    check("add", {a, b}, [&](ad::Tape& t) { return weigh(t, t.add(a, b), r); });
    auto bias = random_tensor(rng, {3}, true);
    check("add_rows", {a, bias}, [&](ad::Tape& t) { return weigh(t, t.add_rows(a, bias), r); });
    check("add_const", {a}, [&](ad::Tape& t) { return weigh(t, t.add_const(a, 0.7), r); });
    check("scale", {a}, [&](ad::Tape& t) { return weigh(t, t.scale(a, -1.3), r); });
    check("elementwise_mul", {a, b},
          [&](ad::Tape& t) { return weigh(t, t.elementwise_mul(a, b), r); });
    auto s = random_tensor(rng, {1}, true);
    check("elementwise_mul_scalar", {a, s},
          [&](ad::Tape& t) { return weigh(t, t.elementwise_mul(a, s), r); });
    auto v = random_tensor(rng, {3}, true);
    check("mul_rows", {a, v}, [&](ad::Tape& t) { return weigh(t, t.mul_rows(a, v), r); });
    auto c = random_tensor(rng, {2}, true);
    check("mul_cols", {a, c}, [&](ad::Tape& t) { return weigh(t, t.mul_cols(a, c), r); });
  }
  {
    auto a = random_tensor(rng, {3}, true), b = random_tensor(rng, {2}, true);
    auto r = random_tensor(rng, {5}, false);
    check("concat", {a, b}, [&](ad::Tape& t) {
      std::array<ad::TensorPtr, 2> parts = {a, b};
      return weigh(t, t.concat(parts), r);
    });
    auto rs = random_tensor(rng, {2}, false);
    check("slice", {a}, [&](ad::Tape& t) { return weigh(t, t.slice(a, 1, 2), rs); });
  }
  {
    auto a = random_tensor(rng, {2, 2}, true), b = random_tensor(rng, {2, 3}, true);
    auto r = random_tensor(rng, {2, 5}, false);
    check("concat_cols", {a, b}, [&](ad::Tape& t) { return weigh(t, t.concat_cols(a, b), r); });
    auto c = random_tensor(rng, {3, 2}, true);
    auto rr = random_tensor(rng, {5, 2}, false);
    check("concat_rows", {a, c}, [&](ad::Tape& t) {
      std::array<ad::TensorPtr, 2> parts = {a, c};
      return weigh(t, t.concat_rows(parts), rr);
    });
  }
  {
    auto table = random_tensor(rng, {5, 3}, true);
    auto r = random_tensor(rng, {4, 3}, false);
    std::vector<int> idx = {2, 0, 2, 4};
    check("rows", {table}, [&](ad::Tape& t) { return weigh(t, t.rows(table, idx), r); });
    auto a = random_tensor(rng, {2, 3}, true);
    auto rf = random_tensor(rng, {6}, false);
    check("reshape", {a}, [&](ad::Tape& t) { return weigh(t, t.reshape(a, {6}), rf); });
  }
  {
    auto a = random_tensor(rng, {2, 4}, true);
    auto r = random_tensor(rng, {2, 4}, false);
    check("sigmoid", {a}, [&](ad::Tape& t) { return weigh(t, t.sigmoid(a), r); });
    check("tanh", {a}, [&](ad::Tape& t) { return weigh(t, t.tanh(a), r); });
    auto spread = spread_tensor(rng, {2, 4}, true);
    check("relu", {spread}, [&](ad::Tape& t) { return weigh(t, t.relu(spread), r); });
    check("sum", {a}, [&](ad::Tape& t) { return t.sum(a); });
  }
  {
    auto a = spread_tensor(rng, {2, 6}, true);
    auto r = random_tensor(rng, {2, 2}, false);
    check("maxout", {a}, [&](ad::Tape& t) { return weigh(t, t.maxout(a, 3), r); });
  }
  {
    auto e = random_tensor(rng, {4, 3}, true);
    auto w = random_tensor(rng, {3, 3}, true);
    auto u = random_tensor(rng, {3}, true);
    auto r = random_tensor(rng, {3}, false);
    check("attention_pool", {e, w, u},
          [&](ad::Tape& t) { return weigh(t, t.attention_pool(e, w, u), r); });
  }
  {
    auto logits = random_tensor(rng, {3, 5}, true);
    std::vector<int> targets = {1, 4, 0};
    check("softmax_cross_entropy", {logits},
          [&](ad::Tape& t) { return t.softmax_cross_entropy(logits, targets); });
    std::vector<char> valid(15, 1);
    valid[2] = valid[7] = valid[13] = 0;
    check("softmax_cross_entropy_masked", {logits}, [&](ad::Tape& t) {
      return t.softmax_cross_entropy(logits, targets, &valid);
    });
  }
  {
    auto a = random_tensor(rng, {3, 4}, true);
    auto r = random_tensor(rng, {3, 4}, false);
    uint64_t mask_seed = rng.next_u64();
    check("dropout", {a}, [&](ad::Tape& t) {
      Rng mask_rng(mask_seed);  // same mask on every forward evaluation
      return weigh(t, t.dropout(a, 0.3, mask_rng), r);
    });
  }

  // End-to-end joint loss on the 3-page fixture with a small config.
  {
    EmbeddingConfig ecfg;
    ecfg.page_dim = 12;
    ecfg.word_dim = 8;
    ecfg.max_tokens = 16;
    ecfg.hash_buckets = 64;
    ecfg.visual_input_dim = 6;
    ecfg.visual_hidden = 10;
    ecfg.fusion = FusionMethod::GatedWeighted;
    ecfg.position_buckets = 4;
    ParserNetConfig pcfg;
    pcfg.embedding_dim = 12;
    pcfg.hidden = 8;
    pcfg.maxout_pieces = 2;
    ModelParameters params = ModelParameters::init(ecfg, pcfg, 3, seed);
    AnnotatedDocument doc = gradcheck_fixture(ecfg.visual_input_dim);
    TrainConfig tcfg;
    tcfg.embedding = ecfg;
    tcfg.parser = pcfg;
    tcfg.n_classes = 3;
    report.end_to_end = max_relative_gradient_error(
        params.parameter_list(), [&](ad::Tape& tape) {
          ad::TensorPtr loss;
          joint_loss(tape, params, doc, tcfg, {false, nullptr}, &loss);
          return loss;
        });
  }

  report.worst = report.end_to_end;
  for (const auto& [name, err] : report.per_op) report.worst = std::max(report.worst, err);
  return report;
}

}  // namespace pagedep
