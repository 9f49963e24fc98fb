#include "pagedep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pagedep::ad {

namespace {

int numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

[[noreturn]] void shape_fail(const char* op, std::initializer_list<const TensorPtr> ts,
                             const std::string& extra = {}) {
  std::ostringstream os;
  os << op << ": shape mismatch";
  for (const TensorPtr& t : ts) os << " " << shape_string(t->shape);
  if (!extra.empty()) os << " (" << extra << ")";
  throw ShapeError(os.str());
}

}  // namespace

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  int n = numel(shape);
  t->shape = std::move(shape);
  t->value.assign(static_cast<size_t>(n), 0.0);
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad.assign(static_cast<size_t>(n), 0.0);
  return t;
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != static_cast<int>(values.size()))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not fill shape " +
                     shape_string(shape));
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->value = std::move(values);
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad.assign(t->value.size(), 0.0);
  return t;
}

TensorPtr make_scalar(double v, bool requires_grad) {
  return make_tensor({1}, {v}, requires_grad);
}

TensorPtr Tape::result(std::vector<int> shape, std::vector<double> values,
                       std::initializer_list<TensorPtr> inputs) {
  bool needs_grad = false;
  if (recording_)
    for (const TensorPtr& t : inputs) needs_grad = needs_grad || t->requires_grad;
  return make_tensor(std::move(shape), std::move(values), needs_grad);
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2) shape_fail("matmul", {a, b}, "lhs must be rank 2");
  int m = a->shape[0], k = a->shape[1];
  bool vec = b->shape.size() == 1;
  int k2 = vec ? b->shape[0] : b->shape[0];
  int n = vec ? 1 : b->shape[1];
  if (b->shape.size() > 2 || k2 != k) shape_fail("matmul", {a, b});

  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  {
    const double* av = a->value.data();
    const double* bv = b->value.data();
    double* ov = out.data();
    for (int i = 0; i < m; ++i)
      for (int kk = 0; kk < k; ++kk) {
        double aik = av[i * k + kk];
        if (aik == 0.0) continue;
        const double* brow = bv + static_cast<size_t>(kk) * n;
        double* orow = ov + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
  }
  TensorPtr r = result(vec ? std::vector<int>{m} : std::vector<int>{m, n}, std::move(out), {a, b});
  if (r->requires_grad) {
    record([a, b, r, m, k, n] {
      const double* g = r->grad.data();
      if (a->requires_grad) {
        double* da = a->grad.data();
        const double* bv = b->value.data();
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double* grow = g + static_cast<size_t>(i) * n;
            const double* brow = bv + static_cast<size_t>(kk) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            da[i * k + kk] += acc;
          }
      }
      if (b->requires_grad) {
        double* db = b->grad.data();
        const double* av = a->value.data();
        for (int kk = 0; kk < k; ++kk)
          for (int i = 0; i < m; ++i) {
            double aik = av[i * k + kk];
            if (aik == 0.0) continue;
            const double* grow = g + static_cast<size_t>(i) * n;
            double* brow = db + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) brow[j] += aik * grow[j];
          }
      }
    });
  }
  return r;
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape) shape_fail("add", {a, b});
  std::vector<double> out(a->value);
  for (size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  TensorPtr r = result(a->shape, std::move(out), {a, b});
  if (r->requires_grad) {
    record([a, b, r] {
      if (a->requires_grad)
        for (size_t i = 0; i < r->grad.size(); ++i) a->grad[i] += r->grad[i];
      if (b->requires_grad)
        for (size_t i = 0; i < r->grad.size(); ++i) b->grad[i] += r->grad[i];
    });
  }
  return r;
}

TensorPtr Tape::add_rows(const TensorPtr& a, const TensorPtr& bias) {
  if (a->shape.size() != 2 || bias->shape.size() != 1 || bias->shape[0] != a->shape[1])
    shape_fail("add_rows", {a, bias});
  int m = a->shape[0], n = a->shape[1];
  std::vector<double> out(a->value);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += bias->value[j];
  TensorPtr r = result(a->shape, std::move(out), {a, bias});
  if (r->requires_grad) {
    record([a, bias, r, m, n] {
      if (a->requires_grad)
        for (size_t i = 0; i < r->grad.size(); ++i) a->grad[i] += r->grad[i];
      if (bias->requires_grad)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) bias->grad[j] += r->grad[static_cast<size_t>(i) * n + j];
    });
  }
  return r;
}

TensorPtr Tape::add_const(const TensorPtr& a, double c) {
  std::vector<double> out(a->value);
  for (double& v : out) v += c;
  TensorPtr r = result(a->shape, std::move(out), {a});
  if (r->requires_grad) {
    record([a, r] {
      for (size_t i = 0; i < r->grad.size(); ++i) a->grad[i] += r->grad[i];
    });
  }
  return r;
}

TensorPtr Tape::scale(const TensorPtr& a, double c) {
  std::vector<double> out(a->value);
  for (double& v : out) v *= c;
  TensorPtr r = result(a->shape, std::move(out), {a});
  if (r->requires_grad) {
    record([a, r, c] {
      for (size_t i = 0; i < r->grad.size(); ++i) a->grad[i] += c * r->grad[i];
    });
  }
  return r;
}

TensorPtr Tape::elementwise_mul(const TensorPtr& a, const TensorPtr& b) {
  // A [1] operand broadcasts against the other.
  bool a_scalar = a->size() == 1 && b->size() != 1;
  bool b_scalar = b->size() == 1 && a->size() != 1;
  if (!(a_scalar || b_scalar) && a->shape != b->shape) shape_fail("elementwise_mul", {a, b});

  const TensorPtr& big = a_scalar ? b : a;
  std::vector<double> out(big->value.size());
  if (a_scalar || b_scalar) {
    const TensorPtr& s = a_scalar ? a : b;
    double sv = s->value[0];
    for (size_t i = 0; i < out.size(); ++i) out[i] = big->value[i] * sv;
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  }
  TensorPtr r = result(big->shape, std::move(out), {a, b});
  if (r->requires_grad) {
    record([a, b, r, a_scalar, b_scalar] {
      if (a_scalar || b_scalar) {
        const TensorPtr& s = a_scalar ? a : b;
        const TensorPtr& t = a_scalar ? b : a;
        if (t->requires_grad)
          for (size_t i = 0; i < r->grad.size(); ++i) t->grad[i] += s->value[0] * r->grad[i];
        if (s->requires_grad) {
          double acc = 0.0;
          for (size_t i = 0; i < r->grad.size(); ++i) acc += t->value[i] * r->grad[i];
          s->grad[0] += acc;
        }
      } else {
        if (a->requires_grad)
          for (size_t i = 0; i < r->grad.size(); ++i) a->grad[i] += b->value[i] * r->grad[i];
        if (b->requires_grad)
          for (size_t i = 0; i < r->grad.size(); ++i) b->grad[i] += a->value[i] * r->grad[i];
      }
    });
  }
  return r;
}

TensorPtr Tape::mul_rows(const TensorPtr& a, const TensorPtr& v) {
  if (a->shape.size() != 2 || v->shape.size() != 1 || v->shape[0] != a->shape[1])
    shape_fail("mul_rows", {a, v});
  int m = a->shape[0], n = a->shape[1];
  std::vector<double> out(a->value);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] *= v->value[j];
  TensorPtr r = result(a->shape, std::move(out), {a, v});
  if (r->requires_grad) {
    record([a, v, r, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          size_t idx = static_cast<size_t>(i) * n + j;
          if (a->requires_grad) a->grad[idx] += v->value[j] * r->grad[idx];
          if (v->requires_grad) v->grad[j] += a->value[idx] * r->grad[idx];
        }
    });
  }
  return r;
}

TensorPtr Tape::mul_cols(const TensorPtr& a, const TensorPtr& s) {
  if (a->shape.size() != 2 || s->shape.size() != 1 || s->shape[0] != a->shape[0])
    shape_fail("mul_cols", {a, s});
  int m = a->shape[0], n = a->shape[1];
  std::vector<double> out(a->value);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] *= s->value[i];
  TensorPtr r = result(a->shape, std::move(out), {a, s});
  if (r->requires_grad) {
    record([a, s, r, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          size_t idx = static_cast<size_t>(i) * n + j;
          if (a->requires_grad) a->grad[idx] += s->value[i] * r->grad[idx];
          if (s->requires_grad) s->grad[i] += a->value[idx] * r->grad[idx];
        }
    });
  }
  return r;
}

TensorPtr Tape::concat(std::span<const TensorPtr> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<double> out;
  bool needs_grad = false;
  for (const TensorPtr& p : parts) {
    if (p->shape.size() != 1) shape_fail("concat", {p}, "rank-1 inputs only");
    out.insert(out.end(), p->value.begin(), p->value.end());
    needs_grad = needs_grad || (recording_ && p->requires_grad);
  }
  int total = static_cast<int>(out.size());
  TensorPtr r = make_tensor({total}, std::move(out), needs_grad);
  if (needs_grad) {
    std::vector<TensorPtr> inputs(parts.begin(), parts.end());
    record([inputs, r] {
      size_t off = 0;
      for (const TensorPtr& p : inputs) {
        if (p->requires_grad)
          for (size_t i = 0; i < p->value.size(); ++i) p->grad[i] += r->grad[off + i];
        off += p->value.size();
      }
    });
  }
  return r;
}

TensorPtr Tape::slice(const TensorPtr& a, int offset, int length) {
  if (a->shape.size() != 1) shape_fail("slice", {a}, "rank-1 input only");
  if (offset < 0 || length < 0 || offset + length > a->shape[0])
    throw ShapeError("slice: range [" + std::to_string(offset) + "," +
                     std::to_string(offset + length) + ") outside " + shape_string(a->shape));
  std::vector<double> out(a->value.begin() + offset, a->value.begin() + offset + length);
  TensorPtr r = result({length}, std::move(out), {a});
  if (r->requires_grad) {
    record([a, r, offset, length] {
      for (int i = 0; i < length; ++i) a->grad[static_cast<size_t>(offset + i)] += r->grad[i];
    });
  }
  return r;
}

TensorPtr Tape::concat_cols(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[0] != b->shape[0])
    shape_fail("concat_cols", {a, b});
  int m = a->shape[0], na = a->shape[1], nb = b->shape[1];
  std::vector<double> out(static_cast<size_t>(m) * (na + nb));
  for (int i = 0; i < m; ++i) {
    std::copy_n(a->value.begin() + static_cast<size_t>(i) * na, na,
                out.begin() + static_cast<size_t>(i) * (na + nb));
    std::copy_n(b->value.begin() + static_cast<size_t>(i) * nb, nb,
                out.begin() + static_cast<size_t>(i) * (na + nb) + na);
  }
  TensorPtr r = result({m, na + nb}, std::move(out), {a, b});
  if (r->requires_grad) {
    record([a, b, r, m, na, nb] {
      for (int i = 0; i < m; ++i) {
        if (a->requires_grad)
          for (int j = 0; j < na; ++j)
            a->grad[static_cast<size_t>(i) * na + j] +=
                r->grad[static_cast<size_t>(i) * (na + nb) + j];
        if (b->requires_grad)
          for (int j = 0; j < nb; ++j)
            b->grad[static_cast<size_t>(i) * nb + j] +=
                r->grad[static_cast<size_t>(i) * (na + nb) + na + j];
      }
    });
  }
  return r;
}

TensorPtr Tape::concat_rows(std::span<const TensorPtr> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  int n = -1, m = 0;
  bool needs_grad = false;
  for (const TensorPtr& p : parts) {
    if (p->shape.size() != 2) shape_fail("concat_rows", {p}, "rank-2 inputs only");
    if (n < 0) n = p->shape[1];
    if (p->shape[1] != n) shape_fail("concat_rows", {parts[0], p});
    m += p->shape[0];
    needs_grad = needs_grad || (recording_ && p->requires_grad);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(m) * n);
  for (const TensorPtr& p : parts) out.insert(out.end(), p->value.begin(), p->value.end());
  TensorPtr r = make_tensor({m, n}, std::move(out), needs_grad);
  if (needs_grad) {
    std::vector<TensorPtr> inputs(parts.begin(), parts.end());
    record([inputs, r] {
      size_t off = 0;
      for (const TensorPtr& p : inputs) {
        if (p->requires_grad)
          for (size_t i = 0; i < p->value.size(); ++i) p->grad[i] += r->grad[off + i];
        off += p->value.size();
      }
    });
  }
  return r;
}

TensorPtr Tape::rows(const TensorPtr& table, std::span<const int> indices) {
  if (table->shape.size() != 2) shape_fail("rows", {table}, "rank-2 table only");
  int n = table->shape[1];
  for (int idx : indices)
    if (idx < 0 || idx >= table->shape[0])
      throw ShapeError("rows: index " + std::to_string(idx) + " outside table " +
                       shape_string(table->shape));
  std::vector<double> out(indices.size() * static_cast<size_t>(n));
  for (size_t t = 0; t < indices.size(); ++t)
    std::copy_n(table->value.begin() + static_cast<size_t>(indices[t]) * n, n,
                out.begin() + t * n);
  TensorPtr r =
      result({static_cast<int>(indices.size()), n}, std::move(out), {table});
  if (r->requires_grad) {
    std::vector<int> idx(indices.begin(), indices.end());
    record([table, r, idx, n] {
      for (size_t t = 0; t < idx.size(); ++t)
        for (int j = 0; j < n; ++j)
          table->grad[static_cast<size_t>(idx[t]) * n + j] += r->grad[t * n + j];
    });
  }
  return r;
}

TensorPtr Tape::reshape(const TensorPtr& a, std::vector<int> shape) {
  if (numel(shape) != a->size())
    throw ShapeError("reshape: " + shape_string(a->shape) + " to " + shape_string(shape));
  TensorPtr r = result(std::move(shape), a->value, {a});
  if (r->requires_grad) {
    record([a, r] {
      for (size_t i = 0; i < r->grad.size(); ++i) a->grad[i] += r->grad[i];
    });
  }
  return r;
}

TensorPtr Tape::sigmoid(const TensorPtr& a) {
  std::vector<double> out(a->value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a->value[i]));
  TensorPtr r = result(a->shape, std::move(out), {a});
  if (r->requires_grad) {
    record([a, r] {
      for (size_t i = 0; i < r->grad.size(); ++i)
        a->grad[i] += r->value[i] * (1.0 - r->value[i]) * r->grad[i];
    });
  }
  return r;
}

TensorPtr Tape::tanh(const TensorPtr& a) {
  std::vector<double> out(a->value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a->value[i]);
  TensorPtr r = result(a->shape, std::move(out), {a});
  if (r->requires_grad) {
    record([a, r] {
      for (size_t i = 0; i < r->grad.size(); ++i)
        a->grad[i] += (1.0 - r->value[i] * r->value[i]) * r->grad[i];
    });
  }
  return r;
}

TensorPtr Tape::relu(const TensorPtr& a) {
  std::vector<double> out(a->value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
  TensorPtr r = result(a->shape, std::move(out), {a});
  if (r->requires_grad) {
    record([a, r] {
      for (size_t i = 0; i < r->grad.size(); ++i)
        if (a->value[i] > 0.0) a->grad[i] += r->grad[i];
    });
  }
  return r;
}

TensorPtr Tape::maxout(const TensorPtr& a, int pieces) {
  if (pieces < 2) throw ShapeError("maxout: pieces must be >= 2");
  int last = a->shape.empty() ? 0 : a->shape.back();
  if (last % pieces != 0)
    shape_fail("maxout", {a}, "last dimension not divisible by " + std::to_string(pieces));
  int groups = last / pieces;
  int rows_n = a->size() / std::max(last, 1);
  std::vector<int> out_shape = a->shape;
  out_shape.back() = groups;
  std::vector<double> out(static_cast<size_t>(rows_n) * groups);
  std::vector<int> argmax(out.size());
  for (int i = 0; i < rows_n; ++i)
    for (int g = 0; g < groups; ++g) {
      size_t base = static_cast<size_t>(i) * last + static_cast<size_t>(g) * pieces;
      int best = 0;
      for (int p = 1; p < pieces; ++p)
        if (a->value[base + static_cast<size_t>(p)] > a->value[base + static_cast<size_t>(best)])
          best = p;
      out[static_cast<size_t>(i) * groups + g] = a->value[base + static_cast<size_t>(best)];
      argmax[static_cast<size_t>(i) * groups + g] = static_cast<int>(base) + best;
    }
  TensorPtr r = result(std::move(out_shape), std::move(out), {a});
  if (r->requires_grad) {
    record([a, r, argmax] {
      for (size_t i = 0; i < r->grad.size(); ++i)
        a->grad[static_cast<size_t>(argmax[i])] += r->grad[i];
    });
  }
  return r;
}

TensorPtr Tape::sum(const TensorPtr& a) {
  double total = std::accumulate(a->value.begin(), a->value.end(), 0.0);
  TensorPtr r = result({1}, {total}, {a});
  if (r->requires_grad) {
    record([a, r] {
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += r->grad[0];
    });
  }
  return r;
}

TensorPtr Tape::attention_pool(const TensorPtr& e, const TensorPtr& w, const TensorPtr& u) {
  if (e->shape.size() != 2 || w->shape.size() != 2 || u->shape.size() != 1 ||
      w->shape[1] != e->shape[1] || u->shape[0] != w->shape[0])
    shape_fail("attention_pool", {e, w, u});
  int t_count = e->shape[0], d = e->shape[1], a_dim = w->shape[0];
  if (t_count == 0) throw ShapeError("attention_pool: empty token matrix");

  std::vector<double> tanh_h(static_cast<size_t>(t_count) * a_dim);
  std::vector<double> scores(static_cast<size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    const double* et = e->value.data() + static_cast<size_t>(t) * d;
    double s = 0.0;
    for (int i = 0; i < a_dim; ++i) {
      const double* wi = w->value.data() + static_cast<size_t>(i) * d;
      double h = 0.0;
      for (int j = 0; j < d; ++j) h += wi[j] * et[j];
      double th = std::tanh(h);
      tanh_h[static_cast<size_t>(t) * a_dim + i] = th;
      s += u->value[static_cast<size_t>(i)] * th;
    }
    scores[static_cast<size_t>(t)] = s;
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> alpha(scores.size());
  double z = 0.0;
  for (size_t t = 0; t < scores.size(); ++t) {
    alpha[t] = std::exp(scores[t] - mx);
    z += alpha[t];
  }
  for (double& a_t : alpha) a_t /= z;

  std::vector<double> out(static_cast<size_t>(d), 0.0);
  for (int t = 0; t < t_count; ++t) {
    const double* et = e->value.data() + static_cast<size_t>(t) * d;
    for (int j = 0; j < d; ++j) out[static_cast<size_t>(j)] += alpha[static_cast<size_t>(t)] * et[j];
  }
  TensorPtr r = result({d}, std::move(out), {e, w, u});
  if (r->requires_grad) {
    record([e, w, u, r, tanh_h = std::move(tanh_h), alpha = std::move(alpha), t_count, d,
            a_dim] {
      const double* g = r->grad.data();
      std::vector<double> dalpha(static_cast<size_t>(t_count));
      double common = 0.0;
      for (int t = 0; t < t_count; ++t) {
        const double* et = e->value.data() + static_cast<size_t>(t) * d;
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += g[j] * et[j];
        dalpha[static_cast<size_t>(t)] = acc;
        common += alpha[static_cast<size_t>(t)] * acc;
      }
      std::vector<double> dh(static_cast<size_t>(a_dim));
      for (int t = 0; t < t_count; ++t) {
        double ds = alpha[static_cast<size_t>(t)] * (dalpha[static_cast<size_t>(t)] - common);
        const double* th = tanh_h.data() + static_cast<size_t>(t) * a_dim;
        for (int i = 0; i < a_dim; ++i) {
          dh[static_cast<size_t>(i)] = ds * u->value[static_cast<size_t>(i)] * (1.0 - th[i] * th[i]);
          if (u->requires_grad) u->grad[static_cast<size_t>(i)] += ds * th[i];
        }
        const double* et = e->value.data() + static_cast<size_t>(t) * d;
        if (e->requires_grad) {
          double* de = e->grad.data() + static_cast<size_t>(t) * d;
          for (int j = 0; j < d; ++j) de[j] += alpha[static_cast<size_t>(t)] * g[j];
          for (int i = 0; i < a_dim; ++i) {
            double dhi = dh[static_cast<size_t>(i)];
            if (dhi == 0.0) continue;
            const double* wi = w->value.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) de[j] += dhi * wi[j];
          }
        }
        if (w->requires_grad) {
          for (int i = 0; i < a_dim; ++i) {
            double dhi = dh[static_cast<size_t>(i)];
            if (dhi == 0.0) continue;
            double* dwi = w->grad.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) dwi[j] += dhi * et[j];
          }
        }
      }
    });
  }
  return r;
}

TensorPtr Tape::dropout(const TensorPtr& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate outside [0,1)");
  if (rate == 0.0) return a;
  double keep = 1.0 - rate;
  std::vector<double> mask(a->value.size());
  for (double& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  std::vector<double> out(a->value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * mask[i];
  TensorPtr r = result(a->shape, std::move(out), {a});
  if (r->requires_grad) {
    record([a, r, mask = std::move(mask)] {
      for (size_t i = 0; i < r->grad.size(); ++i) a->grad[i] += mask[i] * r->grad[i];
    });
  }
  return r;
}

TensorPtr Tape::softmax_cross_entropy(const TensorPtr& logits, std::span<const int> targets,
                                      const std::vector<char>* valid,
                                      std::vector<double>* probs_out) {
  int rows_n = logits->shape.size() == 1 ? 1 : logits->shape[0];
  int cols_n = logits->shape.size() == 1 ? logits->shape[0] : logits->shape[1];
  if (logits->shape.size() > 2 || cols_n == 0)
    shape_fail("softmax_cross_entropy", {logits});
  if (static_cast<int>(targets.size()) != rows_n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(rows_n) + " rows");
  if (valid && static_cast<int>(valid->size()) != rows_n * cols_n)
    throw ShapeError("softmax_cross_entropy: validity mask size mismatch");

  std::vector<double> probs(static_cast<size_t>(rows_n) * cols_n, 0.0);
  double total = 0.0;
  for (int i = 0; i < rows_n; ++i) {
    const double* row = logits->value.data() + static_cast<size_t>(i) * cols_n;
    const char* vrow = valid ? valid->data() + static_cast<size_t>(i) * cols_n : nullptr;
    int target = targets[static_cast<size_t>(i)];
    if (target < 0 || target >= cols_n)
      throw std::invalid_argument("softmax_cross_entropy: target " + std::to_string(target) +
                                  " outside [0," + std::to_string(cols_n) + ")");
    if (vrow && !vrow[target])
      throw std::invalid_argument("softmax_cross_entropy: target " + std::to_string(target) +
                                  " masked out in row " + std::to_string(i));
    double mx = -HUGE_VAL;
    for (int c = 0; c < cols_n; ++c)
      if (!vrow || vrow[c]) mx = std::max(mx, row[c]);
    if (mx == -HUGE_VAL)
      throw std::invalid_argument("softmax_cross_entropy: row " + std::to_string(i) +
                                  " has no valid entries");
    double z = 0.0;
    for (int c = 0; c < cols_n; ++c)
      if (!vrow || vrow[c]) z += std::exp(row[c] - mx);
    for (int c = 0; c < cols_n; ++c)
      if (!vrow || vrow[c])
        probs[static_cast<size_t>(i) * cols_n + c] = std::exp(row[c] - mx) / z;
    total += -(row[target] - mx - std::log(z));
  }
  total /= rows_n;
  if (probs_out) *probs_out = probs;

  TensorPtr r = result({1}, {total}, {logits});
  if (r->requires_grad) {
    std::vector<int> tgt(targets.begin(), targets.end());
    record([logits, r, probs = std::move(probs), tgt, rows_n, cols_n] {
      double g = r->grad[0] / rows_n;
      for (int i = 0; i < rows_n; ++i)
        for (int c = 0; c < cols_n; ++c) {
          double p = probs[static_cast<size_t>(i) * cols_n + c];
          double y = (c == tgt[static_cast<size_t>(i)]) ? 1.0 : 0.0;
          // Masked-out entries carry p == 0 and never match the target.
          if (p == 0.0 && y == 0.0) continue;
          logits->grad[static_cast<size_t>(i) * cols_n + c] += g * (p - y);
        }
    });
  }
  return r;
}

void Tape::backward(const TensorPtr& loss) {
  if (loss->size() != 1)
    throw std::invalid_argument("backward: loss has shape " + shape_string(loss->shape) +
                                ", expected a scalar");
  if (!loss->requires_grad) return;  // no parameter on the tape
  loss->grad[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

}  // namespace pagedep::ad
