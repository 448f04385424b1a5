#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mpcctraj/autodiff/tape.hpp"

namespace mpcctraj::ad {

/// Structural nonzeros as (row, col), sorted lexicographically, deduplicated.
struct SparsityPattern {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;

  std::size_t nnz() const { return entries.size(); }
  bool contains(std::size_t r, std::size_t c) const {
    return std::binary_search(entries.begin(), entries.end(),
                              std::pair<std::uint32_t, std::uint32_t>(static_cast<std::uint32_t>(r),
                                                                      static_cast<std::uint32_t>(c)));
  }
};

struct Triplet {
  std::uint32_t row;
  std::uint32_t col;
  double value;
};

struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Triplet> entries;

  double coeff(std::size_t r, std::size_t c) const {
    double sum = 0.0;
    for (const auto& t : entries) {
      if (t.row == r && t.col == c) sum += t.value;
    }
    return sum;
  }
};

namespace detail {

template <class F>
std::vector<Var> invoke_recorded(F& f, std::span<const Var> x, std::span<const Var> p) {
  if constexpr (std::is_invocable_v<F&, std::span<const Var>, std::span<const Var>>) {
    return f(x, p);
  } else {
    return f(x);
  }
}

inline void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    require(std::isfinite(v), ErrorCode::NonFiniteValue, std::string(what) + " is not finite");
  }
}

// Slots that can influence at least one output.
inline std::vector<char> live_slots(const Tape& tape) {
  const auto code = tape.code();
  std::vector<char> live(code.size(), 0);
  for (auto o : tape.outputs()) live[o] = 1;
  for (std::size_t i = code.size(); i-- > 0;) {
    if (!live[i] || is_leaf(code[i].op)) continue;
    live[code[i].a] = 1;
    if (is_binary(code[i].op)) live[code[i].b] = 1;
  }
  return live;
}

class BitRows {
 public:
  BitRows(std::size_t rows, std::size_t bits) : words_((bits + 63) / 64), data_(rows * words_, 0) {}

  std::uint64_t* row(std::size_t r) { return data_.data() + r * words_; }
  const std::uint64_t* row(std::size_t r) const { return data_.data() + r * words_; }
  std::size_t words() const { return words_; }

  void set(std::size_t r, std::size_t bit) { row(r)[bit / 64] |= std::uint64_t{1} << (bit % 64); }
  void merge(std::size_t dst, std::size_t src) {
    for (std::size_t w = 0; w < words_; ++w) row(dst)[w] |= row(src)[w];
  }

  template <class Fn>
  void for_each(std::size_t r, Fn&& fn) const {
    const std::uint64_t* bits = row(r);
    for (std::size_t w = 0; w < words_; ++w) {
      std::uint64_t word = bits[w];
      while (word != 0) {
        const int b = __builtin_ctzll(word);
        fn(w * 64 + static_cast<std::size_t>(b));
        word &= word - 1;
      }
    }
  }

 private:
  std::size_t words_;
  std::vector<std::uint64_t> data_;
};

inline BitRows input_dependencies(const Tape& tape) {
  const auto code = tape.code();
  BitRows deps(code.size(), tape.num_inputs());
  for (std::size_t i = 0; i < code.size(); ++i) {
    const Instruction& ins = code[i];
    if (ins.op == Op::Input) {
      deps.set(i, ins.a);
    } else if (!is_leaf(ins.op)) {
      deps.merge(i, ins.a);
      if (is_binary(ins.op)) deps.merge(i, ins.b);
    }
  }
  return deps;
}

inline bool is_linear(const Instruction& ins) {
  switch (ins.op) {
    case Op::Add:
    case Op::Sub:
    case Op::AddC:
    case Op::SubC:
    case Op::CSub:
    case Op::MulC:
    case Op::DivC:
    case Op::Neg: return true;
    case Op::PowC: return ins.c == 1.0 || ins.c == 0.0;
    default: return false;
  }
}

}  // namespace detail

/// Records `f` at `point`. `f` takes (inputs) or (inputs, params) as spans of
/// Var and returns the outputs.
template <class F>
Tape record(F&& f, std::span<const double> point, std::size_t n_out, std::span<const double> params = {}) {
  Recorder rec(point, params);
  std::vector<Var> out = detail::invoke_recorded(f, rec.inputs(), rec.params());
  require(out.size() == n_out, ErrorCode::DimensionMismatch,
          "recorded function returned " + std::to_string(out.size()) + " outputs, expected " +
              std::to_string(n_out));
  return rec.finish(out);
}

/// Evaluates `f` on passive-free Vars without keeping the tape.
template <class F>
std::vector<double> evaluate_direct(F&& f, std::span<const double> point, std::span<const double> params = {}) {
  Recorder rec(point, params);
  std::vector<Var> out = detail::invoke_recorded(f, rec.inputs(), rec.params());
  std::vector<double> values(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) values[k] = out[k].value();
  return values;
}

/// Deterministic probe set around `point`: its negation plus `count` uniform
/// points in [-2, 2].
inline std::vector<std::vector<double>> default_probes(std::span<const double> point, std::size_t count = 10,
                                                       std::uint64_t seed = 12345) {
  std::vector<std::vector<double>> probes;
  std::vector<double> negated(point.begin(), point.end());
  for (double& v : negated) v = -v;
  probes.push_back(std::move(negated));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> p(point.size());
    for (double& v : p) v = dist(rng);
    probes.push_back(std::move(p));
  }
  return probes;
}

/// Records `f` and replays the tape at every probe against a fresh direct
/// evaluation. Disagreement means the function branches on its inputs.
template <class F>
Tape record_checked(F&& f, std::span<const double> point, std::size_t n_out,
                    const std::vector<std::vector<double>>& probes, double rel_tol = 1e-14) {
  Tape tape = record(f, point, n_out);
  Workspace ws;
  for (const auto& probe : probes) {
    const std::vector<double> direct = evaluate_direct(f, probe);
    require(direct.size() == n_out, ErrorCode::DimensionMismatch, "probe output arity");
    const std::vector<double> replay = tape.evaluate(probe, {}, ws);
    for (std::size_t k = 0; k < n_out; ++k) {
      const bool both_nan = std::isnan(direct[k]) && std::isnan(replay[k]);
      const double scale = std::max(1.0, std::abs(direct[k]));
      if (!both_nan && !(std::abs(direct[k] - replay[k]) <= rel_tol * scale)) {
        fail(ErrorCode::UnsupportedPrimitive,
             "tape replay disagrees with direct evaluation at a probe point (data-dependent branch)");
      }
    }
  }
  return tape;
}

template <class F>
Tape record_checked(F&& f, std::span<const double> point, std::size_t n_out) {
  return record_checked(std::forward<F>(f), point, n_out, default_probes(point));
}

/// Jacobian sparsity by index-set propagation over live instructions.
inline SparsityPattern detect_sparsity(const Tape& tape) {
  SparsityPattern pattern{tape.num_outputs(), tape.num_inputs(), {}};
  const auto deps = detail::input_dependencies(tape);
  const auto outputs = tape.outputs();
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    deps.for_each(outputs[k], [&](std::size_t c) {
      pattern.entries.emplace_back(static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(c));
    });
  }
  std::sort(pattern.entries.begin(), pattern.entries.end());
  return pattern;
}

/// Lower-triangle (row >= col) Hessian sparsity, union over all outputs.
inline SparsityPattern detect_hessian_sparsity(const Tape& tape) {
  const std::size_t n = tape.num_inputs();
  SparsityPattern pattern{n, n, {}};
  const auto code = tape.code();
  const auto deps = detail::input_dependencies(tape);
  const auto live = detail::live_slots(tape);
  detail::BitRows pairs(n, n);
  auto cross = [&](std::size_t sa, std::size_t sb) {
    deps.for_each(sa, [&](std::size_t i) {
      deps.for_each(sb, [&](std::size_t j) {
        pairs.set(std::max(i, j), std::min(i, j));
      });
    });
  };
  for (std::size_t s = 0; s < code.size(); ++s) {
    const Instruction& ins = code[s];
    if (!live[s] || is_leaf(ins.op) || detail::is_linear(ins)) continue;
    if (ins.op == Op::Mul) {
      cross(ins.a, ins.b);
    } else if (ins.op == Op::Div) {
      cross(ins.a, ins.b);
      cross(ins.b, ins.b);
    } else if (ins.op == Op::Pow) {
      cross(ins.a, ins.a);
      cross(ins.a, ins.b);
      cross(ins.b, ins.b);
    } else {
      cross(ins.a, ins.a);
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    pairs.for_each(r, [&](std::size_t c) {
      if (c <= r) pattern.entries.emplace_back(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c));
    });
  }
  std::sort(pattern.entries.begin(), pattern.entries.end());
  return pattern;
}

inline std::vector<double> gradient(const Tape& tape, std::span<const double> x,
                                    std::span<const double> params = {}) {
  require(tape.num_outputs() == 1, ErrorCode::DimensionMismatch, "gradient needs a scalar tape");
  Workspace ws;
  tape.forward(x, params, ws);
  const double seed = 1.0;
  std::vector<double> g(tape.num_inputs(), 0.0);
  tape.reverse(std::span<const double>(&seed, 1), ws, g);
  detail::check_finite(std::span<const double>(&ws.value[tape.outputs()[0]], 1), "function value");
  detail::check_finite(g, "gradient");
  return g;
}

/// Reverse-mode Jacobian, one sweep per output row, restricted to the
/// detected pattern.
inline SparseMatrix jacobian(const Tape& tape, std::span<const double> x, std::span<const double> params = {}) {
  const SparsityPattern pattern = detect_sparsity(tape);
  SparseMatrix jac{tape.num_outputs(), tape.num_inputs(), {}};
  Workspace ws;
  tape.forward(x, params, ws);
  std::vector<double> seed(tape.num_outputs(), 0.0);
  std::vector<double> row(tape.num_inputs(), 0.0);
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < tape.num_outputs(); ++k) {
    std::fill(seed.begin(), seed.end(), 0.0);
    std::fill(row.begin(), row.end(), 0.0);
    seed[k] = 1.0;
    tape.reverse(seed, ws, row);
    for (; cursor < pattern.entries.size() && pattern.entries[cursor].first == k; ++cursor) {
      const auto c = pattern.entries[cursor].second;
      jac.entries.push_back({static_cast<std::uint32_t>(k), c, row[c]});
    }
  }
  for (const auto& t : jac.entries) {
    require(std::isfinite(t.value), ErrorCode::NonFiniteValue, "jacobian entry is not finite");
  }
  return jac;
}

/// Lower triangle of d^2(obj_weight * f0 + multipliers^T c), forward over
/// reverse with one tangent sweep per input that has Hessian structure.
/// Either tape may be null.
inline SparseMatrix hessian_lagrangian(const Tape* obj_tape, const Tape* con_tape, std::span<const double> x,
                                       double obj_weight, std::span<const double> multipliers) {
  const std::size_t n = x.size();
  if (obj_tape != nullptr) {
    require(obj_tape->num_inputs() == n && obj_tape->num_outputs() == 1, ErrorCode::DimensionMismatch,
            "objective tape arity");
  }
  if (con_tape != nullptr) {
    require(con_tape->num_inputs() == n, ErrorCode::DimensionMismatch, "constraint tape arity");
    require(multipliers.size() == con_tape->num_outputs(), ErrorCode::DimensionMismatch,
            "multiplier length must equal constraint rows");
  }
  SparseMatrix hess{n, n, {}};
  std::vector<char> has_structure(n, 0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;
  for (const Tape* tape : {obj_tape, con_tape}) {
    if (tape == nullptr) continue;
    const auto pattern = detect_hessian_sparsity(*tape);
    for (const auto& e : pattern.entries) {
      has_structure[e.second] = 1;
      entries.push_back(e);
    }
  }
  std::sort(entries.begin(), entries.end());
  entries.erase(std::unique(entries.begin(), entries.end()), entries.end());

  std::vector<double> dense_col(n, 0.0);
  std::vector<double> dir(n, 0.0);
  std::vector<std::vector<double>> by_col(n);
  Workspace ws;
  for (std::size_t c = 0; c < n; ++c) {
    if (!has_structure[c]) continue;
    std::fill(dense_col.begin(), dense_col.end(), 0.0);
    std::fill(dir.begin(), dir.end(), 0.0);
    dir[c] = 1.0;
    if (obj_tape != nullptr) {
      obj_tape->forward(x, {}, ws);
      obj_tape->forward_tangent(dir, ws);
      obj_tape->reverse_second(std::span<const double>(&obj_weight, 1), ws, dense_col);
    }
    if (con_tape != nullptr) {
      con_tape->forward(x, {}, ws);
      con_tape->forward_tangent(dir, ws);
      con_tape->reverse_second(multipliers, ws, dense_col);
    }
    by_col[c] = dense_col;
  }
  for (const auto& e : entries) {
    const double v = by_col[e.second][e.first];
    require(std::isfinite(v), ErrorCode::NonFiniteValue, "hessian entry is not finite");
    hess.entries.push_back({e.first, e.second, v});
  }
  return hess;
}

inline SparseMatrix hessian_lagrangian(const Tape& obj_tape, const Tape& con_tape, std::span<const double> x,
                                       double obj_weight, std::span<const double> multipliers) {
  return hessian_lagrangian(&obj_tape, &con_tape, x, obj_weight, multipliers);
}

}  // namespace mpcctraj::ad
