#pragma once

// Flat NLP assembled from small taped blocks. Every constraint block owns a
// contiguous row range and reads a list of global variables; objective terms
// are weighted scalar tapes. Derivatives are computed per block and scattered
// into fixed global sparsity layouts.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpcctraj/autodiff/derivatives.hpp"
#include "mpcctraj/autodiff/tape.hpp"
#include "mpcctraj/error.hpp"

namespace mpcctraj {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarClass : std::uint8_t { X, Xdot, Y, U, Xf, P, Alpha, Beta, Nu, Free };

/// Identifies one decision variable. `group` distinguishes collision pairs and
/// object sides; it is zero for trajectory variables.
struct VarKey {
  VarClass cls = VarClass::Free;
  std::uint32_t element = 0;
  std::uint32_t node = 0;
  std::uint32_t component = 0;
  std::uint32_t group = 0;

  auto operator<=>(const VarKey&) const = default;
};

enum class BlockKind : std::uint8_t {
  Dynamics,
  Derivative,
  Continuity,
  FinalState,
  Complementarity,
  Stationarity,
  Simplex,
  Separation,
  Generic,
};

struct ConstraintBlock {
  BlockKind kind = BlockKind::Generic;
  std::size_t element = 0;
  std::size_t node = 0;
  std::vector<std::size_t> vars;
  ad::Tape tape;
  std::vector<double> params;
  /// When set, params[0] is overwritten with the live relaxation parameter.
  bool live_delta = false;
  std::vector<double> lower;
  std::vector<double> upper;
  std::size_t row_offset = 0;

  std::size_t rows() const { return tape.num_outputs(); }
};

enum class TermKind : std::uint8_t { Stage, Mayer, Penalty, Generic };

struct ObjectiveTerm {
  TermKind kind = TermKind::Generic;
  std::vector<std::size_t> vars;
  ad::Tape tape;
  double weight = 1.0;
};

enum class PairSource : std::uint8_t { Problem, Collision };

/// One complementarity condition alpha (v1 - bound1)(v2 - bound2) = 0 at a
/// specific collocation point, in global variable indices.
struct ComplementarityEntry {
  std::size_t var1 = 0;
  std::size_t var2 = 0;
  double bound1 = 0.0;
  double bound2 = 0.0;
  int alpha = 1;
  std::size_t element = 0;
  std::size_t node = 0;
  std::size_t pair = 0;
  PairSource source = PairSource::Problem;
};

enum class RootKind : std::uint8_t { Legendre, Radau, ExplicitEuler };

/// Grid bookkeeping recorded by transcription so later passes (collision,
/// trajectory extraction) can find trajectory variables.
struct CollocationLayout {
  bool present = false;
  std::size_t n_x = 0;
  std::size_t n_y = 0;
  std::size_t n_u = 0;
  std::size_t n_p = 0;
  std::size_t num_elements = 0;
  std::size_t order = 0;
  RootKind kind = RootKind::Radau;
  std::vector<double> roots;
  std::vector<double> widths;
  std::vector<double> element_starts;
  double t0 = 0.0;
  double tf = 0.0;
};

enum class RelaxationMode : std::uint8_t { PerConstraint, Aggregate, PerConstraintBarrier, AggregateBarrier, Penalty };

struct RelaxationState {
  bool applied = false;
  RelaxationMode mode = RelaxationMode::PerConstraint;
  double delta = 0.0;
  bool barrier_linked = false;
};

class NlpInstance {
 public:
  std::size_t num_vars() const { return keys_.size(); }
  std::size_t num_rows() const { return num_rows_; }

  std::size_t add_variable(const VarKey& key, double lower, double upper, double init) {
    require(!index_.contains(key), ErrorCode::InvalidArgument, "duplicate variable key");
    require(!(lower > upper), ErrorCode::InvalidArgument, "variable lower bound exceeds upper bound");
    const std::size_t idx = keys_.size();
    keys_.push_back(key);
    index_.emplace(key, idx);
    lower_.push_back(lower);
    upper_.push_back(upper);
    init_.push_back(init);
    return idx;
  }

  bool contains(const VarKey& key) const { return index_.contains(key); }
  std::size_t index(const VarKey& key) const {
    auto it = index_.find(key);
    require(it != index_.end(), ErrorCode::InvalidArgument, "unknown variable key");
    return it->second;
  }
  const VarKey& key(std::size_t idx) const { return keys_.at(idx); }
  std::span<const VarKey> keys() const { return keys_; }

  std::span<const double> lower() const { return lower_; }
  std::span<const double> upper() const { return upper_; }
  std::span<const double> initial() const { return init_; }
  std::vector<double>& mutable_lower() { return lower_; }
  std::vector<double>& mutable_upper() { return upper_; }
  std::vector<double>& mutable_initial() { return init_; }

  std::size_t add_block(ConstraintBlock block) {
    require(block.vars.size() == block.tape.num_inputs(), ErrorCode::DimensionMismatch,
            "block variable list must match tape inputs");
    require(block.lower.size() == block.rows() && block.upper.size() == block.rows(),
            ErrorCode::DimensionMismatch, "block row bounds");
    require(block.params.size() == block.tape.num_params(), ErrorCode::DimensionMismatch,
            "block parameter count");
    check_vars(block.vars);
    block.row_offset = num_rows_;
    num_rows_ += block.rows();
    blocks_.push_back(std::move(block));
    return blocks_.size() - 1;
  }

  void add_objective(ObjectiveTerm term) {
    require(term.vars.size() == term.tape.num_inputs() && term.tape.num_outputs() == 1,
            ErrorCode::DimensionMismatch, "objective term arity");
    check_vars(term.vars);
    objective_.push_back(std::move(term));
  }

  void add_complementarity(const ComplementarityEntry& entry) {
    require(entry.var1 < num_vars() && entry.var2 < num_vars() && entry.var1 != entry.var2,
            ErrorCode::BadComplementarity, "complementarity variables");
    complementarities_.push_back(entry);
  }

  std::span<const ConstraintBlock> blocks() const { return blocks_; }
  std::span<const ObjectiveTerm> objective_terms() const { return objective_; }
  std::span<const ComplementarityEntry> complementarities() const { return complementarities_; }

  std::size_t count_rows(BlockKind kind) const {
    std::size_t total = 0;
    for (const auto& b : blocks_) {
      if (b.kind == kind) total += b.rows();
    }
    return total;
  }

  std::size_t count_vars(VarClass cls) const {
    return static_cast<std::size_t>(
        std::count_if(keys_.begin(), keys_.end(), [cls](const VarKey& k) { return k.cls == cls; }));
  }

  CollocationLayout layout;
  RelaxationState relaxation;

  /// Row bounds flattened in row order.
  std::vector<double> row_lower() const { return flatten(&ConstraintBlock::lower); }
  std::vector<double> row_upper() const { return flatten(&ConstraintBlock::upper); }

 private:
  void check_vars(std::span<const std::size_t> vars) const {
    std::vector<std::size_t> sorted(vars.begin(), vars.end());
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorCode::InvalidArgument,
            "a block may read each variable once");
    require(sorted.empty() || sorted.back() < num_vars(), ErrorCode::InvalidArgument,
            "block references unknown variable");
  }

  std::vector<double> flatten(std::vector<double> ConstraintBlock::*field) const {
    std::vector<double> out;
    out.reserve(num_rows_);
    for (const auto& b : blocks_) out.insert(out.end(), (b.*field).begin(), (b.*field).end());
    return out;
  }

  std::vector<VarKey> keys_;
  std::map<VarKey, std::size_t> index_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<double> init_;
  std::vector<ConstraintBlock> blocks_;
  std::vector<ObjectiveTerm> objective_;
  std::vector<ComplementarityEntry> complementarities_;
  std::size_t num_rows_ = 0;
};

/// Sparse first and second derivatives of an NlpInstance. Holds scratch
/// space, so one evaluator serves one thread.
class NlpEvaluator {
 public:
  explicit NlpEvaluator(const NlpInstance& nlp) : nlp_(&nlp), delta_(nlp.relaxation.delta) { build(); }

  const NlpInstance& nlp() const { return *nlp_; }

  void set_delta(double delta) { delta_ = delta; }
  double delta() const { return delta_; }

  const ad::SparsityPattern& jacobian_pattern() const { return jac_pattern_; }
  /// Lower triangle of the Lagrangian Hessian.
  const ad::SparsityPattern& hessian_pattern() const { return hess_pattern_; }

  double objective(std::span<const double> x) {
    double f = 0.0;
    for (const auto& term : nlp_->objective_terms()) {
      gather(term.vars, x);
      f += term.weight * term.tape.evaluate(local_, {}, ws_)[0];
    }
    return f;
  }

  void gradient(std::span<const double> x, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    for (const auto& term : nlp_->objective_terms()) {
      gather(term.vars, x);
      term.tape.forward(local_, {}, ws_);
      grad_.assign(term.vars.size(), 0.0);
      term.tape.reverse(std::span<const double>(&term.weight, 1), ws_, grad_);
      for (std::size_t k = 0; k < term.vars.size(); ++k) g[term.vars[k]] += grad_[k];
    }
  }

  void constraints(std::span<const double> x, std::span<double> c) {
    for (const auto& block : nlp_->blocks()) {
      gather(block.vars, x);
      const auto out = block.tape.evaluate(local_, params_for(block), ws_);
      std::copy(out.begin(), out.end(), c.begin() + static_cast<std::ptrdiff_t>(block.row_offset));
    }
  }

  /// Values aligned with jacobian_pattern().entries.
  void jacobian(std::span<const double> x, std::span<double> values) {
    std::fill(values.begin(), values.end(), 0.0);
    const auto blocks = nlp_->blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& block = blocks[b];
      const auto& cache = cache_[b];
      gather(block.vars, x);
      block.tape.forward(local_, params_for(block), ws_);
      seed_.assign(block.rows(), 0.0);
      std::size_t cursor = 0;
      for (std::size_t r = 0; r < block.rows(); ++r) {
        std::fill(seed_.begin(), seed_.end(), 0.0);
        seed_[r] = 1.0;
        grad_.assign(block.vars.size(), 0.0);
        block.tape.reverse(seed_, ws_, grad_);
        for (; cursor < cache.jac_local.entries.size() && cache.jac_local.entries[cursor].first == r; ++cursor) {
          values[cache.jac_slot[cursor]] += grad_[cache.jac_local.entries[cursor].second];
        }
      }
    }
  }

  /// Values aligned with hessian_pattern().entries, for
  /// obj_weight * f + lambda^T c.
  void hessian(std::span<const double> x, double obj_weight, std::span<const double> lambda,
               std::span<double> values) {
    std::fill(values.begin(), values.end(), 0.0);
    last_x_ = x;
    for (std::size_t t = 0; t < nlp_->objective_terms().size(); ++t) {
      const auto& term = nlp_->objective_terms()[t];
      const double w = obj_weight * term.weight;
      if (w == 0.0) continue;
      accumulate_hessian(term.tape, term.vars, {}, std::span<const double>(&w, 1), obj_cache_[t], values);
    }
    const auto blocks = nlp_->blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& block = blocks[b];
      const auto weights = lambda.subspan(block.row_offset, block.rows());
      if (std::all_of(weights.begin(), weights.end(), [](double v) { return v == 0.0; })) continue;
      accumulate_hessian(block.tape, block.vars, params_for(block), weights, cache_[b], values);
    }
  }

 private:
  struct BlockCache {
    ad::SparsityPattern jac_local;
    std::vector<std::size_t> jac_slot;
    ad::SparsityPattern hess_local;
    std::vector<std::size_t> hess_slot;
    std::vector<std::size_t> hess_dirs;
  };

  void build() {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> jac_all;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> hess_all;
    const auto blocks = nlp_->blocks();
    cache_.resize(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& block = blocks[b];
      auto& cache = cache_[b];
      cache.jac_local = ad::detect_sparsity(block.tape);
      for (const auto& [r, c] : cache.jac_local.entries) {
        jac_all.emplace_back(static_cast<std::uint32_t>(block.row_offset + r),
                             static_cast<std::uint32_t>(block.vars[c]));
      }
      fill_hessian_cache(block.tape, block.vars, cache, hess_all);
    }
    const auto terms = nlp_->objective_terms();
    obj_cache_.resize(terms.size());
    for (std::size_t t = 0; t < terms.size(); ++t) {
      fill_hessian_cache(terms[t].tape, terms[t].vars, obj_cache_[t], hess_all);
    }
    jac_pattern_ = make_pattern(nlp_->num_rows(), nlp_->num_vars(), std::move(jac_all));
    hess_pattern_ = make_pattern(nlp_->num_vars(), nlp_->num_vars(), std::move(hess_all));
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto& cache = cache_[b];
      for (const auto& [r, c] : cache.jac_local.entries) {
        cache.jac_slot.push_back(slot_of(jac_pattern_, blocks[b].row_offset + r, blocks[b].vars[c]));
      }
      map_hessian(blocks[b].vars, cache);
    }
    for (std::size_t t = 0; t < terms.size(); ++t) map_hessian(terms[t].vars, obj_cache_[t]);
  }

  static void fill_hessian_cache(const ad::Tape& tape, std::span<const std::size_t> vars, BlockCache& cache,
                                 std::vector<std::pair<std::uint32_t, std::uint32_t>>& out) {
    cache.hess_local = ad::detect_hessian_sparsity(tape);
    std::vector<char> dir(vars.size(), 0);
    for (const auto& [r, c] : cache.hess_local.entries) {
      dir[c] = 1;
      const auto gr = vars[r];
      const auto gc = vars[c];
      out.emplace_back(static_cast<std::uint32_t>(std::max(gr, gc)), static_cast<std::uint32_t>(std::min(gr, gc)));
    }
    for (std::size_t k = 0; k < dir.size(); ++k) {
      if (dir[k]) cache.hess_dirs.push_back(k);
    }
  }

  void map_hessian(std::span<const std::size_t> vars, BlockCache& cache) const {
    for (const auto& [r, c] : cache.hess_local.entries) {
      const auto gr = vars[r];
      const auto gc = vars[c];
      cache.hess_slot.push_back(slot_of(hess_pattern_, std::max(gr, gc), std::min(gr, gc)));
    }
  }

  static ad::SparsityPattern make_pattern(std::size_t rows, std::size_t cols,
                                          std::vector<std::pair<std::uint32_t, std::uint32_t>> entries) {
    std::sort(entries.begin(), entries.end());
    entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
    return ad::SparsityPattern{rows, cols, std::move(entries)};
  }

  static std::size_t slot_of(const ad::SparsityPattern& p, std::size_t r, std::size_t c) {
    const std::pair<std::uint32_t, std::uint32_t> key(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c));
    auto it = std::lower_bound(p.entries.begin(), p.entries.end(), key);
    return static_cast<std::size_t>(it - p.entries.begin());
  }

  void accumulate_hessian(const ad::Tape& tape, std::span<const std::size_t> vars, std::span<const double> params,
                          std::span<const double> weights, const BlockCache& cache, std::span<double> values) {
    if (cache.hess_dirs.empty()) return;
    gather(vars, last_x_);
    tape.forward(local_, params, ws_);
    dir_.assign(vars.size(), 0.0);
    std::size_t cursor = 0;
    const auto& entries = cache.hess_local.entries;
    // entries are sorted by row; walk them per column instead.
    col_entries_.clear();
    for (std::size_t e = 0; e < entries.size(); ++e) col_entries_.emplace_back(entries[e].second, e);
    std::sort(col_entries_.begin(), col_entries_.end());
    for (std::size_t d : cache.hess_dirs) {
      dir_[d] = 1.0;
      tape.forward_tangent(dir_, ws_);
      dir_[d] = 0.0;
      hv_.assign(vars.size(), 0.0);
      tape.reverse_second(weights, ws_, hv_);
      for (; cursor < col_entries_.size() && col_entries_[cursor].first == d; ++cursor) {
        const std::size_t e = col_entries_[cursor].second;
        values[cache.hess_slot[e]] += hv_[entries[e].first];
      }
    }
  }

  void gather(std::span<const std::size_t> vars, std::span<const double> x) {
    last_x_ = x;
    local_.resize(vars.size());
    for (std::size_t k = 0; k < vars.size(); ++k) local_[k] = x[vars[k]];
  }

  std::span<const double> params_for(const ConstraintBlock& block) {
    if (!block.live_delta) return block.params;
    live_params_ = block.params;
    live_params_[0] = delta_;
    return live_params_;
  }

  const NlpInstance* nlp_;
  double delta_;
  std::vector<BlockCache> cache_;
  std::vector<BlockCache> obj_cache_;
  ad::SparsityPattern jac_pattern_;
  ad::SparsityPattern hess_pattern_;
  ad::Workspace ws_;
  std::vector<double> local_;
  std::vector<double> grad_;
  std::vector<double> seed_;
  std::vector<double> dir_;
  std::vector<double> hv_;
  std::vector<double> live_params_;
  std::vector<std::pair<std::size_t, std::size_t>> col_entries_;
  std::span<const double> last_x_;
};

}  // namespace mpcctraj
