#pragma once

// Operator-overloading tape: every arithmetic operation on an active `Var`
// appends one single-assignment instruction to the thread's active tape.
// Replays support function values, first-order adjoints and
// forward-over-reverse second-order adjoints.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "mpcctraj/error.hpp"

namespace mpcctraj::ad {

enum class Op : std::uint8_t {
  Input,
  Param,
  Const,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  AddC,
  SubC,
  CSub,
  MulC,
  DivC,
  CDiv,
  PowC,
  CPow,
  Neg,
  Exp,
  Log,
  Sin,
  Cos,
  Tan,
  Sqrt,
  Tanh,
  Atan,
};

/// Operands `a`, `b` are slot indices; for Input/Param `a` is the input/param
/// index. `c` holds the constant operand of the *C ops and the Const value.
struct Instruction {
  Op op;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double c = 0.0;
};

constexpr bool is_binary(Op op) {
  return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div || op == Op::Pow;
}

constexpr bool is_leaf(Op op) { return op == Op::Input || op == Op::Param || op == Op::Const; }

class Recorder;

/// Scratch buffers for one replay. Not shareable between concurrent replays.
struct Workspace {
  std::vector<double> value;
  std::vector<double> tangent;
  std::vector<double> adjoint;
  std::vector<double> adjoint_tangent;
};

class Tape {
 public:
  Tape() = default;

  std::size_t num_inputs() const { return num_inputs_; }
  std::size_t num_outputs() const { return outputs_.size(); }
  std::size_t num_params() const { return param_defaults_.size(); }
  std::size_t size() const { return code_.size(); }
  std::span<const Instruction> code() const { return code_; }
  std::span<const std::uint32_t> outputs() const { return outputs_; }
  std::span<const double> param_defaults() const { return param_defaults_; }

  /// Fills ws.value with every slot value. An empty `params` span uses the
  /// values the parameters had at record time.
  void forward(std::span<const double> x, std::span<const double> params, Workspace& ws) const {
    require(x.size() == num_inputs_, ErrorCode::DimensionMismatch, "tape input arity");
    if (params.empty()) params = param_defaults_;
    require(params.size() == param_defaults_.size(), ErrorCode::DimensionMismatch,
            "tape parameter arity");
    ws.value.resize(code_.size());
    double* v = ws.value.data();
    for (std::size_t i = 0; i < code_.size(); ++i) {
      const Instruction& ins = code_[i];
      const double a = is_leaf(ins.op) ? 0.0 : v[ins.a];
      const double b = is_binary(ins.op) ? v[ins.b] : 0.0;
      switch (ins.op) {
        case Op::Input: v[i] = x[ins.a]; break;
        case Op::Param: v[i] = params[ins.a]; break;
        case Op::Const: v[i] = ins.c; break;
        default: v[i] = apply(ins.op, a, b, ins.c); break;
      }
    }
  }

  std::vector<double> evaluate(std::span<const double> x, std::span<const double> params = {}) const {
    Workspace ws;
    return evaluate(x, params, ws);
  }

  std::vector<double> evaluate(std::span<const double> x, std::span<const double> params,
                               Workspace& ws) const {
    forward(x, params, ws);
    std::vector<double> out(outputs_.size());
    for (std::size_t k = 0; k < outputs_.size(); ++k) out[k] = ws.value[outputs_[k]];
    return out;
  }

  /// Reverse sweep after forward(): accumulates sum_k w_k dF_k/dx into grad.
  void reverse(std::span<const double> out_weights, Workspace& ws, std::span<double> grad) const {
    require(out_weights.size() == outputs_.size(), ErrorCode::DimensionMismatch, "adjoint seed");
    require(grad.size() == num_inputs_, ErrorCode::DimensionMismatch, "gradient buffer");
    ws.adjoint.assign(code_.size(), 0.0);
    double* bar = ws.adjoint.data();
    const double* v = ws.value.data();
    for (std::size_t k = 0; k < outputs_.size(); ++k) bar[outputs_[k]] += out_weights[k];
    for (std::size_t i = code_.size(); i-- > 0;) {
      const double r = bar[i];
      if (r == 0.0) continue;
      const Instruction& ins = code_[i];
      switch (ins.op) {
        case Op::Input: grad[ins.a] += r; break;
        case Op::Param:
        case Op::Const: break;
        default: {
          double da = 0.0;
          double db = 0.0;
          partials(ins, v, i, da, db);
          bar[ins.a] += r * da;
          if (is_binary(ins.op)) bar[ins.b] += r * db;
        }
      }
    }
  }

  /// Tangent sweep after forward(): directional derivative along `dir`.
  void forward_tangent(std::span<const double> dir, Workspace& ws) const {
    require(dir.size() == num_inputs_, ErrorCode::DimensionMismatch, "tangent seed");
    ws.tangent.assign(code_.size(), 0.0);
    double* t = ws.tangent.data();
    const double* v = ws.value.data();
    for (std::size_t i = 0; i < code_.size(); ++i) {
      const Instruction& ins = code_[i];
      switch (ins.op) {
        case Op::Input: t[i] = dir[ins.a]; break;
        case Op::Param:
        case Op::Const: t[i] = 0.0; break;
        default: {
          double da = 0.0;
          double db = 0.0;
          partials(ins, v, i, da, db);
          t[i] = da * t[ins.a] + (is_binary(ins.op) ? db * t[ins.b] : 0.0);
        }
      }
    }
  }

  /// Second-order adjoint after forward() and forward_tangent(): accumulates
  /// (sum_k w_k d^2F_k/dx^2) * dir into hv.
  void reverse_second(std::span<const double> out_weights, Workspace& ws, std::span<double> hv) const {
    require(out_weights.size() == outputs_.size(), ErrorCode::DimensionMismatch, "adjoint seed");
    require(hv.size() == num_inputs_, ErrorCode::DimensionMismatch, "hessian-vector buffer");
    ws.adjoint.assign(code_.size(), 0.0);
    ws.adjoint_tangent.assign(code_.size(), 0.0);
    double* bar = ws.adjoint.data();
    double* dbar = ws.adjoint_tangent.data();
    const double* v = ws.value.data();
    const double* t = ws.tangent.data();
    for (std::size_t k = 0; k < outputs_.size(); ++k) bar[outputs_[k]] += out_weights[k];
    for (std::size_t i = code_.size(); i-- > 0;) {
      const double r = bar[i];
      const double dr = dbar[i];
      if (r == 0.0 && dr == 0.0) continue;
      const Instruction& ins = code_[i];
      if (ins.op == Op::Input) {
        hv[ins.a] += dr;
        continue;
      }
      if (ins.op == Op::Param || ins.op == Op::Const) continue;
      double da = 0.0;
      double db = 0.0;
      partials(ins, v, i, da, db);
      double haa = 0.0;
      double hab = 0.0;
      double hbb = 0.0;
      second_partials(ins, v, i, haa, hab, hbb);
      const double ta = t[ins.a];
      bar[ins.a] += r * da;
      if (is_binary(ins.op)) {
        const double tb = t[ins.b];
        dbar[ins.a] += dr * da + r * (haa * ta + hab * tb);
        bar[ins.b] += r * db;
        dbar[ins.b] += dr * db + r * (hab * ta + hbb * tb);
      } else {
        dbar[ins.a] += dr * da + r * haa * ta;
      }
    }
  }

 private:
  friend class Recorder;

  static double apply(Op op, double a, double b, double c) {
    switch (op) {
      case Op::Add: return a + b;
      case Op::Sub: return a - b;
      case Op::Mul: return a * b;
      case Op::Div: return a / b;
      case Op::Pow: return std::pow(a, b);
      case Op::AddC: return a + c;
      case Op::SubC: return a - c;
      case Op::CSub: return c - a;
      case Op::MulC: return a * c;
      case Op::DivC: return a / c;
      case Op::CDiv: return c / a;
      case Op::PowC: return std::pow(a, c);
      case Op::CPow: return std::pow(c, a);
      case Op::Neg: return -a;
      case Op::Exp: return std::exp(a);
      case Op::Log: return std::log(a);
      case Op::Sin: return std::sin(a);
      case Op::Cos: return std::cos(a);
      case Op::Tan: return std::tan(a);
      case Op::Sqrt: return std::sqrt(a);
      case Op::Tanh: return std::tanh(a);
      case Op::Atan: return std::atan(a);
      default: return 0.0;
    }
  }

  // First partials of slot i with respect to its operands.
  void partials(const Instruction& ins, const double* v, std::size_t i, double& da, double& db) const {
    const double a = v[ins.a];
    const double r = v[i];
    switch (ins.op) {
      case Op::Add: da = 1.0; db = 1.0; break;
      case Op::Sub: da = 1.0; db = -1.0; break;
      case Op::Mul: da = v[ins.b]; db = a; break;
      case Op::Div: da = 1.0 / v[ins.b]; db = -r / v[ins.b]; break;
      case Op::Pow: {
        const double b = v[ins.b];
        da = b * std::pow(a, b - 1.0);
        db = r * std::log(a);
        break;
      }
      case Op::AddC:
      case Op::SubC: da = 1.0; break;
      case Op::CSub: da = -1.0; break;
      case Op::MulC: da = ins.c; break;
      case Op::DivC: da = 1.0 / ins.c; break;
      case Op::CDiv: da = -r / a; break;
      case Op::PowC: da = ins.c * std::pow(a, ins.c - 1.0); break;
      case Op::CPow: da = r * std::log(ins.c); break;
      case Op::Neg: da = -1.0; break;
      case Op::Exp: da = r; break;
      case Op::Log: da = 1.0 / a; break;
      case Op::Sin: da = std::cos(a); break;
      case Op::Cos: da = -std::sin(a); break;
      case Op::Tan: da = 1.0 + r * r; break;
      case Op::Sqrt: da = 0.5 / r; break;
      case Op::Tanh: da = 1.0 - r * r; break;
      case Op::Atan: da = 1.0 / (1.0 + a * a); break;
      default: break;
    }
  }

  void second_partials(const Instruction& ins, const double* v, std::size_t i, double& haa, double& hab,
                       double& hbb) const {
    const double a = v[ins.a];
    const double r = v[i];
    switch (ins.op) {
      case Op::Mul: hab = 1.0; break;
      case Op::Div: {
        const double b = v[ins.b];
        hab = -1.0 / (b * b);
        hbb = 2.0 * r / (b * b);
        break;
      }
      case Op::Pow: {
        const double b = v[ins.b];
        const double la = std::log(a);
        haa = b * (b - 1.0) * std::pow(a, b - 2.0);
        hab = std::pow(a, b - 1.0) * (1.0 + b * la);
        hbb = r * la * la;
        break;
      }
      case Op::CDiv: haa = 2.0 * r / (a * a); break;
      case Op::PowC: haa = ins.c * (ins.c - 1.0) * std::pow(a, ins.c - 2.0); break;
      case Op::CPow: {
        const double lc = std::log(ins.c);
        haa = r * lc * lc;
        break;
      }
      case Op::Exp: haa = r; break;
      case Op::Log: haa = -1.0 / (a * a); break;
      case Op::Sin: haa = -r; break;
      case Op::Cos: haa = -r; break;
      case Op::Tan: haa = 2.0 * r * (1.0 + r * r); break;
      case Op::Sqrt: haa = -0.25 / (r * r * r); break;
      case Op::Tanh: haa = -2.0 * r * (1.0 - r * r); break;
      case Op::Atan: {
        const double d = 1.0 + a * a;
        haa = -2.0 * a / (d * d);
        break;
      }
      default: break;
    }
  }

  std::size_t num_inputs_ = 0;
  std::vector<Instruction> code_;
  std::vector<std::uint32_t> outputs_;
  std::vector<double> param_defaults_;
};

/// Scalar that records onto the active tape. A default- or double-constructed
/// Var is a passive constant and never reaches the tape.
class Var {
 public:
  static constexpr std::uint32_t kPassive = std::numeric_limits<std::uint32_t>::max();

  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT(google-explicit-constructor)

  double value() const { return value_; }
  bool is_passive() const { return slot_ == kPassive; }
  std::uint32_t slot() const { return slot_; }

 private:
  friend class Recorder;

  Var(double value, std::uint32_t slot) : value_(value), slot_(slot) {}

  double value_ = 0.0;
  std::uint32_t slot_ = kPassive;
};

/// Owns the thread's active tape while alive. Recorders nest; only the
/// innermost one receives instructions.
class Recorder {
 public:
  explicit Recorder(std::span<const double> point, std::span<const double> params = {})
      : previous_(active()) {
    active() = this;
    tape_.num_inputs_ = point.size();
    inputs_.reserve(point.size());
    for (std::size_t k = 0; k < point.size(); ++k) {
      inputs_.push_back(push(Instruction{Op::Input, static_cast<std::uint32_t>(k), 0, 0.0}, point[k]));
    }
    params_.reserve(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      tape_.param_defaults_.push_back(params[k]);
      params_.push_back(push(Instruction{Op::Param, static_cast<std::uint32_t>(k), 0, 0.0}, params[k]));
    }
  }

  Recorder(const Recorder&) = delete;
  Recorder& operator=(const Recorder&) = delete;

  ~Recorder() { active() = previous_; }

  std::span<const Var> inputs() const { return inputs_; }
  std::span<const Var> params() const { return params_; }

  /// Closes the tape. Passive outputs become Const instructions.
  Tape finish(std::span<const Var> outputs) {
    for (const Var& out : outputs) {
      if (out.is_passive()) {
        const Var c = push(Instruction{Op::Const, 0, 0, out.value()}, out.value());
        tape_.outputs_.push_back(c.slot());
      } else {
        tape_.outputs_.push_back(out.slot());
      }
    }
    return std::move(tape_);
  }

  static Recorder*& active() {
    thread_local Recorder* current = nullptr;
    return current;
  }

  Var push(const Instruction& ins, double value) {
    const auto slot = static_cast<std::uint32_t>(tape_.code_.size());
    tape_.code_.push_back(ins);
    return Var(value, slot);
  }

 private:
  Recorder* previous_;
  Tape tape_;
  std::vector<Var> inputs_;
  std::vector<Var> params_;
};

namespace detail {

inline Recorder& recorder() {
  Recorder* r = Recorder::active();
  require(r != nullptr, ErrorCode::UnsupportedPrimitive, "active Var used outside a Recorder scope");
  return *r;
}

inline Var unary(Op op, const Var& a, double value) {
  if (a.is_passive()) return Var(value);
  return recorder().push(Instruction{op, a.slot(), 0, 0.0}, value);
}

inline Var binary(Op op, Op op_ac, Op op_ca, const Var& a, const Var& b, double value) {
  if (a.is_passive() && b.is_passive()) return Var(value);
  if (b.is_passive()) return recorder().push(Instruction{op_ac, a.slot(), 0, b.value()}, value);
  if (a.is_passive()) return recorder().push(Instruction{op_ca, b.slot(), 0, a.value()}, value);
  return recorder().push(Instruction{op, a.slot(), b.slot(), 0.0}, value);
}

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  return detail::binary(Op::Add, Op::AddC, Op::AddC, a, b, a.value() + b.value());
}
inline Var operator-(const Var& a, const Var& b) {
  return detail::binary(Op::Sub, Op::SubC, Op::CSub, a, b, a.value() - b.value());
}
inline Var operator*(const Var& a, const Var& b) {
  return detail::binary(Op::Mul, Op::MulC, Op::MulC, a, b, a.value() * b.value());
}
inline Var operator/(const Var& a, const Var& b) {
  return detail::binary(Op::Div, Op::DivC, Op::CDiv, a, b, a.value() / b.value());
}
inline Var operator-(const Var& a) { return detail::unary(Op::Neg, a, -a.value()); }
inline Var operator+(const Var& a) { return a; }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

// Comparisons act on values only; any branch on them is invisible to the tape
// and is caught by record_checked's probes.
inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }
inline bool operator<=(const Var& a, const Var& b) { return a.value() <= b.value(); }
inline bool operator>=(const Var& a, const Var& b) { return a.value() >= b.value(); }
inline bool operator==(const Var& a, const Var& b) { return a.value() == b.value(); }
inline bool operator!=(const Var& a, const Var& b) { return a.value() != b.value(); }

inline Var exp(const Var& a) { return detail::unary(Op::Exp, a, std::exp(a.value())); }
inline Var log(const Var& a) { return detail::unary(Op::Log, a, std::log(a.value())); }
inline Var sin(const Var& a) { return detail::unary(Op::Sin, a, std::sin(a.value())); }
inline Var cos(const Var& a) { return detail::unary(Op::Cos, a, std::cos(a.value())); }
inline Var tan(const Var& a) { return detail::unary(Op::Tan, a, std::tan(a.value())); }
inline Var sqrt(const Var& a) { return detail::unary(Op::Sqrt, a, std::sqrt(a.value())); }
inline Var tanh(const Var& a) { return detail::unary(Op::Tanh, a, std::tanh(a.value())); }
inline Var atan(const Var& a) { return detail::unary(Op::Atan, a, std::atan(a.value())); }

inline Var pow(const Var& a, const Var& b) {
  return detail::binary(Op::Pow, Op::PowC, Op::CPow, a, b, std::pow(a.value(), b.value()));
}
inline Var pow(const Var& a, double b) {
  return detail::binary(Op::Pow, Op::PowC, Op::CPow, a, Var(b), std::pow(a.value(), b));
}
inline Var square(const Var& a) { return a * a; }

/// sqrt(a^2 + eps^2): a differentiable stand-in for |a|.
template <class T>
T smooth_abs(const T& a, double eps) {
  using std::sqrt;
  return sqrt(a * a + eps * eps);
}

/// 0.5 (a + b + sqrt((a - b)^2 + eps^2)): differentiable upper envelope of a, b.
template <class T>
T smooth_max(const T& a, const T& b, double eps) {
  return 0.5 * (a + b + smooth_abs(a - b, eps));
}

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

}  // namespace mpcctraj::ad
