#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lgm/errors.hpp"

namespace lgm {

// Counts differentiation sweeps executed on this thread.  Each seeded
// tangent level of a forward evaluation counts as one forward sweep; each
// tape traversal counts as one reverse sweep.  Tests reset and read it to
// pin down sweep complexity.
struct SweepCounter {
  long long forward = 0;
  long long reverse = 0;
  void reset() { forward = reverse = 0; }
};

inline SweepCounter& sweep_counter() {
  thread_local SweepCounter counter;
  return counter;
}

// Append-only record of one scalar evaluation.  A node stores up to two
// parent slots with the local partial derivatives of its result; leaves
// store none.  The tape lives exactly as long as one recorded evaluation
// and is discarded after its single reverse sweep.
class Tape {
public:
  struct Node {
    std::int32_t p0, p1;
    double d0, d1;
  };

  std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }

  std::int64_t push_leaf() {
    nodes_.push_back({-1, -1, 0.0, 0.0});
    return size() - 1;
  }

  std::int64_t push(const char* op, double value, std::int32_t p0, double d0,
                    std::int32_t p1, double d1) {
    nodes_.push_back({p0, p1, d0, d1});
    if (!std::isfinite(value)) throw NumericalDomainError(op, size() - 1);
    return size() - 1;
  }

  // Propagates an adjoint of 1 seeded at `seed` back to every node and
  // returns the full adjoint array.  A tape records one evaluation and
  // supports one sweep; re-sweeping requires re-recording.
  std::vector<double> reverse(std::int64_t seed) {
    if (swept_) throw TapeStateError("tape already swept; re-record first");
    if (seed < 0 || seed >= size())
      throw TapeStateError("reverse seed is not a recorded node");
    swept_ = true;
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[static_cast<std::size_t>(seed)] = 1.0;
    for (std::int64_t i = seed; i >= 0; --i) {
      double a = adj[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const Node& node = nodes_[static_cast<std::size_t>(i)];
      if (node.p0 >= 0) adj[node.p0] += node.d0 * a;
      if (node.p1 >= 0) adj[node.p1] += node.d1 * a;
    }
    return adj;
  }

  bool swept() const { return swept_; }

private:
  std::vector<Node> nodes_;
  bool swept_ = false;
};

inline Tape*& active_tape() {
  thread_local Tape* tape = nullptr;
  return tape;
}

// RAII activation of a fresh tape arena.  Scopes nest; the enclosing tape
// is restored on exit and the inner arena is freed.
struct TapeScope {
  Tape tape;
  Tape* previous;
  TapeScope() : previous(active_tape()) { active_tape() = &tape; }
  ~TapeScope() { active_tape() = previous; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

namespace detail {
struct VarOps;
}

// Reverse-mode scalar: a double value plus the slot of the node that
// produced it on the active tape (-1 for constants, which are never
// differentiated through).  Vars are only meaningful inside the TapeScope
// they were recorded under.
class Var {
public:
  Var() : v_(0.0), slot_(-1) {}
  Var(double v) : v_(v), slot_(-1) {}

  // Registers an input on the active tape.
  static Var leaf(double v) {
    Tape* t = active_tape();
    if (!t) throw TapeStateError("no active tape for input registration");
    return Var(v, t->push_leaf());
  }

  double value() const { return v_; }
  std::int64_t slot() const { return slot_; }
  bool tracked() const { return slot_ >= 0; }

private:
  Var(double v, std::int64_t slot) : v_(v), slot_(slot) {}
  double v_;
  std::int64_t slot_;
  friend struct detail::VarOps;
};

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

namespace detail {

struct VarOps {
  static Var unary(const char* op, double value, const Var& a, double da) {
    Tape* t = active_tape();
    if (t && a.tracked()) {
      auto slot =
          t->push(op, value, static_cast<std::int32_t>(a.slot()), da, -1, 0.0);
      return Var(value, slot);
    }
    return Var(value);
  }

  static Var binary(const char* op, double value, const Var& a, double da,
                    const Var& b, double db) {
    Tape* t = active_tape();
    if (t && (a.tracked() || b.tracked())) {
      auto slot = t->push(
          op, value, a.tracked() ? static_cast<std::int32_t>(a.slot()) : -1,
          da, b.tracked() ? static_cast<std::int32_t>(b.slot()) : -1, db);
      return Var(value, slot);
    }
    return Var(value);
  }
};

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  return detail::VarOps::binary("add", a.value() + b.value(), a, 1.0, b, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return detail::VarOps::binary("sub", a.value() - b.value(), a, 1.0, b, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return detail::VarOps::binary("mul", a.value() * b.value(), a, b.value(), b,
                                a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  double q = a.value() / b.value();
  return detail::VarOps::binary("div", q, a, 1.0 / b.value(), b,
                                -q / b.value());
}
inline Var operator-(const Var& a) {
  return detail::VarOps::unary("neg", -a.value(), a, -1.0);
}
inline Var operator+(const Var& a) { return a; }

inline Var operator+(const Var& a, double b) {
  return detail::VarOps::unary("add", a.value() + b, a, 1.0);
}
inline Var operator+(double a, const Var& b) { return b + a; }
inline Var operator-(const Var& a, double b) {
  return detail::VarOps::unary("sub", a.value() - b, a, 1.0);
}
inline Var operator-(double a, const Var& b) {
  return detail::VarOps::unary("sub", a - b.value(), b, -1.0);
}
inline Var operator*(const Var& a, double b) {
  return detail::VarOps::unary("mul", a.value() * b, a, b);
}
inline Var operator*(double a, const Var& b) { return b * a; }
inline Var operator/(const Var& a, double b) {
  return detail::VarOps::unary("div", a.value() / b, a, 1.0 / b);
}
inline Var operator/(double a, const Var& b) {
  double q = a / b.value();
  return detail::VarOps::unary("div", q, b, -q / b.value());
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline Var exp(const Var& a) {
  double e = std::exp(a.value());
  return detail::VarOps::unary("exp", e, a, e);
}
inline Var log(const Var& a) {
  return detail::VarOps::unary("log", std::log(a.value()), a, 1.0 / a.value());
}
inline Var log1p(const Var& a) {
  return detail::VarOps::unary("log1p", std::log1p(a.value()), a,
                               1.0 / (1.0 + a.value()));
}
inline Var sqrt(const Var& a) {
  double s = std::sqrt(a.value());
  return detail::VarOps::unary("sqrt", s, a, 0.5 / s);
}
inline Var sin(const Var& a) {
  return detail::VarOps::unary("sin", std::sin(a.value()), a,
                               std::cos(a.value()));
}
inline Var cos(const Var& a) {
  return detail::VarOps::unary("cos", std::cos(a.value()), a,
                               -std::sin(a.value()));
}
inline Var tan(const Var& a) {
  double t = std::tan(a.value());
  return detail::VarOps::unary("tan", t, a, 1.0 + t * t);
}
inline Var tanh(const Var& a) {
  double t = std::tanh(a.value());
  return detail::VarOps::unary("tanh", t, a, 1.0 - t * t);
}
inline Var atan(const Var& a) {
  return detail::VarOps::unary(
      "atan", std::atan(a.value()), a,
      1.0 / (1.0 + a.value() * a.value()));
}
inline Var pow(const Var& a, double p) {
  return detail::VarOps::unary("pow", std::pow(a.value(), p), a,
                               p * std::pow(a.value(), p - 1.0));
}

}  // namespace lgm
