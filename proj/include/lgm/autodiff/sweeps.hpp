#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lgm/autodiff/dual.hpp"
#include "lgm/autodiff/tape.hpp"
#include "lgm/linalg/matrix.hpp"

namespace lgm {

namespace detail {

inline void check_output_finite(double v, const char* who) {
  if (!std::isfinite(v))
    throw NumericalDomainError(std::string(who) + " produced a non-finite output");
}

}  // namespace detail

struct FwdSweepResult {
  Vector value;
  Vector tangent;
};

struct RevSweepResult {
  Vector value;
  Vector gradient;
};

// One forward (tangent) sweep of a map f : R^k -> R^l. The callable is
// invoked with a std::vector of forward scalars and must return a
// std::vector of the same scalar type.
template <class F>
FwdSweepResult fwd_sweep(F&& f, const Vector& x, const Vector& v) {
  check_dim(x.size() == v.size(), "fwd_sweep tangent");
  std::vector<Dual<double>> xs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xs[i] = {x[i], v[i]};
  std::vector<Dual<double>> ys = f(xs);
  sweep_counter().forward += 1;
  FwdSweepResult r;
  r.value.resize(ys.size());
  r.tangent.resize(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    detail::check_output_finite(ys[i].v, "fwd_sweep");
    r.value[i] = ys[i].v;
    r.tangent[i] = ys[i].d;
  }
  return r;
}

// One reverse sweep of a map f : R^k -> R^l with output cotangent w,
// returning wᵀJ. Records on a fresh tape that is discarded on return.
template <class F>
RevSweepResult rev_sweep(F&& f, const Vector& x, const Vector& w) {
  TapeScope scope;
  std::vector<Var> xs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xs[i] = Var::leaf(x[i]);
  std::vector<Var> ys = f(xs);
  check_dim(ys.size() == w.size(), "rev_sweep cotangent");
  RevSweepResult r;
  r.value.resize(ys.size());
  Var acc(0.0);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    detail::check_output_finite(ys[i].value(), "rev_sweep");
    r.value[i] = ys[i].value();
    acc += w[i] * ys[i];
  }
  r.gradient.assign(x.size(), 0.0);
  if (acc.tracked()) {
    std::vector<double> adj = scope.tape.reverse(acc.slot());
    sweep_counter().reverse += 1;
    for (std::size_t i = 0; i < x.size(); ++i)
      r.gradient[i] = adj[static_cast<std::size_t>(xs[i].slot())];
  }
  return r;
}

// Hessian-vector product of a scalar field: one forward sweep carrying the
// tangent v, one reverse sweep of the resulting directional derivative.
template <class F>
Vector hessian_vector(F&& f, const Vector& x, const Vector& v) {
  check_dim(x.size() == v.size(), "hessian_vector tangent");
  TapeScope scope;
  std::vector<Dual<Var>> xs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    xs[i] = {Var::leaf(x[i]), Var(v[i])};
  Dual<Var> y = f(xs);
  sweep_counter().forward += 1;
  detail::check_output_finite(y.v.value(), "hessian_vector");
  Vector hv(x.size(), 0.0);
  if (y.d.tracked()) {
    std::vector<double> adj = scope.tape.reverse(y.d.slot());
    sweep_counter().reverse += 1;
    for (std::size_t i = 0; i < x.size(); ++i)
      hv[i] = adj[static_cast<std::size_t>(xs[i].v.slot())];
  }
  return hv;
}

// All non-zero entries of a block-diagonal Hessian in m probes. The j-th
// probe carries a unit tangent on every coordinate congruent to j modulo m;
// for a field whose Hessian really is block diagonal with block size m, the
// product isolates column j of every diagonal block. If the declared
// structure does not hold, entry (r, j) of block b aliases the strided sum
// over H(b·m + r, k) for k ≡ j (mod m): the structure is trusted, not
// checked.
template <class F>
BlockDiagonal block_hessian(F&& f, const Vector& x, int m) {
  int n = static_cast<int>(x.size());
  BlockDiagonal h(n, m);
  Vector probe(x.size());
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) probe[i] = (i % m == j) ? 1.0 : 0.0;
    Vector col = hessian_vector(f, x, probe);
    for (int b = 0; b < h.blocks(); ++b)
      for (int r = 0; r < m; ++r) h.at(b, r, j) = col[b * m + r];
  }
  return h;
}

// Per-coordinate third derivatives of a scalar field whose Hessian is
// diagonal: two unit forward sweeps and one reverse sweep. With an all-ones
// tangent at both forward levels the reverse sweep of the second-order
// directional derivative collapses to (∂³f/∂xᵢ³)ᵢ when all mixed third
// derivatives vanish; the diagonality declaration is trusted.
template <class F>
Vector third_order_diag(F&& f, const Vector& x) {
  TapeScope scope;
  using Tower = Dual<Dual<Var>>;
  std::vector<Tower> xs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    xs[i] = Tower(Dual<Var>(Var::leaf(x[i]), Var(1.0)),
                  Dual<Var>(Var(1.0), Var(0.0)));
  Tower y = f(xs);
  sweep_counter().forward += 2;
  detail::check_output_finite(y.v.v.value(), "third_order_diag");
  Vector t(x.size(), 0.0);
  if (y.d.d.tracked()) {
    std::vector<double> adj = scope.tape.reverse(y.d.d.slot());
    sweep_counter().reverse += 1;
    for (std::size_t i = 0; i < x.size(); ++i)
      t[i] = adj[static_cast<std::size_t>(xs[i].v.v.slot())];
  }
  return t;
}

enum class SweepMode { Forward, Reverse };

// Which slice of the joint input a seed applies to (or adjoints are read
// from): the first n_theta coordinates, the remainder, or everything.
enum class VarBlock { Theta, Eta, Joint };

struct SweepDescriptor {
  SweepMode mode;
  VarBlock block;
  Vector seed;
};

struct SweepPlan {
  std::vector<SweepDescriptor> sweeps;
};

namespace detail {

inline int block_dim(VarBlock block, int n_theta, int n_total) {
  switch (block) {
    case VarBlock::Theta: return n_theta;
    case VarBlock::Eta: return n_total - n_theta;
    case VarBlock::Joint: return n_total;
  }
  return 0;
}

inline double seed_at(const SweepDescriptor& d, int i, int n_theta) {
  switch (d.block) {
    case VarBlock::Theta:
      return i < n_theta ? d.seed[i] : 0.0;
    case VarBlock::Eta:
      return i >= n_theta ? d.seed[i - n_theta] : 0.0;
    case VarBlock::Joint:
      return d.seed[i];
  }
  return 0.0;
}

}  // namespace detail

// Rejects plans the tower cannot execute: the tower is
// reverse-over-forward-over-forward, so at most two forward sweeps may
// precede at most one reverse sweep, and the reverse sweep must come last.
inline void validate_plan(const SweepPlan& plan, int n_theta, int n_total) {
  if (plan.sweeps.empty()) throw PlanError("empty sweep plan");
  int forward = 0, reverse = 0;
  for (std::size_t i = 0; i < plan.sweeps.size(); ++i) {
    const SweepDescriptor& d = plan.sweeps[i];
    if (d.mode == SweepMode::Forward) {
      if (reverse > 0)
        throw PlanError("forward sweep after a reverse sweep");
      ++forward;
      int dim = detail::block_dim(d.block, n_theta, n_total);
      if (static_cast<int>(d.seed.size()) != dim)
        throw PlanError("forward seed length does not match its block");
    } else {
      ++reverse;
      if (i + 1 != plan.sweeps.size())
        throw PlanError("reverse sweep must be the final sweep");
      if (d.seed.size() != 1)
        throw PlanError("reverse seed must be a single output cotangent");
    }
  }
  if (forward > 2) throw PlanError("more than two forward sweeps requested");
  if (reverse > 1) throw PlanError("more than one reverse sweep requested");
}

// Executes a validated sweep plan over a scalar field on the joint input
// x = (theta, eta). Plans ending in a reverse sweep return the adjoints of
// that sweep's block scaled by its cotangent; pure forward plans return the
// innermost tangent of the final evaluation as a single element.
template <class F>
Vector run_plan(F&& f, const Vector& x, int n_theta, const SweepPlan& plan) {
  int n = static_cast<int>(x.size());
  if (n_theta < 0 || n_theta > n)
    throw ContractError("run_plan: theta block exceeds input");
  validate_plan(plan, n_theta, n);

  int forward = 0;
  bool has_reverse = false;
  for (const auto& d : plan.sweeps) {
    if (d.mode == SweepMode::Forward) ++forward;
    else has_reverse = true;
  }
  const SweepDescriptor* rev = has_reverse ? &plan.sweeps.back() : nullptr;

  auto adjoints_of = [&](const std::vector<std::int64_t>& slots,
                         std::vector<double>& adj, double weight) {
    int lo = rev->block == VarBlock::Eta ? n_theta : 0;
    int hi = rev->block == VarBlock::Theta ? n_theta : n;
    Vector out(hi - lo, 0.0);
    for (int i = lo; i < hi; ++i)
      out[i - lo] = weight * adj[static_cast<std::size_t>(slots[i])];
    return out;
  };

  if (forward == 0) {
    // [rev]
    TapeScope scope;
    std::vector<Var> xs(n);
    std::vector<std::int64_t> slots(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = Var::leaf(x[i]);
      slots[i] = xs[i].slot();
    }
    Var y = f(xs);
    detail::check_output_finite(y.value(), "run_plan");
    int lo = rev->block == VarBlock::Eta ? n_theta : 0;
    int hi = rev->block == VarBlock::Theta ? n_theta : n;
    if (!y.tracked()) return Vector(hi - lo, 0.0);
    std::vector<double> adj = scope.tape.reverse(y.slot());
    sweep_counter().reverse += 1;
    return adjoints_of(slots, adj, rev->seed[0]);
  }

  if (forward == 1 && !has_reverse) {
    // [fwd]
    const SweepDescriptor& d = plan.sweeps[0];
    std::vector<Dual<double>> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = {x[i], detail::seed_at(d, i, n_theta)};
    Dual<double> y = f(xs);
    sweep_counter().forward += 1;
    detail::check_output_finite(y.v, "run_plan");
    return {y.d};
  }

  if (forward == 1 && has_reverse) {
    // [fwd, rev]
    const SweepDescriptor& d = plan.sweeps[0];
    TapeScope scope;
    std::vector<Dual<Var>> xs(n);
    std::vector<std::int64_t> slots(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = {Var::leaf(x[i]), Var(detail::seed_at(d, i, n_theta))};
      slots[i] = xs[i].v.slot();
    }
    Dual<Var> y = f(xs);
    sweep_counter().forward += 1;
    detail::check_output_finite(y.v.value(), "run_plan");
    int lo = rev->block == VarBlock::Eta ? n_theta : 0;
    int hi = rev->block == VarBlock::Theta ? n_theta : n;
    if (!y.d.tracked()) return Vector(hi - lo, 0.0);
    std::vector<double> adj = scope.tape.reverse(y.d.slot());
    sweep_counter().reverse += 1;
    return adjoints_of(slots, adj, rev->seed[0]);
  }

  if (forward == 2 && !has_reverse) {
    // [fwd, fwd]
    const SweepDescriptor& d0 = plan.sweeps[0];
    const SweepDescriptor& d1 = plan.sweeps[1];
    using Tower = Dual<Dual<double>>;
    std::vector<Tower> xs(n);
    for (int i = 0; i < n; ++i)
      xs[i] = Tower(Dual<double>(x[i], detail::seed_at(d0, i, n_theta)),
                    Dual<double>(detail::seed_at(d1, i, n_theta), 0.0));
    Tower y = f(xs);
    sweep_counter().forward += 2;
    detail::check_output_finite(y.v.v, "run_plan");
    return {y.d.d};
  }

  // [fwd, fwd, rev]
  const SweepDescriptor& d0 = plan.sweeps[0];
  const SweepDescriptor& d1 = plan.sweeps[1];
  TapeScope scope;
  using Tower = Dual<Dual<Var>>;
  std::vector<Tower> xs(n);
  std::vector<std::int64_t> slots(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = Tower(Dual<Var>(Var::leaf(x[i]),
                            Var(detail::seed_at(d0, i, n_theta))),
                  Dual<Var>(Var(detail::seed_at(d1, i, n_theta)), Var(0.0)));
    slots[i] = xs[i].v.v.slot();
  }
  Tower y = f(xs);
  sweep_counter().forward += 2;
  detail::check_output_finite(y.v.v.value(), "run_plan");
  int lo = rev->block == VarBlock::Eta ? n_theta : 0;
  int hi = rev->block == VarBlock::Theta ? n_theta : n;
  if (!y.d.d.tracked()) return Vector(hi - lo, 0.0);
  std::vector<double> adj = scope.tape.reverse(y.d.d.slot());
  sweep_counter().reverse += 1;
  return adjoints_of(slots, adj, rev->seed[0]);
}

}  // namespace lgm
