#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lgm/adjoint/adjoint.hpp"
#include "lgm/cli/config.hpp"
#include "lgm/errors.hpp"
#include "lgm/mcmc/ess.hpp"
#include "lgm/mcmc/hmc.hpp"
#include "lgm/models/csv.hpp"
#include "lgm/models/gaussian.hpp"
#include "lgm/models/kernels.hpp"
#include "lgm/models/pk.hpp"
#include "lgm/models/poisson.hpp"
#include "lgm/models/student_t.hpp"
#include "lgm/newton/newton.hpp"
#include "lgm/posterior/posterior.hpp"
#include "lgm/rng.hpp"

namespace lgm::cli {

// ---------------------------------------------------------------------------
// Small output helpers
// ---------------------------------------------------------------------------

// Floats in CSV files carry 17 significant digits so a read-back is lossless.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open '" + path.string() + "' for writing");
  return f;
}

inline std::filesystem::path out_dir(const RunConfig& cfg) {
  return std::filesystem::path(cfg.out.value_or("."));
}

// ---------------------------------------------------------------------------
// Model registry
// ---------------------------------------------------------------------------

struct ModelBundle {
  std::string model;
  std::unique_ptr<LikelihoodModel> lik;
  std::unique_ptr<CovarianceModel> cov;
  Vector phi;  // resolved covariance hyperparameters
  Vector eta;  // resolved likelihood hyperparameters
  std::vector<std::string> phi_names;
  std::vector<std::string> eta_names;
  BStrategy strategy = BStrategy::B1;
};

namespace detail {

inline std::vector<std::string> kernel_param_names(bool ard, int dims) {
  std::vector<std::string> names{"amplitude"};
  if (!ard) {
    names.push_back("lengthscale");
  } else {
    for (int d = 1; d <= dims; ++d)
      names.push_back("lengthscale_" + std::to_string(d));
  }
  return names;
}

inline Vector resolve_vector(const std::optional<Vector>& given,
                             const Vector& fallback, const char* key,
                             const std::string& model) {
  if (!given) return fallback;
  if (given->size() != fallback.size())
    throw ConfigError("model '" + model + "' expects " +
                      std::to_string(fallback.size()) + " entries for '" +
                      key + "', got " + std::to_string(given->size()));
  return *given;
}

}  // namespace detail

// Builds the likelihood/covariance pair named by the config, loads its data
// file, and resolves hyperparameter values and the factorization strategy.
inline ModelBundle build_model(const RunConfig& cfg) {
  ModelBundle b;
  b.model = cfg.model;
  const bool ard = cfg.ard.value_or(false);

  auto require_data = [&]() -> std::string {
    if (!cfg.data)
      throw ConfigError("model '" + cfg.model +
                        "' requires a data file (key 'data')");
    return *cfg.data;
  };

  if (cfg.model == "pk") {
    auto patients = load_pk_csv(require_data());
    b.lik = std::make_unique<PkLikelihood>(std::move(patients),
                                           cfg.dose.value_or(1.0));
    b.cov = std::make_unique<DiagonalCovariance>(b.lik->latent_dim(), 2);
    b.phi = detail::resolve_vector(cfg.phi, {0.2, 0.2}, "phi", cfg.model);
    b.eta = detail::resolve_vector(
        cfg.eta, {std::log(0.1), std::log(2.0), std::log(1.0)}, "eta",
        cfg.model);
    b.phi_names = {"tau1", "tau2"};
    b.eta_names = {"log_sigma", "log_k1pop", "log_k2pop"};
    b.strategy = BStrategy::B3;
  } else {
    XyData data = load_xy_csv(require_data());
    const int dims = static_cast<int>(data.x.front().size());
    if (cfg.model == "poisson_gp") {
      std::vector<long> counts(data.y.size());
      for (std::size_t i = 0; i < data.y.size(); ++i) {
        double r = std::round(data.y[i]);
        if (std::abs(data.y[i] - r) > 1e-9 || r < 0)
          throw DataFormatError(
              "poisson_gp needs non-negative integer y values",
              static_cast<long>(i) + 2);
        counts[i] = static_cast<long>(r);
      }
      b.lik = std::make_unique<PoissonLogLikelihood>(std::move(counts));
      b.eta_names = {};
      b.strategy = BStrategy::B1;
    } else if (cfg.model == "gaussian_gp") {
      b.lik = std::make_unique<GaussianLikelihood>(data.y);
      b.eta = detail::resolve_vector(cfg.eta, {1.0}, "eta", cfg.model);
      b.eta_names = {"sigma"};
      b.strategy = BStrategy::B1;
    } else if (cfg.model == "student_t_gp") {
      b.lik = std::make_unique<StudentTLikelihood>(data.y, cfg.nu.value_or(4.0));
      b.eta = detail::resolve_vector(cfg.eta, {0.0}, "eta", cfg.model);
      b.eta_names = {"log_sigma"};
      b.strategy = BStrategy::B3;
    } else {
      throw ConfigError("unknown model '" + cfg.model + "'");
    }
    b.cov = std::make_unique<SquaredExponentialKernel>(std::move(data.x), ard);
    Vector ones(static_cast<std::size_t>(b.cov->param_dim()), 1.0);
    b.phi = detail::resolve_vector(cfg.phi, ones, "phi", cfg.model);
    b.phi_names = detail::kernel_param_names(ard, dims);
  }

  for (double p : b.phi)
    if (p <= 0)
      throw ConfigError("covariance hyperparameters (phi) must be positive");
  if (cfg.model == "gaussian_gp" && b.eta[0] <= 0)
    throw ConfigError("gaussian_gp noise scale (eta) must be positive");
  if (cfg.strategy) b.strategy = parse_strategy(*cfg.strategy);
  return b;
}

inline NewtonSettings resolve_newton(const RunConfig& cfg) {
  NewtonSettings s;
  if (cfg.newton) {
    if (cfg.newton->tolerance) s.tolerance = *cfg.newton->tolerance;
    if (cfg.newton->max_iterations)
      s.max_iterations = *cfg.newton->max_iterations;
    if (cfg.newton->linesearch) s.linesearch = *cfg.newton->linesearch;
    if (cfg.newton->max_halvings) s.max_halvings = *cfg.newton->max_halvings;
  }
  return s;
}

inline HmcSettings resolve_hmc(const RunConfig& cfg) {
  HmcSettings s;
  if (cfg.sampler) {
    const auto& c = *cfg.sampler;
    if (c.chains) s.chains = *c.chains;
    if (c.iterations) s.iterations = *c.iterations;
    if (c.warmup) s.warmup = *c.warmup;
    if (c.leapfrog_steps) s.leapfrog_steps = *c.leapfrog_steps;
    if (c.step_size) s.initial_step_size = *c.step_size;
    if (c.target_accept) s.target_accept = *c.target_accept;
    if (c.init_jitter) s.init_jitter = *c.init_jitter;
  }
  if (cfg.sampler && cfg.sampler->seed)
    s.seed = *cfg.sampler->seed;
  else if (cfg.seed)
    s.seed = *cfg.seed;
  return s;
}

// ---------------------------------------------------------------------------
// Sampler coordinates
//
// Every hyperparameter is sampled on the log scale. A coordinate z feeds the
// model either as exp(z) (natural-scale slots such as kernel parameters) or
// as z itself (slots the model already defines as logs). The reported value
// is always the natural one, exp(z).
// ---------------------------------------------------------------------------

enum class PriorKind {
  StdNormalOnLog,     // z ~ N(0,1): default weakly-informative choice
  HalfNormalNatural,  // exp(z) ~ N+(0,1), with the log-transform Jacobian
  NormalNatural,      // exp(z) ~ N(mu, sd), with the log-transform Jacobian
};

struct CoordSpec {
  std::string name;  // natural-scale name used in reports
  bool in_phi;       // slot lives in phi (else eta)
  int slot;
  bool slot_is_log;  // model slot receives z rather than exp(z)
  PriorKind prior = PriorKind::StdNormalOnLog;
  double mu = 0.0, sd = 1.0;
};

template <class S>
S coord_prior(const CoordSpec& c, const S& z) {
  using std::exp;
  constexpr double half_log_2pi = 0.91893853320467274178;
  switch (c.prior) {
    case PriorKind::StdNormalOnLog:
      return S(-half_log_2pi) - 0.5 * z * z;
    case PriorKind::HalfNormalNatural: {
      S v = exp(z);
      return S(std::log(2.0) - half_log_2pi) - 0.5 * v * v + z;
    }
    case PriorKind::NormalNatural: {
      S v = exp(z);
      S r = (v - c.mu) * (1.0 / c.sd);
      return S(-std::log(c.sd) - half_log_2pi) - 0.5 * r * r + z;
    }
  }
  throw ContractError("coord_prior: unhandled prior kind");
}

inline std::vector<CoordSpec> sampler_coords(const ModelBundle& b) {
  std::vector<CoordSpec> coords;
  if (b.model == "pk") {
    coords.push_back({"tau1", true, 0, false, PriorKind::HalfNormalNatural});
    coords.push_back({"tau2", true, 1, false, PriorKind::HalfNormalNatural});
    coords.push_back({"sigma", false, 0, true, PriorKind::HalfNormalNatural});
    coords.push_back(
        {"k1pop", false, 1, true, PriorKind::NormalNatural, 2.0, 0.5});
    coords.push_back(
        {"k2pop", false, 2, true, PriorKind::NormalNatural, 1.0, 0.5});
    return coords;
  }
  for (std::size_t i = 0; i < b.phi_names.size(); ++i)
    coords.push_back({b.phi_names[i], true, static_cast<int>(i), false});
  if (b.model == "gaussian_gp")
    coords.push_back({"sigma", false, 0, false});
  else if (b.model == "student_t_gp")
    coords.push_back({"sigma", false, 0, true});
  return coords;
}

inline Vector initial_coords(const ModelBundle& b,
                             const std::vector<CoordSpec>& coords) {
  Vector z(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const CoordSpec& c = coords[i];
    double slot_value = c.in_phi ? b.phi[c.slot] : b.eta[c.slot];
    z[i] = c.slot_is_log ? slot_value : std::log(slot_value);
  }
  return z;
}

inline void unpack_coords(const std::vector<CoordSpec>& coords,
                          const Vector& z, Vector& phi, Vector& eta) {
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const CoordSpec& c = coords[i];
    double slot_value = c.slot_is_log ? z[i] : std::exp(z[i]);
    (c.in_phi ? phi : eta)[c.slot] = slot_value;
  }
}

// Fits at (phi, eta), first from the warm start if one is available, then
// cold from the zero vector. The caller's warm start is updated on success.
inline LaplaceFit fit_warm_then_cold(const ModelBundle& b, const Vector& phi,
                                     const Vector& eta,
                                     const NewtonSettings& newton,
                                     Vector& warm) {
  Matrix k = b.cov->matrix(phi);
  if (!warm.empty()) {
    NewtonSettings ns = newton;
    ns.theta0 = warm;
    try {
      LaplaceFit fit = laplace_fit(k, *b.lik, eta, b.strategy, ns);
      warm = fit.theta;
      return fit;
    } catch (const ContractError&) {
      throw;
    } catch (const Error&) {
      // fall through to the cold start
    }
  }
  LaplaceFit fit = laplace_fit(k, *b.lik, eta, b.strategy, newton);
  warm = fit.theta;
  return fit;
}

// Marginal posterior target over the hyperparameter coordinates: log of the
// approximate marginal likelihood plus hyperpriors (with log-transform
// Jacobians), differentiated by the adjoint method. Each evaluation runs a
// full inner Newton solve, warm-started from the previous mode found by this
// target instance; failures of the inner solve mark the point unevaluable,
// which the sampler treats as a divergence.
inline GradientTarget make_marginal_target(const ModelBundle& b,
                                           const std::vector<CoordSpec>& coords,
                                           const NewtonSettings& newton) {
  GradientTarget t;
  t.dim = static_cast<int>(coords.size());
  auto warm = std::make_shared<Vector>();
  t.eval = [&b, coords, newton, warm](const Vector& z, double& logp,
                                      Vector& grad) -> bool {
    try {
      Vector phi(b.phi.size()), eta(b.eta.size());
      unpack_coords(coords, z, phi, eta);
      LaplaceFit fit = fit_warm_then_cold(b, phi, eta, newton, *warm);
      MarginalGradient mg = marginal_gradient(fit, *b.lik, *b.cov, phi, eta);
      logp = fit.log_marginal;
      grad.assign(z.size(), 0.0);
      for (std::size_t i = 0; i < coords.size(); ++i) {
        const CoordSpec& c = coords[i];
        double natural = std::exp(z[i]);
        double dslot = c.in_phi ? mg.phi[c.slot] : mg.eta[c.slot];
        grad[i] = c.slot_is_log ? dslot : dslot * natural;
        Dual<double> zi(z[i], 1.0);
        Dual<double> prior = coord_prior(c, zi);
        logp += prior.v;
        grad[i] += prior.d;
      }
      if (!std::isfinite(logp)) return false;
      for (double g : grad)
        if (!std::isfinite(g)) return false;
      return true;
    } catch (const ContractError&) {
      throw;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error&) {
      return false;
    }
  };
  return t;
}

// Joint posterior target over (hyperparameter coordinates, theta) for a
// diagonal prior covariance, differentiated by one reverse sweep through the
// joint log density.
inline GradientTarget make_full_target(const ModelBundle& b,
                                       const std::vector<CoordSpec>& coords) {
  if (!b.cov->diagonal())
    throw CapabilityError(
        "full HMC requires a diagonal prior covariance; model '" + b.model +
        "' has a dense one (use --method marginal)");
  GradientTarget t;
  const int pz = static_cast<int>(coords.size());
  const int n = b.lik->latent_dim();
  t.dim = pz + n;
  t.eval = [&b, coords, pz, n](const Vector& x, double& logp,
                               Vector& grad) -> bool {
    constexpr double log_2pi = 1.8378770664093454836;
    try {
      auto joint = [&](const std::vector<Var>& xs) {
        std::vector<Var> phi(b.phi.size()), eta(b.eta.size());
        for (int i = 0; i < pz; ++i) {
          const CoordSpec& c = coords[i];
          Var slot_value = c.slot_is_log ? xs[i] : exp(xs[i]);
          (c.in_phi ? phi : eta)[c.slot] = slot_value;
        }
        Var acc(0.0);
        for (int i = 0; i < pz; ++i) acc += coord_prior(coords[i], xs[i]);
        MatrixT<Var> k =
            b.cov->matrix(std::span<const Var>(phi.data(), phi.size()));
        std::span<const Var> th(xs.data() + pz, static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
          acc += -0.5 * th[i] * th[i] / k(i, i) - 0.5 * log(k(i, i));
        acc += Var(-0.5 * n * log_2pi);
        acc += b.lik->log_density(
            th, std::span<const Var>(eta.data(), eta.size()));
        return std::vector<Var>{acc};
      };
      RevSweepResult r = rev_sweep(joint, x, Vector{1.0});
      logp = r.value[0];
      grad = r.gradient;
      for (double g : grad)
        if (!std::isfinite(g)) return false;
      return true;
    } catch (const ContractError&) {
      throw;
    } catch (const Error&) {
      return false;
    }
  };
  return t;
}

// ---------------------------------------------------------------------------
// Exit-code mapping
//
//   0  success
//   1  configuration, data or capability problem
//   2  Newton solver failed to converge
//   3  factorization strategy unsuitable for the model's curvature
//   4  any other runtime failure
//   5  gradcheck found an adjoint/finite-difference mismatch
// ---------------------------------------------------------------------------

inline int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataFormatError& e) {
    err << "data error: " << e.what() << '\n';
    return 1;
  } catch (const CapabilityError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NonConvergenceError& e) {
    err << "non-convergence: " << e.what() << '\n';
    return 2;
  } catch (const StrategyUnsuitableError& e) {
    err << "strategy unsuitable: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  }
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

inline int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&]() -> int {
        ModelBundle b = build_model(cfg);
        LaplaceFit fit = laplace_fit(b.cov->matrix(b.phi), *b.lik, b.eta,
                                     b.strategy, resolve_newton(cfg));

        json report;
        report["model"] = b.model;
        report["strategy"] = to_string(b.strategy);
        report["n"] = b.lik->latent_dim();
        report["block_size"] = b.lik->block_size();
        report["log_marginal"] = fit.log_marginal;
        report["iterations"] = fit.iterations;
        report["phi"] = b.phi;
        report["eta"] = b.eta;
        report["theta_hat"] = fit.theta;
        report["psi_trace"] = fit.psi_trace;

        auto dir = out_dir(cfg);
        {
          auto f = open_output(dir / "fit.json");
          f << report.dump(2) << '\n';
        }
        {
          auto f = open_output(dir / "theta.csv");
          f << "index,theta_hat\n";
          for (std::size_t i = 0; i < fit.theta.size(); ++i)
            f << i << ',' << fmt17(fit.theta[i]) << '\n';
        }
        {
          auto f = open_output(dir / "psi_trace.csv");
          f << "iteration,psi\n";
          for (std::size_t i = 0; i < fit.psi_trace.size(); ++i)
            f << i << ',' << fmt17(fit.psi_trace[i]) << '\n';
        }
        out << "fit: model=" << b.model << " strategy=" << to_string(b.strategy)
            << " n=" << b.lik->latent_dim()
            << " iterations=" << fit.iterations
            << " log_marginal=" << fmt17(fit.log_marginal) << '\n'
            << "wrote " << (dir / "fit.json").string() << ", "
            << (dir / "theta.csv").string() << ", "
            << (dir / "psi_trace.csv").string() << '\n';
        return 0;
      },
      err);
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

// Central finite difference of the re-solved log marginal along one
// hyperparameter component. The inner solver runs at a tolerance far below
// the step so the difference quotient is not polluted by solver error.
inline double fd_log_marginal(const ModelBundle& b, const Vector& phi,
                              const Vector& eta, bool in_phi, int slot,
                              const NewtonSettings& newton,
                              const Vector& warm_theta) {
  double x = in_phi ? phi[slot] : eta[slot];
  double h = 1e-5 * std::max(1.0, std::abs(x));
  NewtonSettings ns = newton;
  ns.tolerance = 1e-12;
  ns.theta0 = warm_theta;
  auto value_at = [&](double xs) {
    Vector p = phi, e = eta;
    (in_phi ? p[slot] : e[slot]) = xs;
    LaplaceFit fit = laplace_fit(b.cov->matrix(p), *b.lik, e, b.strategy, ns);
    return fit.log_marginal;
  };
  return (value_at(x + h) - value_at(x - h)) / (2.0 * h);
}

inline int cmd_gradcheck(const RunConfig& cfg, std::ostream& out,
                         std::ostream& err) {
  return run_guarded(
      [&]() -> int {
        constexpr double tol = 1e-3;
        ModelBundle b = build_model(cfg);
        NewtonSettings newton = resolve_newton(cfg);
        LaplaceFit fit =
            laplace_fit(b.cov->matrix(b.phi), *b.lik, b.eta, b.strategy,
                        newton);
        MarginalGradient mg =
            marginal_gradient(fit, *b.lik, *b.cov, b.phi, b.eta);

        struct Row {
          std::string component;
          double adjoint, fd, rel;
        };
        std::vector<Row> rows;
        auto add = [&](const std::string& name, bool in_phi, int slot,
                       double adjoint) {
          double fd =
              fd_log_marginal(b, b.phi, b.eta, in_phi, slot, newton, fit.theta);
          double rel =
              std::abs(adjoint - fd) / std::max(1.0, std::abs(fd));
          rows.push_back({name, adjoint, fd, rel});
        };
        for (std::size_t i = 0; i < b.phi.size(); ++i)
          add(b.phi_names[i], true, static_cast<int>(i), mg.phi[i]);
        for (std::size_t i = 0; i < b.eta.size(); ++i)
          add(b.eta_names[i], false, static_cast<int>(i), mg.eta[i]);

        auto dir = out_dir(cfg);
        {
          auto f = open_output(dir / "gradcheck.csv");
          f << "component,adjoint,finite_difference,rel_error\n";
          for (const Row& r : rows)
            f << r.component << ',' << fmt17(r.adjoint) << ',' << fmt17(r.fd)
              << ',' << fmt17(r.rel) << '\n';
        }
        double worst = 0;
        for (const Row& r : rows) {
          out << "gradcheck: " << r.component << " adjoint=" << fmt17(r.adjoint)
              << " fd=" << fmt17(r.fd) << " rel_error=" << fmt17(r.rel) << '\n';
          worst = std::max(worst, r.rel);
        }
        out << "wrote " << (dir / "gradcheck.csv").string() << '\n';
        if (worst > tol) {
          err << "gradcheck failed: max rel_error " << fmt17(worst) << " > "
              << fmt17(tol) << '\n';
          return 5;
        }
        out << "gradcheck passed: max rel_error " << fmt17(worst) << '\n';
        return 0;
      },
      err);
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

struct ParameterSummary {
  std::string name;
  double mean = 0, ess = 0, mcse = 0;
};

inline int cmd_sample(const RunConfig& cfg, const std::string& method,
                      std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&]() -> int {
        if (method != "marginal" && method != "full")
          throw ConfigError("unknown method '" + method +
                            "' (expected marginal or full)");
        ModelBundle b = build_model(cfg);
        NewtonSettings newton = resolve_newton(cfg);
        HmcSettings hmc = resolve_hmc(cfg);
        std::vector<CoordSpec> coords = sampler_coords(b);
        if (coords.empty())
          throw CapabilityError("model '" + b.model +
                                "' has no free hyperparameters to sample");
        const int pz = static_cast<int>(coords.size());
        const int n = b.lik->latent_dim();
        Vector init = initial_coords(b, coords);

        std::vector<ChainResult> chains;
        if (method == "marginal") {
          chains = run_chains(
              [&](int) { return make_marginal_target(b, coords, newton); },
              init, hmc);
        } else {
          GradientTarget target = make_full_target(b, coords);
          Vector joint_init(static_cast<std::size_t>(target.dim), 0.0);
          std::copy(init.begin(), init.end(), joint_init.begin());
          chains = run_chains(target, joint_init, hmc);
        }

        // Natural-scale hyperparameter series, one per (parameter, chain).
        std::vector<std::vector<Vector>> series(
            static_cast<std::size_t>(pz),
            std::vector<Vector>(chains.size()));
        for (std::size_t c = 0; c < chains.size(); ++c)
          for (int k = 0; k < pz; ++k) {
            Vector s(static_cast<std::size_t>(hmc.iterations));
            for (int i = 0; i < hmc.iterations; ++i)
              s[static_cast<std::size_t>(i)] =
                  std::exp(chains[c].draws(i, k));
            series[static_cast<std::size_t>(k)][c] = std::move(s);
          }

        std::vector<ParameterSummary> params;
        for (int k = 0; k < pz; ++k) {
          ParameterSummary p;
          p.name = coords[k].name;
          const auto& sk = series[static_cast<std::size_t>(k)];
          double sum = 0;
          std::size_t count = 0;
          for (const Vector& chain : sk)
            for (double v : chain) {
              sum += v;
              ++count;
            }
          p.mean = sum / static_cast<double>(count);
          p.ess = ess(sk);
          p.mcse = mcse(sk, p.ess);
          params.push_back(std::move(p));
        }

        auto dir = out_dir(cfg);
        {
          auto f = open_output(dir / "draws.csv");
          f << "chain,draw";
          for (const auto& c : coords) f << ',' << c.name;
          f << '\n';
          for (std::size_t c = 0; c < chains.size(); ++c)
            for (int i = 0; i < hmc.iterations; ++i) {
              f << c << ',' << i;
              for (int k = 0; k < pz; ++k)
                f << ',' << fmt17(std::exp(chains[c].draws(i, k)));
              f << '\n';
            }
        }

        // Latent draws. The full method carries theta as sampler
        // coordinates; the marginal method recovers theta per draw from the
        // Laplace conditional at the drawn hyperparameters.
        int recovery_failures = 0;
        {
          auto f = open_output(dir / "latent_draws.csv");
          f << "chain,draw";
          for (int j = 0; j < n; ++j) f << ",theta_" << j;
          f << '\n';
          if (method == "full") {
            for (std::size_t c = 0; c < chains.size(); ++c)
              for (int i = 0; i < hmc.iterations; ++i) {
                f << c << ',' << i;
                for (int j = 0; j < n; ++j)
                  f << ',' << fmt17(chains[c].draws(i, pz + j));
                f << '\n';
              }
          } else {
            for (std::size_t c = 0; c < chains.size(); ++c) {
              Vector warm;
              for (int i = 0; i < hmc.iterations; ++i) {
                Vector z(static_cast<std::size_t>(pz));
                for (int k = 0; k < pz; ++k) z[k] = chains[c].draws(i, k);
                Vector row;
                try {
                  Vector phi(b.phi.size()), eta(b.eta.size());
                  unpack_coords(coords, z, phi, eta);
                  LaplaceFit fit =
                      fit_warm_then_cold(b, phi, eta, newton, warm);
                  std::uint64_t draw_seed = hmc.seed + 777000077ULL +
                                            1000003ULL * c +
                                            static_cast<std::uint64_t>(i);
                  Matrix one = sample(conditional_latent(fit), draw_seed, 1);
                  row.assign(one.data().begin(), one.data().end());
                } catch (const ContractError&) {
                  throw;
                } catch (const Error&) {
                  ++recovery_failures;
                  row.assign(static_cast<std::size_t>(n),
                             std::numeric_limits<double>::quiet_NaN());
                }
                f << c << ',' << i;
                for (double v : row) f << ',' << fmt17(v);
                f << '\n';
              }
            }
          }
        }

        int total_divergences = 0;
        for (const auto& c : chains) total_divergences += c.divergences;
        double divergence_rate =
            static_cast<double>(total_divergences) /
            (static_cast<double>(chains.size()) * hmc.iterations);

        json diag;
        diag["method"] = method;
        diag["model"] = b.model;
        diag["chains"] = static_cast<int>(chains.size());
        diag["iterations"] = hmc.iterations;
        diag["warmup"] = hmc.warmup;
        diag["leapfrog_steps"] = hmc.leapfrog_steps;
        diag["seed"] = hmc.seed;
        {
          std::vector<double> ar, ss;
          std::vector<int> dv;
          for (const auto& c : chains) {
            ar.push_back(c.accept_rate);
            dv.push_back(c.divergences);
            ss.push_back(c.step_size);
          }
          diag["accept_rate"] = ar;
          diag["divergences"] = dv;
          diag["step_size"] = ss;
        }
        diag["total_divergences"] = total_divergences;
        diag["divergence_rate"] = divergence_rate;
        diag["divergence_warning"] = divergence_rate > 0.20;
        if (method == "marginal")
          diag["latent_recovery_failures"] = recovery_failures;
        diag["parameters"] = json::array();
        for (const auto& p : params) {
          json jp;
          jp["name"] = p.name;
          jp["mean"] = p.mean;
          jp["ess"] = p.ess;
          jp["mcse"] = p.mcse;
          diag["parameters"].push_back(jp);
        }
        {
          auto f = open_output(dir / "diagnostics.json");
          f << diag.dump(2) << '\n';
        }

        out << "sample: method=" << method << " model=" << b.model
            << " chains=" << chains.size() << " draws=" << hmc.iterations
            << " divergences=" << total_divergences << '\n';
        for (const auto& p : params)
          out << "  " << p.name << ": mean=" << fmt17(p.mean)
              << " ess=" << fmt17(p.ess) << " mcse=" << fmt17(p.mcse) << '\n';
        if (divergence_rate > 0.20)
          err << "warning: " << fmt17(100.0 * divergence_rate)
              << "% of post-warmup trajectories diverged\n";
        out << "wrote " << (dir / "draws.csv").string() << ", "
            << (dir / "latent_draws.csv").string() << ", "
            << (dir / "diagnostics.json").string() << '\n';
        return 0;
      },
      err);
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchRow {
  int n = 0, p = 0, t_dim = 0, m = 0;
  double fit_ms = 0, gradient_ms = 0;
  long long forward_sweeps = 0, reverse_sweeps = 0;
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

}  // namespace detail

// Times laplace_fit and marginal_gradient on synthetic Poisson-GP problems
// over a grid of latent sizes and kernel-parameter counts. The workload per
// gradient is O(n^3) in time but a fixed number of sweeps in (n, p).
inline std::vector<BenchRow> run_bench(const RunConfig& cfg) {
  std::vector<int> sizes{64, 128, 256};
  std::vector<int> param_counts{2, 8};
  int reps = 10;
  if (cfg.bench) {
    if (cfg.bench->sizes) sizes = *cfg.bench->sizes;
    if (cfg.bench->kernel_params) param_counts = *cfg.bench->kernel_params;
    if (cfg.bench->repetitions) reps = *cfg.bench->repetitions;
  }
  std::uint64_t seed = cfg.seed.value_or(1);

  std::vector<BenchRow> rows;
  for (int p : param_counts)
    for (int n : sizes) {
      const bool ard = p > 2;
      const int dims = ard ? p - 1 : 1;
      NormalSource rng(seed + static_cast<std::uint64_t>(97 * p + n));
      std::vector<Vector> x(static_cast<std::size_t>(n));
      for (auto& point : x) {
        point.resize(static_cast<std::size_t>(dims));
        for (double& c : point) c = rng();
      }
      SquaredExponentialKernel kernel(x, ard);
      Vector phi(static_cast<std::size_t>(p), 1.0);
      Matrix k = kernel.matrix(phi);

      // Simulate counts from one latent draw so the fit is well posed.
      GaussianSummary prior;
      prior.mean.assign(static_cast<std::size_t>(n), 0.0);
      prior.cov = k;
      Matrix theta_draw = sample(prior, seed + 7, 1);
      std::vector<long> y(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i)
        y[static_cast<std::size_t>(i)] = std::max(
            0L, std::lround(std::exp(theta_draw(0, i))));
      PoissonLogLikelihood lik(y);

      BenchRow row;
      row.n = n;
      row.p = p;
      row.t_dim = lik.eta_dim();
      row.m = lik.block_size();
      std::vector<double> fit_times, grad_times;
      for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        LaplaceFit fit = laplace_fit(k, lik, {}, BStrategy::B1);
        auto t1 = std::chrono::steady_clock::now();
        if (r == 0) sweep_counter().reset();
        MarginalGradient mg = marginal_gradient(fit, lik, kernel, phi, {});
        auto t2 = std::chrono::steady_clock::now();
        if (r == 0) {
          row.forward_sweeps = sweep_counter().forward;
          row.reverse_sweeps = sweep_counter().reverse;
        }
        (void)mg;
        fit_times.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
        grad_times.push_back(
            std::chrono::duration<double, std::milli>(t2 - t1).count());
      }
      row.fit_ms = detail::median(fit_times);
      row.gradient_ms = detail::median(grad_times);
      rows.push_back(row);
    }
  return rows;
}

inline int cmd_bench(const RunConfig& cfg, std::ostream& out,
                     std::ostream& err) {
  return run_guarded(
      [&]() -> int {
        std::vector<BenchRow> rows = run_bench(cfg);
        auto dir = out_dir(cfg);
        {
          auto f = open_output(dir / "bench.csv");
          f << "n,p,t_dim,m,fit_ms,gradient_ms,forward_sweeps,reverse_sweeps\n";
          for (const auto& r : rows)
            f << r.n << ',' << r.p << ',' << r.t_dim << ',' << r.m << ','
              << fmt17(r.fit_ms) << ',' << fmt17(r.gradient_ms) << ','
              << r.forward_sweeps << ',' << r.reverse_sweeps << '\n';
        }
        for (const auto& r : rows)
          out << "bench: n=" << r.n << " p=" << r.p
              << " fit_ms=" << fmt17(r.fit_ms)
              << " gradient_ms=" << fmt17(r.gradient_ms)
              << " forward_sweeps=" << r.forward_sweeps
              << " reverse_sweeps=" << r.reverse_sweeps << '\n';
        out << "wrote " << (dir / "bench.csv").string() << '\n';
        return 0;
      },
      err);
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulationTruth {
  int patients = 10;
  Vector times{0.083, 0.167, 0.25, 1.0, 2.0, 4.0};
  Vector tau{0.2, 0.2};
  double sigma = 0.1;
  double k1pop = 2.0;
  double k2pop = 1.0;
  double dose = 1.0;
};

inline SimulationTruth resolve_simulation(const RunConfig& cfg) {
  SimulationTruth t;
  if (cfg.simulate) {
    const auto& s = *cfg.simulate;
    if (s.patients) t.patients = *s.patients;
    if (s.times) t.times = *s.times;
    if (s.tau) t.tau = *s.tau;
    if (s.sigma) t.sigma = *s.sigma;
    if (s.k1pop) t.k1pop = *s.k1pop;
    if (s.k2pop) t.k2pop = *s.k2pop;
  }
  if (cfg.dose) t.dose = *cfg.dose;
  return t;
}

// Draws a dosing study dataset from the hierarchical model: patient rate
// deviations theta ~ N(0, diag(tau^2)), rates k = k_pop * exp(theta),
// measurements y = central-compartment amount + N(0, sigma^2) noise.
inline std::vector<PkPatient> simulate_pk(const SimulationTruth& t,
                                          std::uint64_t seed) {
  NormalSource rng(seed);
  std::vector<PkPatient> patients(static_cast<std::size_t>(t.patients));
  for (auto& p : patients) {
    double k1 = t.k1pop * std::exp(t.tau[0] * rng());
    double k2 = t.k2pop * std::exp(t.tau[1] * rng());
    for (double time : t.times) {
      auto [gut, cent] = pk_solution(t.dose, 0.0, k1, k2, time);
      (void)gut;
      p.times.push_back(time);
      p.amounts.push_back(cent + t.sigma * rng());
    }
  }
  return patients;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out,
                        std::ostream& err) {
  return run_guarded(
      [&]() -> int {
        if (cfg.model != "pk")
          throw ConfigError("simulate only supports the pk model");
        SimulationTruth t = resolve_simulation(cfg);
        std::uint64_t seed = cfg.seed.value_or(1);
        auto patients = simulate_pk(t, seed);

        std::filesystem::path path =
            cfg.data ? std::filesystem::path(*cfg.data)
                     : out_dir(cfg) / "pk.csv";
        {
          auto f = open_output(path);
          f << "patient_id,time,amount\n";
          for (std::size_t p = 0; p < patients.size(); ++p)
            for (std::size_t i = 0; i < patients[p].times.size(); ++i)
              f << (p + 1) << ',' << fmt17(patients[p].times[i]) << ','
                << fmt17(patients[p].amounts[i]) << '\n';
        }
        out << "simulate: patients=" << t.patients
            << " times_per_patient=" << t.times.size()
            << " k1pop=" << fmt17(t.k1pop) << " k2pop=" << fmt17(t.k2pop)
            << " tau=(" << fmt17(t.tau[0]) << ',' << fmt17(t.tau[1])
            << ") sigma=" << fmt17(t.sigma) << " seed=" << seed << '\n'
            << "wrote " << path.string() << '\n';
        return 0;
      },
      err);
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline int run_command(const std::string& command, const RunConfig& cfg,
                       const std::string& method, std::ostream& out,
                       std::ostream& err) {
  if (command == "fit") return cmd_fit(cfg, out, err);
  if (command == "gradcheck") return cmd_gradcheck(cfg, out, err);
  if (command == "sample") return cmd_sample(cfg, method, out, err);
  if (command == "bench") return cmd_bench(cfg, out, err);
  if (command == "simulate") return cmd_simulate(cfg, out, err);
  err << "config error: unknown command '" << command << "'\n";
  return 1;
}

}  // namespace lgm::cli
