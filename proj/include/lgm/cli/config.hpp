#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgm/errors.hpp"
#include "lgm/newton/newton.hpp"

namespace lgm::cli {

using json = nlohmann::json;

// Run configuration, loaded from a JSON file. Every field except `model`
// is optional; presence is tracked so a parsed config re-serializes to the
// input document (modulo key order). Unknown keys are rejected.
struct NewtonConfig {
  std::optional<double> tolerance;
  std::optional<int> max_iterations;
  std::optional<bool> linesearch;
  std::optional<int> max_halvings;
};

struct SamplerConfig {
  std::optional<int> chains;
  std::optional<int> iterations;
  std::optional<int> warmup;
  std::optional<int> leapfrog_steps;
  std::optional<double> step_size;
  std::optional<double> target_accept;
  std::optional<double> init_jitter;
  std::optional<std::uint64_t> seed;
};

struct BenchConfig {
  std::optional<std::vector<int>> sizes;
  std::optional<std::vector<int>> kernel_params;
  std::optional<int> repetitions;
};

struct SimulateConfig {
  std::optional<int> patients;
  std::optional<std::vector<double>> times;
  std::optional<std::vector<double>> tau;
  std::optional<double> sigma;
  std::optional<double> k1pop;
  std::optional<double> k2pop;
};

struct RunConfig {
  std::string model;  // gaussian_gp | poisson_gp | student_t_gp | pk
  std::optional<std::string> data;
  std::optional<std::string> strategy;  // b1 | b2 | b3
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<double>> phi;
  std::optional<std::vector<double>> eta;
  std::optional<double> nu;    // student_t_gp degrees of freedom
  std::optional<double> dose;  // pk bolus dose
  std::optional<bool> ard;     // per-dimension lengthscales for GP kernels
  std::optional<NewtonConfig> newton;
  std::optional<SamplerConfig> sampler;
  std::optional<BenchConfig> bench;
  std::optional<SimulateConfig> simulate;
};

namespace detail {

inline void reject_unknown_keys(const json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items())
    if (!ok.count(item.key()))
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

template <class T>
void read_field(const json& obj, const char* key, std::optional<T>& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

template <class T>
void write_field(json& obj, const char* key, const std::optional<T>& v) {
  if (v) obj[key] = *v;
}

}  // namespace detail

inline BStrategy parse_strategy(const std::string& s) {
  if (s == "b1") return BStrategy::B1;
  if (s == "b2") return BStrategy::B2;
  if (s == "b3") return BStrategy::B3;
  throw ConfigError("unknown strategy '" + s + "' (expected b1, b2 or b3)");
}

inline void validate_config(const RunConfig& c) {
  static const std::set<std::string> models{"gaussian_gp", "poisson_gp",
                                            "student_t_gp", "pk"};
  if (!models.count(c.model))
    throw ConfigError("unknown model '" + c.model + "'");
  if (c.strategy) parse_strategy(*c.strategy);
  if (c.nu && *c.nu <= 0) throw ConfigError("nu must be positive");
  if (c.dose && *c.dose <= 0) throw ConfigError("dose must be positive");
  if (c.newton) {
    const auto& nw = *c.newton;
    if (nw.tolerance && *nw.tolerance <= 0)
      throw ConfigError("newton.tolerance must be positive");
    if (nw.max_iterations && *nw.max_iterations < 1)
      throw ConfigError("newton.max_iterations must be at least 1");
    if (nw.max_halvings && *nw.max_halvings < 0)
      throw ConfigError("newton.max_halvings must be non-negative");
  }
  if (c.sampler) {
    const auto& s = *c.sampler;
    if (s.chains && *s.chains < 1)
      throw ConfigError("sampler.chains must be at least 1");
    if (s.iterations && *s.iterations < 1)
      throw ConfigError("sampler.iterations must be at least 1");
    if (s.warmup && *s.warmup < 0)
      throw ConfigError("sampler.warmup must be non-negative");
    if (s.leapfrog_steps && *s.leapfrog_steps < 1)
      throw ConfigError("sampler.leapfrog_steps must be at least 1");
    if (s.step_size && *s.step_size <= 0)
      throw ConfigError("sampler.step_size must be positive");
    if (s.target_accept && (*s.target_accept <= 0 || *s.target_accept >= 1))
      throw ConfigError("sampler.target_accept must lie in (0, 1)");
    if (s.init_jitter && *s.init_jitter < 0)
      throw ConfigError("sampler.init_jitter must be non-negative");
  }
  if (c.bench) {
    const auto& b = *c.bench;
    if (b.repetitions && *b.repetitions < 1)
      throw ConfigError("bench.repetitions must be at least 1");
    if (b.sizes)
      for (int n : *b.sizes)
        if (n < 2) throw ConfigError("bench.sizes entries must be at least 2");
    if (b.kernel_params)
      for (int p : *b.kernel_params)
        if (p < 2)
          throw ConfigError("bench.kernel_params entries must be at least 2");
  }
  if (c.simulate) {
    const auto& s = *c.simulate;
    if (s.patients && *s.patients < 1)
      throw ConfigError("simulate.patients must be at least 1");
    if (s.sigma && *s.sigma <= 0)
      throw ConfigError("simulate.sigma must be positive");
    if (s.tau) {
      if (s.tau->size() != 2)
        throw ConfigError("simulate.tau must have exactly two entries");
      for (double t : *s.tau)
        if (t <= 0) throw ConfigError("simulate.tau entries must be positive");
    }
    if (s.times)
      for (double t : *s.times)
        if (t < 0) throw ConfigError("simulate.times must be non-negative");
    if (s.k1pop && *s.k1pop <= 0)
      throw ConfigError("simulate.k1pop must be positive");
    if (s.k2pop && *s.k2pop <= 0)
      throw ConfigError("simulate.k2pop must be positive");
  }
}

inline RunConfig parse_config(const json& j) {
  using detail::read_field;
  using detail::reject_unknown_keys;
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown_keys(j,
                      {"model", "data", "strategy", "out", "seed", "phi",
                       "eta", "nu", "dose", "ard", "newton", "sampler",
                       "bench", "simulate"},
                      "config root");
  RunConfig c;
  if (!j.contains("model"))
    throw ConfigError("config is missing required key 'model'");
  c.model = j.at("model").get<std::string>();
  read_field(j, "data", c.data);
  read_field(j, "strategy", c.strategy);
  read_field(j, "out", c.out);
  read_field(j, "seed", c.seed);
  read_field(j, "phi", c.phi);
  read_field(j, "eta", c.eta);
  read_field(j, "nu", c.nu);
  read_field(j, "dose", c.dose);
  read_field(j, "ard", c.ard);
  if (j.contains("newton")) {
    const json& o = j.at("newton");
    reject_unknown_keys(
        o, {"tolerance", "max_iterations", "linesearch", "max_halvings"},
        "newton");
    NewtonConfig nw;
    read_field(o, "tolerance", nw.tolerance);
    read_field(o, "max_iterations", nw.max_iterations);
    read_field(o, "linesearch", nw.linesearch);
    read_field(o, "max_halvings", nw.max_halvings);
    c.newton = nw;
  }
  if (j.contains("sampler")) {
    const json& o = j.at("sampler");
    reject_unknown_keys(o,
                        {"chains", "iterations", "warmup", "leapfrog_steps",
                         "step_size", "target_accept", "init_jitter", "seed"},
                        "sampler");
    SamplerConfig s;
    read_field(o, "chains", s.chains);
    read_field(o, "iterations", s.iterations);
    read_field(o, "warmup", s.warmup);
    read_field(o, "leapfrog_steps", s.leapfrog_steps);
    read_field(o, "step_size", s.step_size);
    read_field(o, "target_accept", s.target_accept);
    read_field(o, "init_jitter", s.init_jitter);
    read_field(o, "seed", s.seed);
    c.sampler = s;
  }
  if (j.contains("bench")) {
    const json& o = j.at("bench");
    reject_unknown_keys(o, {"sizes", "kernel_params", "repetitions"}, "bench");
    BenchConfig b;
    read_field(o, "sizes", b.sizes);
    read_field(o, "kernel_params", b.kernel_params);
    read_field(o, "repetitions", b.repetitions);
    c.bench = b;
  }
  if (j.contains("simulate")) {
    const json& o = j.at("simulate");
    reject_unknown_keys(
        o, {"patients", "times", "tau", "sigma", "k1pop", "k2pop"},
        "simulate");
    SimulateConfig s;
    read_field(o, "patients", s.patients);
    read_field(o, "times", s.times);
    read_field(o, "tau", s.tau);
    read_field(o, "sigma", s.sigma);
    read_field(o, "k1pop", s.k1pop);
    read_field(o, "k2pop", s.k2pop);
    c.simulate = s;
  }
  validate_config(c);
  return c;
}

inline json to_json(const RunConfig& c) {
  using detail::write_field;
  json j;
  j["model"] = c.model;
  write_field(j, "data", c.data);
  write_field(j, "strategy", c.strategy);
  write_field(j, "out", c.out);
  write_field(j, "seed", c.seed);
  write_field(j, "phi", c.phi);
  write_field(j, "eta", c.eta);
  write_field(j, "nu", c.nu);
  write_field(j, "dose", c.dose);
  write_field(j, "ard", c.ard);
  if (c.newton) {
    json o = json::object();
    write_field(o, "tolerance", c.newton->tolerance);
    write_field(o, "max_iterations", c.newton->max_iterations);
    write_field(o, "linesearch", c.newton->linesearch);
    write_field(o, "max_halvings", c.newton->max_halvings);
    j["newton"] = o;
  }
  if (c.sampler) {
    json o = json::object();
    write_field(o, "chains", c.sampler->chains);
    write_field(o, "iterations", c.sampler->iterations);
    write_field(o, "warmup", c.sampler->warmup);
    write_field(o, "leapfrog_steps", c.sampler->leapfrog_steps);
    write_field(o, "step_size", c.sampler->step_size);
    write_field(o, "target_accept", c.sampler->target_accept);
    write_field(o, "init_jitter", c.sampler->init_jitter);
    write_field(o, "seed", c.sampler->seed);
    j["sampler"] = o;
  }
  if (c.bench) {
    json o = json::object();
    write_field(o, "sizes", c.bench->sizes);
    write_field(o, "kernel_params", c.bench->kernel_params);
    write_field(o, "repetitions", c.bench->repetitions);
    j["bench"] = o;
  }
  if (c.simulate) {
    json o = json::object();
    write_field(o, "patients", c.simulate->patients);
    write_field(o, "times", c.simulate->times);
    write_field(o, "tau", c.simulate->tau);
    write_field(o, "sigma", c.simulate->sigma);
    write_field(o, "k1pop", c.simulate->k1pop);
    write_field(o, "k2pop", c.simulate->k2pop);
    j["simulate"] = o;
  }
  return j;
}

inline RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return parse_config(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") +
                      e.what());
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace lgm::cli
