#pragma once

/// @file harness.hpp Config-driven experiment runner and report builder.
///
/// A config is a JSON document (comments allowed). `run` executes one command
/// per replicate and writes per-replicate CSVs plus `summary.json` into the
/// output directory; `summarize` collects the summaries under a directory
/// into a comparison report.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "pompkit/bayes.hpp"
#include "pompkit/benchmarks.hpp"
#include "pompkit/errors.hpp"
#include "pompkit/filter.hpp"
#include "pompkit/io.hpp"
#include "pompkit/optimizers.hpp"
#include "pompkit/parallel.hpp"
#include "pompkit/simulate.hpp"
#include "pompkit/smoother.hpp"

namespace pompkit {

// ---------------------------------------------------------------- registry

struct RegisteredModel {
  std::function<ModelSpec(std::size_t n_times)> make;
  ParamVector defaults;
};

inline std::map<std::string, RegisteredModel>& model_registry() {
  static std::map<std::string, RegisteredModel> reg = {
      {"ou2", {[](std::size_t n) { return ou2_model(n); }, ou2_truth()}},
      {"gompertz", {[](std::size_t n) { return gompertz_model(n); }, gompertz_defaults()}},
  };
  return reg;
}

inline void register_model(const std::string& name, RegisteredModel m) { model_registry()[name] = std::move(m); }

// ---------------------------------------------------------------- config

inline const std::vector<std::string>& known_commands() {
  static const std::vector<std::string> c = {"simulate", "pfilter", "psmooth", "kalman", "if1", "if2", "is2",
                                             "momentum", "aif",      "avif",    "pmmh",   "pif"};
  return c;
}

inline bool is_optimizer(const std::string& c) {
  return c == "if1" || c == "if2" || c == "is2" || c == "momentum" || c == "aif" || c == "avif";
}

inline bool is_sampler(const std::string& c) { return c == "pmmh" || c == "pif"; }

struct ExperimentConfig {
  std::string model = "ou2";
  std::string command;
  std::string label;
  std::size_t n_times = 100;
  /// CSV data file; when empty the data are simulated at `params` with `data_seed`.
  std::string data;
  std::uint64_t data_seed = 1;
  ParamVector params;

  std::size_t M = 1;
  std::size_t J = 100;
  std::size_t L = 0;
  double gamma = 0.9;
  std::size_t k_start = 0;
  bool avif_literal = false;
  std::size_t average_from = 1;
  double max_step_sd = 5.0;
  PerturbationSpec pert;
  AccelSequences sequences;
  ProposalSpec proposal;
  std::size_t burn_in = 0;

  std::size_t reps = 1;
  std::uint64_t base_seed = 1;
  std::vector<std::pair<std::size_t, std::pair<double, double>>> start_box;
  unsigned jobs = default_workers();
  FilterOptions filter;
  std::string out = "runs/out";

  ModelSpec spec;
  json resolved;
};

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback, std::vector<std::string>& errs) {
  if (!j.contains(key)) return fallback;
  if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    const auto& v = j.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
      errs.push_back(std::string("'") + key + "' must be a non-negative integer");
      return fallback;
    }
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    errs.push_back(std::string("'") + key + "' has the wrong type");
    return fallback;
  }
}

inline std::vector<double> named_vector(const ModelSpec& model, const json& j, const char* what,
                                        std::vector<std::string>& errs) {
  std::vector<double> out(model.num_params(), 0.0);
  if (!j.is_object()) {
    errs.push_back(std::string(what) + " must be an object keyed by parameter name");
    return out;
  }
  for (const auto& [k, v] : j.items()) {
    const auto idx = model.param_index(k);
    if (!idx)
      errs.push_back(std::string(what) + ": unknown parameter '" + k + "'");
    else if (!v.is_number())
      errs.push_back(std::string(what) + ": value for '" + k + "' must be a number");
    else
      out[*idx] = v.get<double>();
  }
  return out;
}

}  // namespace detail

/// Parses and validates a config, collecting every violation.
inline ExperimentConfig parse_config(const json& j) {
  std::vector<std::string> errs;
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  ExperimentConfig c;
  c.model = detail::get_or<std::string>(j, "model", c.model, errs);
  c.command = detail::get_or<std::string>(j, "command", c.command, errs);
  c.label = detail::get_or<std::string>(j, "label", c.command, errs);
  c.n_times = detail::get_or<std::size_t>(j, "n_times", c.n_times, errs);
  c.data = detail::get_or<std::string>(j, "data", "", errs);
  c.data_seed = detail::get_or<std::uint64_t>(j, "data_seed", c.data_seed, errs);
  c.M = detail::get_or<std::size_t>(j, "M", c.M, errs);
  c.J = detail::get_or<std::size_t>(j, "J", c.J, errs);
  c.L = detail::get_or<std::size_t>(j, "L", c.L, errs);
  c.gamma = detail::get_or<double>(j, "gamma", c.gamma, errs);
  c.k_start = detail::get_or<std::size_t>(j, "k_start", c.k_start, errs);
  c.avif_literal = detail::get_or<bool>(j, "avif_literal", c.avif_literal, errs);
  c.average_from = detail::get_or<std::size_t>(j, "average_from", c.average_from, errs);
  c.max_step_sd = detail::get_or<double>(j, "max_step_sd", c.max_step_sd, errs);
  c.burn_in = detail::get_or<std::size_t>(j, "burn_in", c.burn_in, errs);
  c.out = detail::get_or<std::string>(j, "out", c.out, errs);
  c.jobs = detail::get_or<unsigned>(j, "jobs", c.jobs, errs);
  c.filter.workers = detail::get_or<unsigned>(j, "filter_workers", 1U, errs);
  c.filter.max_fail = detail::get_or<long>(j, "max_fail", -1L, errs);

  if (c.command.empty())
    errs.emplace_back("no command given");
  else if (std::find(known_commands().begin(), known_commands().end(), c.command) == known_commands().end())
    errs.push_back("unknown command '" + c.command + "'");
  if (c.label.empty()) c.label = c.command;

  const auto reg = model_registry().find(c.model);
  if (reg == model_registry().end()) {
    errs.push_back("unknown model '" + c.model + "'");
    throw ValidationError(std::move(errs));
  }
  if (c.n_times < 1) errs.emplace_back("n_times must be >= 1");
  c.spec = reg->second.make(std::max<std::size_t>(c.n_times, 1));
  c.params = reg->second.defaults;
  if (j.contains("params")) {
    try {
      c.params = params_from_json(c.spec, j.at("params"), c.params);
    } catch (const ValidationError& e) {
      for (const auto& v : e.violations()) errs.push_back("params: " + v);
    }
  }
  const std::size_t p = c.spec.num_params();

  // perturbation
  c.pert.sd.assign(p, 0.0);
  c.pert.ivp_indices = c.spec.ivp_indices;
  c.pert.lag = c.L;
  if (j.contains("pert")) {
    const auto& pj = j.at("pert");
    if (pj.contains("sd")) c.pert.sd = detail::named_vector(c.spec, pj.at("sd"), "pert.sd", errs);
    c.pert.initial_multiplier = detail::get_or<double>(pj, "C", 1.0, errs);
    c.pert.walk_multiplier = detail::get_or<double>(pj, "walk_multiplier", 1.0, errs);
    c.pert.cooling = detail::get_or<double>(pj, "cooling", 0.95, errs);
    if (pj.contains("cooling_final_fraction")) {
      const double f = detail::get_or<double>(pj, "cooling_final_fraction", 1.0, errs);
      if (!(f > 0.0 && f < 1.0))
        errs.emplace_back("pert.cooling_final_fraction must lie in (0, 1)");
      else
        c.pert.cooling = c.M > 1 ? std::pow(f, 1.0 / static_cast<double>(c.M - 1)) : 0.95;
    }
    if (pj.contains("ivp")) {
      c.pert.ivp_indices.clear();
      for (const auto& name : pj.at("ivp")) {
        const auto idx = name.is_string() ? c.spec.param_index(name.get<std::string>()) : std::nullopt;
        if (!idx)
          errs.push_back("pert.ivp: unknown parameter " + name.dump());
        else
          c.pert.ivp_indices.push_back(*idx);
      }
    }
  }
  for (const auto& v : perturbation_violations(c.pert, p)) errs.push_back("pert: " + v);

  // acceleration sequences
  {
    const json sj = j.value("sequences", json::object());
    const double lambda0 = detail::get_or<double>(sj, "lambda0", 1.0, errs);
    c.sequences = AccelSequences::defaults(c.M, lambda0);
    for (const char* key : {"alpha", "lambda", "beta"}) {
      if (!sj.contains(key)) continue;
      const auto v = detail::get_or<std::vector<double>>(sj, key, {}, errs);
      if (v.size() < c.M) errs.push_back(std::string("sequences.") + key + " is shorter than M");
      auto& dst = std::string(key) == "alpha" ? c.sequences.alpha
                  : std::string(key) == "lambda" ? c.sequences.lambda
                                                 : c.sequences.beta;
      dst = v;
    }
  }

  // proposal
  c.proposal.scales.assign(p, 0.0);
  if (j.contains("proposal")) {
    const auto& pj = j.at("proposal");
    if (pj.contains("scales")) c.proposal.scales = detail::named_vector(c.spec, pj.at("scales"), "proposal.scales", errs);
    if (pj.contains("epsilon")) c.proposal.epsilon = detail::get_or<double>(pj, "epsilon", 0.0, errs);
    if (pj.contains("score_particles"))
      c.proposal.score_particles = detail::get_or<std::size_t>(pj, "score_particles", 1, errs);
  }
  try {
    validate(c.proposal, p);
  } catch (const ValidationError& e) {
    for (const auto& v : e.violations()) errs.push_back("proposal: " + v);
  }

  // replication
  if (j.contains("replicates")) {
    const auto& rj = j.at("replicates");
    c.reps = detail::get_or<std::size_t>(rj, "R", 1, errs);
    c.base_seed = detail::get_or<std::uint64_t>(rj, "base_seed", 1, errs);
    if (rj.contains("start_box")) {
      const auto& bj = rj.at("start_box");
      if (!bj.is_object()) errs.emplace_back("replicates.start_box must be an object");
      for (const auto& [k, v] : bj.items()) {
        const auto idx = c.spec.param_index(k);
        if (!idx) {
          errs.push_back("start_box: unknown parameter '" + k + "'");
          continue;
        }
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
          errs.push_back("start_box: '" + k + "' must be [lower, upper]");
          continue;
        }
        const double lo = v[0].get<double>(), hi = v[1].get<double>();
        if (!(lo < hi)) errs.push_back("start_box: lower must be below upper for '" + k + "'");
        c.start_box.push_back({*idx, {lo, hi}});
      }
    }
  }

  if (c.reps < 1) errs.emplace_back("replicates.R must be >= 1");
  if (c.M < 1) errs.emplace_back("M must be >= 1");
  if (c.J < 1) errs.emplace_back("J must be >= 1");
  if (c.jobs < 1) errs.emplace_back("jobs must be >= 1");
  if (c.command == "is2" && c.L < 1) errs.emplace_back("is2 needs L >= 1");
  if (c.command == "psmooth" && c.L >= c.n_times) errs.emplace_back("psmooth needs L < n_times");
  if (c.command == "momentum" && !(c.gamma >= 0.0 && c.gamma < 1.0)) errs.emplace_back("gamma must lie in [0, 1)");
  if (c.command == "avif" && c.k_start >= c.n_times) errs.emplace_back("k_start must be below n_times");
  if (c.command == "avif" && (c.average_from < 1 || c.average_from > c.M))
    errs.emplace_back("average_from must lie in 1..M");
  if (is_sampler(c.command) && c.burn_in + 10 > c.M) errs.emplace_back("burn_in must leave at least 10 samples");
  if (is_sampler(c.command) && !c.spec.dprior) errs.push_back("model '" + c.model + "' has no prior");
  if (!errs.empty()) throw ValidationError(std::move(errs));

  c.resolved = j;
  c.resolved["command"] = c.command;
  c.resolved["label"] = c.label;
  c.resolved["out"] = c.out;
  c.resolved["jobs"] = c.jobs;
  c.resolved["replicates"]["R"] = c.reps;
  c.resolved["replicates"]["base_seed"] = c.base_seed;
  c.resolved["params"] = params_to_json(c.spec, c.params);
  c.resolved["pert"]["cooling"] = c.pert.cooling;
  return c;
}

inline json read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open config file '" + path + "'");
  try {
    return json::parse(f, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------- oracle

struct OracleMle {
  ParamVector theta;
  double loglik = 0.0;
};

/// Maximizes the exact ou2 log-likelihood over the coordinates `free`
/// (others fixed at `base`) by nested grid refinement down to 1e-4.
inline OracleMle ou2_oracle_mle(const TimeSeriesData& data, const ParamVector& base,
                                const std::vector<std::size_t>& free, double half_width = 1.5) {
  if (free.empty() || free.size() > 2) throw ValidationError("oracle search supports one or two free parameters");
  OracleMle best{base, ou2_kalman_loglik(base, data)};
  auto eval = [&](ParamVector th) {
    double l = -std::numeric_limits<double>::infinity();
    try {
      l = ou2_kalman_loglik(th, data);
    } catch (const ValidationError&) {
    }
    if (l > best.loglik) best = {std::move(th), l};
  };
  double step = 0.01;
  ParamVector centre = base;
  double width = half_width;
  for (int level = 0; level < 3; ++level) {
    const auto n = static_cast<long>(std::lround(width / step));
    for (long a = -n; a <= n; ++a) {
      if (free.size() == 1) {
        ParamVector th = centre;
        th[static_cast<Eigen::Index>(free[0])] += static_cast<double>(a) * step;
        eval(th);
        continue;
      }
      for (long b = -n; b <= n; ++b) {
        ParamVector th = centre;
        th[static_cast<Eigen::Index>(free[0])] += static_cast<double>(a) * step;
        th[static_cast<Eigen::Index>(free[1])] += static_cast<double>(b) * step;
        eval(th);
      }
    }
    centre = best.theta;
    width = 2.0 * step;
    step /= 10.0;
  }
  return best;
}

// ---------------------------------------------------------------- run

struct ReplicateResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  ParamVector start;
  ParamVector final_theta;
  double loglik = 0.0;
  std::optional<double> oracle_loglik;
  double wall_seconds = 0.0;
  long fallbacks = 0;
  double acceptance = 0.0;
  std::vector<double> ess;
};

struct RunResult {
  ExperimentConfig config;
  std::vector<ReplicateResult> replicates;
  std::optional<OracleMle> oracle;
  json summary;
};

namespace detail {

inline TimeSeriesData load_data(const ExperimentConfig& c, const std::filesystem::path& base_dir) {
  if (c.data.empty()) return simulate(c.spec, c.params, RngStream(c.data_seed)).data;
  std::filesystem::path p(c.data);
  if (p.is_relative() && !std::filesystem::exists(p)) p = base_dir / p;
  auto d = read_data_csv(p.string());
  if (d.times.size() != c.spec.times.size())
    throw ValidationError("data file has " + std::to_string(d.times.size()) + " rows, config says n_times = " +
                          std::to_string(c.spec.times.size()));
  return d;
}

inline std::string rep_name(const char* stem, std::size_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu.csv", stem, r);
  return buf;
}

inline std::optional<double> oracle_loglik(const ExperimentConfig& c, const ParamVector& th,
                                           const TimeSeriesData& data) {
  try {
    if (c.model == "ou2") return ou2_kalman_loglik(th, data);
    if (c.model == "gompertz") return gompertz_exact_loglik(th, data);
  } catch (const ValidationError&) {
  }
  return std::nullopt;
}

inline std::string fingerprint(const TimeSeriesData& d) {
  double s = 0.0, q = 0.0;
  for (Eigen::Index n = 0; n < d.observations.rows(); ++n)
    for (Eigen::Index k = 0; k < d.observations.cols(); ++k) {
      s += d.observations(n, k);
      q += d.observations(n, k) * d.observations(n, k) * static_cast<double>(n + 1);
    }
  return fmt(s) + "/" + fmt(q);
}

}  // namespace detail

/// Oracle MLE for ou2 over the start-box coordinates (default alpha.2 and
/// alpha.3), cached as `oracle_mle.json` in `dir`.
inline OracleMle cached_ou2_oracle(const ExperimentConfig& c, const TimeSeriesData& data,
                                   const std::filesystem::path& dir) {
  std::vector<std::size_t> free;
  for (const auto& b : c.start_box) free.push_back(b.first);
  if (free.empty() || free.size() > 2) free = {ou2::alpha_2, ou2::alpha_3};
  std::sort(free.begin(), free.end());
  const auto path = dir / "oracle_mle.json";
  const std::string fp = detail::fingerprint(data);
  if (std::filesystem::exists(path)) {
    std::ifstream f(path);
    const json j = json::parse(f, nullptr, false);
    if (!j.is_discarded() && j.value("data_fingerprint", "") == fp && j.value("free", std::vector<std::size_t>{}) == free &&
        j.contains("theta"))
      return {params_from_json(c.spec, j.at("theta"), c.params), j.at("loglik").get<double>()};
  }
  const auto mle = ou2_oracle_mle(data, c.params, free);
  json j;
  j["theta"] = params_to_json(c.spec, mle.theta);
  j["loglik"] = mle.loglik;
  j["free"] = free;
  j["data_fingerprint"] = fp;
  std::ofstream(path) << j.dump(2) << '\n';
  return mle;
}

/// Executes the configured command for every replicate. Replicate r uses
/// seed base_seed XOR r; its start draws come from substream "start" and the
/// algorithm from substream "run".
inline RunResult run(const ExperimentConfig& c, const std::filesystem::path& config_dir = ".") {
  namespace fs = std::filesystem;
  const fs::path out(c.out);
  fs::create_directories(out);
  const auto data = detail::load_data(c, config_dir);
  validate(c.spec, data);

  RunResult res;
  res.config = c;
  res.replicates.resize(c.reps);
  json embedded = c.resolved;
  embedded.erase("out");
  embedded.erase("jobs");
  const std::string cfg_line = "config: " + embedded.dump();

  parallel_for(0, c.reps, c.jobs, [&](std::size_t r) {
    const auto t0 = std::chrono::steady_clock::now();
    ReplicateResult rr;
    rr.index = r;
    rr.seed = c.base_seed ^ static_cast<std::uint64_t>(r);
    const RngStream root(rr.seed);
    const std::vector<std::string> comments = {cfg_line, "seed: " + std::to_string(rr.seed),
                                               "replicate: " + std::to_string(r)};
    rr.start = c.params;
    auto eng = root.substream("start", 0).engine(0);
    for (const auto& [idx, box] : c.start_box)
      rr.start[static_cast<Eigen::Index>(idx)] = box.first + (box.second - box.first) * eng.uniform();
    const RngStream rng = root.substream("run", 0);
    rr.final_theta = rr.start;

    const std::string& cmd = c.command;
    if (cmd == "simulate") {
      const auto sim = simulate(c.spec, rr.start, root);
      std::ofstream f(out / (c.reps == 1 ? std::string("data.csv") : detail::rep_name("data", r)));
      write_data_csv(f, sim.data, comments);
    } else if (cmd == "pfilter") {
      rr.loglik = pfilter(c.spec, rr.start, data, c.J, rng, c.filter).loglik;
    } else if (cmd == "psmooth") {
      SmoothOptions so;
      so.filter = c.filter;
      const auto s = psmooth(c.spec, rr.start, data, c.J, c.L, rng, so);
      rr.loglik = s.loglik;
      std::ofstream f(out / detail::rep_name("smooth", r));
      detail::write_comments(f, comments);
      f << "n";
      for (Eigen::Index k = 0; k < s.state_means.cols(); ++k) f << ",x" << k + 1 << "_mean";
      f << '\n';
      for (Eigen::Index n = 0; n < s.state_means.rows(); ++n) {
        f << n + 1;
        for (Eigen::Index k = 0; k < s.state_means.cols(); ++k) f << ',' << detail::fmt(s.state_means(n, k));
        f << '\n';
      }
    } else if (cmd == "kalman") {
      const auto o = detail::oracle_loglik(c, rr.start, data);
      if (!o) throw ValidationError("model '" + c.model + "' has no exact likelihood");
      rr.loglik = *o;
    } else if (is_optimizer(cmd)) {
      IteratedConfig ic;
      ic.iterations = c.M;
      ic.particles = c.J;
      ic.pert = c.pert;
      ic.filter = c.filter;
      OptimizerTrace t;
      if (cmd == "if1") t = if1(c.spec, rr.start, data, ic, rng);
      if (cmd == "if2") t = if2(c.spec, rr.start, data, ic, rng);
      if (cmd == "is2") t = is2(c.spec, rr.start, data, ic, rng, Is2Options{c.max_step_sd});
      if (cmd == "momentum") t = momentum_mif(c.spec, rr.start, data, ic, c.gamma, rng);
      if (cmd == "aif") t = aif(c.spec, rr.start, data, ic, c.sequences, rng);
      if (cmd == "avif") t = avif(c.spec, rr.start, data, ic, rng, AvifOptions{c.k_start, c.avif_literal, c.average_from});
      rr.final_theta = t.estimate();
      rr.loglik = t.loglik.back();
      for (int f : t.fallback) rr.fallbacks += f != 0;
      std::ofstream f(out / detail::rep_name("trace", r));
      write_trace_csv(f, t, comments);
    } else if (is_sampler(cmd)) {
      McmcOptions mo;
      mo.filter = c.filter;
      const Chain ch = cmd == "pmmh" ? pmmh(c.spec, rr.start, data, c.M, c.J, c.proposal, rng, mo)
                                     : pif(c.spec, rr.start, data, c.M, c.J, c.proposal,
                                           pif_perturbation(c.spec, c.proposal, rr.start), rng, mo);
      rr.final_theta = ch.samples.row(ch.samples.rows() - 1).transpose();
      rr.loglik = ch.loglik.back();
      rr.acceptance = ch.acceptance_rate();
      for (Eigen::Index i = 0; i < ch.samples.cols(); ++i) {
        std::vector<double> v;
        for (auto m = static_cast<Eigen::Index>(c.burn_in); m < ch.samples.rows(); ++m) v.push_back(ch.samples(m, i));
        rr.ess.push_back(ess(v));
      }
      std::ofstream f(out / detail::rep_name("chain", r));
      write_chain_csv(f, ch, comments);
    }
    rr.oracle_loglik = cmd == "simulate" ? std::nullopt : detail::oracle_loglik(c, rr.final_theta, data);
    rr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.replicates[r] = std::move(rr);
  });

  if (c.model == "ou2" && is_optimizer(c.command)) res.oracle = cached_ou2_oracle(c, data, out);

  json s;
  s["config"] = c.resolved;
  s["command"] = c.command;
  s["label"] = c.label;
  s["model"] = c.model;
  s["param_names"] = c.spec.param_names();
  if (res.oracle) s["oracle"] = {{"theta", params_to_json(c.spec, res.oracle->theta)}, {"loglik", res.oracle->loglik}};
  json reps = json::array();
  for (const auto& rr : res.replicates) {
    json jr;
    jr["index"] = rr.index;
    jr["seed"] = rr.seed;
    jr["start"] = params_to_json(c.spec, rr.start);
    jr["final"] = params_to_json(c.spec, rr.final_theta);
    jr["loglik"] = rr.loglik;
    jr["oracle_loglik"] = rr.oracle_loglik ? json(*rr.oracle_loglik) : json(nullptr);
    jr["wall_seconds"] = rr.wall_seconds;
    if (is_optimizer(c.command)) jr["fallback_iterations"] = rr.fallbacks;
    if (is_sampler(c.command)) {
      jr["acceptance"] = rr.acceptance;
      json e = json::object();
      for (std::size_t i = 0; i < rr.ess.size(); ++i)
        if (c.proposal.scales[i] > 0.0) e[c.spec.params[i].name] = rr.ess[i];
      jr["ess"] = e;
    }
    reps.push_back(jr);
  }
  s["replicates"] = reps;
  res.summary = s;
  if (c.command != "simulate" || c.reps > 1) std::ofstream(out / "summary.json") << s.dump(2) << '\n';
  return res;
}

// ---------------------------------------------------------------- summarize

struct MethodStats {
  std::string label;
  std::string command;
  std::size_t n = 0;
  std::optional<double> oracle_max;
  double median = 0.0, q25 = 0.0, q75 = 0.0;
  double within2 = 0.0, within4 = 0.0, within10 = 0.0;
  std::map<std::string, double> mean_ess;
};

struct Report {
  std::vector<MethodStats> methods;
  json to_json() const {
    json j = json::array();
    for (const auto& m : methods) {
      json e = {{"label", m.label}, {"command", m.command}, {"n", m.n},     {"median", m.median},
                {"q25", m.q25},     {"q75", m.q75},         {"within2", m.within2},
                {"within4", m.within4}, {"within10", m.within10}};
      e["oracle_max"] = m.oracle_max ? json(*m.oracle_max) : json(nullptr);
      if (!m.mean_ess.empty()) e["mean_ess"] = m.mean_ess;
      j.push_back(e);
    }
    return j;
  }
};

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Statistics for one summary document.
inline MethodStats method_stats(const json& s) {
  MethodStats m;
  m.label = s.value("label", s.value("command", std::string("?")));
  m.command = s.value("command", std::string("?"));
  std::vector<double> ll;
  for (const auto& r : s.at("replicates"))
    if (r.contains("oracle_loglik") && r.at("oracle_loglik").is_number()) ll.push_back(r.at("oracle_loglik").get<double>());
    else if (r.contains("loglik") && r.at("loglik").is_number()) ll.push_back(r.at("loglik").get<double>());
  m.n = s.at("replicates").size();
  if (!ll.empty()) {
    m.median = detail::quantile(ll, 0.5);
    m.q25 = detail::quantile(ll, 0.25);
    m.q75 = detail::quantile(ll, 0.75);
  }
  if (s.contains("oracle")) m.oracle_max = s.at("oracle").at("loglik").get<double>();
  else if (!ll.empty()) m.oracle_max = *std::max_element(ll.begin(), ll.end());
  if (m.oracle_max && !ll.empty()) {
    auto frac = [&](double band) {
      std::size_t k = 0;
      for (double v : ll) k += *m.oracle_max - v <= band;
      return static_cast<double>(k) / static_cast<double>(ll.size());
    };
    m.within2 = frac(2.0);
    m.within4 = frac(4.0);
    m.within10 = frac(10.0);
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& r : s.at("replicates"))
    if (r.contains("ess"))
      for (const auto& [k, v] : r.at("ess").items()) {
        m.mean_ess[k] += v.get<double>();
        ++counts[k];
      }
  for (auto& [k, v] : m.mean_ess) v /= static_cast<double>(counts[k]);
  return m;
}

/// Collects every summary.json under `dir`, orders methods by median final
/// log-likelihood and writes report.json and report.csv into `dir`.
inline Report summarize(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ValidationError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == "summary.json") files.push_back(e.path());
  if (files.empty()) throw ValidationError("no completed runs under '" + dir.string() + "'");
  std::sort(files.begin(), files.end());
  Report rep;
  for (const auto& f : files) {
    std::ifstream is(f);
    rep.methods.push_back(method_stats(json::parse(is)));
  }
  std::stable_sort(rep.methods.begin(), rep.methods.end(),
                   [](const MethodStats& a, const MethodStats& b) { return a.median > b.median; });
  std::ofstream(dir / "report.json") << rep.to_json().dump(2) << '\n';
  std::ofstream csv(dir / "report.csv");
  csv << "label,command,n,median,q25,q75,within2,within4,within10\n";
  for (const auto& m : rep.methods)
    csv << m.label << ',' << m.command << ',' << m.n << ',' << detail::fmt(m.median) << ',' << detail::fmt(m.q25) << ','
        << detail::fmt(m.q75) << ',' << detail::fmt(m.within2) << ',' << detail::fmt(m.within4) << ','
        << detail::fmt(m.within10) << '\n';
  bool any_ess = false;
  for (const auto& m : rep.methods) any_ess = any_ess || !m.mean_ess.empty();
  if (any_ess) {
    std::ofstream ecsv(dir / "ess.csv");
    ecsv << "label,parameter,mean_ess\n";
    for (const auto& m : rep.methods)
      for (const auto& [k, v] : m.mean_ess) ecsv << m.label << ',' << k << ',' << detail::fmt(v) << '\n';
  }
  return rep;
}

}  // namespace pompkit
