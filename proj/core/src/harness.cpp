#include "geppo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "geppo/certify.hpp"
#include "geppo/rng.hpp"
#include "geppo/tabular.hpp"
#include "geppo/weights.hpp"

namespace geppo {

namespace fs = std::filesystem;

std::uint64_t hash_config(const nlohmann::json& config) {
  return fnv1a(config.dump());
}

namespace {

std::string hash_string(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t parse_hash(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

double final_return(const std::vector<UpdateReport>& metrics) {
  if (metrics.empty()) return 0.0;
  const std::size_t window = std::min<std::size_t>(10, metrics.size());
  double sum = 0.0;
  for (std::size_t i = metrics.size() - window; i < metrics.size(); ++i) {
    sum += metrics[i].eval_return;
  }
  return sum / static_cast<double>(window);
}

double average_return(const std::vector<UpdateReport>& metrics) {
  if (metrics.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& m : metrics) sum += m.eval_return;
  return sum / static_cast<double>(metrics.size());
}

/// Earliest cumulative step count at which the evaluation return reaches
/// `target`; falls back to the final step count when never reached.
std::int64_t steps_to_reach(const std::vector<UpdateReport>& metrics,
                            double target) {
  for (const auto& m : metrics) {
    if (m.eval_return >= target) return m.steps;
  }
  return metrics.empty() ? 0 : metrics.back().steps;
}

struct SeedStats {
  double mean = 0.0;
  std::optional<double> stderr_;
};

SeedStats across_seeds(const std::vector<double>& values) {
  SeedStats s;
  const auto k = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(k);
  if (k > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sample_var = ss / static_cast<double>(k - 1);
    s.stderr_ = std::sqrt(sample_var / static_cast<double>(k));
  }
  return s;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

}  // namespace

RunRecord run_experiment(const TrainerConfig& config, const fs::path& outdir,
                         bool write_checkpoint) {
  RunRecord record;
  record.config = config.to_json();
  record.config_hash = hash_config(record.config);

  const TrainerConfig::Resolved resolved = config.resolve();
  Trainer trainer(config);

  fs::create_directories(outdir);
  std::ofstream metrics_out(outdir / "metrics.jsonl", std::ios::binary);
  const TrainResult result = trainer.run(&metrics_out);
  metrics_out.close();
  record.metrics = result.reports;

  if (write_checkpoint) {
    std::ofstream ckpt(outdir / "checkpoint.json", std::ios::binary);
    ckpt << trainer.checkpoint().dump(2) << '\n';
  }

  nlohmann::json nu(std::vector<double>(resolved.weights.nu.begin(),
                                        resolved.weights.nu.end()));
  record.summary = {
      {"config", record.config},
      {"config_hash", hash_string(record.config_hash)},
      {"algorithm", to_string(config.algorithm)},
      {"env", to_string(config.env)},
      {"seed", config.seed},
      {"resolved",
       {{"B", resolved.B},
        {"M", resolved.weights.M},
        {"nu", nu},
        {"epsilon", resolved.epsilon}}},
      {"iterations", record.metrics.size()},
      {"total_steps",
       record.metrics.empty() ? 0 : record.metrics.back().steps},
      {"avg_return", average_return(record.metrics)},
      {"final_return", final_return(record.metrics)},
      {"steps_to_final_return",
       steps_to_reach(record.metrics, final_return(record.metrics))},
      {"diverged", result.diverged},
      {"diverged_iter", result.diverged_iter},
  };

  std::ofstream summary_out(outdir / "summary.json", std::ios::binary);
  summary_out << record.summary.dump(2) << '\n';
  return record;
}

void write_record(const RunRecord& record, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream metrics_out(dir / "metrics.jsonl", std::ios::binary);
  for (const auto& m : record.metrics) {
    metrics_out << m.to_json().dump() << '\n';
  }
  std::ofstream summary_out(dir / "summary.json", std::ios::binary);
  summary_out << record.summary.dump(2) << '\n';
}

RunRecord load_record(const fs::path& dir) {
  RunRecord record;
  std::ifstream summary_in(dir / "summary.json");
  if (!summary_in) {
    throw std::runtime_error("missing summary.json in " + dir.string());
  }
  record.summary = nlohmann::json::parse(summary_in);
  record.config = record.summary.at("config");
  record.config_hash =
      parse_hash(record.summary.at("config_hash").get<std::string>());

  std::ifstream metrics_in(dir / "metrics.jsonl");
  if (!metrics_in) {
    throw std::runtime_error("missing metrics.jsonl in " + dir.string());
  }
  std::string line;
  while (std::getline(metrics_in, line)) {
    if (line.empty()) continue;
    record.metrics.push_back(UpdateReport::from_json(nlohmann::json::parse(line)));
  }
  return record;
}

std::vector<RunRecord> load_records(const fs::path& dir) {
  std::vector<RunRecord> records;
  if (fs::exists(dir / "summary.json")) {
    records.push_back(load_record(dir));
    return records;
  }
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "summary.json")) {
      subdirs.push_back(entry.path());
    }
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& sub : subdirs) records.push_back(load_record(sub));
  if (records.empty()) {
    throw std::runtime_error("no run records under " + dir.string());
  }
  return records;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream out;
  out << "metric," << algo_a << "_mean," << algo_a << "_stderr," << algo_b
      << "_mean," << algo_b << "_stderr,improvement\n";
  for (const auto& row : rows) {
    out << row.metric << ',' << format_double(row.a_mean) << ',';
    if (row.a_stderr) out << format_double(*row.a_stderr);
    out << ',' << format_double(row.b_mean) << ',';
    if (row.b_stderr) out << format_double(*row.b_stderr);
    out << ',' << format_double(row.improvement) << '\n';
  }
  return out.str();
}

ComparisonTable compare(const std::vector<RunRecord>& a,
                        const std::vector<RunRecord>& b) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("compare needs at least one record per side");
  }
  const std::string env_a = a.front().summary.at("env").get<std::string>();
  for (const auto& records : {a, b}) {
    for (const auto& r : records) {
      if (r.summary.at("env").get<std::string>() != env_a) {
        throw std::invalid_argument("records from mismatched environments");
      }
    }
  }

  ComparisonTable table;
  table.algo_a = a.front().summary.at("algorithm").get<std::string>();
  table.algo_b = b.front().summary.at("algorithm").get<std::string>();
  if (table.algo_a == table.algo_b) {
    table.algo_a += "_a";
    table.algo_b += "_b";
  }

  const auto collect = [](const std::vector<RunRecord>& records, auto&& f) {
    std::vector<double> out;
    for (const auto& r : records) out.push_back(f(r));
    return out;
  };

  const auto avg_a = across_seeds(
      collect(a, [](const RunRecord& r) { return average_return(r.metrics); }));
  const auto avg_b = across_seeds(
      collect(b, [](const RunRecord& r) { return average_return(r.metrics); }));
  const auto fin_a = across_seeds(
      collect(a, [](const RunRecord& r) { return final_return(r.metrics); }));
  const auto fin_b = across_seeds(
      collect(b, [](const RunRecord& r) { return final_return(r.metrics); }));

  const auto pct = [](double base, double other) {
    const double denom = std::abs(base) > 1e-12 ? std::abs(base) : 1e-12;
    return 100.0 * (other - base) / denom;
  };

  table.rows.push_back({"average_return", avg_a.mean, avg_a.stderr_,
                        avg_b.mean, avg_b.stderr_, pct(avg_a.mean, avg_b.mean)});
  table.rows.push_back({"final_return", fin_a.mean, fin_a.stderr_, fin_b.mean,
                        fin_b.stderr_, pct(fin_a.mean, fin_b.mean)});

  // Steps for each side to reach the first algorithm's final performance.
  const double baseline_final = fin_a.mean;
  const auto steps_a = across_seeds(collect(a, [&](const RunRecord& r) {
    return static_cast<double>(steps_to_reach(r.metrics, baseline_final));
  }));
  const auto steps_b = across_seeds(collect(b, [&](const RunRecord& r) {
    return static_cast<double>(steps_to_reach(r.metrics, baseline_final));
  }));
  table.rows.push_back({"steps_to_" + table.algo_a + "_final", steps_a.mean,
                        steps_a.stderr_, steps_b.mean, steps_b.stderr_,
                        steps_b.mean / steps_a.mean});
  return table;
}

void emit_plot_data(const std::vector<RunRecord>& records,
                    const fs::path& outdir) {
  if (records.empty()) throw std::invalid_argument("no records to plot");
  fs::create_directories(outdir);

  // Group by algorithm; all records of a group must share the iteration grid.
  std::vector<std::string> algos;
  for (const auto& r : records) {
    const auto algo = r.summary.at("algorithm").get<std::string>();
    if (std::find(algos.begin(), algos.end(), algo) == algos.end()) {
      algos.push_back(algo);
    }
  }

  for (const auto& algo : algos) {
    std::vector<const RunRecord*> group;
    for (const auto& r : records) {
      if (r.summary.at("algorithm").get<std::string>() == algo) {
        group.push_back(&r);
      }
    }
    const std::size_t iters = group.front()->metrics.size();
    for (const auto* r : group) {
      if (r->metrics.size() != iters) {
        throw std::invalid_argument(
            "records for one algorithm have mismatched lengths");
      }
    }
    const double target =
        TrainerConfig::from_json(group.front()->config).resolve().epsilon / 2.0;

    std::ofstream ret(outdir / ("return_" + algo + ".csv"), std::ios::binary);
    std::ofstream tv(outdir / ("tv_" + algo + ".csv"), std::ios::binary);
    ret << "steps,mean,stderr\n";
    tv << "steps,mean,stderr,target\n";
    for (std::size_t i = 0; i < iters; ++i) {
      std::vector<double> returns, tvs;
      for (const auto* r : group) {
        returns.push_back(r->metrics[i].eval_return);
        tvs.push_back(r->metrics[i].tv_hat);
      }
      const auto rs = across_seeds(returns);
      const auto ts = across_seeds(tvs);
      const auto steps = group.front()->metrics[i].steps;
      ret << steps << ',' << format_double(rs.mean) << ','
          << format_double(rs.stderr_.value_or(0.0)) << '\n';
      tv << steps << ',' << format_double(ts.mean) << ','
         << format_double(ts.stderr_.value_or(0.0)) << ','
         << format_double(target) << '\n';
    }
  }
}

int SuiteReport::failures() const {
  int n = 0;
  for (const auto& c : checks) {
    if (!c.passed) ++n;
  }
  return n;
}

double SuiteReport::worst_slack() const {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& c : checks) worst = std::min(worst, c.slack);
  return worst;
}

nlohmann::json SuiteReport::to_json() const {
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& c : checks) {
    if (!c.passed) failed.push_back(c.name);
  }
  return {{"suite", suite},
          {"checks", checks.size()},
          {"failures", failures()},
          {"worst_slack", checks.empty() ? 0.0 : worst_slack()},
          {"failed", failed},
          {"passed", passed()}};
}

namespace {

struct FuzzTuple {
  TabularMdp mdp;
  std::vector<TabularPolicy> priors;
  Eigen::VectorXd nu;
  TabularPolicy pi;
};

FuzzTuple fuzz_tuple(Rng& rng, int max_m) {
  FuzzTuple t;
  t.mdp = random_mdp(rng);
  const int m = rng.uniform_int(1, max_m);
  for (int i = 0; i < m; ++i) {
    t.priors.push_back(random_policy(rng, t.mdp.num_states, t.mdp.num_actions));
  }
  t.nu.resize(m);
  for (int i = 0; i < m; ++i) t.nu[i] = rng.uniform(0.05, 1.05);
  t.nu /= t.nu.sum();
  t.pi = random_policy(rng, t.mdp.num_states, t.mdp.num_actions);
  return t;
}

void add_check(SuiteReport& report, const std::string& name, bool passed,
               double slack) {
  report.checks.push_back({name, passed, slack});
}

void add_cert(SuiteReport& report, const std::string& name,
              const CertResult& cert) {
  add_check(report, name, cert.holds, cert.slack);
}

SuiteReport bounds_suite(std::uint64_t seed) {
  SuiteReport report;
  report.suite = "bounds";
  Rng rng(derive_seed(seed, "bounds"));
  for (int i = 0; i < 100; ++i) {
    const FuzzTuple t = fuzz_tuple(rng, 4);
    const std::string tag = "instance_" + std::to_string(i);
    add_cert(report, tag + ".lb_standard",
             verify_lb_standard(t.mdp, t.priors.front(), t.pi));
    add_cert(report, tag + ".lb_generalized",
             verify_lb_generalized(t.mdp, t.priors, t.nu, t.pi));
    add_cert(report, tag + ".triangle",
             verify_triangle_decomposition(t.mdp, t.priors, t.nu, t.pi));
    const AppendixCert appendix =
        verify_appendix_lemmas(t.mdp, t.priors.front(), t.pi, t.priors.back());
    add_cert(report, tag + ".performance_difference",
             appendix.performance_difference);
    add_cert(report, tag + ".visitation_tv", appendix.visitation_tv);
    add_cert(report, tag + ".reference_bound", appendix.reference_bound);
  }
  return report;
}

SuiteReport identities_suite(std::uint64_t seed) {
  SuiteReport report;
  report.suite = "identities";
  Rng rng(derive_seed(seed, "identities"));
  for (int i = 0; i < 100; ++i) {
    const FuzzTuple t = fuzz_tuple(rng, 4);
    const std::string tag = "instance_" + std::to_string(i);
    const TvIdentityCert cert =
        verify_tv_ratio_identities(t.mdp, t.priors, t.nu, t.pi);
    add_cert(report, tag + ".current_policy", cert.current_policy);
    add_cert(report, tag + ".multi_policy", cert.multi_policy);

    // The sample-based estimator over the exact enumeration of the mixture
    // must match the lemma expectation to 1e-12.
    const int m = static_cast<int>(t.priors.size());
    const int count = m * t.mdp.num_states * t.mdp.num_actions;
    Eigen::VectorXd cand(count), cur(count), behave(count), weight(count);
    double exact = 0.0;
    int idx = 0;
    for (int p = 0; p < m; ++p) {
      const Eigen::VectorXd d = solve_policy(t.mdp, t.priors[p]).d_pi;
      exact += t.nu[p] * tv_state(t.pi, t.priors.front(), d);
      for (int s = 0; s < t.mdp.num_states; ++s) {
        for (int a = 0; a < t.mdp.num_actions; ++a) {
          cand[idx] = std::log(t.pi.probs(s, a));
          cur[idx] = std::log(t.priors.front().probs(s, a));
          behave[idx] = std::log(t.priors[p].probs(s, a));
          weight[idx] = t.nu[p] * d[s] * t.priors[p].probs(s, a);
          ++idx;
        }
      }
    }
    const double estimate = tv_estimate(cand, cur, behave, weight);
    add_check(report, tag + ".tv_estimate_enumeration",
              std::abs(estimate - exact) <= 1e-12,
              -std::abs(estimate - exact));
  }
  return report;
}

SuiteReport weights_suite() {
  SuiteReport report;
  report.suite = "weights";

  // Optimal weights, clipping parameter and effective M at B = 2.
  {
    const PolicyWeights w = solve_essopt(2, 5);
    Eigen::VectorXd expected(4);
    expected << 0.4, 0.3, 0.2, 0.1;
    const double err = w.M == 4
                           ? (w.nu - expected).cwiseAbs().maxCoeff()
                           : 1.0;
    add_check(report, "essopt_b2.table", err <= 1e-6, -err);
    const double eps_err = std::abs(epsilon_mapping(w, 0.2) - 0.1);
    add_check(report, "essopt_b2.epsilon", eps_err <= 1e-9, -eps_err);
    const GridResult g = grid_oracle(WeightProgram::essopt, 2, 5, 1e-2);
    const double gap = std::abs(g.objective - w.sum_sq());
    add_check(report, "essopt_b2.grid", g.feasible_found && gap <= 1e-3, -gap);
  }
  {
    const PolicyWeights w = solve_tvopt(2, 3);
    const GridResult g = grid_oracle(WeightProgram::tvopt, 2, 3, 1e-3);
    const double gap = std::abs(g.objective - w.expected_age_plus_one());
    add_check(report, "tvopt_b2.grid", g.feasible_found && gap <= 1e-3, -gap);
  }

  for (int b = 1; b <= 5; ++b) {
    const double tv_err =
        std::abs(tv_factor_uniform(b) - 2.0 * b / (b + 1.0));
    const double ess_err =
        std::abs(ess_factor_uniform(b) - (2.0 * b - 1.0) / b);
    add_check(report, "factors_b" + std::to_string(b), tv_err == 0.0 &&
              ess_err == 0.0, -std::max(tv_err, ess_err));
  }

  for (int b = 1; b <= 4; ++b) {
    const PolicyWeights ess = solve_essopt(b, 4 * b);
    const double feas = std::abs(ess.expected_age_plus_one() - b);
    add_check(report, "essopt_feasibility_b" + std::to_string(b),
              feas <= 1e-9 && ess.nu.minCoeff() >= 0.0 &&
                  std::abs(ess.nu.sum() - 1.0) <= 1e-9,
              -feas);
    const double eps_exact = std::abs(epsilon_mapping(ess, 0.2) - 0.2 / b);
    add_check(report, "essopt_epsilon_b" + std::to_string(b),
              eps_exact <= 1e-12, -eps_exact);

    const PolicyWeights tv = solve_tvopt(b, 3 * b);
    const double slackness = std::abs(tv.sum_sq() - 1.0 / b);
    add_check(report, "tvopt_slackness_b" + std::to_string(b),
              slackness <= 1e-6 && tv.nu.minCoeff() >= 0.0 &&
                  std::abs(tv.nu.sum() - 1.0) <= 1e-9,
              -slackness);
  }

  // Strict ESS dominance of the uniform distribution.
  {
    const PolicyWeights uniform = uniform_weights(4);
    PolicyWeights skewed;
    skewed.nu.resize(4);
    skewed.nu << 0.4, 0.3, 0.2, 0.1;
    skewed.M = 4;
    const bool strict = effective_sample_size(skewed, 1024) <
                        effective_sample_size(uniform, 1024);
    add_check(report, "ess_uniform_strict", strict, strict ? 0.0 : -1.0);
  }
  return report;
}

Eigen::VectorXd brute_force_advantage(const EstimationInput& in,
                                      const EstimatorConfig& cfg,
                                      bool correct) {
  const int n = in.size();
  const Eigen::VectorXd c = truncated_ratios(in.log_ratio, cfg.c_bar);
  Eigen::VectorXd adv = Eigen::VectorXd::Zero(n);
  for (int t = 0; t < n; ++t) {
    double weight = 1.0;
    for (int j = 0; t + j < n; ++j) {
      const int u = t + j;
      const double bootstrap = in.terminal[u] ? 0.0 : in.next_values[u];
      const double delta = in.rewards[u] + cfg.gamma * bootstrap - in.values[u];
      adv[t] += weight * delta;
      if (in.terminal[u] || in.truncated[u]) break;
      weight *= cfg.gamma * cfg.lambda;
      if (correct && t + j + 1 < n) weight *= c[t + j + 1];
    }
  }
  return adv;
}

EstimationInput fuzz_batch(Rng& rng, int n, bool off_policy) {
  EstimationInput in;
  in.rewards = rng.normal_vector(n);
  in.values = rng.normal_vector(n);
  in.next_values = rng.normal_vector(n);
  in.log_ratio = off_policy ? Eigen::VectorXd(0.3 * rng.normal_vector(n))
                            : Eigen::VectorXd(Eigen::VectorXd::Zero(n));
  in.terminal.assign(n, 0);
  in.truncated.assign(n, 0);
  for (int t = 0; t < n; ++t) {
    const double u = rng.uniform();
    if (u < 0.1) {
      in.terminal[t] = 1;
    } else if (u < 0.2) {
      in.truncated[t] = 1;
    }
  }
  return in;
}

SuiteReport estimators_suite(std::uint64_t seed) {
  SuiteReport report;
  report.suite = "estimators";
  Rng rng(derive_seed(seed, "estimators"));

  EstimatorConfig cfg;
  cfg.gamma = 0.97;
  cfg.lambda = 0.9;
  cfg.c_bar = 1.0;

  for (int i = 0; i < 50; ++i) {
    const EstimationInput in = fuzz_batch(rng, 10 + i % 20, false);
    const double err = (gae(in, cfg).advantage -
                        brute_force_advantage(in, cfg, false))
                           .cwiseAbs()
                           .maxCoeff();
    add_check(report, "gae_bruteforce_" + std::to_string(i), err <= 1e-10,
              -err);
  }

  for (int i = 0; i < 20; ++i) {
    const EstimationInput in = fuzz_batch(rng, 24, false);
    const double err =
        (gae(in, cfg).advantage - vtrace_targets(in, cfg).advantage)
            .cwiseAbs()
            .maxCoeff();
    add_check(report, "vtrace_onpolicy_reduction_" + std::to_string(i),
              err <= 1e-12, -err);
  }

  for (int i = 0; i < 20; ++i) {
    const EstimationInput in = fuzz_batch(rng, 16, true);
    const double err = (vtrace_targets(in, cfg).advantage -
                        brute_force_advantage(in, cfg, true))
                           .cwiseAbs()
                           .maxCoeff();
    add_check(report, "vtrace_bruteforce_" + std::to_string(i), err <= 1e-10,
              -err);
  }

  // Truncation monotonicity of correction products.
  {
    const Eigen::VectorXd log_ratio = 0.5 * rng.normal_vector(64);
    const Eigen::VectorXd lo = truncated_ratios(log_ratio, 0.7);
    const Eigen::VectorXd hi = truncated_ratios(log_ratio, 1.4);
    double prod_lo = 1.0, prod_hi = 1.0, worst = 0.0;
    bool ok = true;
    for (int t = 0; t < 64; ++t) {
      prod_lo *= lo[t];
      prod_hi *= hi[t];
      worst = std::min(worst, prod_hi - prod_lo);
      ok = ok && prod_hi >= prod_lo - 1e-15;
    }
    add_check(report, "truncation_monotonicity", ok, worst);
  }

  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd q = 2.0 * rng.normal_vector(64);
    const StandardizeResult r = standardize_starting_point(q);
    const double mean_err = std::abs(r.values.mean());
    const double std_err = std::abs(
        std::sqrt(r.values.squaredNorm() / 64.0 - r.values.mean() * r.values.mean()) -
        1.0);
    add_check(report, "standardize_" + std::to_string(i),
              !r.degenerate && mean_err <= 1e-9 && std_err <= 1e-9,
              -std::max(mean_err, std_err));
  }
  return report;
}

}  // namespace

SuiteReport run_verification_suite(const std::string& suite,
                                   std::uint64_t seed) {
  if (suite == "bounds") return bounds_suite(seed);
  if (suite == "identities") return identities_suite(seed);
  if (suite == "weights") return weights_suite();
  if (suite == "estimators") return estimators_suite(seed);
  if (suite == "all") {
    SuiteReport all;
    all.suite = "all";
    for (const char* id : {"bounds", "identities", "weights", "estimators"}) {
      const SuiteReport sub = run_verification_suite(id, seed);
      for (const auto& check : sub.checks) {
        all.checks.push_back(
            {sub.suite + "." + check.name, check.passed, check.slack});
      }
    }
    return all;
  }
  throw std::invalid_argument("unknown suite: " + suite);
}

}  // namespace geppo
