#include "geppo/trainer.hpp"

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "geppo/rng.hpp"

using namespace geppo;

namespace {

TrainerConfig small_config(Algorithm alg) {
  TrainerConfig cfg;
  cfg.algorithm = alg;
  cfg.env = EnvName::point_mass;
  cfg.seed = 7;
  cfg.n = 128;
  cfg.N = 256;
  cfg.M_bar = 5;
  cfg.total_steps = 3 * 128;
  cfg.minibatches = 8;
  cfg.epochs = 2;
  cfg.hidden = {16, 16};
  cfg.eval_episodes = 2;
  return cfg;
}

}  // namespace

TEST_CASE("config resolution") {
  SUBCASE("geppo with B = 2 and essopt") {
    TrainerConfig cfg;
    cfg.algorithm = Algorithm::geppo;
    cfg.n = 1024;
    cfg.N = 2048;
    cfg.M_bar = 5;
    const auto r = cfg.resolve();
    CHECK(r.B == 2);
    CHECK(r.weights.M == 4);
    CHECK(r.epsilon == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(r.batch_per_iter == 1024);
    CHECK(r.window_capacity == 4);
    CHECK(r.generalized);
    CHECK(r.adaptive_lr);
    CHECK(r.vtrace);
  }

  SUBCASE("ppo is the M = 1 special case with fixed learning rate") {
    TrainerConfig cfg;
    cfg.algorithm = Algorithm::ppo;
    const auto r = cfg.resolve();
    CHECK(r.weights.M == 1);
    CHECK(r.epsilon == 0.2);
    CHECK(r.batch_per_iter == 2048);
    CHECK_FALSE(r.generalized);
    CHECK_FALSE(r.adaptive_lr);
    CHECK_FALSE(r.vtrace);
  }

  SUBCASE("ppo_adapt adds only the controller") {
    TrainerConfig cfg;
    cfg.algorithm = Algorithm::ppo_adapt;
    const auto r = cfg.resolve();
    CHECK(r.adaptive_lr);
    CHECK_FALSE(r.generalized);
  }

  SUBCASE("resolution is pure") {
    TrainerConfig cfg;
    cfg.algorithm = Algorithm::geppo;
    cfg.weight_program = WeightProgram::tvopt;
    cfg.M_bar = 4;
    const auto a = cfg.resolve();
    const auto b = cfg.resolve();
    CHECK(a.weights.nu == b.weights.nu);
    CHECK(a.epsilon == b.epsilon);
  }

  SUBCASE("invalid batch split is rejected") {
    TrainerConfig cfg;
    cfg.N = 1000;  // not divisible by n = 1024
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }

  SUBCASE("json round-trip preserves the resolved triple") {
    TrainerConfig cfg = small_config(Algorithm::geppo);
    const TrainerConfig back = TrainerConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK(back.resolve().epsilon == cfg.resolve().epsilon);
  }
}

TEST_CASE("zero total steps returns the initial policy unchanged") {
  TrainerConfig cfg = small_config(Algorithm::geppo);
  cfg.total_steps = 0;
  Trainer trainer(cfg);
  const Eigen::VectorXd before = trainer.policy_params();
  const TrainResult result = trainer.run();
  CHECK(result.reports.empty());
  CHECK(result.policy_params == before);
  CHECK_FALSE(result.diverged);
}

TEST_CASE("identical config and seed give identical metric streams") {
  const TrainerConfig cfg = small_config(Algorithm::geppo);
  std::ostringstream a, b;
  Trainer(cfg).run(&a);
  Trainer(cfg).run(&b);
  CHECK(a.str() == b.str());
  CHECK_FALSE(a.str().empty());
}

TEST_CASE("metric records carry exactly the documented keys") {
  const TrainerConfig cfg = small_config(Algorithm::ppo);
  std::ostringstream out;
  Trainer(cfg).run(&out);
  std::istringstream in(out.str());
  std::string line;
  REQUIRE(std::getline(in, line));
  const auto j = nlohmann::json::parse(line);
  CHECK(j.size() == 7);
  for (const char* key :
       {"iter", "steps", "eval_return", "tv_hat", "eta", "clip_frac", "loss"}) {
    CHECK(j.contains(key));
  }
}

TEST_CASE("geppo with M = 1 walks the ppo path to machine precision") {
  // B = 1 resolves to a single prior policy with unit weight and the ppo
  // clipping parameter; with the controller enabled on both sides the two
  // objective paths must produce the same losses on the same batches.
  TrainerConfig geppo_cfg = small_config(Algorithm::geppo);
  geppo_cfg.n = 256;
  geppo_cfg.N = 256;
  geppo_cfg.total_steps = 4 * 256;

  TrainerConfig ppo_cfg = small_config(Algorithm::ppo_adapt);
  ppo_cfg.n = 256;
  ppo_cfg.N = 256;
  ppo_cfg.total_steps = 4 * 256;

  const auto resolved = geppo_cfg.resolve();
  CHECK(resolved.weights.M == 1);
  CHECK(resolved.epsilon == 0.2);

  const TrainResult g = Trainer(geppo_cfg).run();
  const TrainResult p = Trainer(ppo_cfg).run();
  REQUIRE(g.reports.size() == p.reports.size());
  for (std::size_t i = 0; i < g.reports.size(); ++i) {
    CHECK(std::abs(g.reports[i].loss - p.reports[i].loss) <= 1e-12);
    CHECK(std::abs(g.reports[i].tv_hat - p.reports[i].tv_hat) <= 1e-12);
    CHECK(std::abs(g.reports[i].eval_return - p.reports[i].eval_return) <=
          1e-12);
    CHECK(g.reports[i].eta == p.reports[i].eta);
  }
  CHECK(g.policy_params == p.policy_params);
}

TEST_CASE("checkpoints restore the exact parameters") {
  const TrainerConfig cfg = small_config(Algorithm::geppo);
  Trainer trainer(cfg);
  trainer.run();
  const nlohmann::json checkpoint = trainer.checkpoint();
  CHECK(checkpoint.at("version") == 1);

  Trainer fresh(cfg);
  fresh.restore(checkpoint);
  CHECK(fresh.policy_params() == trainer.policy_params());
  CHECK(fresh.value_params() == trainer.value_params());
  Rng rng(5);
  const Eigen::VectorXd probe = rng.normal_vector(4);
  CHECK(fresh.normalizer().transform(probe) ==
        trainer.normalizer().transform(probe));
}

TEST_CASE("divergent optimization is reported, not thrown") {
  // The clamped parameterization keeps organic runs finite, so poison the
  // parameters through a checkpoint to exercise the guard.
  TrainerConfig cfg = small_config(Algorithm::geppo);
  Trainer trainer(cfg);
  nlohmann::json checkpoint = trainer.checkpoint();
  checkpoint["policy"]["log_std"][0] = std::nan("");
  trainer.restore(checkpoint);
  const TrainResult result = trainer.run();
  CHECK(result.diverged);
  CHECK(result.diverged_iter >= 0);
  CHECK(result.reports.empty());
}

TEST_CASE("geppo improves over the initial random policy on point mass") {
  // Pre-run baseline: evaluation returns of the untrained policy.
  TrainerConfig cfg;
  cfg.algorithm = Algorithm::geppo;
  cfg.env = EnvName::point_mass;
  cfg.seed = 3;
  cfg.n = 1024;
  cfg.N = 2048;
  cfg.M_bar = 5;
  cfg.total_steps = 150 * 1024;

  Trainer probe(cfg);
  std::vector<double> baseline;
  for (int i = 0; i < 20; ++i) {
    baseline.push_back(probe.evaluate(1000 + i));
  }
  double mean = 0.0;
  for (double b : baseline) mean += b;
  mean /= baseline.size();
  double var = 0.0;
  for (double b : baseline) var += (b - mean) * (b - mean);
  const double stddev = std::sqrt(var / (baseline.size() - 1));

  Trainer trainer(cfg);
  const TrainResult result = trainer.run();
  REQUIRE_FALSE(result.diverged);
  REQUIRE(result.reports.size() >= 150);

  double final_mean = 0.0;
  for (std::size_t i = result.reports.size() - 10; i < result.reports.size();
       ++i) {
    final_mean += result.reports[i].eval_return;
  }
  final_mean /= 10.0;
  CHECK(final_mean > mean + 5.0 * stddev);
}
