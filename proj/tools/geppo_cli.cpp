// Command-line front end: train / compare / verify / plot / weights.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "geppo/harness.hpp"
#include "geppo/trainer.hpp"
#include "geppo/weights.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace geppo;

namespace {

int cmd_train(const std::string& config_path,
              std::optional<std::uint64_t> seed, const std::string& out,
              bool save_checkpoint) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "cannot open config file: " << config_path << "\n";
    return 1;
  }
  TrainerConfig config = TrainerConfig::from_json(nlohmann::json::parse(in));
  if (seed) config.seed = *seed;

  const fs::path outdir = out.empty()
                              ? fs::path("runs") / to_string(config.algorithm) /
                                    ("seed" + std::to_string(config.seed))
                              : fs::path(out);
  const RunRecord record = run_experiment(config, outdir, save_checkpoint);
  std::cout << record.summary.dump(2) << "\n";
  return record.summary.at("diverged").get<bool>() ? 2 : 0;
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b,
                const std::string& out) {
  const auto a = load_records(dir_a);
  const auto b = load_records(dir_b);
  const ComparisonTable table = compare(a, b);
  const std::string csv = table.to_csv();
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    f << csv;
  }
  std::cout << csv;
  return 0;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  const SuiteReport report = run_verification_suite(suite, seed);
  std::cout << report.to_json().dump(2) << "\n";
  return report.passed() ? 0 : 1;
}

int cmd_plot(const std::string& dir, const std::string& out) {
  const auto records = load_records(dir);
  const fs::path outdir = out.empty() ? fs::path(dir) / "plots" : fs::path(out);
  emit_plot_data(records, outdir);
  std::cout << "wrote plot data to " << outdir.string() << "\n";
  return 0;
}

int cmd_weights(int B, const std::string& program, int M_bar, int n,
                double eps_ppo) {
  const WeightProgram prog = weight_program_from_string(program);
  PolicyWeights w;
  switch (prog) {
    case WeightProgram::essopt: w = solve_essopt(B, M_bar); break;
    case WeightProgram::tvopt: w = solve_tvopt(B, M_bar); break;
    case WeightProgram::uniform:
      w = uniform_weights(std::min(2 * B - 1, M_bar));
      break;
  }
  const double ess = effective_sample_size(w, n);
  nlohmann::json out = {
      {"B", B},
      {"program", program},
      {"nu", std::vector<double>(w.nu.begin(), w.nu.end())},
      {"M", w.M},
      {"eps_geppo", epsilon_mapping(w, eps_ppo)},
      {"ess", ess},
      {"ess_factor", ess / (static_cast<double>(B) * n)},
  };
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PPO / GePPO policy optimization laboratory"};
  app.require_subcommand(1);

  // train
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string train_out;
  bool save_checkpoint = false;
  auto* train = app.add_subcommand("train", "run one training experiment");
  train->add_option("--config", config_path, "JSON config file")->required();
  train->add_option("--seed", seed, "seed override");
  train->add_option("--out", train_out, "output directory");
  train->add_flag("--checkpoint", save_checkpoint,
                  "also write a parameter checkpoint");

  // compare
  std::string dir_a, dir_b, compare_out;
  auto* cmp = app.add_subcommand("compare", "compare two result directories");
  cmp->add_option("dirA", dir_a, "baseline run directory")->required();
  cmp->add_option("dirB", dir_b, "candidate run directory")->required();
  cmp->add_option("--out", compare_out, "CSV output path");

  // verify
  std::string suite;
  std::uint64_t verify_seed = 2024;
  auto* verify = app.add_subcommand(
      "verify", "run a certification suite (bounds|identities|weights|estimators|all)");
  verify->add_option("suite", suite, "suite id")->required();
  verify->add_option("--seed", verify_seed, "fuzzing seed");

  // plot
  std::string plot_dir, plot_out;
  auto* plot = app.add_subcommand("plot", "emit CSV curves from run records");
  plot->add_option("dir", plot_dir, "run directory")->required();
  plot->add_option("--out", plot_out, "output directory");

  // weights
  int B = 2;
  std::string program = "essopt";
  int M_bar = 10;
  int n = 1024;
  double eps_ppo = 0.2;
  auto* weights = app.add_subcommand("weights", "solve for the policy weights");
  weights->add_option("--B", B, "batch size ratio N/n")->required();
  weights->add_option("--program", program, "essopt|tvopt|uniform");
  weights->add_option("--M-bar", M_bar, "maximum number of prior policies");
  weights->add_option("--n", n, "minimum batch size");
  weights->add_option("--eps-ppo", eps_ppo, "PPO clipping parameter");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return cmd_train(config_path, seed, train_out, save_checkpoint);
    }
    if (cmp->parsed()) return cmd_compare(dir_a, dir_b, compare_out);
    if (verify->parsed()) return cmd_verify(suite, verify_seed);
    if (plot->parsed()) return cmd_plot(plot_dir, plot_out);
    if (weights->parsed()) return cmd_weights(B, program, M_bar, n, eps_ppo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
