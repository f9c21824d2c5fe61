// fedcsa: experiment driver for the simulations, the Parkinson's data and
// the estimator self-checks.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "fedcsa/data.hpp"
#include "fedcsa/experiment.hpp"
#include "fedcsa/selfcheck.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string out = "results";
  int seeds = 100;
  std::uint64_t master_seed = 2023;
  int threads = 1;
  bool timing = false;
  int theta_points = 21;
  std::string bandwidth_reference = "source-to-centers";
  double clip_ceiling = 50.0;
  std::vector<double> split{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double reference_fraction = 0.5;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--out", a.out, "Output directory")->capture_default_str();
  cmd->add_option("--seeds", a.seeds, "Seeds per cell")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--master-seed", a.master_seed, "Master seed")->capture_default_str();
  cmd->add_option("--threads", a.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--timing", a.timing, "Record wall_ms (makes runs.csv nondeterministic)");
  cmd->add_option("--theta-points", a.theta_points, "Points in the [0,1] hyperparameter grid")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--bandwidth-reference", a.bandwidth_reference, "uLSIF bandwidth scale")
      ->check(CLI::IsMember({"source-to-centers", "pooled"}))
      ->capture_default_str();
  cmd->add_option("--clip-ceiling", a.clip_ceiling, "Ratio cap (0 disables)")->capture_default_str();
  cmd->add_option("--split", a.split, "Source split fractions de,tr,val")->expected(3)->delimiter(',');
  cmd->add_option("--reference-fraction", a.reference_fraction, "Reference train share of the target");
}

fedcsa::ExperimentConfig make_config(const CommonArgs& a) {
  fedcsa::ExperimentConfig c;
  c.seeds = a.seeds;
  c.master_seed = a.master_seed;
  c.threads = a.threads == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency())) : a.threads;
  c.timing = a.timing;
  c.settings.theta_grid = fedcsa::uniform_grid(a.theta_points);
  auto& node = c.settings.federated.node;
  node.ulsif.bandwidth_reference = a.bandwidth_reference == "pooled" ? fedcsa::BandwidthReference::PooledPairs
                                                                     : fedcsa::BandwidthReference::SourceToCenters;
  if (a.clip_ceiling > 0.0) {
    node.ulsif.clip_ceiling = a.clip_ceiling;
  } else {
    node.ulsif.clip_ceiling.reset();
  }
  node.fractions = {a.split.at(0), a.split.at(1), a.split.at(2)};
  c.settings.reference.train_fraction = a.reference_fraction;
  return c;
}

void write_outputs(const fs::path& out, const std::vector<fedcsa::RunRecord>& records,
                   const std::vector<fedcsa::SummaryRow>& summary) {
  fs::create_directories(out);
  fedcsa::write_file(out / "runs.csv", fedcsa::runs_csv(records));
  fedcsa::write_file(out / "summary.csv", fedcsa::summary_csv(summary));
}

void print_summary(const std::vector<fedcsa::SummaryRow>& summary) {
  for (const auto& r : summary) {
    std::printf("%-28s %-10s mean %.4f  se %.4f  worst %.4f\n", r.scenario.c_str(), r.method.c_str(), r.mean,
                r.stderr_, r.worst);
  }
}

int cmd_simulate(const std::string& which, const CommonArgs& a, const std::vector<double>& shifts,
                 const std::vector<std::string>& cells_arg, std::int64_t test_rows) {
  fedcsa::ExperimentConfig config = make_config(a);
  config.test_rows = test_rows;
  std::vector<fedcsa::SimulationCell> cells;
  if (which == "case1") {
    std::vector<fedcsa::Case1Cell> grid;
    if (cells_arg.empty()) {
      grid = fedcsa::case1_table_cells();
    } else {
      for (const auto& spec : cells_arg) {
        fedcsa::Case1Cell g;
        char sep1 = 0, sep2 = 0;
        std::istringstream in(spec);
        if (!(in >> g.n_target >> sep1 >> g.n_1 >> sep2 >> g.n_2) || sep1 != ':' || sep2 != ':' || !in.eof()) {
          throw fedcsa::InvalidArgument("case1 cell must look like nT:n1:n2, got '" + spec + "'");
        }
        grid.push_back(g);
      }
    }
    cells = fedcsa::case1_cells(grid, config.test_rows);
  } else {
    cells = fedcsa::case2_cells(shifts, config.test_rows);
  }
  const auto records = fedcsa::run_simulation(cells, config);
  const auto summary = fedcsa::summarize(records);
  const fs::path out(a.out);
  write_outputs(out, records, summary);
  if (which == "case2") {
    fedcsa::write_file(out / "case2_means.svg", fedcsa::case2_means_svg(summary, shifts, config.methods));
    fedcsa::write_file(out / "case2_ratio.svg", fedcsa::case2_ratio_svg(summary, shifts));
  }
  print_summary(summary);
  std::cout << "wrote " << records.size() << " runs to " << out.string() << "\n";
  return 0;
}

int cmd_real(const std::string& data, const CommonArgs& a, int target_subject, double train_fraction,
             const std::vector<std::string>& learners) {
  fedcsa::ExperimentConfig config = make_config(a);
  fedcsa::RealDataConfig real;
  real.target_subject = target_subject;
  real.train_fraction = train_fraction;
  real.learners.clear();
  for (const auto& l : learners) real.learners.push_back(fedcsa::parse_learner(l));
  const auto subjects = fedcsa::load_parkinsons(data, target_subject);
  const auto records = fedcsa::run_real(subjects, real, config);
  const auto summary = fedcsa::summarize(records);
  write_outputs(a.out, records, summary);
  print_summary(summary);
  std::cout << "wrote " << records.size() << " runs to " << a.out << "\n";
  return 0;
}

int cmd_selfcheck(bool fast, const std::string& out, std::uint64_t seed, bool flip_eta) {
  fedcsa::SelfcheckOptions o = fast ? fedcsa::SelfcheckOptions::fast() : fedcsa::SelfcheckOptions{};
  o.seed = seed;
  o.flip_eta = flip_eta;
  std::string report;
  bool ok = true;
  for (const auto& r : fedcsa::run_selfcheck(o)) {
    report += std::string(r.passed ? "PASS " : "FAIL ") + r.name + ": " + r.detail + "\n";
    ok = ok && r.passed;
  }
  std::cout << report;
  if (!out.empty()) {
    fs::create_directories(out);
    fedcsa::write_file(fs::path(out) / "selfcheck.txt", report);
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated covariate-shift adaptation experiments"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file with option defaults");

  CommonArgs sim_args;
  std::string which;
  std::vector<double> shifts = fedcsa::case2_default_shifts();
  std::vector<std::string> cells;
  std::int64_t test_rows = fedcsa::kDefaultTestRows;
  auto* simulate = app.add_subcommand("simulate", "Run the Case 1 or Case 2 simulation");
  simulate->add_option("case", which, "case1 or case2")->required()->check(CLI::IsMember({"case1", "case2"}));
  add_common(simulate, sim_args);
  simulate->add_option("--shifts", shifts, "Case 2 shift values c")->delimiter(',');
  simulate->add_option("--cells", cells, "Case 1 cells as nT:n1:n2 (default: full table)");
  simulate->add_option("--test-rows", test_rows, "Fresh target rows for MAE")->check(CLI::PositiveNumber);

  CommonArgs real_args;
  std::string data;
  int target_subject = 1;
  double train_fraction = 0.7;
  std::vector<std::string> learners{"ridge", "flattened_wls"};
  auto* real = app.add_subcommand("real", "Run the Parkinson's telemonitoring experiment");
  real->add_option("--data", data, "UCI parkinsons_updrs.data CSV")->required();
  add_common(real, real_args);
  real->add_option("--target-subject", target_subject, "Subject used as the target")->capture_default_str();
  real->add_option("--train-fraction", train_fraction, "Target train share")->capture_default_str();
  real->add_option("--learners", learners, "ridge and/or flattened_wls")
      ->check(CLI::IsMember({"ridge", "flattened_wls"}))
      ->delimiter(',');

  bool fast = false;
  bool flip_eta = false;
  std::string selfcheck_out;
  std::uint64_t selfcheck_seed = 7;
  auto* selfcheck = app.add_subcommand("selfcheck", "Monte-Carlo checks of the risk estimators");
  selfcheck->add_flag("--fast", fast, "Reduced replication counts");
  selfcheck->add_option("--out", selfcheck_out, "Directory for selfcheck.txt");
  selfcheck->add_option("--master-seed", selfcheck_seed, "Seed")->capture_default_str();
  selfcheck->add_flag("--inject-eta-sign-flip", flip_eta, "Test hook: negate the control coefficient")
      ->group("");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return cmd_simulate(which, sim_args, shifts, cells, test_rows);
    if (*real) return cmd_real(data, real_args, target_subject, train_fraction, learners);
    if (*selfcheck) return cmd_selfcheck(fast, selfcheck_out, selfcheck_seed, flip_eta);
  } catch (const std::exception& e) {
    std::cerr << "fedcsa: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
