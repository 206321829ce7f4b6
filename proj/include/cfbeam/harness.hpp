#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cfbeam/sim.hpp"

namespace cfbeam {

struct RunOptions {
  std::string command;  // gen-dataset, train-predictor, train, evaluate, sweep, selftest
  std::string scenario_path;
  std::vector<std::string> schemes{"wbr-d3qn"};
  std::uint64_t seed = 1;
  std::optional<int> episodes;  // train.episodes for train, eval.episodes otherwise
  std::string out = "run";
  std::vector<std::string> overrides;
  int workers = 1;
};

enum ExitCode { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3, kExitSelftest = 4 };

// Per-user densities of the average queue length over episodes. Bin i covers
// [i w, (i+1) w) with w = max / bins; values at or above max land in the last bin.
struct Histogram {
  double max = 0.0;
  int bins = 0;
  std::vector<std::vector<double>> density;  // [user][bin], each row sums to 1
};

Histogram queue_histogram(const std::vector<std::vector<UserMetrics>>& episodes, int bins, double max);

// Fixed headers; numbers are printed with 12 significant digits.
void write_histogram_csv(std::ostream& os, const Histogram& h);
void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve);
void write_eval_csv(std::ostream& os, const EvalResult& result);

struct ComparisonRow {
  std::string scheme;
  int training_overhead_symbols = 0;
  double system_satisfaction = 0.0;
};
void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows);

Json summary_json(const World& world, Scheme scheme, const EvalResult& result);

// Network parameters of a scheme as named tensors.
void save_agents(std::ostream& os, const AgentSet& agents);
// Loads into networks already sized by make_agents.
void load_agents(std::istream& is, AgentSet& agents);

// Identifies the dataset a predictor was trained on: scenario channel and
// predictor settings plus the seed.
std::uint64_t predictor_fingerprint(const World& world);
void save_predictor(std::ostream& os, const Predictor& predictor);
Predictor load_predictor(std::istream& is, const World& world);

// Executes one command; errors surface as exceptions. Returns the exit code
// (kExitSelftest when the self-test fails).
int run(const RunOptions& options, std::ostream& log);

}  // namespace cfbeam
