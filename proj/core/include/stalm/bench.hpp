#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stalm/llm.hpp"
#include "stalm/planner.hpp"
#include "stalm/world.hpp"

namespace stalm::bench {

/// Loads and validates a problem file. Throws std::invalid_argument with a
/// field-path diagnostic on schema violations.
world::ProblemInstance load_problem(const std::filesystem::path& path);
world::ProblemInstance load_problem_json(const std::string& text);

enum class Method { stalm, concretize_only, uct, uct_hcount };

std::string to_string(Method method);
std::optional<Method> parse_method(const std::string& token);

struct TrialOptions {
  planner::PlannerConfig planner;
  world::EnvConfig env;
  std::optional<double> time_limit;  // overrides the problem's budget
  bool single_query = false;         // query the LLM only on the first step
  llm::Backend* backend = nullptr;   // required for stalm / concretize-only
  planner::TraceSink* trace = nullptr;
};

struct TrialResult {
  std::string problem;
  std::string method;
  std::uint64_t seed = 0;
  bool success = false;
  double wall_seconds = 0.0;
  double llm_seconds = 0.0;
  int n_simulations = 0;
  int n_llm_calls = 0;
  long n_motion_plans = 0;
  planner::ConcretePlan executed;
  int steps = 0;
};

/// Receding-horizon execution of one seeded trial: plan, execute the chosen
/// action (or the whole successful plan), replan from the new state, until
/// goal, horizon, failure, or time budget.
TrialResult run_trial(const world::ProblemInstance& prob, Method method,
                      std::uint64_t seed, const TrialOptions& opt);

using BackendFactory = std::function<std::unique_ptr<llm::Backend>(
    const world::ProblemInstance& prob)>;

struct SuiteCell {
  std::string problem;
  std::string method;
  double success_rate = 0.0;
  double mean_success_wall = 0.0;  // over successful trials
  double mean_success_plan = 0.0;  // wall minus LLM latency
  int n_trials = 0;
  int n_successes = 0;
};

struct SuiteResult {
  std::vector<TrialResult> trials;   // sorted (problem, method, seed)
  std::vector<SuiteCell> cells;      // per (problem, method)
};

struct SuiteOptions {
  TrialOptions trial;
  BackendFactory backend_factory;  // used for stalm / concretize-only
  int n_seeds = 5;
  std::uint64_t seed_base = 0;
  int workers = 1;
};

SuiteResult run_suite(const std::vector<world::ProblemInstance>& problems,
                      const std::vector<Method>& methods,
                      const SuiteOptions& opt);

/// Line-delimited records: one per trial plus one summary per cell.
std::string suite_records(const SuiteResult& result);

/// Aligned text table; zero-success cells show "t/o" in the time column.
std::string suite_table(const SuiteResult& result);

std::string trial_record(const TrialResult& result);

}  // namespace stalm::bench
