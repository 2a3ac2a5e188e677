#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stalm/llm.hpp"
#include "stalm/motion.hpp"
#include "stalm/prompt.hpp"
#include "stalm/world.hpp"

namespace stalm::planner {

struct PlannerConfig {
  int n_batch = 5;
  int n_budget = 30;
  int horizon = 20;
  double gamma = 0.99;
  double c_uct = 50.0;
  double k_alpha = 1.5;
  double c_alpha = 0.15;
  int rollout_depth = 5;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  std::string model = "gpt-4-turbo-2024-04-09";
  double llm_timeout = 60.0;
};

/// Line-delimited structured trace. Records cover simulate entries, every
/// backup, progressive-widening draws, and abandoned-plan categories.
class TraceSink {
 public:
  explicit TraceSink(std::ostream* os) : os_(os) {}
  void emit(const std::string& json_line);

 private:
  std::ostream* os_;
};

struct ConcreteStep {
  world::DiscreteAction action;
  std::optional<world::ContinuousParams> params;
  double reward = 0.0;
  bool feasible = false;
  world::FailKind fail = world::FailKind::none;
  world::WorldState next;
};

/// Failure taxonomy tag for an abandoned task plan (logging only).
enum class PlanFailure {
  none,
  precondition_violation,
  infeasible_continuous,
  partial_goal,
};

std::string to_string(PlanFailure failure);

struct ConcretePlan {
  std::vector<ConcreteStep> steps;
  world::WorldState end_state;
  bool achieved_goal = false;
  PlanFailure failure = PlanFailure::none;
};

struct ConcretizeResult {
  bool success = false;
  int success_index = -1;
  std::vector<ConcretePlan> plans;
};

/// Samples one set of continuous parameters per discrete action of each task
/// plan, applying the transition as it goes. A plan stops at infeasibility or
/// the horizon; everything stops once a state satisfies the goal. All
/// attempted (possibly partial) plans are returned for warm-up.
ConcretizeResult concretize(const std::vector<prompt::TaskPlan>& task_plans,
                            const world::WorldState& s0, int h0,
                            const PlannerConfig& cfg,
                            world::SearchDomain& domain, Rng& rng,
                            TraceSink* trace);

/// Search tree over alternating discrete nodes (choose a discrete action) and
/// continuous nodes (choose sampled parameters). Q values live on the edges;
/// node visit counts feed the UCT log terms.
class SearchTree {
 public:
  struct KappaEntry {
    std::optional<world::ContinuousParams> params;  // nullopt: failed draw
    double q = 0.0;
    int n = 0;
    int child = -1;
    double reward = 0.0;
    bool feasible = false;
  };

  struct ContinuousNode {
    int n = 0;
    std::vector<KappaEntry> entries;
  };

  struct ActionEntry {
    world::DiscreteAction action;
    double q = 0.0;
    int n = 0;
    int cont = -1;
  };

  struct DiscreteNode {
    world::WorldState state;
    int depth = 0;
    int n = 0;
    bool terminal = false;
    std::vector<ActionEntry> tried;
    std::vector<world::DiscreteAction> legal;  // filled lazily
    bool legal_ready = false;
  };

  int add_discrete(world::WorldState state, int depth, bool terminal);
  int add_continuous();

  DiscreteNode& dnode(int i) { return discrete_[i]; }
  const DiscreteNode& dnode(int i) const { return discrete_[i]; }
  ContinuousNode& cnode(int i) { return continuous_[i]; }
  const ContinuousNode& cnode(int i) const { return continuous_[i]; }
  int n_discrete() const { return static_cast<int>(discrete_.size()); }
  int n_continuous() const { return static_cast<int>(continuous_.size()); }
  int root() const { return 0; }

  /// Deterministic full serialization of structure and statistics.
  std::string canonical_dump() const;

 private:
  std::vector<DiscreteNode> discrete_;
  std::vector<ContinuousNode> continuous_;
};

/// Leaf evaluator: state, depth, and the action that led to the leaf.
using ValueFn = std::function<double(const world::WorldState& s, int h,
                                     const world::DiscreteAction& leading,
                                     Rng& rng)>;

/// Random-policy episode value: uniformly random legal actions with one
/// parameter draw each, depth-capped and gamma-discounted. Absorbed input
/// states are worth 0.
double rollout(const world::WorldState& s, int h, const PlannerConfig& cfg,
               world::SearchDomain& domain, Rng& rng);

ValueFn make_rollout_value(const PlannerConfig& cfg,
                           world::SearchDomain& domain);

/// Builds the tree from concretized plans, then runs n_budget simulations.
SearchTree warm_started_uct(const std::vector<ConcretePlan>& plans,
                            const world::WorldState& s0, int h0,
                            const PlannerConfig& cfg,
                            world::SearchDomain& domain, const ValueFn& value,
                            Rng& rng, TraceSink* trace);

/// Best explored root action by kappa-level Q, ties to the lowest insertion
/// index; nullopt when nothing was explored.
std::optional<std::pair<world::DiscreteAction,
                        std::optional<world::ContinuousParams>>>
best_root_action(const SearchTree& tree);

/// Occlusion-counting cost-to-go: |M| - |O_InGoal| plus indicator terms for
/// the action target, where M is the transitive occluder closure of the goal
/// objects' picks and goal placements.
double hcount(const world::WorldState& s, const std::string& o_target,
              const world::Goal& g, motion::Env& env);

/// Value-function form of hcount.
double hcount_value(const world::WorldState& s, const std::string& o_target,
                    const world::Goal& g, motion::Env& env);

ValueFn make_hcount_value(motion::Env& env);

struct SearchStats {
  int n_simulations = 0;
  int n_llm_calls = 0;
  int n_responses = 0;
  int n_parse_errors = 0;
  int n_plans = 0;
  bool concretize_success = false;
  int llm_warnings = 0;
  std::optional<llm::ErrorKind> llm_error;
};

struct Decision {
  enum class Kind { full_plan, single_action, none };
  Kind kind = Kind::none;
  ConcretePlan plan;
  world::DiscreteAction action;
  std::optional<world::ContinuousParams> params;
  SearchStats stats;
};

/// One STaLM planning invocation: query the backend for a batch of task
/// plans, concretize them, and either return a successful concrete plan or
/// fall back to warm-started search and return the root argmax action. A null
/// backend (or an all-failed query) degrades to cold UCT.
Decision stalm(const world::WorldState& s, int h, const PlannerConfig& cfg,
               motion::Env& env, llm::Backend* backend, TraceSink* trace);

/// Plain UCT baseline step: warm_started_uct with no plans.
Decision uct_baseline(const world::WorldState& s, int h,
                      const PlannerConfig& cfg, world::SearchDomain& domain,
                      const ValueFn& value, TraceSink* trace);

}  // namespace stalm::planner
