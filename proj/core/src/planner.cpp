#include "stalm/planner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace stalm::planner {
namespace {

using nlohmann::json;
using world::DiscreteAction;
using world::WorldState;

std::string params_repr(const std::optional<world::ContinuousParams>& k) {
  if (!k) return "none";
  std::ostringstream out;
  out.precision(17);
  out << "path[";
  for (const auto& p : k->nav_path) {
    out << "(" << p.x << "," << p.y << "," << p.theta << ")";
  }
  out << "]";
  if (k->approach_yaw) out << " yaw=" << *k->approach_yaw;
  if (k->placement_point) {
    out << " point=(" << k->placement_point->x << ","
        << k->placement_point->y << ")";
  }
  return out.str();
}

}  // namespace

void TraceSink::emit(const std::string& json_line) {
  if (os_) (*os_) << json_line << "\n";
}

std::string to_string(PlanFailure failure) {
  switch (failure) {
    case PlanFailure::none: return "none";
    case PlanFailure::precondition_violation: return "precondition_violation";
    case PlanFailure::infeasible_continuous: return "infeasible_continuous";
    case PlanFailure::partial_goal: return "partial_goal";
  }
  return "?";
}

ConcretizeResult concretize(const std::vector<prompt::TaskPlan>& task_plans,
                            const WorldState& s0, int h0,
                            const PlannerConfig& cfg,
                            world::SearchDomain& domain, Rng& rng,
                            TraceSink* trace) {
  ConcretizeResult result;
  for (std::size_t pi = 0; pi < task_plans.size(); ++pi) {
    ConcretePlan plan;
    plan.end_state = s0;
    WorldState s = s0;
    int h = h0;
    bool infeasible = false;
    world::FailKind fail = world::FailKind::none;
    for (const auto& a : task_plans[pi].actions) {
      if (h >= cfg.horizon) break;
      const auto k = domain.sample_params(s, a, rng);
      const auto res = domain.step(s, a, k);
      plan.steps.push_back({a, k, res.reward, res.feasible, res.fail, res.next});
      plan.end_state = res.next;
      if (!res.feasible) {
        infeasible = true;
        fail = res.fail;
        break;
      }
      s = res.next;
      ++h;
      if (domain.is_goal(s)) {
        plan.achieved_goal = true;
        break;
      }
    }
    if (plan.achieved_goal) {
      plan.failure = PlanFailure::none;
    } else if (infeasible) {
      plan.failure = fail == world::FailKind::precondition
                         ? PlanFailure::precondition_violation
                         : PlanFailure::infeasible_continuous;
    } else {
      plan.failure = PlanFailure::partial_goal;
    }
    if (trace) {
      json rec;
      rec["t"] = "concretize_plan";
      rec["plan"] = pi;
      rec["steps"] = plan.steps.size();
      rec["goal"] = plan.achieved_goal;
      rec["category"] = to_string(plan.failure);
      trace->emit(rec.dump());
    }
    const bool success = plan.achieved_goal;
    result.plans.push_back(std::move(plan));
    if (success) {
      result.success = true;
      result.success_index = static_cast<int>(pi);
      break;
    }
  }
  return result;
}

int SearchTree::add_discrete(WorldState state, int depth, bool terminal) {
  DiscreteNode node;
  node.state = std::move(state);
  node.depth = depth;
  node.terminal = terminal;
  discrete_.push_back(std::move(node));
  return static_cast<int>(discrete_.size()) - 1;
}

int SearchTree::add_continuous() {
  continuous_.emplace_back();
  return static_cast<int>(continuous_.size()) - 1;
}

std::string SearchTree::canonical_dump() const {
  std::ostringstream out;
  out.precision(17);
  for (int i = 0; i < n_discrete(); ++i) {
    const auto& d = discrete_[i];
    out << "D" << i << " depth=" << d.depth << " n=" << d.n
        << " terminal=" << d.terminal << " key=" << d.state.key() << "\n";
    for (const auto& ae : d.tried) {
      out << "  A " << ae.action.to_string() << " q=" << ae.q << " n=" << ae.n
          << " cont=C" << ae.cont << "\n";
      const auto& c = continuous_[ae.cont];
      out << "  C" << ae.cont << " n=" << c.n << "\n";
      for (std::size_t k = 0; k < c.entries.size(); ++k) {
        const auto& e = c.entries[k];
        out << "    K" << k << " q=" << e.q << " n=" << e.n
            << " r=" << e.reward << " feasible=" << e.feasible << " child=D"
            << e.child << " params=" << params_repr(e.params) << "\n";
      }
    }
  }
  return out.str();
}

double rollout(const WorldState& s, int h, const PlannerConfig& cfg,
               world::SearchDomain& domain, Rng& rng) {
  if (s.failed) return 0.0;
  double total = 0.0;
  double discount = 1.0;
  WorldState cur = s;
  const int steps = std::min(cfg.rollout_depth, cfg.horizon - h);
  for (int t = 0; t < steps; ++t) {
    if (domain.is_goal(cur)) break;
    const auto legal = domain.legal_actions(cur);
    if (legal.empty()) break;
    const auto& a = legal[uniform_index(rng, legal.size())];
    const auto k = domain.sample_params(cur, a, rng);
    const auto res = domain.step(cur, a, k);
    total += discount * res.reward;
    discount *= cfg.gamma;
    if (!res.feasible) break;
    cur = res.next;
  }
  return total;
}

ValueFn make_rollout_value(const PlannerConfig& cfg,
                           world::SearchDomain& domain) {
  return [&cfg, &domain](const WorldState& s, int h, const DiscreteAction&,
                         Rng& rng) { return rollout(s, h, cfg, domain, rng); };
}

namespace {

/// One search run over a tree: warm-up insertion plus budgeted simulations.
class Search {
 public:
  Search(SearchTree& tree, const PlannerConfig& cfg,
         world::SearchDomain& domain, const ValueFn& value, Rng& rng,
         TraceSink* trace)
      : tree_(tree),
        cfg_(cfg),
        domain_(domain),
        value_(value),
        rng_(rng),
        trace_(trace) {}

  void add_plan(const ConcretePlan& plan) {
    if (!plan.steps.empty()) add_to_tree(tree_.root(), 0, plan);
  }

  void run(int budget) {
    for (int i = 0; i < budget; ++i) {
      auto& root = tree_.dnode(tree_.root());
      if (root.terminal) break;
      root.n += 1;
      if (trace_) {
        trace_->emit(json{{"t", "simulate"}, {"i", i}}.dump());
      }
      simulate(tree_.root(), root.depth);
    }
  }

 private:
  const std::vector<DiscreteAction>& legal_for(int d_idx) {
    auto& d = tree_.dnode(d_idx);
    if (!d.legal_ready) {
      d.legal = domain_.legal_actions(d.state);
      d.legal_ready = true;
    }
    return d.legal;
  }

  int find_action(const SearchTree::DiscreteNode& d, const DiscreteAction& a) {
    for (std::size_t i = 0; i < d.tried.size(); ++i) {
      if (d.tried[i].action == a) return static_cast<int>(i);
    }
    return -1;
  }

  int ensure_action(int d_idx, const DiscreteAction& a) {
    const int found = find_action(tree_.dnode(d_idx), a);
    if (found >= 0) return found;
    const int cont = tree_.add_continuous();
    auto& d = tree_.dnode(d_idx);
    d.tried.push_back({a, 0.0, 0, cont});
    return static_cast<int>(d.tried.size()) - 1;
  }

  void backup(int d_idx, int action_idx, int kappa_idx, double total) {
    auto& ae = tree_.dnode(d_idx).tried[action_idx];
    auto& e = tree_.cnode(ae.cont).entries[kappa_idx];
    e.n += 1;
    e.q += (total - e.q) / e.n;
    ae.n += 1;
    ae.q += (total - ae.q) / ae.n;
    if (trace_) {
      trace_->emit(json{{"t", "backup"},
                        {"level", "kappa"},
                        {"node", ae.cont},
                        {"entry", kappa_idx},
                        {"total", total}}
                       .dump());
      trace_->emit(json{{"t", "backup"},
                        {"level", "action"},
                        {"node", d_idx},
                        {"entry", action_idx},
                        {"total", total}}
                       .dump());
    }
  }

  /// Warm-up insertion per plan; returns the backed-up total.
  double add_to_tree(int d_idx, std::size_t step_idx, const ConcretePlan& plan) {
    const auto& step = plan.steps[step_idx];
    auto& d = tree_.dnode(d_idx);
    d.n += 1;
    const int depth = d.depth;
    const int action_idx = ensure_action(d_idx, step.action);
    const int cont_idx = tree_.dnode(d_idx).tried[action_idx].cont;
    auto& cont = tree_.cnode(cont_idx);
    cont.n += 1;

    int kappa_idx = -1;
    for (std::size_t i = 0; i < cont.entries.size(); ++i) {
      if (cont.entries[i].params == step.params) {
        kappa_idx = static_cast<int>(i);
        break;
      }
    }
    if (kappa_idx < 0) {
      const bool terminal = !step.feasible || domain_.is_goal(step.next) ||
                            depth + 1 >= cfg_.horizon;
      const int child = tree_.add_discrete(step.next, depth + 1, terminal);
      tree_.dnode(child).n += 1;
      SearchTree::KappaEntry entry;
      entry.params = step.params;
      entry.child = child;
      entry.reward = step.reward;
      entry.feasible = step.feasible;
      tree_.cnode(cont_idx).entries.push_back(std::move(entry));
      kappa_idx = static_cast<int>(tree_.cnode(cont_idx).entries.size()) - 1;
    }
    const int child = tree_.cnode(cont_idx).entries[kappa_idx].child;

    double total = 0.0;
    if (step_idx + 1 < plan.steps.size()) {
      total = step.reward + cfg_.gamma * add_to_tree(child, step_idx + 1, plan);
    } else {
      // The last step's value is the rollout estimate from its outcome state.
      total = value_(step.next, depth + 1, step.action, rng_);
    }
    backup(d_idx, action_idx, kappa_idx, total);
    return total;
  }

  double uct_score(double q, int node_n, int child_n) const {
    const double logn = std::log(std::max(node_n, 1));
    return q + cfg_.c_uct * std::sqrt(logn / (1.0 + child_n));
  }

  double simulate(int d_idx, int h) {
    // Select the discrete action by UCT over the legal set; untried actions
    // score with q = 0 and zero child visits.
    const auto& legal = legal_for(d_idx);
    if (legal.empty()) return 0.0;
    int best_action = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    {
      const auto& d = tree_.dnode(d_idx);
      for (std::size_t i = 0; i < legal.size(); ++i) {
        const int idx = find_action(d, legal[i]);
        double q = 0.0;
        int child_n = 0;
        if (idx >= 0) {
          q = d.tried[idx].q;
          child_n = tree_.cnode(d.tried[idx].cont).n;
        }
        const double score = uct_score(q, d.n, child_n);
        if (score > best_score) {
          best_score = score;
          best_action = static_cast<int>(i);
        }
      }
    }
    const DiscreteAction action = legal[best_action];
    const int action_idx = ensure_action(d_idx, action);
    const int cont_idx = tree_.dnode(d_idx).tried[action_idx].cont;

    // Progressive widening: draw a fresh parameter sample only while the
    // entry count is inside the bound.
    {
      auto& cont = tree_.cnode(cont_idx);
      const double bound =
          cfg_.k_alpha * std::pow(static_cast<double>(cont.n), cfg_.c_alpha);
      if (static_cast<double>(cont.entries.size()) <= bound) {
        if (trace_) {
          trace_->emit(json{{"t", "pw"},
                            {"node", cont_idx},
                            {"u", cont.entries.size()},
                            {"n", cont.n},
                            {"bound", bound}}
                           .dump());
        }
        const auto drawn =
            domain_.sample_params(tree_.dnode(d_idx).state, action, rng_);
        bool duplicate = false;
        for (const auto& e : cont.entries) {
          if (e.params == drawn) {
            duplicate = true;
            break;
          }
        }
        if (!duplicate) {
          SearchTree::KappaEntry entry;
          entry.params = drawn;
          cont.entries.push_back(std::move(entry));
        }
      }
    }

    // Select kappa by UCT over the tried entries.
    int kappa_idx = 0;
    {
      const auto& cont = tree_.cnode(cont_idx);
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < cont.entries.size(); ++i) {
        const auto& e = cont.entries[i];
        const int child_n = e.child >= 0 ? tree_.dnode(e.child).n : 0;
        const double score = uct_score(e.q, cont.n, child_n);
        if (score > best) {
          best = score;
          kappa_idx = static_cast<int>(i);
        }
      }
    }

    // Evaluate the transition on first visit; reuse the memoized outcome
    // afterwards (the model is deterministic).
    bool created = false;
    {
      auto& e = tree_.cnode(cont_idx).entries[kappa_idx];
      if (e.child < 0) {
        const auto res =
            domain_.step(tree_.dnode(d_idx).state, action, e.params);
        const bool terminal = !res.feasible || domain_.is_goal(res.next) ||
                              h + 1 >= cfg_.horizon;
        const int child = tree_.add_discrete(res.next, h + 1, terminal);
        auto& entry = tree_.cnode(cont_idx).entries[kappa_idx];
        entry.child = child;
        entry.reward = res.reward;
        entry.feasible = res.feasible;
        created = true;
      }
    }

    // Copy the outcome before recursing: node vectors may reallocate below.
    const int child_idx = tree_.cnode(cont_idx).entries[kappa_idx].child;
    const double r = tree_.cnode(cont_idx).entries[kappa_idx].reward;
    double total = 0.0;
    if (tree_.dnode(child_idx).terminal) {
      total = r;
    } else if (created) {
      total = r + cfg_.gamma * value_(tree_.dnode(child_idx).state, h + 1,
                                      action, rng_);
    } else {
      total = r + cfg_.gamma * simulate(child_idx, h + 1);
    }

    tree_.cnode(cont_idx).n += 1;
    tree_.dnode(child_idx).n += 1;
    backup(d_idx, action_idx, kappa_idx, total);
    return total;
  }

  SearchTree& tree_;
  const PlannerConfig& cfg_;
  world::SearchDomain& domain_;
  const ValueFn& value_;
  Rng& rng_;
  TraceSink* trace_;
};

}  // namespace

SearchTree warm_started_uct(const std::vector<ConcretePlan>& plans,
                            const WorldState& s0, int h0,
                            const PlannerConfig& cfg,
                            world::SearchDomain& domain, const ValueFn& value,
                            Rng& rng, TraceSink* trace) {
  SearchTree tree;
  const bool terminal = s0.failed || domain.is_goal(s0) || h0 >= cfg.horizon;
  tree.add_discrete(s0, h0, terminal);
  Search search(tree, cfg, domain, value, rng, trace);
  for (const auto& plan : plans) search.add_plan(plan);
  search.run(cfg.n_budget);
  return tree;
}

std::optional<std::pair<DiscreteAction, std::optional<world::ContinuousParams>>>
best_root_action(const SearchTree& tree) {
  const auto& root = tree.dnode(tree.root());
  std::optional<std::pair<DiscreteAction, std::optional<world::ContinuousParams>>>
      best;
  double best_q = -std::numeric_limits<double>::infinity();
  for (const auto& ae : root.tried) {
    const auto& cont = tree.cnode(ae.cont);
    for (const auto& e : cont.entries) {
      if (e.n < 1) continue;
      if (e.q > best_q) {
        best_q = e.q;
        best = std::make_pair(ae.action, e.params);
      }
    }
  }
  return best;
}

double hcount(const WorldState& s, const std::string& o_target,
              const world::Goal& g, motion::Env& env) {
  std::set<std::string> goal_objects;
  for (const auto& c : g.conjuncts) goal_objects.insert(c.subject);

  // M: occluders of the goal objects' picks and goal placements, closed
  // transitively over pick occluders.
  std::set<std::string> m_set;
  std::deque<std::string> frontier;
  const auto add = [&](const std::string& x) {
    if (m_set.insert(x).second &&
        env.problem().kind_of(x) == world::EntityKind::movable) {
      frontier.push_back(x);
    }
  };
  for (const auto& c : g.conjuncts) {
    if (s.poses.count(c.subject)) {
      for (const auto& x : env.pick_occluders(s, c.subject)) add(x);
    }
    for (const auto& x : env.place_occluders(s, c.subject, c.dir, c.ref)) {
      add(x);
    }
  }
  while (!frontier.empty()) {
    const std::string o = frontier.front();
    frontier.pop_front();
    if (!s.poses.count(o)) continue;
    for (const auto& x : env.pick_occluders(s, o)) add(x);
  }

  std::set<std::string> in_goal;
  for (const auto& subject : goal_objects) {
    bool all = true;
    for (const auto& c : g.conjuncts) {
      if (c.subject != subject) continue;
      if (!world::at_position(s, env.problem(), c.subject, c.dir, c.ref)) {
        all = false;
        break;
      }
    }
    if (all) in_goal.insert(subject);
  }

  const double in_goal_bonus = in_goal.count(o_target) ? 1.0 : 0.0;
  const double pending_goal_discount =
      (!in_goal.count(o_target) && goal_objects.count(o_target)) ? 1.0 : 0.0;
  return static_cast<double>(m_set.size()) -
         static_cast<double>(in_goal.size()) + in_goal_bonus -
         pending_goal_discount;
}

double hcount_value(const WorldState& s, const std::string& o_target,
                    const world::Goal& g, motion::Env& env) {
  std::set<std::string> goal_objects;
  for (const auto& c : g.conjuncts) goal_objects.insert(c.subject);
  const double value = world::kGoalReward * goal_objects.size() -
                       world::kGoalReward * hcount(s, o_target, g, env);
  return value * env.config().reward_scale;
}

ValueFn make_hcount_value(motion::Env& env) {
  return [&env](const WorldState& s, int, const DiscreteAction& leading,
                Rng&) {
    if (s.failed) return 0.0;
    return hcount_value(s, leading.target, env.problem().goal, env);
  };
}

Decision stalm(const WorldState& s, int h, const PlannerConfig& cfg,
               motion::Env& env, llm::Backend* backend, TraceSink* trace) {
  Decision decision;
  Rng rng(cfg.seed);
  std::vector<prompt::TaskPlan> task_plans;
  if (backend) {
    const auto literals = env.literals(s);
    llm::LLMRequest req;
    req.prompt = prompt::create_prompt(s, env.problem().goal, env.problem(),
                                       literals);
    req.n = cfg.n_batch;
    req.temperature = cfg.temperature;
    req.model = cfg.model;
    req.timeout_seconds = cfg.llm_timeout;
    decision.stats.n_llm_calls = 1;
    const auto outcome = backend->query(req);
    if (outcome.ok()) {
      decision.stats.n_responses =
          static_cast<int>(outcome.batch->responses.size());
      decision.stats.llm_warnings = outcome.batch->warnings;
      for (const auto& text : outcome.batch->responses) {
        const auto parsed = prompt::parse_response(text, env.problem());
        if (parsed.ok()) {
          task_plans.push_back(parsed.response->plan);
        } else {
          ++decision.stats.n_parse_errors;
          if (trace) {
            trace->emit(json{{"t", "parse_error"},
                             {"kind", prompt::to_string(parsed.error->kind)},
                             {"message", parsed.error->message}}
                            .dump());
          }
        }
      }
    } else {
      decision.stats.llm_error = outcome.error->kind;
      if (trace) {
        trace->emit(json{{"t", "llm_error"},
                         {"kind", llm::to_string(outcome.error->kind)},
                         {"message", outcome.error->message}}
                        .dump());
      }
    }
  }
  decision.stats.n_plans = static_cast<int>(task_plans.size());

  const auto conc = concretize(task_plans, s, h, cfg, env, rng, trace);
  if (conc.success) {
    decision.kind = Decision::Kind::full_plan;
    decision.plan = conc.plans[conc.success_index];
    decision.stats.concretize_success = true;
    return decision;
  }

  const auto value = make_rollout_value(cfg, env);
  const auto tree =
      warm_started_uct(conc.plans, s, h, cfg, env, value, rng, trace);
  decision.stats.n_simulations = cfg.n_budget;
  const auto best = best_root_action(tree);
  if (!best) {
    decision.kind = Decision::Kind::none;
    return decision;
  }
  decision.kind = Decision::Kind::single_action;
  decision.action = best->first;
  decision.params = best->second;
  return decision;
}

Decision uct_baseline(const WorldState& s, int h, const PlannerConfig& cfg,
                      world::SearchDomain& domain, const ValueFn& value,
                      TraceSink* trace) {
  Decision decision;
  Rng rng(cfg.seed);
  const auto tree = warm_started_uct({}, s, h, cfg, domain, value, rng, trace);
  decision.stats.n_simulations = cfg.n_budget;
  const auto best = best_root_action(tree);
  if (!best) {
    decision.kind = Decision::Kind::none;
    return decision;
  }
  decision.kind = Decision::Kind::single_action;
  decision.action = best->first;
  decision.params = best->second;
  return decision;
}

}  // namespace stalm::planner
