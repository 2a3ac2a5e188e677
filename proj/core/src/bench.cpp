#include "stalm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "stalm/motion.hpp"

namespace stalm::bench {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument(path + ": " + what);
}

const json& field(const json& j, const std::string& path, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) fail(path + "." + name, "missing");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

geom::Vec2 vec2(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) fail(path, "expected [x, y]");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
}

geom::Pose2 pose(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) fail(path, "expected [x, y, theta]");
  return geom::Pose2(number(j[0], path + "[0]"), number(j[1], path + "[1]"),
                     number(j[2], path + "[2]"));
}

geom::ConvexPolygon polygon(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a vertex list");
  std::vector<geom::Vec2> pts;
  for (std::size_t i = 0; i < j.size(); ++i) {
    pts.push_back(vec2(j[i], path + "[" + std::to_string(i) + "]"));
  }
  try {
    return geom::ConvexPolygon::from_points(std::move(pts));
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
}

std::string ident(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

world::ProblemInstance load_problem_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail("$", std::string("invalid JSON: ") + e.what());
  }
  world::ProblemInstance prob;
  prob.name = ident(field(j, "$", "name"), "$.name");
  prob.horizon = static_cast<int>(number(field(j, "$", "horizon"), "$.horizon"));
  prob.time_budget =
      number(field(j, "$", "time_budget"), "$.time_budget");

  const auto& ws = field(j, "$", "workspace");
  prob.workspace_min = vec2(field(ws, "$.workspace", "min"), "$.workspace.min");
  prob.workspace_max = vec2(field(ws, "$.workspace", "max"), "$.workspace.max");

  const auto& robot = field(j, "$", "robot");
  prob.robot_footprint =
      polygon(field(robot, "$.robot", "footprint"), "$.robot.footprint");
  prob.s0.base = pose(field(robot, "$.robot", "base"), "$.robot.base");

  if (j.contains("static_walls")) {
    const auto& walls = j["static_walls"];
    for (std::size_t i = 0; i < walls.size(); ++i) {
      prob.static_walls.push_back(
          polygon(walls[i], "$.static_walls[" + std::to_string(i) + "]"));
    }
  }

  for (std::size_t i = 0; i < field(j, "$", "regions").size(); ++i) {
    const auto& rj = j["regions"][i];
    const std::string path = "$.regions[" + std::to_string(i) + "]";
    world::Region r;
    r.name = ident(field(rj, path, "name"), path + ".name");
    r.extent = polygon(field(rj, path, "extent"), path + ".extent");
    r.base_pose = pose(field(rj, path, "base_pose"), path + ".base_pose");
    r.local_frame = pose(field(rj, path, "local_frame"), path + ".local_frame");
    if (rj.contains("walls")) {
      for (std::size_t w = 0; w < rj["walls"].size(); ++w) {
        r.walls.push_back(polygon(
            rj["walls"][w], path + ".walls[" + std::to_string(w) + "]"));
      }
    }
    prob.regions.push_back(std::move(r));
  }

  if (j.contains("doors")) {
    for (std::size_t i = 0; i < j["doors"].size(); ++i) {
      const auto& dj = j["doors"][i];
      const std::string path = "$.doors[" + std::to_string(i) + "]";
      world::Door d;
      d.name = ident(field(dj, path, "name"), path + ".name");
      d.closed_polygon = polygon(field(dj, path, "polygon"), path + ".polygon");
      d.base_pose = pose(field(dj, path, "base_pose"), path + ".base_pose");
      d.handle = vec2(field(dj, path, "handle"), path + ".handle");
      bool open = false;
      if (dj.contains("open")) open = dj["open"].get<bool>();
      prob.s0.door_open[d.name] = open;
      prob.doors.push_back(std::move(d));
    }
  }

  for (std::size_t i = 0; i < field(j, "$", "movables").size(); ++i) {
    const auto& mj = j["movables"][i];
    const std::string path = "$.movables[" + std::to_string(i) + "]";
    world::Movable m;
    m.name = ident(field(mj, path, "name"), path + ".name");
    m.footprint = polygon(field(mj, path, "footprint"), path + ".footprint");
    m.grasp = vec2(field(mj, path, "grasp"), path + ".grasp");
    if (mj.contains("held") && mj["held"].get<bool>()) {
      if (prob.s0.holding) fail(path + ".held", "two movables held");
      prob.s0.holding = m.name;
      if (mj.contains("held_theta")) {
        prob.s0.held_theta = number(mj["held_theta"], path + ".held_theta");
      }
    } else {
      prob.s0.poses.emplace(m.name,
                            pose(field(mj, path, "pose"), path + ".pose"));
    }
    prob.movables.push_back(std::move(m));
  }

  const auto& goal = field(j, "$", "goal");
  if (!goal.is_array()) fail("$.goal", "expected a conjunct list");
  for (std::size_t i = 0; i < goal.size(); ++i) {
    const std::string path = "$.goal[" + std::to_string(i) + "]";
    const auto& cj = goal[i];
    if (!cj.is_array() || cj.size() != 3) {
      fail(path, "expected [subject, dir, ref]");
    }
    world::GoalConjunct c;
    c.subject = ident(cj[0], path + "[0]");
    const auto dir = world::parse_direction(ident(cj[1], path + "[1]"));
    if (!dir) fail(path + "[1]", "unknown direction");
    c.dir = *dir;
    c.ref = ident(cj[2], path + "[2]");
    prob.goal.conjuncts.push_back(std::move(c));
  }

  prob.validate();
  return prob;
}

world::ProblemInstance load_problem(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::invalid_argument("cannot open problem file: " + path.string());
  }
  std::ostringstream body;
  body << in.rdbuf();
  try {
    return load_problem_json(body.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string to_string(Method method) {
  switch (method) {
    case Method::stalm: return "stalm";
    case Method::concretize_only: return "concretize-only";
    case Method::uct: return "uct";
    case Method::uct_hcount: return "uct-hcount";
  }
  return "?";
}

std::optional<Method> parse_method(const std::string& token) {
  for (Method m : {Method::stalm, Method::concretize_only, Method::uct,
                   Method::uct_hcount}) {
    if (to_string(m) == token) return m;
  }
  return std::nullopt;
}

TrialResult run_trial(const world::ProblemInstance& prob, Method method,
                      std::uint64_t seed, const TrialOptions& opt) {
  TrialResult out;
  out.problem = prob.name;
  out.method = to_string(method);
  out.seed = seed;

  motion::Env env(prob, opt.env, derive_seed(seed, 0));
  llm::TimingBackend timing(opt.backend);

  planner::PlannerConfig cfg = opt.planner;
  cfg.horizon = prob.horizon;
  const double budget = opt.time_limit.value_or(prob.time_budget);

  const auto start = std::chrono::steady_clock::now();
  world::WorldState s = prob.s0;
  out.executed.end_state = s;
  int h = 0;
  bool first_step = true;

  const auto execute = [&](const world::DiscreteAction& a,
                           const std::optional<world::ContinuousParams>& k) {
    const auto res = env.step(s, a, k);
    out.executed.steps.push_back(
        {a, k, res.reward, res.feasible, res.fail, res.next});
    out.executed.end_state = res.next;
    s = res.next;
    ++h;
    ++out.steps;
    return res.feasible;
  };

  while (true) {
    if (env.is_goal(s)) break;
    if (s.failed || h >= prob.horizon) break;
    if (elapsed_seconds(start) >= budget) break;

    planner::PlannerConfig step_cfg = cfg;
    step_cfg.seed = derive_seed(seed, 1 + static_cast<std::uint64_t>(h));

    planner::Decision decision;
    switch (method) {
      case Method::uct: {
        const auto value = planner::make_rollout_value(step_cfg, env);
        decision =
            planner::uct_baseline(s, h, step_cfg, env, value, opt.trace);
        break;
      }
      case Method::uct_hcount: {
        const auto value = planner::make_hcount_value(env);
        decision =
            planner::uct_baseline(s, h, step_cfg, env, value, opt.trace);
        break;
      }
      case Method::stalm:
      case Method::concretize_only: {
        llm::Backend* backend = nullptr;
        if (opt.backend && (!opt.single_query || first_step)) {
          backend = &timing;
        }
        decision = planner::stalm(s, h, step_cfg, env, backend, opt.trace);
        break;
      }
    }
    first_step = false;
    out.n_simulations += decision.stats.n_simulations;
    out.n_llm_calls += decision.stats.n_llm_calls;

    if (decision.kind == planner::Decision::Kind::full_plan) {
      for (const auto& step : decision.plan.steps) {
        if (!execute(step.action, step.params)) break;
      }
      continue;
    }
    if (method == Method::concretize_only) break;
    if (decision.kind == planner::Decision::Kind::none) break;
    execute(decision.action, decision.params);
  }

  out.success = !s.failed && env.is_goal(s);
  out.executed.achieved_goal = out.success;
  out.wall_seconds = elapsed_seconds(start);
  out.llm_seconds = timing.total_seconds();
  out.n_motion_plans = env.n_motion_plans();
  return out;
}

SuiteResult run_suite(const std::vector<world::ProblemInstance>& problems,
                      const std::vector<Method>& methods,
                      const SuiteOptions& opt) {
  struct Job {
    const world::ProblemInstance* prob;
    Method method;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& prob : problems) {
    for (Method method : methods) {
      for (int i = 0; i < opt.n_seeds; ++i) {
        jobs.push_back({&prob, method, opt.seed_base + i});
      }
    }
  }

  std::vector<TrialResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  const int workers = std::max(1, opt.workers);
  const auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      TrialOptions trial = opt.trial;
      std::unique_ptr<llm::Backend> backend;
      const bool needs_backend = job.method == Method::stalm ||
                                 job.method == Method::concretize_only;
      if (needs_backend && opt.backend_factory) {
        backend = opt.backend_factory(*job.prob);
        trial.backend = backend.get();
      }
      results[i] = run_trial(*job.prob, job.method, job.seed, trial);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SuiteResult out;
  out.trials = std::move(results);
  std::sort(out.trials.begin(), out.trials.end(),
            [](const TrialResult& a, const TrialResult& b) {
              return std::tie(a.problem, a.method, a.seed) <
                     std::tie(b.problem, b.method, b.seed);
            });

  for (const auto& prob : problems) {
    for (Method method : methods) {
      SuiteCell cell;
      cell.problem = prob.name;
      cell.method = to_string(method);
      double wall = 0.0;
      double plan = 0.0;
      for (const auto& t : out.trials) {
        if (t.problem != cell.problem || t.method != cell.method) continue;
        ++cell.n_trials;
        if (t.success) {
          ++cell.n_successes;
          wall += t.wall_seconds;
          plan += t.wall_seconds - t.llm_seconds;
        }
      }
      if (cell.n_trials > 0) {
        cell.success_rate =
            static_cast<double>(cell.n_successes) / cell.n_trials;
      }
      if (cell.n_successes > 0) {
        cell.mean_success_wall = wall / cell.n_successes;
        cell.mean_success_plan = plan / cell.n_successes;
      }
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

std::string trial_record(const TrialResult& result) {
  json rec;
  rec["type"] = "trial";
  rec["problem"] = result.problem;
  rec["method"] = result.method;
  rec["seed"] = result.seed;
  rec["success"] = result.success;
  rec["wall_seconds"] = result.wall_seconds;
  rec["llm_seconds"] = result.llm_seconds;
  rec["plan_seconds"] = result.wall_seconds - result.llm_seconds;
  rec["n_simulations"] = result.n_simulations;
  rec["n_llm_calls"] = result.n_llm_calls;
  rec["n_motion_plans"] = result.n_motion_plans;
  rec["steps"] = result.steps;
  rec["final_state_key"] = result.executed.end_state.key();
  json plan = json::array();
  for (const auto& step : result.executed.steps) {
    plan.push_back(step.action.to_string());
  }
  rec["executed"] = plan;
  return rec.dump();
}

std::string suite_records(const SuiteResult& result) {
  std::ostringstream out;
  for (const auto& t : result.trials) out << trial_record(t) << "\n";
  for (const auto& c : result.cells) {
    json rec;
    rec["type"] = "summary";
    rec["problem"] = c.problem;
    rec["method"] = c.method;
    rec["n_trials"] = c.n_trials;
    rec["n_successes"] = c.n_successes;
    rec["success_rate"] = c.success_rate;
    if (c.n_successes > 0) {
      rec["mean_success_wall"] = c.mean_success_wall;
      rec["mean_success_plan"] = c.mean_success_plan;
    } else {
      rec["mean_success_wall"] = nullptr;
      rec["mean_success_plan"] = nullptr;
    }
    out << rec.dump() << "\n";
  }
  return out.str();
}

std::string suite_table(const SuiteResult& result) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "problem" << std::setw(18) << "method"
      << std::setw(10) << "success" << std::setw(12) << "time_s"
      << std::setw(12) << "plan_s" << "\n";
  for (const auto& c : result.cells) {
    out << std::left << std::setw(16) << c.problem << std::setw(18) << c.method;
    std::ostringstream rate;
    rate << std::fixed << std::setprecision(2) << c.success_rate;
    out << std::setw(10) << rate.str();
    if (c.n_successes == 0) {
      out << std::setw(12) << "t/o" << std::setw(12) << "t/o";
    } else {
      std::ostringstream wall;
      wall << std::fixed << std::setprecision(2) << c.mean_success_wall;
      std::ostringstream plan;
      plan << std::fixed << std::setprecision(2) << c.mean_success_plan;
      out << std::setw(12) << wall.str() << std::setw(12) << plan.str();
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace stalm::bench
