#include "stalm/motion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace stalm::motion {
namespace {

using world::Direction;
using world::DiscreteAction;
using world::Op;
using world::ProblemInstance;
using world::WorldState;

std::array<double, 3> pose_key(const geom::Pose2& p) {
  return {p.x, p.y, p.theta};
}

std::array<double, 6> pose_pair_key(const geom::Pose2& a,
                                    const geom::Pose2& b) {
  return {a.x, a.y, a.theta, b.x, b.y, b.theta};
}

geom::Vec2 direction_axis(Direction dir) {
  switch (dir) {
    case Direction::left_of: return {-1.0, 0.0};
    case Direction::right_of: return {1.0, 0.0};
    case Direction::behind_of: return {0.0, 1.0};
    case Direction::front_of: return {0.0, -1.0};
    case Direction::on: break;
  }
  return {0.0, 0.0};
}

/// Movables and closed doors intersecting any of the nominal sweep volumes.
std::set<std::string> sweep_occluders(const WorldState& s,
                                      const ProblemInstance& prob,
                                      const NominalPath& np,
                                      const std::string& exclude) {
  std::set<std::string> occ;
  for (const auto& [name, pose] : s.poses) {
    if (name == exclude) continue;
    const geom::ConvexPolygon poly =
        geom::transform(prob.find_movable(name)->footprint, pose);
    for (const auto& vol : np.sweeps) {
      if (geom::intersects(poly, vol)) {
        occ.insert(name);
        break;
      }
    }
  }
  for (const auto& d : prob.doors) {
    if (s.door_open.at(d.name)) continue;
    for (const auto& vol : np.sweeps) {
      if (geom::intersects(d.closed_polygon, vol)) {
        occ.insert(d.name);
        break;
      }
    }
  }
  return occ;
}

void add_corridor_movables(const WorldState& s, const ProblemInstance& prob,
                           const geom::ConvexPolygon& corridor,
                           const std::string& exclude,
                           std::set<std::string>* occ) {
  for (const auto& [name, pose] : s.poses) {
    if (name == exclude) continue;
    const geom::ConvexPolygon poly =
        geom::transform(prob.find_movable(name)->footprint, pose);
    if (geom::intersects(poly, corridor)) occ->insert(name);
  }
}

std::set<std::string> pick_occluders_core(const WorldState& s,
                                          const std::string& o,
                                          const ProblemInstance& prob,
                                          const world::EnvConfig& cfg,
                                          const PathProvider& paths) {
  const auto region = world::region_of(s, prob, o);
  if (!region) return {kWorldSentinel};
  const world::Region* r = prob.find_region(*region);
  const auto np = paths(s.base, r->base_pose);
  if (!np) return {kWorldSentinel};
  std::set<std::string> occ = sweep_occluders(s, prob, *np, o);

  const geom::Vec2 base = r->base_pose.xy();
  const geom::Vec2 grasp = s.poses.at(o).apply(prob.find_movable(o)->grasp);
  if ((grasp - base).norm() >= 1e-9) {
    const geom::ConvexPolygon corridor =
        geom::corridor_polygon(geom::Corridor(base, grasp, cfg.gripper_width));
    add_corridor_movables(s, prob, corridor, o, &occ);
  }
  return occ;
}

std::set<std::string> place_occluders_core(const WorldState& s,
                                           const std::string& o, Direction dir,
                                           const std::string& ref,
                                           const ProblemInstance& prob,
                                           const world::EnvConfig& cfg,
                                           const PathProvider& paths) {
  const world::Region* dest = nullptr;
  if (dir == Direction::on) {
    dest = prob.find_region(ref);
  } else {
    const auto region = world::region_of(s, prob, ref);
    if (region) dest = prob.find_region(*region);
  }
  if (!dest) return {kWorldSentinel};
  const auto np = paths(s.base, dest->base_pose);
  if (!np) return {kWorldSentinel};
  std::set<std::string> occ = sweep_occluders(s, prob, *np, o);

  const auto point =
      canonical_placement_point(s, prob, dir, ref, cfg.place_offset);
  if (!point) return occ;
  const geom::Vec2 base = dest->base_pose.xy();
  if ((*point - base).norm() >= 1e-9) {
    const geom::ConvexPolygon corridor = geom::corridor_polygon(
        geom::Corridor(base, *point, cfg.gripper_width));
    add_corridor_movables(s, prob, corridor, o, &occ);
    for (const auto& wall : prob.static_obstacles()) {
      if (geom::intersects(wall, corridor)) {
        occ.insert(kWorldSentinel);
        break;
      }
    }
  }
  return occ;
}

}  // namespace

Roadmap build_roadmap(const ProblemInstance& prob, int n_samples,
                      int k_neighbors, std::uint64_t seed) {
  if (n_samples < 1 || k_neighbors < 1) {
    throw std::invalid_argument("build_roadmap: n_samples and k must be >= 1");
  }
  Roadmap rm;
  rm.seed_ = seed;
  rm.k_ = k_neighbors;
  rm.statics_ = prob.static_obstacles();
  rm.footprint_ = prob.robot_footprint;

  rm.nodes_.push_back(prob.s0.base);
  for (const auto& r : prob.regions) rm.nodes_.push_back(r.base_pose);
  for (const auto& d : prob.doors) rm.nodes_.push_back(d.base_pose);

  Rng rng(seed);
  long attempts = 0;
  const long max_attempts = 200L * n_samples + 1000;
  int accepted = 0;
  while (accepted < n_samples) {
    if (++attempts > max_attempts) {
      throw std::runtime_error("build_roadmap: workspace fully blocked");
    }
    const double x =
        uniform_double(rng, prob.workspace_min.x, prob.workspace_max.x);
    const double y =
        uniform_double(rng, prob.workspace_min.y, prob.workspace_max.y);
    const geom::ConvexPolygon placed =
        geom::transform(rm.footprint_, geom::Pose2(x, y, 0.0));
    if (!world::clear_of(placed, rm.statics_)) continue;
    rm.nodes_.emplace_back(x, y, 0.0);
    ++accepted;
  }

  const int n = static_cast<int>(rm.nodes_.size());
  rm.adj_.assign(n, {});
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> order;
    order.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      order.emplace_back((rm.nodes_[j].xy() - rm.nodes_[i].xy()).norm(), j);
    }
    std::sort(order.begin(), order.end());
    const int limit = std::min<int>(k_neighbors, static_cast<int>(order.size()));
    for (int t = 0; t < limit; ++t) {
      const int j = order[t].second;
      const auto key = std::minmax(i, j);
      if (!seen.insert(key).second) continue;
      const auto volumes = geom::sweep(
          rm.footprint_, world::flatten_path({rm.nodes_[i], rm.nodes_[j]}));
      bool clear = true;
      for (const auto& vol : volumes) {
        if (!world::clear_of(vol, rm.statics_)) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      Roadmap::Edge e;
      e.a = i;
      e.b = j;
      e.length = order[t].first;
      e.sweep = volumes.front();
      const int idx = static_cast<int>(rm.edges_.size());
      rm.edges_.push_back(std::move(e));
      rm.adj_[i].push_back(idx);
      rm.adj_[j].push_back(idx);
    }
  }
  return rm;
}

std::optional<std::vector<geom::Pose2>> plan_path(
    const Roadmap& rm, const geom::Pose2& from, const geom::Pose2& to,
    const std::vector<geom::ConvexPolygon>& extra_obstacles) {
  if (geom::almost_equal(from, to)) {
    return std::vector<geom::Pose2>{from};
  }
  const auto segment_clear = [&](const geom::Pose2& a, const geom::Pose2& b) {
    for (const auto& vol :
         geom::sweep(rm.footprint(), world::flatten_path({a, b}))) {
      if (!world::clear_of(vol, rm.statics())) return false;
      if (!world::clear_of(vol, extra_obstacles)) return false;
    }
    return true;
  };
  if (segment_clear(from, to)) {
    return std::vector<geom::Pose2>{from, to};
  }

  const auto& nodes = rm.nodes();
  const int n = static_cast<int>(nodes.size());
  const auto nearest = [&](const geom::Pose2& p) {
    std::vector<std::pair<double, int>> order;
    order.reserve(n);
    for (int i = 0; i < n; ++i) {
      order.emplace_back((nodes[i].xy() - p.xy()).norm(), i);
    }
    std::sort(order.begin(), order.end());
    order.resize(std::min<std::size_t>(order.size(),
                                       static_cast<std::size_t>(rm.k_neighbors())));
    return order;
  };

  std::vector<std::pair<double, int>> starts;
  for (const auto& [d, i] : nearest(from)) {
    if (segment_clear(from, nodes[i])) starts.emplace_back(d, i);
  }
  if (starts.empty()) return std::nullopt;
  std::vector<std::pair<double, int>> goals;
  for (const auto& [d, i] : nearest(to)) {
    if (segment_clear(nodes[i], to)) goals.emplace_back(d, i);
  }
  if (goals.empty()) return std::nullopt;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, kInf);
  std::vector<int> prev(n, -1);
  std::vector<signed char> edge_state(rm.edges().size(), 0);
  const auto edge_clear = [&](int ei) {
    if (edge_state[ei] == 0) {
      edge_state[ei] =
          world::clear_of(rm.edges()[ei].sweep, extra_obstacles) ? 1 : 2;
    }
    return edge_state[ei] == 1;
  };

  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue;
  for (const auto& [d, i] : starts) {
    if (d < dist[i]) {
      dist[i] = d;
      queue.emplace(d, i);
    }
  }
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    for (int ei : rm.adjacency()[u]) {
      const auto& e = rm.edges()[ei];
      const int v = e.a == u ? e.b : e.a;
      const double nd = d + e.length;
      if (nd >= dist[v]) continue;
      if (!edge_clear(ei)) continue;
      dist[v] = nd;
      prev[v] = u;
      queue.emplace(nd, v);
    }
  }

  double best = kInf;
  int best_goal = -1;
  for (const auto& [d, i] : goals) {
    if (dist[i] + d < best) {
      best = dist[i] + d;
      best_goal = i;
    }
  }
  if (best_goal < 0) return std::nullopt;

  std::vector<int> chain;
  for (int v = best_goal; v != -1; v = prev[v]) chain.push_back(v);
  std::reverse(chain.begin(), chain.end());

  std::vector<geom::Pose2> path;
  path.push_back(from);
  for (int v : chain) {
    if (!(nodes[v] == path.back())) path.push_back(nodes[v]);
  }
  if (!(to == path.back())) path.push_back(to);
  return path;
}

std::string to_string(Predicate pred) {
  switch (pred) {
    case Predicate::at_position: return "AtPosition";
    case Predicate::hand_available: return "HandAvailable";
    case Predicate::is_closed: return "IsClosed";
    case Predicate::pick_occluded_by: return "PickOccludedBy";
    case Predicate::place_occluded_by: return "PlaceOccludedBy";
    case Predicate::robot_holding: return "RobotHolding";
  }
  return "?";
}

std::string GroundedLiteral::to_string() const {
  std::ostringstream out;
  out << "(" << motion::to_string(pred);
  for (const auto& a : args) out << " " << a;
  out << ")";
  return out.str();
}

void LiteralSet::insert(GroundedLiteral lit, std::uint32_t generation) {
  entries_.emplace(std::move(lit), generation);
}

bool LiteralSet::contains(const GroundedLiteral& lit) const {
  return entries_.count(lit) > 0;
}

bool LiteralSet::operator==(const LiteralSet& o) const {
  if (entries_.size() != o.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = o.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (!(a->first == b->first)) return false;
  }
  return true;
}

std::set<std::string> pick_occluders(const WorldState& s,
                                     const std::string& movable,
                                     const Roadmap& rm,
                                     const ProblemInstance& prob,
                                     const world::EnvConfig& cfg) {
  const auto provider = [&](const geom::Pose2& from,
                            const geom::Pose2& to) -> std::optional<NominalPath> {
    const auto p = plan_path(rm, from, to, {});
    if (!p) return std::nullopt;
    return NominalPath{*p, geom::sweep(rm.footprint(), world::flatten_path(*p))};
  };
  return pick_occluders_core(s, movable, prob, cfg, provider);
}

std::set<std::string> place_occluders(const WorldState& s,
                                      const std::string& movable, Direction dir,
                                      const std::string& ref, const Roadmap& rm,
                                      const ProblemInstance& prob,
                                      const world::EnvConfig& cfg) {
  const auto provider = [&](const geom::Pose2& from,
                            const geom::Pose2& to) -> std::optional<NominalPath> {
    const auto p = plan_path(rm, from, to, {});
    if (!p) return std::nullopt;
    return NominalPath{*p, geom::sweep(rm.footprint(), world::flatten_path(*p))};
  };
  return place_occluders_core(s, movable, dir, ref, prob, cfg, provider);
}

std::optional<geom::Vec2> canonical_placement_point(
    const WorldState& s, const ProblemInstance& prob, Direction dir,
    const std::string& ref, double offset) {
  if (dir == Direction::on) {
    const world::Region* r = prob.find_region(ref);
    if (!r) return std::nullopt;
    return r->extent.centroid();
  }
  const auto region = world::region_of(s, prob, ref);
  if (!region) return std::nullopt;
  const world::Region* r = prob.find_region(*region);
  const geom::Vec2 center = world::movable_center(s, prob, ref);
  return center +
         geom::rotate(direction_axis(dir) * offset, r->local_frame.theta);
}

Env::Env(ProblemInstance prob, world::EnvConfig cfg, std::uint64_t roadmap_seed)
    : prob_(std::move(prob)),
      cfg_(cfg),
      roadmap_(build_roadmap(prob_, cfg.prm_samples, cfg.prm_k, roadmap_seed)) {}

Env::StateEntry& Env::entry(const WorldState& s) {
  auto& bucket = states_[s.key()];
  for (auto& e : bucket) {
    if (e->state == s) return *e;
  }
  bucket.push_back(std::make_unique<StateEntry>());
  bucket.back()->state = s;
  return *bucket.back();
}

Env::StateEntry* Env::find_entry(const WorldState& s) {
  const auto it = states_.find(s.key());
  if (it == states_.end()) return nullptr;
  for (auto& e : it->second) {
    if (e->state == s) return e.get();
  }
  return nullptr;
}

std::vector<DiscreteAction> Env::legal_actions(const WorldState& s) {
  std::vector<DiscreteAction> out;
  if (s.failed) return out;
  for (const auto& m : prob_.movables) {
    if (s.poses.count(m.name)) out.push_back(world::make_pick(m.name));
  }
  for (const auto& d : prob_.doors) {
    out.push_back(world::make_open(d.name));
  }
  if (s.holding) {
    for (const auto& r : prob_.regions) {
      out.push_back(world::make_place(*s.holding, Direction::on, r.name));
    }
    for (Direction dir :
         {Direction::left_of, Direction::right_of, Direction::front_of,
          Direction::behind_of}) {
      for (const auto& m : prob_.movables) {
        if (m.name != *s.holding && s.poses.count(m.name)) {
          out.push_back(world::make_place(*s.holding, dir, m.name));
        }
      }
    }
  }
  return out;
}

world::StepResult Env::step(const WorldState& s, const DiscreteAction& a,
                            const std::optional<world::ContinuousParams>& k) {
  const auto occ_fn = [this](const WorldState& st, const DiscreteAction& act) {
    return occluders_for(st, act);
  };
  world::StepResult res = world::transition(s, a, k, prob_, cfg_, occ_fn);
  ++n_transitions_;
  if (res.feasible && literal_cache_enabled_) {
    StateEntry& child = entry(res.next);
    if (!child.has_parent && !child.literals) {
      child.has_parent = true;
      child.parent_state = s;
      child.parent_action = a;
    }
  }
  return res;
}

bool Env::is_goal(const WorldState& s) {
  return world::goal_satisfied(s, prob_, prob_.goal);
}

std::set<std::string> Env::pick_occluders(const WorldState& s,
                                          const std::string& movable) {
  const std::string key = world::make_pick(movable).to_string();
  {
    StateEntry& e = entry(s);
    const auto it = e.occluders.find(key);
    if (it != e.occluders.end()) return it->second;
  }
  const auto provider = [this](const geom::Pose2& from, const geom::Pose2& to) {
    return nominal_path(from, to);
  };
  auto occ = pick_occluders_core(s, movable, prob_, cfg_, provider);
  entry(s).occluders.emplace(key, occ);
  return occ;
}

std::set<std::string> Env::place_occluders(const WorldState& s,
                                           const std::string& movable,
                                           Direction dir,
                                           const std::string& ref) {
  const std::string key = world::make_place(movable, dir, ref).to_string();
  {
    StateEntry& e = entry(s);
    const auto it = e.occluders.find(key);
    if (it != e.occluders.end()) return it->second;
  }
  const auto provider = [this](const geom::Pose2& from, const geom::Pose2& to) {
    return nominal_path(from, to);
  };
  auto occ = place_occluders_core(s, movable, dir, ref, prob_, cfg_, provider);
  entry(s).occluders.emplace(key, occ);
  return occ;
}

std::set<std::string> Env::occluders_for(const WorldState& s,
                                         const DiscreteAction& a) {
  switch (a.op) {
    case Op::pick: return pick_occluders(s, a.target);
    case Op::place: return place_occluders(s, a.target, a.dir, a.ref);
    case Op::open: return {};
  }
  return {};
}

std::optional<NominalPath> Env::nominal_path(const geom::Pose2& from,
                                             const geom::Pose2& to) {
  const auto key = pose_pair_key(from, to);
  const auto it = nominal_cache_.find(key);
  if (it != nominal_cache_.end()) return it->second;
  ++n_motion_plans_;
  std::optional<NominalPath> np;
  const auto p = plan_path(roadmap_, from, to, {});
  if (p) {
    np = NominalPath{*p,
                     geom::sweep(roadmap_.footprint(), world::flatten_path(*p))};
  }
  nominal_cache_.emplace(key, np);
  return np;
}

std::optional<std::vector<geom::Pose2>> Env::masked_path(const WorldState& s,
                                                         const geom::Pose2& to) {
  const auto key = pose_key(to);
  {
    StateEntry& e = entry(s);
    const auto it = e.masked.find(key);
    if (it != e.masked.end()) return it->second;
  }
  std::vector<geom::ConvexPolygon> extra;
  for (const auto& [name, pose] : s.poses) {
    extra.push_back(geom::transform(prob_.find_movable(name)->footprint, pose));
  }
  for (const auto& d : prob_.doors) {
    if (!s.door_open.at(d.name)) extra.push_back(d.closed_polygon);
  }
  ++n_motion_plans_;
  auto path = plan_path(roadmap_, s.base, to, extra);
  entry(s).masked.emplace(key, path);
  return path;
}

bool Env::schema_ok(const WorldState& s, const DiscreteAction& a) {
  const auto occ_fn = [this](const WorldState& st, const DiscreteAction& act) {
    return occluders_for(st, act);
  };
  return world::schema_preconditions(s, prob_, a, occ_fn);
}

std::optional<world::ContinuousParams> Env::sample_params(
    const WorldState& s, const DiscreteAction& a, Rng& rng) {
  if (s.failed) return std::nullopt;
  // Schema preconditions gate sampling so that every returned parameter set
  // executes feasibly in the state it was drawn for.
  if (!schema_ok(s, a)) return std::nullopt;
  const auto base = world::action_base_pose(s, prob_, a);
  if (!base) return std::nullopt;
  const auto path = masked_path(s, *base);
  if (!path) return std::nullopt;
  const auto obstacles = world::corridor_obstacles(s, prob_, a);

  switch (a.op) {
    case Op::pick: {
      for (int t = 0; t < cfg_.sampler_max_tries; ++t) {
        const double yaw = uniform_double(rng, -world::kApproachYawLimit,
                                          world::kApproachYawLimit);
        const auto corridor = world::reach_corridor(s, prob_, a, base->xy(),
                                                    yaw, std::nullopt, cfg_);
        if (!corridor ||
            world::clear_of(geom::corridor_polygon(*corridor), obstacles)) {
          world::ContinuousParams k;
          k.nav_path = *path;
          k.approach_yaw = yaw;
          return k;
        }
      }
      return std::nullopt;
    }
    case Op::open: {
      const auto corridor = world::reach_corridor(s, prob_, a, base->xy(), 0.0,
                                                  std::nullopt, cfg_);
      if (corridor &&
          !world::clear_of(geom::corridor_polygon(*corridor), obstacles)) {
        return std::nullopt;
      }
      world::ContinuousParams k;
      k.nav_path = *path;
      return k;
    }
    case Op::place: {
      const world::Region* dest = nullptr;
      if (a.dir == Direction::on) {
        dest = prob_.find_region(a.ref);
      } else {
        const auto region = world::region_of(s, prob_, a.ref);
        if (region) dest = prob_.find_region(*region);
      }
      if (!dest) return std::nullopt;
      const world::Movable* m = prob_.find_movable(a.target);
      const double theta =
          geom::wrap_angle(dest->local_frame.theta + s.held_theta);
      std::optional<geom::Vec2> ref_center;
      if (a.dir != Direction::on) {
        ref_center = world::movable_center(s, prob_, a.ref);
      }
      const geom::Vec2 lo = dest->extent.aabb_min();
      const geom::Vec2 hi = dest->extent.aabb_max();
      for (int t = 0; t < cfg_.sampler_max_tries; ++t) {
        geom::Vec2 p;
        bool inside = false;
        for (int i = 0; i < 1000; ++i) {
          p = {uniform_double(rng, lo.x, hi.x), uniform_double(rng, lo.y, hi.y)};
          if (dest->extent.contains(p)) {
            inside = true;
            break;
          }
        }
        if (!inside) return std::nullopt;
        const geom::ConvexPolygon placed =
            geom::transform(m->footprint, geom::Pose2(p.x, p.y, theta));
        if (!dest->extent.contains(placed)) continue;
        if (a.dir != Direction::on) {
          const geom::Vec2 delta = geom::rotate(placed.centroid() - *ref_center,
                                                -dest->local_frame.theta);
          if (world::dominant_direction(delta) != a.dir) continue;
        }
        if (!world::clear_of(placed, obstacles)) continue;
        const auto corridor =
            world::reach_corridor(s, prob_, a, base->xy(), 0.0, p, cfg_);
        if (corridor &&
            !world::clear_of(geom::corridor_polygon(*corridor), obstacles)) {
          continue;
        }
        world::ContinuousParams k;
        k.nav_path = *path;
        k.placement_point = p;
        return k;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

LiteralSet Env::literals(const WorldState& s) {
  if (!literal_cache_enabled_) return literals_uncached(s);
  {
    StateEntry& e = entry(s);
    if (e.literals) return *e.literals;
  }
  const WorldState state_copy = s;
  const StateEntry* e = find_entry(state_copy);
  if (e && e->has_parent) {
    const WorldState parent = e->parent_state;
    const DiscreteAction action = e->parent_action;
    const StateEntry* p = find_entry(parent);
    if (p && p->literals) {
      const LiteralSet parent_literals = *p->literals;
      ++n_derived_literal_builds_;
      LiteralSet out =
          derive_literals(parent_literals, parent, action, state_copy);
      entry(state_copy).literals = out;
      return out;
    }
  }
  ++n_full_literal_builds_;
  const auto provider = [this](const geom::Pose2& from, const geom::Pose2& to) {
    return nominal_path(from, to);
  };
  LiteralSet out = build_literals(state_copy, provider, /*use_memo=*/true);
  entry(state_copy).literals = out;
  return out;
}

LiteralSet Env::literals_uncached(const WorldState& s) {
  std::map<PosePairKey, std::optional<NominalPath>> local;
  const auto provider =
      [&](const geom::Pose2& from,
          const geom::Pose2& to) -> std::optional<NominalPath> {
    const auto key = pose_pair_key(from, to);
    const auto it = local.find(key);
    if (it != local.end()) return it->second;
    std::optional<NominalPath> np;
    const auto p = plan_path(roadmap_, from, to, {});
    if (p) {
      np = NominalPath{
          *p, geom::sweep(roadmap_.footprint(), world::flatten_path(*p))};
    }
    local.emplace(key, np);
    return np;
  };
  return build_literals(s, provider, /*use_memo=*/false);
}

void Env::occlusion_literals_for_subject(const WorldState& s,
                                         const std::string& subject,
                                         const PathProvider& paths,
                                         bool use_memo,
                                         std::uint32_t generation,
                                         LiteralSet* out) {
  if (s.poses.count(subject)) {
    const auto occ = use_memo
                         ? pick_occluders(s, subject)
                         : pick_occluders_core(s, subject, prob_, cfg_, paths);
    for (const auto& x : occ) {
      out->insert({Predicate::pick_occluded_by, {subject, x}}, generation);
    }
  }
  const auto emit_place = [&](Direction dir, const std::string& ref) {
    const auto occ =
        use_memo ? place_occluders(s, subject, dir, ref)
                 : place_occluders_core(s, subject, dir, ref, prob_, cfg_, paths);
    for (const auto& x : occ) {
      out->insert({Predicate::place_occluded_by,
                   {subject, world::to_string(dir), ref, x}},
                  generation);
    }
  };
  for (const auto& r : prob_.regions) emit_place(Direction::on, r.name);
  for (Direction dir : {Direction::left_of, Direction::right_of,
                        Direction::front_of, Direction::behind_of}) {
    for (const auto& m : prob_.movables) {
      if (m.name != subject && s.poses.count(m.name)) emit_place(dir, m.name);
    }
  }
}

LiteralSet Env::build_literals(const WorldState& s, const PathProvider& paths,
                               bool use_memo) {
  const std::uint32_t gen = ++generation_;
  LiteralSet out;
  if (s.holding) {
    out.insert({Predicate::robot_holding, {*s.holding}}, gen);
  } else {
    out.insert({Predicate::hand_available, {}}, gen);
  }
  for (const auto& d : prob_.doors) {
    if (!s.door_open.at(d.name)) {
      out.insert({Predicate::is_closed, {d.name}}, gen);
    }
  }

  struct Info {
    std::string name;
    geom::ConvexPolygon poly;
    geom::Vec2 center;
    std::optional<std::string> region;
  };
  std::vector<Info> placed;
  for (const auto& m : prob_.movables) {
    if (!s.poses.count(m.name)) continue;
    const geom::ConvexPolygon poly =
        geom::transform(m.footprint, s.poses.at(m.name));
    placed.push_back(
        {m.name, poly, poly.centroid(), world::region_of(s, prob_, m.name)});
  }
  for (const auto& subj : placed) {
    for (const auto& r : prob_.regions) {
      if (r.extent.contains(subj.poly)) {
        out.insert({Predicate::at_position,
                    {subj.name, world::to_string(Direction::on), r.name}},
                   gen);
      }
    }
    for (const auto& ref : placed) {
      if (ref.name == subj.name || !subj.region || !ref.region ||
          *subj.region != *ref.region) {
        continue;
      }
      const world::Region* r = prob_.find_region(*subj.region);
      const geom::Vec2 delta =
          geom::rotate(subj.center - ref.center, -r->local_frame.theta);
      const auto dir = world::dominant_direction(delta);
      if (dir) {
        out.insert({Predicate::at_position,
                    {subj.name, world::to_string(*dir), ref.name}},
                   gen);
      }
    }
  }

  for (const auto& m : prob_.movables) {
    occlusion_literals_for_subject(s, m.name, paths, use_memo, gen, &out);
  }
  return out;
}

LiteralSet Env::derive_literals(const LiteralSet& parent_literals,
                                const WorldState& parent,
                                const DiscreteAction& action,
                                const WorldState& child) {
  const std::uint32_t gen = ++generation_;
  LiteralSet out;
  if (child.holding) {
    out.insert({Predicate::robot_holding, {*child.holding}}, gen);
  } else {
    out.insert({Predicate::hand_available, {}}, gen);
  }
  for (const auto& d : prob_.doors) {
    if (!child.door_open.at(d.name)) {
      out.insert({Predicate::is_closed, {d.name}}, gen);
    }
  }

  const std::optional<std::string> moved =
      action.op == Op::open ? std::nullopt
                            : std::optional<std::string>(action.target);
  for (const auto& [lit, tag] : parent_literals.entries()) {
    if (lit.pred != Predicate::at_position) continue;
    if (moved && (lit.args[0] == *moved || lit.args[2] == *moved)) continue;
    out.insert(lit, tag);
  }
  if (action.op == Op::place) {
    // The placed object's relations are recomputed from its new pose; all
    // other pairs are untouched by the move.
    const auto it = child.poses.find(action.target);
    const world::Movable* m = prob_.find_movable(action.target);
    const geom::ConvexPolygon poly = geom::transform(m->footprint, it->second);
    const geom::Vec2 center = poly.centroid();
    const auto subj_region = world::region_of(child, prob_, action.target);
    for (const auto& r : prob_.regions) {
      if (r.extent.contains(poly)) {
        out.insert({Predicate::at_position,
                    {action.target, world::to_string(Direction::on), r.name}},
                   gen);
      }
    }
    if (subj_region) {
      const world::Region* r = prob_.find_region(*subj_region);
      for (const auto& other : prob_.movables) {
        if (other.name == action.target || !child.poses.count(other.name)) {
          continue;
        }
        if (world::region_of(child, prob_, other.name) != subj_region) continue;
        const geom::Vec2 other_center =
            world::movable_center(child, prob_, other.name);
        const geom::Vec2 fwd =
            geom::rotate(center - other_center, -r->local_frame.theta);
        if (const auto dir = world::dominant_direction(fwd)) {
          out.insert({Predicate::at_position,
                      {action.target, world::to_string(*dir), other.name}},
                     gen);
        }
        const auto back = world::dominant_direction(
            geom::rotate(other_center - center, -r->local_frame.theta));
        if (back) {
          out.insert({Predicate::at_position,
                      {other.name, world::to_string(*back), action.target}},
                     gen);
        }
      }
    }
  }

  // Occlusion literals: the nominal paths start at the robot base, so exact
  // reuse is only possible when the base did not move. Pick removes its
  // target from the obstacle set (drop literals naming it), open removes the
  // door geometry (drop literals naming the door); both leave every other
  // per-obstacle test unchanged. Place and base moves recompute.
  const bool same_base = parent.base == child.base;
  const auto copy_occlusions = [&](const std::string& dropped) {
    for (const auto& [lit, tag] : parent_literals.entries()) {
      if (lit.pred == Predicate::pick_occluded_by) {
        if (lit.args[0] == dropped || lit.args[1] == dropped) continue;
        out.insert(lit, tag);
      } else if (lit.pred == Predicate::place_occluded_by) {
        if (lit.args[0] == dropped || lit.args[2] == dropped ||
            lit.args[3] == dropped) {
          continue;
        }
        out.insert(lit, tag);
      }
    }
  };
  if (same_base && action.op == Op::pick) {
    copy_occlusions(action.target);
  } else if (same_base && action.op == Op::open) {
    copy_occlusions(action.target);
  } else {
    const auto provider = [this](const geom::Pose2& from,
                                 const geom::Pose2& to) {
      return nominal_path(from, to);
    };
    for (const auto& m : prob_.movables) {
      occlusion_literals_for_subject(child, m.name, provider, /*use_memo=*/true,
                                     gen, &out);
    }
  }
  return out;
}

}  // namespace stalm::motion
