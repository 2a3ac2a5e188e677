#include "stalm/world.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace stalm::world {
namespace {

constexpr double kPoseTol = 1e-9;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_pose(std::uint64_t h, const geom::Pose2& p) {
  h = geom::hash_combine(h, geom::hash_double(p.x));
  h = geom::hash_combine(h, geom::hash_double(p.y));
  return geom::hash_combine(h, geom::hash_double(p.theta));
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument(path + ": " + what);
}

void check_well_typed(const ProblemInstance& prob, const DiscreteAction& a) {
  switch (a.op) {
    case Op::pick:
      if (!prob.find_movable(a.target)) {
        throw std::invalid_argument("transition: pick target '" + a.target +
                                    "' is not a movable");
      }
      break;
    case Op::open:
      if (!prob.find_door(a.target)) {
        throw std::invalid_argument("transition: open target '" + a.target +
                                    "' is not a door");
      }
      break;
    case Op::place:
      if (!prob.find_movable(a.target)) {
        throw std::invalid_argument("transition: place target '" + a.target +
                                    "' is not a movable");
      }
      if (a.dir == Direction::on) {
        if (!prob.find_region(a.ref)) {
          throw std::invalid_argument("transition: place ref '" + a.ref +
                                      "' is not a region");
        }
      } else {
        if (!prob.find_movable(a.ref) || a.ref == a.target) {
          throw std::invalid_argument("transition: place ref '" + a.ref +
                                      "' is not another movable");
        }
      }
      break;
  }
}

}  // namespace

std::string to_string(EntityKind kind) {
  switch (kind) {
    case EntityKind::movable: return "movable";
    case EntityKind::region: return "region";
    case EntityKind::door: return "door";
  }
  return "?";
}

bool valid_entity_name(const std::string& name) {
  if (name.empty()) return false;
  for (unsigned char c : name) {
    if (!(std::islower(c) || std::isdigit(c) || c == '_')) return false;
  }
  return true;
}

std::string to_string(Direction dir) {
  switch (dir) {
    case Direction::on: return "on";
    case Direction::left_of: return "left_of";
    case Direction::right_of: return "right_of";
    case Direction::front_of: return "front_of";
    case Direction::behind_of: return "behind_of";
  }
  return "?";
}

std::optional<Direction> parse_direction(const std::string& token) {
  for (Direction d : kAllDirections) {
    if (to_string(d) == token) return d;
  }
  return std::nullopt;
}

bool WorldState::operator==(const WorldState& o) const {
  if (failed != o.failed || holding != o.holding) return false;
  if (holding && held_theta != o.held_theta) return false;
  if (!(base == o.base)) return false;
  return poses == o.poses && door_open == o.door_open;
}

std::uint64_t WorldState::key() const {
  std::uint64_t h = 0x5ca1ab1e;
  for (const auto& [name, pose] : poses) {
    h = geom::hash_combine(h, fnv1a(name));
    h = hash_pose(h, pose);
  }
  for (const auto& [name, open] : door_open) {
    h = geom::hash_combine(h, fnv1a(name));
    h = geom::hash_combine(h, open ? 1 : 0);
  }
  h = hash_pose(h, base);
  if (holding) {
    h = geom::hash_combine(h, fnv1a(*holding));
    h = geom::hash_combine(h, geom::hash_double(held_theta));
  }
  return geom::hash_combine(h, failed ? 2 : 1);
}

std::string to_string(Op op) {
  switch (op) {
    case Op::pick: return "pick";
    case Op::open: return "open";
    case Op::place: return "place";
  }
  return "?";
}

std::string DiscreteAction::to_string() const {
  std::ostringstream out;
  out << "('" << world::to_string(op) << "', '" << target << "'";
  if (op == Op::place) {
    out << ", '" << world::to_string(dir) << "', '" << ref << "'";
  }
  out << ")";
  return out.str();
}

DiscreteAction make_pick(std::string target) {
  return DiscreteAction{Op::pick, std::move(target), Direction::on, ""};
}

DiscreteAction make_open(std::string door) {
  return DiscreteAction{Op::open, std::move(door), Direction::on, ""};
}

DiscreteAction make_place(std::string target, Direction dir, std::string ref) {
  return DiscreteAction{Op::place, std::move(target), dir, std::move(ref)};
}

bool ContinuousParams::operator==(const ContinuousParams& o) const {
  return nav_path == o.nav_path && approach_yaw == o.approach_yaw &&
         placement_point == o.placement_point;
}

const Movable* ProblemInstance::find_movable(const std::string& n) const {
  for (const auto& m : movables) {
    if (m.name == n) return &m;
  }
  return nullptr;
}

const Region* ProblemInstance::find_region(const std::string& n) const {
  for (const auto& r : regions) {
    if (r.name == n) return &r;
  }
  return nullptr;
}

const Door* ProblemInstance::find_door(const std::string& n) const {
  for (const auto& d : doors) {
    if (d.name == n) return &d;
  }
  return nullptr;
}

std::optional<EntityKind> ProblemInstance::kind_of(const std::string& n) const {
  if (find_movable(n)) return EntityKind::movable;
  if (find_region(n)) return EntityKind::region;
  if (find_door(n)) return EntityKind::door;
  return std::nullopt;
}

std::vector<geom::ConvexPolygon> ProblemInstance::static_obstacles() const {
  std::vector<geom::ConvexPolygon> out = static_walls;
  for (const auto& r : regions) {
    out.insert(out.end(), r.walls.begin(), r.walls.end());
  }
  return out;
}

void ProblemInstance::validate() const {
  if (!valid_entity_name(name)) fail("name", "not a lowercase identifier");
  if (horizon < 1) fail("horizon", "must be >= 1");
  if (time_budget < 0.0) fail("time_budget", "must be >= 0");
  if (!(workspace_min.x < workspace_max.x && workspace_min.y < workspace_max.y)) {
    fail("workspace", "min must be strictly below max");
  }

  std::set<std::string> names;
  const auto check_name = [&](const std::string& path, const std::string& n) {
    if (!valid_entity_name(n)) fail(path, "not a lowercase identifier");
    if (!names.insert(n).second) fail(path, "duplicate entity name '" + n + "'");
  };
  for (std::size_t i = 0; i < movables.size(); ++i) {
    const auto path = "movables[" + std::to_string(i) + "]";
    check_name(path + ".name", movables[i].name);
    if (!movables[i].footprint.contains(geom::Vec2{0.0, 0.0})) {
      fail(path + ".footprint", "must contain the local origin");
    }
    if (!movables[i].footprint.contains(movables[i].grasp)) {
      fail(path + ".grasp", "outside the footprint");
    }
  }
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto path = "regions[" + std::to_string(i) + "]";
    check_name(path + ".name", regions[i].name);
    if (regions[i].extent.contains(regions[i].base_pose.xy())) {
      fail(path + ".base_pose", "must lie outside the region extent");
    }
  }
  for (std::size_t i = 0; i < doors.size(); ++i) {
    check_name("doors[" + std::to_string(i) + "].name", doors[i].name);
  }

  if (goal.conjuncts.empty()) fail("goal", "must have at least one conjunct");
  for (std::size_t i = 0; i < goal.conjuncts.size(); ++i) {
    const auto path = "goal[" + std::to_string(i) + "]";
    const auto& c = goal.conjuncts[i];
    if (!find_movable(c.subject)) fail(path + ".subject", "not a movable");
    if (c.dir == Direction::on) {
      if (!find_region(c.ref)) fail(path + ".ref", "not a region");
    } else if (!find_movable(c.ref) || c.ref == c.subject) {
      fail(path + ".ref", "not another movable");
    }
  }

  // Initial state shape.
  if (s0.failed) fail("s0.failed", "initial state cannot be failed");
  if (s0.holding && !find_movable(*s0.holding)) {
    fail("s0.holding", "not a movable");
  }
  for (const auto& m : movables) {
    const bool held = s0.holding && *s0.holding == m.name;
    const bool placed = s0.poses.count(m.name) > 0;
    if (held == placed) {
      fail("s0.poses", "movable '" + m.name + "' must have a pose or be held");
    }
  }
  for (const auto& [n, _] : s0.poses) {
    if (!find_movable(n)) fail("s0.poses", "unknown movable '" + n + "'");
  }
  for (const auto& d : doors) {
    if (!s0.door_open.count(d.name)) {
      fail("s0.door_open", "missing entry for door '" + d.name + "'");
    }
  }
  for (const auto& [n, _] : s0.door_open) {
    if (!find_door(n)) fail("s0.door_open", "unknown door '" + n + "'");
  }

  // Initial geometry: movables pairwise disjoint, clear of statics, each on a
  // region.
  const auto statics = static_obstacles();
  std::vector<std::pair<std::string, geom::ConvexPolygon>> placed;
  for (const auto& [n, pose] : s0.poses) {
    placed.emplace_back(n, geom::transform(find_movable(n)->footprint, pose));
  }
  for (std::size_t i = 0; i < placed.size(); ++i) {
    for (std::size_t j = i + 1; j < placed.size(); ++j) {
      if (geom::intersects(placed[i].second, placed[j].second)) {
        fail("s0.poses", "movables '" + placed[i].first + "' and '" +
                             placed[j].first + "' overlap");
      }
    }
    for (const auto& w : statics) {
      if (geom::intersects(placed[i].second, w)) {
        fail("s0.poses", "movable '" + placed[i].first + "' overlaps a wall");
      }
    }
    if (!region_of(s0, *this, placed[i].first)) {
      fail("s0.poses",
           "movable '" + placed[i].first + "' is not on any region");
    }
  }
}

geom::ConvexPolygon movable_polygon(const WorldState& s,
                                    const ProblemInstance& prob,
                                    const std::string& movable) {
  const Movable* m = prob.find_movable(movable);
  if (!m) throw std::invalid_argument("unknown movable '" + movable + "'");
  const auto it = s.poses.find(movable);
  if (it == s.poses.end()) {
    throw std::invalid_argument("movable '" + movable + "' has no pose");
  }
  return geom::transform(m->footprint, it->second);
}

geom::Vec2 movable_center(const WorldState& s, const ProblemInstance& prob,
                          const std::string& movable) {
  return movable_polygon(s, prob, movable).centroid();
}

std::optional<std::string> region_of(const WorldState& s,
                                     const ProblemInstance& prob,
                                     const std::string& movable) {
  const auto it = s.poses.find(movable);
  if (it == s.poses.end()) return std::nullopt;
  const geom::ConvexPolygon poly = movable_polygon(s, prob, movable);
  for (const auto& r : prob.regions) {
    if (r.extent.contains(poly)) return r.name;
  }
  return std::nullopt;
}

bool at_position(const WorldState& s, const ProblemInstance& prob,
                 const std::string& subject, Direction dir,
                 const std::string& ref) {
  if (!prob.find_movable(subject)) {
    throw std::invalid_argument("at_position: unknown subject '" + subject +
                                "'");
  }
  if (!s.poses.count(subject)) return false;  // held
  if (dir == Direction::on) {
    const Region* r = prob.find_region(ref);
    if (!r) {
      throw std::invalid_argument("at_position: unknown region '" + ref + "'");
    }
    return r->extent.contains(movable_polygon(s, prob, subject));
  }
  if (!prob.find_movable(ref)) {
    throw std::invalid_argument("at_position: unknown ref movable '" + ref +
                                "'");
  }
  if (subject == ref || !s.poses.count(ref)) return false;
  const auto subj_region = region_of(s, prob, subject);
  const auto ref_region = region_of(s, prob, ref);
  if (!subj_region || !ref_region || *subj_region != *ref_region) return false;

  const Region* r = prob.find_region(*subj_region);
  const geom::Vec2 delta_world =
      movable_center(s, prob, subject) - movable_center(s, prob, ref);
  const geom::Vec2 d = geom::rotate(delta_world, -r->local_frame.theta);
  return dominant_direction(d) == dir;
}

std::optional<Direction> dominant_direction(const geom::Vec2& delta_local) {
  if (delta_local.norm() < kMinDirectionSeparation) return std::nullopt;
  const double ax = std::fabs(delta_local.x);
  const double ay = std::fabs(delta_local.y);
  if (ax > ay) {
    return delta_local.x < 0.0 ? Direction::left_of : Direction::right_of;
  }
  if (ay > ax) {
    return delta_local.y > 0.0 ? Direction::behind_of : Direction::front_of;
  }
  return std::nullopt;
}

bool goal_satisfied(const WorldState& s, const ProblemInstance& prob,
                    const Goal& g) {
  if (s.holding) return false;
  for (const auto& c : g.conjuncts) {
    if (!at_position(s, prob, c.subject, c.dir, c.ref)) return false;
  }
  return true;
}

int count_satisfied(const WorldState& s, const ProblemInstance& prob,
                    const Goal& g) {
  int n = 0;
  for (const auto& c : g.conjuncts) {
    n += at_position(s, prob, c.subject, c.dir, c.ref) ? 1 : 0;
  }
  return n;
}

std::optional<geom::Pose2> action_base_pose(const WorldState& s,
                                            const ProblemInstance& prob,
                                            const DiscreteAction& a) {
  switch (a.op) {
    case Op::pick: {
      const auto region = region_of(s, prob, a.target);
      if (!region) return std::nullopt;
      return prob.find_region(*region)->base_pose;
    }
    case Op::open:
      return prob.find_door(a.target)->base_pose;
    case Op::place: {
      if (a.dir == Direction::on) return prob.find_region(a.ref)->base_pose;
      const auto region = region_of(s, prob, a.ref);
      if (!region) return std::nullopt;
      return prob.find_region(*region)->base_pose;
    }
  }
  return std::nullopt;
}

std::optional<geom::Corridor> reach_corridor(
    const WorldState& s, const ProblemInstance& prob, const DiscreteAction& a,
    const geom::Vec2& base, double yaw, const std::optional<geom::Vec2>& point,
    const EnvConfig& cfg) {
  geom::Vec2 end;
  switch (a.op) {
    case Op::pick: {
      const auto it = s.poses.find(a.target);
      if (it == s.poses.end()) return std::nullopt;
      const geom::Vec2 grasp =
          it->second.apply(prob.find_movable(a.target)->grasp);
      end = base + geom::rotate(grasp - base, yaw);
      break;
    }
    case Op::open:
      end = prob.find_door(a.target)->handle;
      break;
    case Op::place:
      if (!point) return std::nullopt;
      end = *point;
      break;
  }
  if ((end - base).norm() < 1e-9) return std::nullopt;
  return geom::Corridor(base, end, cfg.gripper_width);
}

std::vector<geom::ConvexPolygon> nav_obstacles(const WorldState& s,
                                               const ProblemInstance& prob) {
  std::vector<geom::ConvexPolygon> out = prob.static_obstacles();
  for (const auto& [name, pose] : s.poses) {
    out.push_back(geom::transform(prob.find_movable(name)->footprint, pose));
  }
  for (const auto& d : prob.doors) {
    if (!s.door_open.at(d.name)) out.push_back(d.closed_polygon);
  }
  return out;
}

std::vector<geom::ConvexPolygon> corridor_obstacles(
    const WorldState& s, const ProblemInstance& prob, const DiscreteAction& a) {
  std::vector<geom::ConvexPolygon> out = prob.static_obstacles();
  for (const auto& [name, pose] : s.poses) {
    if ((a.op == Op::pick || a.op == Op::place) && name == a.target) continue;
    out.push_back(geom::transform(prob.find_movable(name)->footprint, pose));
  }
  for (const auto& d : prob.doors) {
    if (a.op == Op::open && d.name == a.target) continue;
    if (!s.door_open.at(d.name)) out.push_back(d.closed_polygon);
  }
  return out;
}

bool clear_of(const geom::ConvexPolygon& shape,
              const std::vector<geom::ConvexPolygon>& obstacles) {
  for (const auto& o : obstacles) {
    if (geom::intersects(shape, o)) return false;
  }
  return true;
}

bool sweep_clear(const geom::ConvexPolygon& footprint,
                 const std::vector<geom::Pose2>& path,
                 const std::vector<geom::ConvexPolygon>& obstacles) {
  for (const auto& volume : geom::sweep(footprint, path)) {
    if (!clear_of(volume, obstacles)) return false;
  }
  return true;
}

std::vector<geom::Pose2> flatten_path(const std::vector<geom::Pose2>& path) {
  std::vector<geom::Pose2> out;
  out.reserve(path.size());
  for (const auto& p : path) out.emplace_back(p.x, p.y, 0.0);
  return out;
}

bool params_valid(const WorldState& s, const ProblemInstance& prob,
                  const DiscreteAction& a, const ContinuousParams& k,
                  const EnvConfig& cfg) {
  if (k.nav_path.empty()) return false;
  const auto expected = action_base_pose(s, prob, a);
  if (!expected) return false;
  if (!geom::almost_equal(k.nav_path.front(), s.base) ||
      !geom::almost_equal(k.nav_path.back(), *expected)) {
    return false;
  }
  double yaw = 0.0;
  if (a.op == Op::pick) {
    if (!k.approach_yaw) return false;
    yaw = *k.approach_yaw;
    if (std::fabs(yaw) > kApproachYawLimit) return false;
  }
  if (a.op == Op::place && !k.placement_point) return false;

  // The base collision footprint is orientation-independent; sweeping the
  // translated footprint keeps per-segment hulls exact for convex shapes.
  if (!sweep_clear(prob.robot_footprint, flatten_path(k.nav_path),
                   nav_obstacles(s, prob))) {
    return false;
  }

  const auto obstacles = corridor_obstacles(s, prob, a);
  if (a.op == Op::place) {
    const Region* dest = a.dir == Direction::on
                             ? prob.find_region(a.ref)
                             : [&]() -> const Region* {
      const auto r = region_of(s, prob, a.ref);
      return r ? prob.find_region(*r) : nullptr;
    }();
    if (!dest) return false;
    const Movable* m = prob.find_movable(a.target);
    const double theta =
        geom::wrap_angle(dest->local_frame.theta + s.held_theta);
    const geom::ConvexPolygon placed = geom::transform(
        m->footprint,
        geom::Pose2(k.placement_point->x, k.placement_point->y, theta));
    if (!dest->extent.contains(placed)) return false;
    if (!clear_of(placed, obstacles)) return false;
  }

  const geom::Vec2 base = expected->xy();
  const auto corridor =
      reach_corridor(s, prob, a, base, yaw, k.placement_point, cfg);
  if (corridor && !clear_of(geom::corridor_polygon(*corridor), obstacles)) {
    return false;
  }
  return true;
}

bool schema_preconditions(const WorldState& s, const ProblemInstance& prob,
                          const DiscreteAction& a,
                          const OccluderFn& occluders) {
  switch (a.op) {
    case Op::pick:
      if (s.holding) return false;
      if (!s.poses.count(a.target)) return false;
      return occluders(s, a).empty();
    case Op::open:
      if (s.holding) return false;
      return !s.door_open.at(a.target);
    case Op::place:
      if (!s.holding || *s.holding != a.target) return false;
      return occluders(s, a).empty();
  }
  return false;
}

StepResult transition(const WorldState& s, const DiscreteAction& a,
                      const std::optional<ContinuousParams>& k,
                      const ProblemInstance& prob, const EnvConfig& cfg,
                      const OccluderFn& occluders) {
  if (s.failed) {
    throw std::invalid_argument("transition: input state is absorbed");
  }
  check_well_typed(prob, a);

  StepResult out;
  const bool schema_ok = schema_preconditions(s, prob, a, occluders);
  const bool geometry_ok = schema_ok && k && params_valid(s, prob, a, *k, cfg);
  if (!schema_ok || !geometry_ok) {
    out.next = s;
    out.next.failed = true;
    out.reward = kInfeasibleReward * cfg.reward_scale;
    out.feasible = false;
    out.fail = schema_ok ? FailKind::geometric : FailKind::precondition;
    return out;
  }

  WorldState next = s;
  next.base = k->nav_path.back();
  switch (a.op) {
    case Op::pick: {
      const auto region = region_of(s, prob, a.target);
      const double lf_theta = prob.find_region(*region)->local_frame.theta;
      next.held_theta =
          geom::wrap_angle(s.poses.at(a.target).theta - lf_theta);
      next.holding = a.target;
      next.poses.erase(a.target);
      break;
    }
    case Op::open:
      next.door_open[a.target] = true;
      break;
    case Op::place: {
      const Region* dest =
          a.dir == Direction::on
              ? prob.find_region(a.ref)
              : prob.find_region(*region_of(s, prob, a.ref));
      const double theta =
          geom::wrap_angle(dest->local_frame.theta + s.held_theta);
      next.poses.emplace(
          a.target,
          geom::Pose2(k->placement_point->x, k->placement_point->y, theta));
      next.holding.reset();
      next.held_theta = 0.0;
      break;
    }
  }

  int gained = 0;
  int lost = 0;
  for (const auto& c : prob.goal.conjuncts) {
    const bool before = at_position(s, prob, c.subject, c.dir, c.ref);
    const bool after = at_position(next, prob, c.subject, c.dir, c.ref);
    gained += (!before && after) ? 1 : 0;
    lost += (before && !after) ? 1 : 0;
  }
  double reward = kGoalReward * gained;
  if (cfg.reward_mode == RewardMode::delta) {
    reward -= kGoalReward * lost;
  }
  out.next = std::move(next);
  out.reward = reward * cfg.reward_scale;
  out.feasible = true;
  return out;
}

}  // namespace stalm::world
