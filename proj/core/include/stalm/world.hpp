#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stalm/geom.hpp"
#include "stalm/rng.hpp"

namespace stalm::world {

enum class EntityKind { movable, region, door };

std::string to_string(EntityKind kind);

/// Entity names are lowercase identifiers: letters, digits, underscore.
bool valid_entity_name(const std::string& name);

enum class Direction { on, left_of, right_of, front_of, behind_of };

constexpr Direction kAllDirections[] = {Direction::on, Direction::left_of,
                                        Direction::right_of,
                                        Direction::front_of,
                                        Direction::behind_of};

std::string to_string(Direction dir);
std::optional<Direction> parse_direction(const std::string& token);

/// Minimum center separation for a relative direction to hold.
constexpr double kMinDirectionSeparation = 0.02;

struct Region {
  std::string name;
  geom::ConvexPolygon extent;
  geom::Pose2 base_pose;
  /// Origin and axes used for left/right/front/behind semantics.
  geom::Pose2 local_frame;
  std::vector<geom::ConvexPolygon> walls;
};

struct Door {
  std::string name;
  geom::ConvexPolygon closed_polygon;
  geom::Pose2 base_pose;
  geom::Vec2 handle;
};

struct Movable {
  std::string name;
  geom::ConvexPolygon footprint;  // local frame; must contain the origin
  geom::Vec2 grasp;               // local frame; inside or on the footprint
};

struct WorldState {
  std::map<std::string, geom::Pose2> poses;  // stable poses of placed movables
  std::map<std::string, bool> door_open;
  geom::Pose2 base;
  std::optional<std::string> holding;
  /// Orientation of the held object relative to the local frame of the region
  /// it was picked from; meaningless when holding is empty.
  double held_theta = 0.0;
  bool failed = false;

  bool operator==(const WorldState& o) const;
  std::uint64_t key() const;
};

enum class Op { pick, open, place };

std::string to_string(Op op);

struct DiscreteAction {
  Op op = Op::pick;
  std::string target;                  // movable (pick/place) or door (open)
  Direction dir = Direction::on;       // place only
  std::string ref;                     // place only

  bool operator==(const DiscreteAction& o) const {
    return op == o.op && target == o.target &&
           (op != Op::place || (dir == o.dir && ref == o.ref));
  }
  std::string to_string() const;
};

DiscreteAction make_pick(std::string target);
DiscreteAction make_open(std::string door);
DiscreteAction make_place(std::string target, Direction dir, std::string ref);

struct ContinuousParams {
  std::vector<geom::Pose2> nav_path;           // never empty
  std::optional<double> approach_yaw;          // pick only, radians
  std::optional<geom::Vec2> placement_point;   // place only

  bool operator==(const ContinuousParams& o) const;
};

struct GoalConjunct {
  std::string subject;
  Direction dir = Direction::on;
  std::string ref;
};

struct Goal {
  std::vector<GoalConjunct> conjuncts;
};

struct ProblemInstance {
  std::string name;
  std::vector<Movable> movables;
  std::vector<Region> regions;
  std::vector<Door> doors;
  std::vector<geom::ConvexPolygon> static_walls;
  geom::ConvexPolygon robot_footprint;
  geom::Vec2 workspace_min;
  geom::Vec2 workspace_max;
  WorldState s0;
  Goal goal;
  int horizon = 20;
  double time_budget = 300.0;

  const Movable* find_movable(const std::string& name) const;
  const Region* find_region(const std::string& name) const;
  const Door* find_door(const std::string& name) const;
  std::optional<EntityKind> kind_of(const std::string& name) const;

  /// All static blocking geometry: free-standing walls plus region walls.
  std::vector<geom::ConvexPolygon> static_obstacles() const;

  /// Throws std::invalid_argument with a field-path diagnostic on violation.
  void validate() const;
};

/// World-frame footprint of a placed movable.
geom::ConvexPolygon movable_polygon(const WorldState& s,
                                    const ProblemInstance& prob,
                                    const std::string& movable);

/// World-frame centroid of a placed movable's footprint.
geom::Vec2 movable_center(const WorldState& s, const ProblemInstance& prob,
                          const std::string& movable);

/// Region whose extent fully contains the movable's footprint, if any.
std::optional<std::string> region_of(const WorldState& s,
                                     const ProblemInstance& prob,
                                     const std::string& movable);

/// Relative direction of a center offset expressed in a region's local frame:
/// the dominant axis decides, ties on the diagonal and offsets below the
/// minimum separation yield nothing.
std::optional<Direction> dominant_direction(const geom::Vec2& delta_local);

bool at_position(const WorldState& s, const ProblemInstance& prob,
                 const std::string& subject, Direction dir,
                 const std::string& ref);

bool goal_satisfied(const WorldState& s, const ProblemInstance& prob,
                    const Goal& g);

int count_satisfied(const WorldState& s, const ProblemInstance& prob,
                    const Goal& g);

enum class RewardMode { delta, positive_only };

struct EnvConfig {
  int prm_samples = 300;
  int prm_k = 8;
  double gripper_width = 0.10;
  int sampler_max_tries = 20;
  double place_offset = 0.15;
  RewardMode reward_mode = RewardMode::delta;
  double reward_scale = 1.0;
};

constexpr double kGoalReward = 3.0;
constexpr double kInfeasibleReward = -6.0;
constexpr double kApproachYawLimit = 60.0 * geom::kPi / 180.0;

enum class FailKind { none, precondition, geometric };

struct StepResult {
  WorldState next;
  double reward = 0.0;
  bool feasible = false;
  FailKind fail = FailKind::none;
};

/// Occluder lookup used for the UnsafePick/UnsafePlace preconditions; the
/// motion module supplies the real implementation.
using OccluderFn = std::function<std::set<std::string>(
    const WorldState&, const DiscreteAction&)>;

/// Expected final base pose for the action (the target region or door base
/// pose). Returns nullopt for ill-posed actions (e.g. place ref not on any
/// region).
std::optional<geom::Pose2> action_base_pose(const WorldState& s,
                                            const ProblemInstance& prob,
                                            const DiscreteAction& a);

/// Reach corridor swept by the arm for the action, given the final base pose.
/// Pick uses the (optionally yaw-rotated) segment to the grasp point, open the
/// segment to the door handle, place the segment to the placement point.
/// Returns nullopt when the segment is degenerate (treated as clear).
std::optional<geom::Corridor> reach_corridor(
    const WorldState& s, const ProblemInstance& prob, const DiscreteAction& a,
    const geom::Vec2& base, double yaw, const std::optional<geom::Vec2>& point,
    const EnvConfig& cfg);

/// Obstacles a base motion must avoid: statics, placed movables, closed
/// doors. The held movable has no pose and is implicitly excluded.
std::vector<geom::ConvexPolygon> nav_obstacles(const WorldState& s,
                                               const ProblemInstance& prob);

/// Obstacles the reach corridor must avoid for the given action: statics,
/// closed doors (except an open target), and placed movables except the
/// action's target.
std::vector<geom::ConvexPolygon> corridor_obstacles(const WorldState& s,
                                                    const ProblemInstance& prob,
                                                    const DiscreteAction& a);

bool clear_of(const geom::ConvexPolygon& shape,
              const std::vector<geom::ConvexPolygon>& obstacles);

bool sweep_clear(const geom::ConvexPolygon& footprint,
                 const std::vector<geom::Pose2>& path,
                 const std::vector<geom::ConvexPolygon>& obstacles);

/// Zeroes the heading of every pose. Base collision checks treat the robot
/// footprint as orientation-independent, which keeps per-segment sweep hulls
/// exact for convex footprints.
std::vector<geom::Pose2> flatten_path(const std::vector<geom::Pose2>& path);

/// Full geometric validity of continuous parameters for the action:
/// nav path starts at s.base, ends at the action's base pose, its sweep is
/// collision-free, the reach corridor is clear, and a placement is
/// collision-free and inside the destination region.
bool params_valid(const WorldState& s, const ProblemInstance& prob,
                  const DiscreteAction& a, const ContinuousParams& k,
                  const EnvConfig& cfg);

/// Schema preconditions per the action vocabulary: pick needs a free hand and
/// no pick occluders, open needs a closed door and a free hand, place needs
/// the target in hand and no place occluders.
bool schema_preconditions(const WorldState& s, const ProblemInstance& prob,
                          const DiscreteAction& a, const OccluderFn& occluders);

/// Deterministic MDP transition. Infeasible actions absorb into the failure
/// state with the infeasible reward. A missing k always fails the geometric
/// check. Throws std::invalid_argument on a failed input state or an action
/// that is not well-typed for the problem.
StepResult transition(const WorldState& s, const DiscreteAction& a,
                      const std::optional<ContinuousParams>& k,
                      const ProblemInstance& prob, const EnvConfig& cfg,
                      const OccluderFn& occluders);

/// Planner-facing view of the environment. Implemented by motion::Env for the
/// geometric world and by tests for hand-built MDPs.
class SearchDomain {
 public:
  virtual ~SearchDomain() = default;
  virtual std::vector<DiscreteAction> legal_actions(const WorldState& s) = 0;
  virtual StepResult step(const WorldState& s, const DiscreteAction& a,
                          const std::optional<ContinuousParams>& k) = 0;
  virtual std::optional<ContinuousParams> sample_params(
      const WorldState& s, const DiscreteAction& a, Rng& rng) = 0;
  virtual bool is_goal(const WorldState& s) = 0;
};

}  // namespace stalm::world
