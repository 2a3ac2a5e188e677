#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "stalm/geom.hpp"
#include "stalm/rng.hpp"
#include "stalm/world.hpp"

namespace stalm::motion {

/// Sentinel occluder naming structural blockage (unreachable target, wall in
/// the reach corridor).
inline const std::string kWorldSentinel = "world";

/// Probabilistic roadmap over the workspace. Edges connect node pairs whose
/// straight sweep is collision-free against static geometry only; movables
/// and doors are masked out per query.
class Roadmap {
 public:
  struct Edge {
    int a = 0;
    int b = 0;
    double length = 0.0;
    geom::ConvexPolygon sweep;
  };

  const std::vector<geom::Pose2>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::vector<int>>& adjacency() const { return adj_; }
  const std::vector<geom::ConvexPolygon>& statics() const { return statics_; }
  const geom::ConvexPolygon& footprint() const { return footprint_; }
  std::uint64_t seed() const { return seed_; }
  int k_neighbors() const { return k_; }

  friend Roadmap build_roadmap(const world::ProblemInstance& prob,
                               int n_samples, int k_neighbors,
                               std::uint64_t seed);

 private:
  std::vector<geom::Pose2> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adj_;
  std::vector<geom::ConvexPolygon> statics_;
  geom::ConvexPolygon footprint_ = geom::regular_polygon(8, 0.25);
  std::uint64_t seed_ = 0;
  int k_ = 8;
};

/// Samples n collision-free poses over the workspace box, adds every region
/// and door base pose plus the initial base pose, and connects k nearest
/// neighbors with collision-free straight edges. Deterministic in seed.
/// Throws std::runtime_error when no free pose can be sampled.
Roadmap build_roadmap(const world::ProblemInstance& prob, int n_samples,
                      int k_neighbors, std::uint64_t seed);

/// Shortest roadmap path from from to to whose sweeps avoid the roadmap's
/// statics and the extra obstacles. Endpoints are connected through their k
/// nearest nodes (or directly when the straight sweep is clear).
std::optional<std::vector<geom::Pose2>> plan_path(
    const Roadmap& rm, const geom::Pose2& from, const geom::Pose2& to,
    const std::vector<geom::ConvexPolygon>& extra_obstacles);

/// A nominal (movables- and doors-ignored) path with its cached sweep
/// volumes.
struct NominalPath {
  std::vector<geom::Pose2> poses;
  std::vector<geom::ConvexPolygon> sweeps;
};

using PathProvider = std::function<std::optional<NominalPath>(
    const geom::Pose2& from, const geom::Pose2& to)>;

enum class Predicate {
  // Enumerator order matches the lexicographic order of the predicate names
  // so sorted literal sets render in prompt order.
  at_position,
  hand_available,
  is_closed,
  pick_occluded_by,
  place_occluded_by,
  robot_holding,
};

std::string to_string(Predicate pred);

struct GroundedLiteral {
  Predicate pred = Predicate::hand_available;
  std::vector<std::string> args;

  auto operator<=>(const GroundedLiteral&) const = default;
  std::string to_string() const;
};

/// Set of grounded literals with a per-literal generation tag recording which
/// cache generation produced it.
class LiteralSet {
 public:
  void insert(GroundedLiteral lit, std::uint32_t generation);
  bool contains(const GroundedLiteral& lit) const;
  std::size_t size() const { return entries_.size(); }
  const std::map<GroundedLiteral, std::uint32_t>& entries() const {
    return entries_;
  }
  bool operator==(const LiteralSet& o) const;  // compares literals, not tags

 private:
  std::map<GroundedLiteral, std::uint32_t> entries_;
};

std::set<std::string> pick_occluders(const world::WorldState& s,
                                     const std::string& movable,
                                     const Roadmap& rm,
                                     const world::ProblemInstance& prob,
                                     const world::EnvConfig& cfg);

std::set<std::string> place_occluders(const world::WorldState& s,
                                      const std::string& movable,
                                      world::Direction dir,
                                      const std::string& ref, const Roadmap& rm,
                                      const world::ProblemInstance& prob,
                                      const world::EnvConfig& cfg);

/// Canonical point a placement grounding reaches for: the region centroid for
/// on, the reference center offset along the direction axis otherwise.
std::optional<geom::Vec2> canonical_placement_point(
    const world::WorldState& s, const world::ProblemInstance& prob,
    world::Direction dir, const std::string& ref, double offset);

/// Environment facade owning the problem, roadmap, and caches, and exposing
/// the search-facing interface. Confine each instance to one worker.
class Env : public world::SearchDomain {
 public:
  Env(world::ProblemInstance prob, world::EnvConfig cfg,
      std::uint64_t roadmap_seed);

  const world::ProblemInstance& problem() const { return prob_; }
  const world::EnvConfig& config() const { return cfg_; }
  const Roadmap& roadmap() const { return roadmap_; }

  std::vector<world::DiscreteAction> legal_actions(
      const world::WorldState& s) override;
  world::StepResult step(const world::WorldState& s,
                         const world::DiscreteAction& a,
                         const std::optional<world::ContinuousParams>& k) override;
  std::optional<world::ContinuousParams> sample_params(
      const world::WorldState& s, const world::DiscreteAction& a,
      Rng& rng) override;
  bool is_goal(const world::WorldState& s) override;

  std::set<std::string> pick_occluders(const world::WorldState& s,
                                       const std::string& movable);
  std::set<std::string> place_occluders(const world::WorldState& s,
                                        const std::string& movable,
                                        world::Direction dir,
                                        const std::string& ref);
  /// Occluders for the grounding an action queries (empty for open).
  std::set<std::string> occluders_for(const world::WorldState& s,
                                      const world::DiscreteAction& a);

  /// Grounded literal set for the state, served through the literal cache:
  /// memoized by state identity and derived incrementally across transitions
  /// where that is exact.
  LiteralSet literals(const world::WorldState& s);
  /// From-scratch recomputation that bypasses every cache; the oracle the
  /// cached path is tested against.
  LiteralSet literals_uncached(const world::WorldState& s);

  std::optional<NominalPath> nominal_path(const geom::Pose2& from,
                                          const geom::Pose2& to);
  std::optional<std::vector<geom::Pose2>> masked_path(
      const world::WorldState& s, const geom::Pose2& to);

  bool schema_ok(const world::WorldState& s, const world::DiscreteAction& a);

  void set_literal_cache_enabled(bool on) { literal_cache_enabled_ = on; }

  long n_motion_plans() const { return n_motion_plans_; }
  long n_transitions() const { return n_transitions_; }
  long n_full_literal_builds() const { return n_full_literal_builds_; }
  long n_derived_literal_builds() const { return n_derived_literal_builds_; }

 private:
  using PoseKey = std::array<double, 3>;
  using PosePairKey = std::array<double, 6>;

  struct StateEntry {
    world::WorldState state;
    std::optional<LiteralSet> literals;
    std::map<std::string, std::set<std::string>> occluders;
    std::map<PoseKey, std::optional<std::vector<geom::Pose2>>> masked;
    bool has_parent = false;
    world::WorldState parent_state;
    world::DiscreteAction parent_action;
  };

  StateEntry& entry(const world::WorldState& s);
  StateEntry* find_entry(const world::WorldState& s);
  LiteralSet build_literals(const world::WorldState& s,
                            const PathProvider& paths, bool use_memo);
  LiteralSet derive_literals(const LiteralSet& parent_literals,
                             const world::WorldState& parent,
                             const world::DiscreteAction& action,
                             const world::WorldState& child);
  void occlusion_literals_for_subject(const world::WorldState& s,
                                      const std::string& subject,
                                      const PathProvider& paths, bool use_memo,
                                      std::uint32_t generation,
                                      LiteralSet* out);

  world::ProblemInstance prob_;
  world::EnvConfig cfg_;
  Roadmap roadmap_;
  std::unordered_map<std::uint64_t, std::vector<std::unique_ptr<StateEntry>>>
      states_;
  std::map<PosePairKey, std::optional<NominalPath>> nominal_cache_;
  bool literal_cache_enabled_ = true;
  std::uint32_t generation_ = 0;
  long n_motion_plans_ = 0;
  long n_transitions_ = 0;
  long n_full_literal_builds_ = 0;
  long n_derived_literal_builds_ = 0;
};

}  // namespace stalm::motion
