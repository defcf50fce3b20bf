#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace driftsim {

using LaneId = std::uint32_t;
using MovementId = std::uint32_t;
using PhaseId = std::uint32_t;
using IntersectionId = std::uint32_t;

inline constexpr std::uint32_t kInvalidId = 0xffffffffu;

/// Road class drives demand assignment and signal plan splits.  In generated
/// networks the horizontal (corridor) roads are Major and the crossing roads
/// are Minor.
enum class RoadClass : std::uint8_t { Major, Minor };

/// Each directed link carries two lane groups: a through group (which also
/// serves right turns) and a left-turn group.
enum class LaneRole : std::uint8_t { Through, Left };

enum class TurnKind : std::uint8_t { Through, Left, Right };

/// Geometry knobs shared by the topology builders.  Defaults describe a
/// 300 m urban link with a 15 m/s free-flow speed.
struct LaneGeometry {
  double link_length = 300.0;      ///< m
  double free_flow_speed = 15.0;   ///< m/s
  double jam_density = 0.15;       ///< PCE per metre per physical lane
  double saturation_flow = 0.5;    ///< PCE/s per physical lane
  int major_through_lanes = 2;     ///< physical lanes in a major through group
  double left_share = 0.15;        ///< probability of turning left at a junction
  double right_share = 0.15;       ///< probability of turning right
  bool fixed_sequence = false;     ///< restrict controllers to cyclic order

  void validate() const;  ///< throws std::invalid_argument on nonsense values
};

/// A lane group on a directed link.  `physical_lanes` scales storage
/// (capacity) and the saturation flow of through movements leaving the group.
struct Lane {
  LaneId id = kInvalidId;
  IntersectionId from_intersection = kInvalidId;  ///< kInvalidId at the boundary
  IntersectionId to_intersection = kInvalidId;    ///< kInvalidId for exit lanes
  double length = 0.0;           ///< m
  double free_flow_speed = 0.0;  ///< m/s
  double jam_density = 0.0;      ///< PCE/m for the whole group
  double saturation_flow = 0.0;  ///< PCE/s for the whole group
  LaneRole role = LaneRole::Through;
  RoadClass road_class = RoadClass::Major;
  int physical_lanes = 1;
  bool is_entry = false;
  bool is_exit = false;

  double capacity() const { return jam_density * length; }  ///< PCE
  double free_flow_time() const { return length / free_flow_speed; }  ///< s
};

/// A permitted crossing (l_a -> l_b) at one intersection.  `to_lane` always
/// names a real lane; for movements that leave the network it is a lane
/// flagged `is_exit`, whose queue is structurally zero.
struct Movement {
  MovementId id = kInvalidId;
  IntersectionId intersection = kInvalidId;
  LaneId from_lane = kInvalidId;
  LaneId to_lane = kInvalidId;
  double saturation_flow = 0.0;  ///< PCE/s
  TurnKind turn = TurnKind::Through;
};

/// A signal phase: the set of movements that receive right of way together.
struct Phase {
  PhaseId id = kInvalidId;
  IntersectionId intersection = kInvalidId;
  std::vector<MovementId> movements;
  std::string label;
};

struct Intersection {
  IntersectionId id = kInvalidId;
  std::vector<LaneId> incoming;   ///< sorted lane ids approaching this node
  std::vector<LaneId> outgoing;   ///< sorted lane ids departing this node
  std::vector<MovementId> movements;
  std::vector<PhaseId> phases;    ///< in cyclic order
  bool fixed_sequence = false;
};

/// One branch of a lane's turning table: the probability that a vehicle
/// leaving `from_lane` takes this movement.  Probabilities over a lane's
/// movements sum to 1.
struct TurnChoice {
  MovementId movement = kInvalidId;
  double probability = 0.0;
};

/// Immutable road network.  Built by build_arterial / build_grid, safe to
/// share across threads once constructed.
class Network {
 public:
  const Lane& lane(LaneId id) const;
  const Movement& movement(MovementId id) const;
  const Phase& phase(PhaseId id) const;
  const Intersection& intersection(IntersectionId id) const;

  const std::vector<Lane>& lanes() const { return lanes_; }
  const std::vector<Movement>& movements() const { return movements_; }
  const std::vector<Phase>& phases() const { return phases_; }
  const std::vector<Intersection>& intersections() const { return intersections_; }

  std::size_t lane_count() const { return lanes_.size(); }
  std::size_t movement_count() const { return movements_.size(); }
  std::size_t phase_count() const { return phases_.size(); }
  std::size_t intersection_count() const { return intersections_.size(); }

  /// Movements granted right of way by a phase.  Throws std::out_of_range
  /// (with the offending id in the message) for unknown phases.
  std::vector<const Movement*> phase_movements(PhaseId id) const;

  /// Turning table of a lane; empty for exit lanes.
  const std::vector<TurnChoice>& outgoing_choices(LaneId id) const;

  /// Probability that traffic leaving the movement's from-lane takes this
  /// movement (its entry in the lane's turning table).
  double turning_probability(MovementId id) const;

  const LaneGeometry& geometry() const { return geometry_; }
  int grid_rows() const { return grid_rows_; }
  int grid_cols() const { return grid_cols_; }

  /// Canonical serialized form; identical builder inputs give identical bytes.
  std::string to_json_string() const;
  /// FNV-1a hash of the canonical form; used to pin agent checkpoints to the
  /// topology they were trained on.
  std::uint64_t fingerprint() const;

  /// Structural invariants (movement lanes attach to the same node, turning
  /// tables sum to 1, every movement appears in a phase, ...).  Throws
  /// std::logic_error with a description on violation.
  void validate() const;

 private:
  friend Network build_grid(int rows, int cols, const LaneGeometry& geometry);

  std::vector<Lane> lanes_;
  std::vector<Movement> movements_;
  std::vector<Phase> phases_;
  std::vector<Intersection> intersections_;
  std::vector<std::vector<TurnChoice>> turning_;  // indexed by LaneId
  LaneGeometry geometry_;
  int grid_rows_ = 0;
  int grid_cols_ = 0;
};

/// Corridor of `n` signalized intersections along one major road, with minor
/// crossing roads.  Equivalent to build_grid(1, n).
Network build_arterial(int n_intersections, const LaneGeometry& geometry = {});

/// rows x cols lattice; horizontal roads are Major, vertical roads Minor.
/// Throws std::invalid_argument when rows or cols < 1.
Network build_grid(int rows, int cols, const LaneGeometry& geometry = {});

/// Mutable per-lane flow state: queue backlog at the stop line and PCE still
/// travelling on the free-flow section, both indexed by LaneId.
struct NetworkState {
  std::vector<double> queue;   ///< PCE backlog
  std::vector<double> moving;  ///< PCE upstream of the stop line
  double time = 0.0;           ///< s

  static NetworkState zeros(const Network& net);
  double total_queue() const;
  double density(const Network& net, LaneId id) const;  ///< (queue+moving)/length
};

}  // namespace driftsim
