#include "driftsim/network.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace driftsim {

namespace {

// Compass side an approach arrives from (W = eastbound traffic) / departs to.
enum Side : int { kWest = 0, kEast = 1, kNorth = 2, kSouth = 3 };

struct LinkLanes {
  LaneId through = kInvalidId;
  LaneId left = kInvalidId;
  bool internal = false;  // true when the link ends at another intersection
  bool exists() const { return through != kInvalidId; }
};

}  // namespace

void LaneGeometry::validate() const {
  if (link_length <= 0 || free_flow_speed <= 0 || jam_density <= 0 ||
      saturation_flow <= 0) {
    throw std::invalid_argument("LaneGeometry: lengths, speeds and flows must be positive");
  }
  if (major_through_lanes < 1) {
    throw std::invalid_argument("LaneGeometry: major_through_lanes must be >= 1");
  }
  if (left_share < 0 || right_share < 0 || left_share + right_share >= 1.0) {
    throw std::invalid_argument(
        "LaneGeometry: turn shares must be non-negative and leave a positive through share");
  }
}

const Lane& Network::lane(LaneId id) const {
  if (id >= lanes_.size()) {
    throw std::out_of_range("Network: unknown lane id " + std::to_string(id));
  }
  return lanes_[id];
}

const Movement& Network::movement(MovementId id) const {
  if (id >= movements_.size()) {
    throw std::out_of_range("Network: unknown movement id " + std::to_string(id));
  }
  return movements_[id];
}

const Phase& Network::phase(PhaseId id) const {
  if (id >= phases_.size()) {
    throw std::out_of_range("Network: unknown phase id " + std::to_string(id));
  }
  return phases_[id];
}

const Intersection& Network::intersection(IntersectionId id) const {
  if (id >= intersections_.size()) {
    throw std::out_of_range("Network: unknown intersection id " + std::to_string(id));
  }
  return intersections_[id];
}

std::vector<const Movement*> Network::phase_movements(PhaseId id) const {
  const Phase& p = phase(id);
  std::vector<const Movement*> out;
  out.reserve(p.movements.size());
  for (MovementId m : p.movements) out.push_back(&movement(m));
  return out;
}

const std::vector<TurnChoice>& Network::outgoing_choices(LaneId id) const {
  if (id >= turning_.size()) {
    throw std::out_of_range("Network: unknown lane id " + std::to_string(id));
  }
  return turning_[id];
}

double Network::turning_probability(MovementId id) const {
  const Movement& m = movement(id);
  for (const TurnChoice& c : turning_[m.from_lane]) {
    if (c.movement == id) return c.probability;
  }
  throw std::logic_error("Network: movement " + std::to_string(id) +
                         " missing from its lane's turning table");
}

std::string Network::to_json_string() const {
  nlohmann::json j;
  j["grid"] = {grid_rows_, grid_cols_};
  j["geometry"] = {
      {"link_length", geometry_.link_length},
      {"free_flow_speed", geometry_.free_flow_speed},
      {"jam_density", geometry_.jam_density},
      {"saturation_flow", geometry_.saturation_flow},
      {"major_through_lanes", geometry_.major_through_lanes},
      {"left_share", geometry_.left_share},
      {"right_share", geometry_.right_share},
      {"fixed_sequence", geometry_.fixed_sequence},
  };
  auto& lanes = j["lanes"] = nlohmann::json::array();
  for (const Lane& l : lanes_) {
    lanes.push_back({
        {"id", l.id},
        {"from", l.from_intersection},
        {"to", l.to_intersection},
        {"length", l.length},
        {"speed", l.free_flow_speed},
        {"jam_density", l.jam_density},
        {"saturation_flow", l.saturation_flow},
        {"role", l.role == LaneRole::Through ? "through" : "left"},
        {"class", l.road_class == RoadClass::Major ? "major" : "minor"},
        {"physical_lanes", l.physical_lanes},
        {"entry", l.is_entry},
        {"exit", l.is_exit},
    });
  }
  auto& movements = j["movements"] = nlohmann::json::array();
  for (const Movement& m : movements_) {
    movements.push_back({
        {"id", m.id},
        {"intersection", m.intersection},
        {"from", m.from_lane},
        {"to", m.to_lane},
        {"saturation_flow", m.saturation_flow},
        {"turn", m.turn == TurnKind::Through ? "through"
                : m.turn == TurnKind::Left  ? "left"
                                            : "right"},
    });
  }
  auto& phases = j["phases"] = nlohmann::json::array();
  for (const Phase& p : phases_) {
    phases.push_back({{"id", p.id},
                      {"intersection", p.intersection},
                      {"label", p.label},
                      {"movements", p.movements}});
  }
  auto& turning = j["turning"] = nlohmann::json::array();
  for (const auto& table : turning_) {
    nlohmann::json row = nlohmann::json::array();
    for (const TurnChoice& c : table) row.push_back({{"movement", c.movement}, {"p", c.probability}});
    turning.push_back(std::move(row));
  }
  return j.dump();
}

std::uint64_t Network::fingerprint() const {
  // FNV-1a over the canonical serialized form.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : to_json_string()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void Network::validate() const {
  if (intersections_.empty()) {
    throw std::logic_error("Network: no intersections");
  }
  for (const Lane& l : lanes_) {
    if (l.capacity() <= 0 || l.saturation_flow <= 0 || l.free_flow_speed <= 0) {
      throw std::logic_error("Network: lane " + std::to_string(l.id) +
                             " has non-positive capacity, saturation flow or speed");
    }
  }
  std::vector<char> in_some_phase(movements_.size(), 0);
  for (const Phase& p : phases_) {
    if (p.movements.empty()) {
      throw std::logic_error("Network: phase " + std::to_string(p.id) + " grants no movements");
    }
    for (MovementId mid : p.movements) {
      const Movement& m = movement(mid);
      if (m.intersection != p.intersection) {
        throw std::logic_error("Network: phase " + std::to_string(p.id) +
                               " grants movement of another intersection");
      }
      in_some_phase[mid] = 1;
    }
  }
  for (const Movement& m : movements_) {
    const Lane& a = lane(m.from_lane);
    const Lane& b = lane(m.to_lane);
    if (a.to_intersection != m.intersection || b.from_intersection != m.intersection) {
      throw std::logic_error("Network: movement " + std::to_string(m.id) +
                             " does not attach both lanes to its intersection");
    }
    if (!in_some_phase[m.id]) {
      throw std::logic_error("Network: movement " + std::to_string(m.id) +
                             " appears in no phase");
    }
  }
  for (const Intersection& node : intersections_) {
    if (node.phases.size() < 2) {
      throw std::logic_error("Network: intersection " + std::to_string(node.id) +
                             " has fewer than two phases");
    }
  }
  for (const Lane& l : lanes_) {
    const auto& table = turning_[l.id];
    if (l.is_exit) {
      if (!table.empty()) {
        throw std::logic_error("Network: exit lane " + std::to_string(l.id) +
                               " has outgoing movements");
      }
      continue;
    }
    if (table.empty()) {
      throw std::logic_error("Network: lane " + std::to_string(l.id) +
                             " has no outgoing movements");
    }
    double sum = 0;
    for (const TurnChoice& c : table) {
      if (c.probability < 0 || c.probability > 1) {
        throw std::logic_error("Network: turning probability out of [0,1] on lane " +
                               std::to_string(l.id));
      }
      sum += c.probability;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::logic_error("Network: turning probabilities on lane " + std::to_string(l.id) +
                             " sum to " + std::to_string(sum));
    }
  }
}

Network build_arterial(int n_intersections, const LaneGeometry& geometry) {
  return build_grid(1, n_intersections, geometry);
}

Network build_grid(int rows, int cols, const LaneGeometry& geometry) {
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("build_grid: rows and cols must be >= 1");
  }
  geometry.validate();

  Network net;
  net.geometry_ = geometry;
  net.grid_rows_ = rows;
  net.grid_cols_ = cols;

  const int n = rows * cols;
  net.intersections_.resize(n);
  for (int i = 0; i < n; ++i) net.intersections_[i].id = static_cast<IntersectionId>(i);

  auto node = [cols](int r, int c) { return static_cast<IntersectionId>(r * cols + c); };

  std::vector<std::array<LinkLanes, 4>> in_link(n);   // by side the traffic comes from
  std::vector<std::array<LinkLanes, 4>> out_link(n);  // by side the link departs to

  auto make_link = [&](IntersectionId from, IntersectionId to, RoadClass cls) {
    LinkLanes link;
    link.internal = (to != kInvalidId);
    for (LaneRole role : {LaneRole::Through, LaneRole::Left}) {
      Lane l;
      l.id = static_cast<LaneId>(net.lanes_.size());
      l.from_intersection = from;
      l.to_intersection = to;
      l.length = geometry.link_length;
      l.free_flow_speed = geometry.free_flow_speed;
      l.role = role;
      l.road_class = cls;
      l.physical_lanes =
          (role == LaneRole::Through && cls == RoadClass::Major) ? geometry.major_through_lanes : 1;
      l.jam_density = geometry.jam_density * l.physical_lanes;
      l.saturation_flow = geometry.saturation_flow * l.physical_lanes;
      l.is_entry = (from == kInvalidId);
      l.is_exit = (to == kInvalidId);
      if (role == LaneRole::Through) {
        link.through = l.id;
      } else {
        link.left = l.id;
      }
      net.lanes_.push_back(l);
    }
    return link;
  };

  // Horizontal (major) roads, row by row: the eastbound chain, then westbound.
  for (int r = 0; r < rows; ++r) {
    in_link[node(r, 0)][kWest] = make_link(kInvalidId, node(r, 0), RoadClass::Major);
    for (int c = 0; c + 1 < cols; ++c) {
      LinkLanes l = make_link(node(r, c), node(r, c + 1), RoadClass::Major);
      out_link[node(r, c)][kEast] = l;
      in_link[node(r, c + 1)][kWest] = l;
    }
    out_link[node(r, cols - 1)][kEast] = make_link(node(r, cols - 1), kInvalidId, RoadClass::Major);

    in_link[node(r, cols - 1)][kEast] = make_link(kInvalidId, node(r, cols - 1), RoadClass::Major);
    for (int c = cols - 1; c > 0; --c) {
      LinkLanes l = make_link(node(r, c), node(r, c - 1), RoadClass::Major);
      out_link[node(r, c)][kWest] = l;
      in_link[node(r, c - 1)][kEast] = l;
    }
    out_link[node(r, 0)][kWest] = make_link(node(r, 0), kInvalidId, RoadClass::Major);
  }

  // Vertical (minor) roads, column by column: southbound chain, then northbound.
  for (int c = 0; c < cols; ++c) {
    in_link[node(0, c)][kNorth] = make_link(kInvalidId, node(0, c), RoadClass::Minor);
    for (int r = 0; r + 1 < rows; ++r) {
      LinkLanes l = make_link(node(r, c), node(r + 1, c), RoadClass::Minor);
      out_link[node(r, c)][kSouth] = l;
      in_link[node(r + 1, c)][kNorth] = l;
    }
    out_link[node(rows - 1, c)][kSouth] = make_link(node(rows - 1, c), kInvalidId, RoadClass::Minor);

    in_link[node(rows - 1, c)][kSouth] = make_link(kInvalidId, node(rows - 1, c), RoadClass::Minor);
    for (int r = rows - 1; r > 0; --r) {
      LinkLanes l = make_link(node(r, c), node(r - 1, c), RoadClass::Minor);
      out_link[node(r, c)][kNorth] = l;
      in_link[node(r - 1, c)][kSouth] = l;
    }
    out_link[node(0, c)][kNorth] = make_link(node(0, c), kInvalidId, RoadClass::Minor);
  }

  net.turning_.resize(net.lanes_.size());

  const double ls = geometry.left_share;
  const double rs = geometry.right_share;
  const double ts = 1.0 - ls - rs;

  // Right-hand traffic: destination side of each turn, per approach side.
  // through, right, left in that order.
  constexpr int kTargets[4][3] = {
      /* from W */ {kEast, kSouth, kNorth},
      /* from E */ {kWest, kNorth, kSouth},
      /* from N */ {kSouth, kWest, kEast},
      /* from S */ {kNorth, kEast, kWest},
  };

  for (int i = 0; i < n; ++i) {
    Intersection& x = net.intersections_[i];
    x.fixed_sequence = geometry.fixed_sequence;

    // movements with the destination lane resolved by the vehicle's next turn:
    // an internal destination link splits into its through and left groups.
    auto add_movements = [&](LaneId from, TurnKind turn, const LinkLanes& to_link,
                             double branch_prob, double group_sat,
                             std::vector<MovementId>& phase_set) {
      struct Dest {
        LaneId lane;
        double split;
      };
      std::array<Dest, 2> dests{};
      int n_dests = 0;
      if (to_link.internal) {
        dests[n_dests++] = {to_link.through, 1.0 - ls};
        if (ls > 0) dests[n_dests++] = {to_link.left, ls};
      } else {
        dests[n_dests++] = {to_link.through, 1.0};
      }
      for (int d = 0; d < n_dests; ++d) {
        Movement m;
        m.id = static_cast<MovementId>(net.movements_.size());
        m.intersection = x.id;
        m.from_lane = from;
        m.to_lane = dests[d].lane;
        m.saturation_flow = group_sat;
        m.turn = turn;
        net.movements_.push_back(m);
        x.movements.push_back(m.id);
        phase_set.push_back(m.id);
        net.turning_[from].push_back({m.id, branch_prob * dests[d].split});
      }
    };

    std::vector<MovementId> major_through, major_left, minor_through, minor_left;
    for (int side : {kWest, kEast, kNorth, kSouth}) {
      const LinkLanes& in = in_link[i][side];
      const Lane& through_group = net.lanes_[in.through];
      const bool major = (side == kWest || side == kEast);
      std::vector<MovementId>& through_set = major ? major_through : minor_through;
      std::vector<MovementId>& left_set = major ? major_left : minor_left;

      // The through lane group also serves right turns; renormalize the two
      // branches over traffic that did not commit to a left turn upstream.
      const double p_through = ts / (ts + rs);
      const double p_right = rs / (ts + rs);
      add_movements(in.through, TurnKind::Through, out_link[i][kTargets[side][0]], p_through,
                    through_group.saturation_flow, through_set);
      if (rs > 0) {
        add_movements(in.through, TurnKind::Right, out_link[i][kTargets[side][1]], p_right,
                      geometry.saturation_flow, through_set);
      }
      add_movements(in.left, TurnKind::Left, out_link[i][kTargets[side][2]], 1.0,
                    geometry.saturation_flow, left_set);
    }

    auto add_phase = [&](std::vector<MovementId> set, const char* label) {
      Phase p;
      p.id = static_cast<PhaseId>(net.phases_.size());
      p.intersection = x.id;
      p.movements = std::move(set);
      p.label = label;
      x.phases.push_back(p.id);
      net.phases_.push_back(std::move(p));
    };
    add_phase(std::move(major_through), "major-through");
    add_phase(std::move(major_left), "major-left");
    add_phase(std::move(minor_through), "minor-through");
    add_phase(std::move(minor_left), "minor-left");
  }

  for (const Lane& l : net.lanes_) {
    if (l.to_intersection != kInvalidId) {
      net.intersections_[l.to_intersection].incoming.push_back(l.id);
    }
    if (l.from_intersection != kInvalidId) {
      net.intersections_[l.from_intersection].outgoing.push_back(l.id);
    }
  }
  for (Intersection& x : net.intersections_) {
    std::sort(x.incoming.begin(), x.incoming.end());
    std::sort(x.outgoing.begin(), x.outgoing.end());
  }

  net.validate();
  return net;
}

NetworkState NetworkState::zeros(const Network& net) {
  NetworkState s;
  s.queue.assign(net.lane_count(), 0.0);
  s.moving.assign(net.lane_count(), 0.0);
  return s;
}

double NetworkState::total_queue() const {
  double sum = 0;
  for (double q : queue) sum += q;
  return sum;
}

double NetworkState::density(const Network& net, LaneId id) const {
  const Lane& l = net.lane(id);
  return (queue[id] + moving[id]) / l.length;
}

}  // namespace driftsim
