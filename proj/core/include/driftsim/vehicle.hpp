#pragma once

#include <cstdint>
#include <vector>

#include "driftsim/network.hpp"

namespace driftsim {

enum class VehicleKind : std::uint8_t { Car, Truck };

/// Passenger-car-equivalent weight of a vehicle class.
inline double pce_of(VehicleKind k) { return k == VehicleKind::Truck ? 2.0 : 1.0; }

enum class VehiclePosition : std::uint8_t { MovingOn, QueuedOn, Exited };

/// One tracked vehicle.  The route is the ordered list of movements it will
/// take, sampled from the turning tables when the vehicle is generated; the
/// lane sequence follows from it.  `stopped_time` accrues once per step while
/// the vehicle sits in a stop-line queue.
struct Vehicle {
  std::uint64_t id = 0;
  VehicleKind kind = VehicleKind::Car;
  double pce = 1.0;
  std::vector<MovementId> route;
  std::size_t route_pos = 0;
  LaneId lane = kInvalidId;
  VehiclePosition position = VehiclePosition::MovingOn;
  double spawn_time = 0.0;     ///< s, when the vehicle entered the network
  double stopline_eta = 0.0;   ///< s, when it reaches the end of its lane
  double stopped_time = 0.0;   ///< s
  double exit_time = 0.0;      ///< s, valid once position == Exited

  /// Next movement on the route, or nullopt when the current lane is an exit.
  std::optional<MovementId> next_movement() const {
    if (route_pos >= route.size()) return std::nullopt;
    return route[route_pos];
  }
};

}  // namespace driftsim
