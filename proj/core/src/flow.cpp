#include "driftsim/flow.hpp"

#include <algorithm>
#include <stdexcept>

namespace driftsim {

DemandSpec DemandSpec::preset(DemandLevel level, double truck_share) {
  DemandSpec d;
  switch (level) {
    case DemandLevel::Low:
      d.major_rate_vph = 500.0;
      d.minor_rate_vph = 200.0;
      break;
    case DemandLevel::Medium:
      d.major_rate_vph = 900.0;
      d.minor_rate_vph = 300.0;
      break;
    case DemandLevel::High:
      d.major_rate_vph = 1300.0;
      d.minor_rate_vph = 400.0;
      break;
  }
  d.truck_share = truck_share;
  return d;
}

void DemandSpec::validate() const {
  if (major_rate_vph < 0 || minor_rate_vph < 0) {
    throw std::invalid_argument("DemandSpec: arrival rates must be non-negative");
  }
  if (truck_share < 0 || truck_share > 1) {
    throw std::invalid_argument("DemandSpec: truck_share must lie in [0,1]");
  }
}

double greenshields_flow(double density, double free_flow_speed, double jam_density) {
  if (density < 0) {
    throw std::domain_error("greenshields_flow: negative density");
  }
  double flow = free_flow_speed * density - (free_flow_speed / jam_density) * density * density;
  return std::max(flow, 0.0);
}

double downstream_supply(double density, double free_flow_speed, double jam_density) {
  // Receiving capacity: flat at the capacity flow until the critical density,
  // then the congested branch of the fundamental diagram.
  return greenshields_flow(std::max(density, 0.5 * jam_density), free_flow_speed, jam_density);
}

double effective_discharge(const DischargeInputs& in) {
  if (!in.active || in.rate_fraction <= 0) return 0.0;
  double supply =
      downstream_supply(in.downstream_density, in.downstream_speed, in.downstream_jam_density);
  double rate = std::min(in.saturation_flow, supply) * in.rate_fraction;
  double pce = rate * in.dt;
  pce = std::min(pce, in.queue_pce + in.stopline_arrivals_pce);
  pce = std::min(pce, in.downstream_spare_pce);
  return std::max(pce, 0.0);
}

double queue_update(double queue, double inflow, double outflow, double arrivals,
                    double capacity) {
  double next = std::max(queue - outflow + inflow + arrivals, 0.0);
  return std::min(next, capacity);
}

FlowRates FlowRates::zeros(const Network& net) {
  FlowRates f;
  f.movement_flow.assign(net.movement_count(), 0.0);
  f.lane_out.assign(net.lane_count(), 0.0);
  f.lane_in.assign(net.lane_count(), 0.0);
  f.lane_arrivals.assign(net.lane_count(), 0.0);
  return f;
}

namespace {

MovementId sample_choice(const std::vector<TurnChoice>& table, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  double u = uniform(rng);
  double acc = 0.0;
  for (const TurnChoice& c : table) {
    acc += c.probability;
    if (u < acc) return c.movement;
  }
  return table.back().movement;
}

}  // namespace

std::vector<Vehicle> generate_arrivals(const Network& net, LaneId entry_lane, double rate_vph,
                                       double truck_share, double now, double dt,
                                       std::mt19937_64& rng) {
  const Lane& entry = net.lane(entry_lane);
  if (!entry.is_entry) {
    throw std::invalid_argument("generate_arrivals: lane " + std::to_string(entry_lane) +
                                " is not an entry lane");
  }
  if (rate_vph < 0) {
    throw std::invalid_argument("generate_arrivals: negative arrival rate");
  }
  std::vector<Vehicle> out;
  if (rate_vph == 0) return out;

  std::poisson_distribution<int> count_dist(rate_vph * dt / 3600.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  int count = count_dist(rng);
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    Vehicle v;
    v.kind = uniform(rng) < truck_share ? VehicleKind::Truck : VehicleKind::Car;
    v.pce = pce_of(v.kind);
    v.lane = entry_lane;
    v.position = VehiclePosition::MovingOn;
    v.spawn_time = now;
    v.stopline_eta = now + entry.free_flow_time();
    LaneId at = entry_lane;
    while (!net.lane(at).is_exit) {
      MovementId m = sample_choice(net.outgoing_choices(at), rng);
      v.route.push_back(m);
      at = net.movement(m).to_lane;
    }
    out.push_back(std::move(v));
  }
  return out;
}

double entry_lane_rate(const Network& net, const DemandSpec& demand, LaneId entry_lane) {
  const Lane& l = net.lane(entry_lane);
  if (!l.is_entry) {
    throw std::invalid_argument("entry_lane_rate: lane " + std::to_string(entry_lane) +
                                " is not an entry lane");
  }
  double approach = l.road_class == RoadClass::Major ? demand.major_rate_vph : demand.minor_rate_vph;
  double share = l.role == LaneRole::Left ? net.geometry().left_share : 1.0 - net.geometry().left_share;
  return approach * share;
}

}  // namespace driftsim
