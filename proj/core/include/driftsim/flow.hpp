#pragma once

#include <random>
#include <vector>

#include "driftsim/network.hpp"
#include "driftsim/vehicle.hpp"

namespace driftsim {

enum class DemandLevel { Low, Medium, High };

/// Exogenous demand: hourly arrival rates per entry approach, by road class,
/// plus the truck share of the generated traffic.
struct DemandSpec {
  double major_rate_vph = 900.0;
  double minor_rate_vph = 300.0;
  double truck_share = 0.0;

  static DemandSpec preset(DemandLevel level, double truck_share = 0.0);
  void validate() const;
};

/// Greenshields fundamental diagram: flow at density d is
/// v_f * d - (v_f / d_jam) * d^2, clamped to >= 0.  Throws std::domain_error
/// for negative densities.
double greenshields_flow(double density, double free_flow_speed, double jam_density);

/// Flow a lane can absorb at its current density: the capacity flow
/// v_f * d_jam / 4 while uncongested, the falling branch of the fundamental
/// diagram beyond the critical density, zero at jam.
double downstream_supply(double density, double free_flow_speed, double jam_density);

/// Inputs of the per-movement discharge bound, gathered by the caller so the
/// function itself stays a pure formula.
struct DischargeInputs {
  bool active = false;              ///< movement has right of way this step
  double rate_fraction = 1.0;       ///< 1 during green, configurable during yellow
  double queue_pce = 0.0;           ///< backlog on the from-lane
  double stopline_arrivals_pce = 0.0;  ///< PCE reaching the stop line this step
  double downstream_density = 0.0;  ///< (queue+moving)/length on the to-lane
  double downstream_speed = 15.0;   ///< free-flow speed of the to-lane, m/s
  double downstream_jam_density = 0.15;  ///< jam density of the to-lane, PCE/m
  double downstream_spare_pce = 0.0;  ///< capacity - occupancy on the to-lane
  double saturation_flow = 0.0;     ///< PCE/s of the movement
  double dt = 1.0;                  ///< s
};

/// PCE the movement may discharge this step.  Zero when inactive; otherwise
/// saturation- and supply-limited, and never more than the traffic actually
/// present (queue plus same-step stop-line arrivals) or the space downstream.
double effective_discharge(const DischargeInputs& in);

/// One-step queue recursion: max(queue - outflow + inflow + arrivals, 0),
/// additionally clamped to the lane capacity as a safety net.  All quantities
/// in PCE.
double queue_update(double queue, double inflow, double outflow, double arrivals,
                    double capacity);

/// Realized (or hypothesized) per-step flows, indexed like the network.
/// Discharge rates never exceed the movement saturation flow when these are
/// built from the fluid bound; engine-realized rates are vehicle quanta.
struct FlowRates {
  std::vector<double> movement_flow;  ///< PCE/s per movement
  std::vector<double> lane_out;       ///< PCE/s leaving each lane's queue
  std::vector<double> lane_in;        ///< PCE/s joining from upstream movements
  std::vector<double> lane_arrivals;  ///< PCE/s joining from outside the network

  static FlowRates zeros(const Network& net);
};

/// Poisson vehicle generation for one entry lane over one step.  The mean
/// count is rate_vph * dt / 3600; each vehicle is a truck with probability
/// truck_share and carries a full route sampled lane by lane from the
/// turning tables until it reaches an exit lane.
std::vector<Vehicle> generate_arrivals(const Network& net, LaneId entry_lane, double rate_vph,
                                       double truck_share, double now, double dt,
                                       std::mt19937_64& rng);

/// Hourly rate assigned to one entry lane: the approach rate of its road
/// class split between the through and left groups by the turn shares.
double entry_lane_rate(const Network& net, const DemandSpec& demand, LaneId entry_lane);

}  // namespace driftsim
