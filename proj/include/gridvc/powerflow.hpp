#pragma once

// Static grid model and Newton-Raphson AC power flow.
//
// All quantities are per-unit on the network's base_mva; angles are radians.
// Bus, branch, generator and plant references are zero-based indices into the
// corresponding GridNetwork vectors.

#include <complex>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gridvc {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXd;

// Plant voltage setpoints, one per plant.
using ActionVec = Eigen::VectorXd;

inline constexpr double kSetpointMin = 0.9;
inline constexpr double kSetpointMax = 1.1;

enum class BusKind { slack, pv, pq };

struct Bus {
  std::string name;
  BusKind kind = BusKind::pq;
  double v_set = 1.0;
  double p_load = 0.0;
  double q_load = 0.0;
  double v_min = 0.97;
  double v_max = 1.07;
  double shunt_g = 0.0;
  double shunt_b = 0.0;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  // Total line charging; half is placed at each end.
  double b_charging = 0.0;
  double s_max = 1.0;
};

struct Generator {
  int bus = 0;
  int plant = 0;
  double p_g = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
};

struct Plant {
  std::string name;
};

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridNetwork {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<Plant> plants;

  int n_bus() const { return static_cast<int>(buses.size()); }
  int n_branch() const { return static_cast<int>(branches.size()); }
  int n_gen() const { return static_cast<int>(generators.size()); }
  int n_plant() const { return static_cast<int>(plants.size()); }
  int slack_bus() const;

  // Throws NetworkError describing the first violated structural invariant.
  void validate() const;

  Vector v_min() const;
  Vector v_max() const;
  Vector s_max() const;
  Vector p_load() const;
  Vector q_load() const;
  // Current plant setpoints, read from the first generator bus of each plant.
  ActionVec plant_setpoints() const;

  // Copies each plant's setpoint onto the v_set of all its generators' buses.
  void apply_plant_setpoints(const ActionVec& setpoints);
};

struct PowerFlowOptions {
  double tolerance = 1e-8;
  int max_iterations = 20;
  bool enforce_q_limits = true;
};

enum class SolveStatus { converged, max_iterations, singular_jacobian, non_finite };

struct PowerFlowSolution {
  Vector v_m;
  Vector v_a;
  Vector s_line;
  Vector p_g;
  Vector q_g;
  bool converged = false;
  SolveStatus status = SolveStatus::max_iterations;
  int iterations = 0;
  double max_mismatch = 0.0;
  // Buses that ended the solve as PQ because a generator hit a reactive limit.
  std::vector<int> q_limited_buses;
};

const char* to_string(SolveStatus status);
const char* to_string(BusKind kind);

// Bus admittance matrix: series elements, half line charging at each end,
// and bus shunts.
ComplexMatrix build_admittance(const GridNetwork& network);

// Newton-Raphson on the polar mismatch equations from a flat start.
// Each plant setpoint becomes the voltage magnitude target of all its
// generators' buses. Divergence is reported through `converged`/`status`.
PowerFlowSolution solve_power_flow(const GridNetwork& network, const ActionVec& plant_setpoints,
                                   const PowerFlowOptions& options = {});

struct BranchFlow {
  Complex from_end;  // S_ij injected into the branch at from_bus
  Complex to_end;    // S_ji injected into the branch at to_bus
};

std::vector<BranchFlow> branch_flows(const GridNetwork& network, const Vector& v_m,
                                     const Vector& v_a);

// Per-branch apparent power, the larger of the two ends.
Vector branch_apparent_power(const GridNetwork& network, const Vector& v_m, const Vector& v_a);

// Net complex injection at every bus implied by the voltages, S = V conj(Y V).
Eigen::VectorXcd bus_injections(const ComplexMatrix& admittance, const Vector& v_m,
                                const Vector& v_a);

// Total active losses: series branch losses plus shunt conductance losses.
double total_losses(const GridNetwork& network, const Vector& v_m, const Vector& v_a);

GridNetwork load_network(const std::filesystem::path& path);
GridNetwork parse_network(std::istream& in, const std::string& source_name);
void write_network(std::ostream& out, const GridNetwork& network);

}  // namespace gridvc
