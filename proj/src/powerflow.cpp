#include "gridvc/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/LU>

namespace gridvc {

namespace {

constexpr Complex kJ{0.0, 1.0};

// Reactive-limit checks start once the mismatch is this small; flat-start
// reactive outputs are meaningless before that.
constexpr double kQLimitCheckMismatch = 1e-3;

enum class QLimit { none, at_max, at_min };

Complex series_admittance(const Branch& br) { return 1.0 / Complex(br.r, br.x); }

}  // namespace

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::singular_jacobian: return "singular_jacobian";
    case SolveStatus::non_finite: return "non_finite";
  }
  return "unknown";
}

const char* to_string(BusKind kind) {
  switch (kind) {
    case BusKind::slack: return "slack";
    case BusKind::pv: return "pv";
    case BusKind::pq: return "pq";
  }
  return "unknown";
}

int GridNetwork::slack_bus() const {
  for (int i = 0; i < n_bus(); ++i)
    if (buses[i].kind == BusKind::slack) return i;
  throw NetworkError("network has no slack bus");
}

void GridNetwork::validate() const {
  if (buses.empty()) throw NetworkError("network has no buses");
  if (base_mva <= 0) throw NetworkError("base_mva must be positive");
  int slack_count = 0;
  for (const auto& b : buses) {
    if (b.kind == BusKind::slack) ++slack_count;
    if (!(b.v_min > 0 && b.v_min < b.v_max))
      throw NetworkError("bus " + b.name + ": need 0 < v_min < v_max");
    if (b.kind != BusKind::pq && (b.v_set < kSetpointMin || b.v_set > kSetpointMax))
      throw NetworkError("bus " + b.name + ": v_set outside [0.9, 1.1]");
  }
  if (slack_count != 1)
    throw NetworkError("network needs exactly one slack bus, found " + std::to_string(slack_count));

  for (const auto& br : branches) {
    if (br.from_bus < 0 || br.from_bus >= n_bus() || br.to_bus < 0 || br.to_bus >= n_bus())
      throw NetworkError("branch references a missing bus");
    if (br.from_bus == br.to_bus) throw NetworkError("branch endpoints must differ");
    if (br.x == 0.0) throw NetworkError("branch reactance must be nonzero");
    if (!(br.s_max > 0)) throw NetworkError("branch s_max must be positive");
  }

  std::vector<int> gens_per_plant(plants.size(), 0);
  std::vector<int> plant_of_bus(buses.size(), -1);
  for (const auto& g : generators) {
    if (g.bus < 0 || g.bus >= n_bus()) throw NetworkError("generator references a missing bus");
    if (g.plant < 0 || g.plant >= n_plant())
      throw NetworkError("generator references a missing plant");
    if (g.q_min > g.q_max) throw NetworkError("generator q_min exceeds q_max");
    if (buses[g.bus].kind == BusKind::pq)
      throw NetworkError("generator on PQ bus " + buses[g.bus].name);
    if (plant_of_bus[g.bus] >= 0 && plant_of_bus[g.bus] != g.plant)
      throw NetworkError("bus " + buses[g.bus].name + " has generators from two plants");
    plant_of_bus[g.bus] = g.plant;
    ++gens_per_plant[g.plant];
  }
  for (int p = 0; p < n_plant(); ++p)
    if (gens_per_plant[p] == 0) throw NetworkError("plant " + plants[p].name + " has no generators");
  for (int i = 0; i < n_bus(); ++i)
    if (buses[i].kind != BusKind::pq && plant_of_bus[i] < 0)
      throw NetworkError("voltage-controlled bus " + buses[i].name + " has no generator");

  // Connectivity by union-find over branches.
  std::vector<int> parent(buses.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (const auto& br : branches) parent[find(br.from_bus)] = find(br.to_bus);
  const int root = find(0);
  for (int i = 1; i < n_bus(); ++i)
    if (find(i) != root) throw NetworkError("network is not connected (bus " + buses[i].name + ")");
}

Vector GridNetwork::v_min() const {
  Vector out(n_bus());
  for (int i = 0; i < n_bus(); ++i) out[i] = buses[i].v_min;
  return out;
}

Vector GridNetwork::v_max() const {
  Vector out(n_bus());
  for (int i = 0; i < n_bus(); ++i) out[i] = buses[i].v_max;
  return out;
}

Vector GridNetwork::s_max() const {
  Vector out(n_branch());
  for (int i = 0; i < n_branch(); ++i) out[i] = branches[i].s_max;
  return out;
}

Vector GridNetwork::p_load() const {
  Vector out(n_bus());
  for (int i = 0; i < n_bus(); ++i) out[i] = buses[i].p_load;
  return out;
}

Vector GridNetwork::q_load() const {
  Vector out(n_bus());
  for (int i = 0; i < n_bus(); ++i) out[i] = buses[i].q_load;
  return out;
}

ActionVec GridNetwork::plant_setpoints() const {
  ActionVec out(n_plant());
  std::vector<bool> seen(plants.size(), false);
  for (const auto& g : generators) {
    if (seen[g.plant]) continue;
    seen[g.plant] = true;
    out[g.plant] = buses[g.bus].v_set;
  }
  return out;
}

void GridNetwork::apply_plant_setpoints(const ActionVec& setpoints) {
  if (setpoints.size() != n_plant())
    throw std::invalid_argument("setpoint vector length " + std::to_string(setpoints.size()) +
                                " != plant count " + std::to_string(n_plant()));
  for (const auto& g : generators) buses[g.bus].v_set = setpoints[g.plant];
}

ComplexMatrix build_admittance(const GridNetwork& network) {
  const int n = network.n_bus();
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (const auto& br : network.branches) {
    const Complex ys = series_admittance(br);
    const Complex half_charging = kJ * (br.b_charging / 2.0);
    y(br.from_bus, br.from_bus) += ys + half_charging;
    y(br.to_bus, br.to_bus) += ys + half_charging;
    y(br.from_bus, br.to_bus) -= ys;
    y(br.to_bus, br.from_bus) -= ys;
  }
  for (int i = 0; i < n; ++i) y(i, i) += Complex(network.buses[i].shunt_g, network.buses[i].shunt_b);
  return y;
}

Eigen::VectorXcd bus_injections(const ComplexMatrix& admittance, const Vector& v_m,
                                const Vector& v_a) {
  const Eigen::Index n = v_m.size();
  Eigen::VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = std::polar(v_m[i], v_a[i]);
  const Eigen::VectorXcd current = admittance * v;
  return v.cwiseProduct(current.conjugate());
}

std::vector<BranchFlow> branch_flows(const GridNetwork& network, const Vector& v_m,
                                     const Vector& v_a) {
  std::vector<BranchFlow> flows;
  flows.reserve(network.branches.size());
  for (const auto& br : network.branches) {
    const Complex ys = series_admittance(br);
    const double g = ys.real();
    const double b = ys.imag();
    const double b0 = br.b_charging / 2.0;
    auto end_flow = [&](int i, int j) {
      const double vi = v_m[i];
      const double vj = v_m[j];
      const double th = v_a[i] - v_a[j];
      const double p = g * vi * vi - vi * vj * (g * std::cos(th) + b * std::sin(th));
      const double q = -vi * vi * (b0 + b) - vi * vj * (g * std::sin(th) - b * std::cos(th));
      return Complex(p, q);
    };
    flows.push_back({end_flow(br.from_bus, br.to_bus), end_flow(br.to_bus, br.from_bus)});
  }
  return flows;
}

Vector branch_apparent_power(const GridNetwork& network, const Vector& v_m, const Vector& v_a) {
  const auto flows = branch_flows(network, v_m, v_a);
  Vector s(network.n_branch());
  for (int k = 0; k < network.n_branch(); ++k)
    s[k] = std::max(std::abs(flows[k].from_end), std::abs(flows[k].to_end));
  return s;
}

double total_losses(const GridNetwork& network, const Vector& v_m, const Vector& v_a) {
  double loss = 0.0;
  for (const auto& f : branch_flows(network, v_m, v_a)) loss += f.from_end.real() + f.to_end.real();
  for (int i = 0; i < network.n_bus(); ++i) loss += network.buses[i].shunt_g * v_m[i] * v_m[i];
  return loss;
}

namespace {

// Splits a bus total across its generators in proportion to their reactive
// ranges (equal shares when all ranges are zero).
void share_reactive(const GridNetwork& net, const std::vector<int>& gens, double total,
                    Vector& q_g) {
  double qmin_sum = 0.0, range_sum = 0.0;
  for (int g : gens) {
    qmin_sum += net.generators[g].q_min;
    range_sum += net.generators[g].q_max - net.generators[g].q_min;
  }
  for (int g : gens) {
    const auto& gen = net.generators[g];
    if (range_sum > 0)
      q_g[g] = gen.q_min + (total - qmin_sum) * (gen.q_max - gen.q_min) / range_sum;
    else
      q_g[g] = total / static_cast<double>(gens.size());
  }
}

}  // namespace

PowerFlowSolution solve_power_flow(const GridNetwork& network, const ActionVec& plant_setpoints,
                                   const PowerFlowOptions& options) {
  if (!(options.tolerance > 0)) throw std::invalid_argument("tolerance must be positive");
  if (plant_setpoints.size() != network.n_plant())
    throw std::invalid_argument("setpoint vector length does not match plant count");
  for (Eigen::Index p = 0; p < plant_setpoints.size(); ++p)
    if (!(plant_setpoints[p] >= kSetpointMin && plant_setpoints[p] <= kSetpointMax))
      throw std::invalid_argument("plant setpoint outside [0.9, 1.1]");

  const int n = network.n_bus();
  const int slack = network.slack_bus();
  const ComplexMatrix ybus = build_admittance(network);

  std::vector<std::vector<int>> gens_at(n);
  for (int g = 0; g < network.n_gen(); ++g) gens_at[network.generators[g].bus].push_back(g);

  Vector v_set(n), p_spec(n), q_load(n), q_max_bus = Vector::Zero(n), q_min_bus = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    const auto& bus = network.buses[i];
    v_set[i] = bus.v_set;
    p_spec[i] = -bus.p_load;
    q_load[i] = bus.q_load;
  }
  for (const auto& g : network.generators) {
    v_set[g.bus] = plant_setpoints[g.plant];
    p_spec[g.bus] += g.p_g;
    q_max_bus[g.bus] += g.q_max;
    q_min_bus[g.bus] += g.q_min;
  }

  std::vector<BusKind> kind(n);
  std::vector<QLimit> limit(n, QLimit::none);
  for (int i = 0; i < n; ++i) kind[i] = network.buses[i].kind;

  Vector v_m(n), v_a = Vector::Zero(n);
  for (int i = 0; i < n; ++i) v_m[i] = kind[i] == BusKind::pq ? 1.0 : v_set[i];

  PowerFlowSolution sol;
  sol.status = SolveStatus::max_iterations;

  // Unknown ordering: angles of all non-slack buses, then magnitudes of PQ buses.
  std::vector<int> ang_idx, mag_idx;
  auto rebuild_index = [&] {
    ang_idx.clear();
    mag_idx.clear();
    for (int i = 0; i < n; ++i) {
      if (i != slack) ang_idx.push_back(i);
      if (kind[i] == BusKind::pq) mag_idx.push_back(i);
    }
  };
  rebuild_index();

  auto q_spec = [&](int i) {
    if (limit[i] == QLimit::at_max) return q_max_bus[i] - q_load[i];
    if (limit[i] == QLimit::at_min) return q_min_bus[i] - q_load[i];
    return -q_load[i];
  };

  int switch_rounds = 0;
  while (true) {
    Eigen::VectorXcd s = bus_injections(ybus, v_m, v_a);

    const int na = static_cast<int>(ang_idx.size());
    const int nm = static_cast<int>(mag_idx.size());
    Vector mismatch(na + nm);
    for (int k = 0; k < na; ++k) mismatch[k] = s[ang_idx[k]].real() - p_spec[ang_idx[k]];
    for (int k = 0; k < nm; ++k) mismatch[na + k] = s[mag_idx[k]].imag() - q_spec(mag_idx[k]);
    double max_mis = na + nm > 0 ? mismatch.cwiseAbs().maxCoeff() : 0.0;

    if (!std::isfinite(max_mis) || !v_m.allFinite() || !v_a.allFinite()) {
      sol.status = SolveStatus::non_finite;
      sol.max_mismatch = max_mis;
      break;
    }

    if (options.enforce_q_limits && max_mis < kQLimitCheckMismatch) {
      bool switched = false;
      for (int i = 0; i < n; ++i) {
        if (gens_at[i].empty() || i == slack) continue;
        const double q_gen = s[i].imag() + q_load[i];
        if (limit[i] == QLimit::none) {
          if (q_gen > q_max_bus[i]) {
            limit[i] = QLimit::at_max;
          } else if (q_gen < q_min_bus[i]) {
            limit[i] = QLimit::at_min;
          } else {
            continue;
          }
          kind[i] = BusKind::pq;
          switched = true;
        } else if ((limit[i] == QLimit::at_max && v_m[i] > v_set[i]) ||
                   (limit[i] == QLimit::at_min && v_m[i] < v_set[i])) {
          limit[i] = QLimit::none;
          kind[i] = BusKind::pv;
          v_m[i] = v_set[i];
          switched = true;
        }
      }
      if (switched) {
        // Re-evaluate the mismatch with the new bus types before stepping.
        rebuild_index();
        if (++switch_rounds > options.max_iterations) {
          sol.max_mismatch = max_mis;
          break;
        }
        continue;
      }
    }

    sol.max_mismatch = max_mis;
    if (max_mis < options.tolerance) {
      sol.converged = true;
      sol.status = SolveStatus::converged;
      break;
    }
    if (sol.iterations >= options.max_iterations) break;

    // dS/dVa and dS/dVm in complex form, then pick the rows/cols in use.
    Eigen::VectorXcd v(n), v_norm(n);
    for (int i = 0; i < n; ++i) {
      v[i] = std::polar(v_m[i], v_a[i]);
      v_norm[i] = std::polar(1.0, v_a[i]);
    }
    const Eigen::VectorXcd current = ybus * v;
    ComplexMatrix ds_dva = -(ybus * v.asDiagonal());
    ds_dva.diagonal() += current;
    ds_dva = (kJ * v).asDiagonal() * ds_dva.conjugate();
    ComplexMatrix ds_dvm = v.asDiagonal() * (ybus * v_norm.asDiagonal()).conjugate();
    ds_dvm.diagonal() += current.conjugate().cwiseProduct(v_norm);

    Eigen::MatrixXd jac(na + nm, na + nm);
    for (int r = 0; r < na; ++r) {
      for (int c = 0; c < na; ++c) jac(r, c) = ds_dva(ang_idx[r], ang_idx[c]).real();
      for (int c = 0; c < nm; ++c) jac(r, na + c) = ds_dvm(ang_idx[r], mag_idx[c]).real();
    }
    for (int r = 0; r < nm; ++r) {
      for (int c = 0; c < na; ++c) jac(na + r, c) = ds_dva(mag_idx[r], ang_idx[c]).imag();
      for (int c = 0; c < nm; ++c) jac(na + r, na + c) = ds_dvm(mag_idx[r], mag_idx[c]).imag();
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    const Vector pivots = lu.matrixLU().diagonal().cwiseAbs();
    if (!(pivots.minCoeff() > 1e-14 * pivots.maxCoeff())) {
      sol.status = SolveStatus::singular_jacobian;
      break;
    }
    const Vector dx = lu.solve(-mismatch);
    for (int k = 0; k < na; ++k) v_a[ang_idx[k]] += dx[k];
    for (int k = 0; k < nm; ++k) v_m[mag_idx[k]] += dx[na + k];
    ++sol.iterations;
  }

  sol.v_m = v_m;
  sol.v_a = v_a;
  sol.p_g = Vector::Zero(network.n_gen());
  sol.q_g = Vector::Zero(network.n_gen());
  for (int i = 0; i < n; ++i)
    if (limit[i] != QLimit::none) sol.q_limited_buses.push_back(i);

  if (!sol.converged) {
    sol.s_line = Vector::Zero(network.n_branch());
    return sol;
  }
  if ((v_m.array() <= 0).any()) {
    sol.converged = false;
    sol.status = SolveStatus::non_finite;
    sol.s_line = Vector::Zero(network.n_branch());
    return sol;
  }

  const Eigen::VectorXcd s = bus_injections(ybus, v_m, v_a);
  for (int g = 0; g < network.n_gen(); ++g) sol.p_g[g] = network.generators[g].p_g;
  for (int i = 0; i < n; ++i) {
    if (gens_at[i].empty()) continue;
    if (i == slack) {
      const double p_total = s[i].real() + network.buses[i].p_load;
      const double share = p_total / static_cast<double>(gens_at[i].size());
      for (int g : gens_at[i]) sol.p_g[g] = share;
    }
    share_reactive(network, gens_at[i], s[i].imag() + q_load[i], sol.q_g);
  }
  sol.s_line = branch_apparent_power(network, v_m, v_a);
  return sol;
}

}  // namespace gridvc
