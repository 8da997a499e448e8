#include <fstream>
#include <map>
#include <ostream>

#include "gridvc/powerflow.hpp"
#include "gridvc/records.hpp"

namespace gridvc {

namespace {

constexpr const char* kMagic = "gridvc-network";

BusKind parse_kind(const std::string& text) {
  if (text == "slack") return BusKind::slack;
  if (text == "pv") return BusKind::pv;
  if (text == "pq") return BusKind::pq;
  throw FormatError("unknown bus kind '" + text + "'");
}

}  // namespace

GridNetwork parse_network(std::istream& in, const std::string& source_name) {
  const RecordFile file = parse_records(in, source_name);
  require_header(file, kMagic, 1, source_name);

  GridNetwork net;
  const Record& head = file.single("network");
  net.name = head.get_or("name", "unnamed");
  net.base_mva = head.get_double_or("base_mva", 100.0);
  const double default_v_min = head.get_double_or("v_min", 0.97);
  const double default_v_max = head.get_double_or("v_max", 1.07);

  std::map<std::string, int> bus_index, plant_index;
  for (const Record* r : file.section("bus")) {
    Bus b;
    b.name = r->get("name");
    b.kind = parse_kind(r->get_or("kind", "pq"));
    b.v_set = r->get_double_or("v_set", 1.0);
    b.p_load = r->get_double_or("p_load", 0.0);
    b.q_load = r->get_double_or("q_load", 0.0);
    b.v_min = r->get_double_or("v_min", default_v_min);
    b.v_max = r->get_double_or("v_max", default_v_max);
    b.shunt_g = r->get_double_or("shunt_g", 0.0);
    b.shunt_b = r->get_double_or("shunt_b", 0.0);
    if (!bus_index.emplace(b.name, net.n_bus()).second)
      throw FormatError(source_name + ": duplicate bus '" + b.name + "'");
    net.buses.push_back(std::move(b));
  }
  auto bus_ref = [&](const Record& r, const char* key) {
    auto it = bus_index.find(r.get(key));
    if (it == bus_index.end())
      throw FormatError(source_name + ":" + std::to_string(r.line) + ": unknown bus '" + r.get(key) + "'");
    return it->second;
  };

  for (const Record* r : file.section("branch")) {
    Branch br;
    br.from_bus = bus_ref(*r, "from");
    br.to_bus = bus_ref(*r, "to");
    br.r = r->get_double_or("r", 0.0);
    br.x = r->get_double("x");
    br.b_charging = r->get_double_or("b", 0.0);
    br.s_max = r->get_double("s_max");
    net.branches.push_back(br);
  }
  for (const Record* r : file.section("plant")) {
    Plant p{r->get("name")};
    if (!plant_index.emplace(p.name, net.n_plant()).second)
      throw FormatError(source_name + ": duplicate plant '" + p.name + "'");
    net.plants.push_back(std::move(p));
  }
  for (const Record* r : file.section("generator")) {
    Generator g;
    g.bus = bus_ref(*r, "bus");
    auto it = plant_index.find(r->get("plant"));
    if (it == plant_index.end())
      throw FormatError(source_name + ":" + std::to_string(r->line) + ": unknown plant '" +
                        r->get("plant") + "'");
    g.plant = it->second;
    g.p_g = r->get_double_or("p_g", 0.0);
    g.q_min = r->get_double("q_min");
    g.q_max = r->get_double("q_max");
    net.generators.push_back(g);
  }
  net.validate();
  return net;
}

GridNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open network file " + path.string());
  return parse_network(in, path.string());
}

void write_network(std::ostream& out, const GridNetwork& net) {
  out << "# " << kMagic << " v1\n";
  out << "[network]\nname=" << net.name << " base_mva=" << format_double(net.base_mva) << "\n\n";
  out << "[bus]\n";
  for (const auto& b : net.buses) {
    out << "name=" << b.name << " kind=" << to_string(b.kind) << " v_set=" << format_double(b.v_set)
        << " p_load=" << format_double(b.p_load) << " q_load=" << format_double(b.q_load)
        << " v_min=" << format_double(b.v_min) << " v_max=" << format_double(b.v_max)
        << " shunt_g=" << format_double(b.shunt_g) << " shunt_b=" << format_double(b.shunt_b)
        << "\n";
  }
  out << "\n[branch]\n";
  for (const auto& br : net.branches) {
    out << "from=" << net.buses[br.from_bus].name << " to=" << net.buses[br.to_bus].name
        << " r=" << format_double(br.r) << " x=" << format_double(br.x)
        << " b=" << format_double(br.b_charging) << " s_max=" << format_double(br.s_max) << "\n";
  }
  out << "\n[plant]\n";
  for (const auto& p : net.plants) out << "name=" << p.name << "\n";
  out << "\n[generator]\n";
  for (const auto& g : net.generators) {
    out << "bus=" << net.buses[g.bus].name << " plant=" << net.plants[g.plant].name
        << " p_g=" << format_double(g.p_g) << " q_min=" << format_double(g.q_min)
        << " q_max=" << format_double(g.q_max) << "\n";
  }
}

}  // namespace gridvc
