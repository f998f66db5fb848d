#include "voltguard/grid/network.hpp"

#include "voltguard/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace voltguard::grid {

void MotorParams::validate() const {
    if (!(x_s > 0.0 && x_r > 0.0 && x_m > 0.0)) throw ConfigError("motor reactances must be positive");
    if (!(r_s >= 0.0)) throw ConfigError("motor stator resistance must be non-negative");
    if (!(r_r > 0.0)) throw ConfigError("motor rotor resistance must be positive");
    if (!(H > 0.0)) throw ConfigError("motor inertia must be positive");
    if (!(T_m >= 0.0)) throw ConfigError("motor mechanical torque must be non-negative");
}

int NetworkModel::n_zones() const {
    int zones = 0;
    for (const auto& l : loads) zones = std::max(zones, l.zone + 1);
    return zones;
}

int NetworkModel::n_devices() const {
    int devices = 0;
    for (const auto& l : loads) devices = std::max(devices, l.device + 1);
    return devices;
}

void NetworkModel::validate() const {
    if (n_bus <= 0) throw ConfigError("network '" + name + "' has no buses");
    auto check_bus = [&](int b, const char* what) {
        if (b < 0 || b >= n_bus) throw ConfigError(std::string(what) + " references bus " + std::to_string(b));
    };
    if (generators.size() != 1) {
        throw ConfigError("network '" + name + "' must have exactly one source generator");
    }
    for (const auto& g : generators) {
        check_bus(g.bus, "generator");
        if (!(g.x_transient > 0.0)) throw ConfigError("generator transient reactance must be positive");
        if (!(g.e_internal > 0.0)) throw ConfigError("generator internal voltage must be positive");
    }
    for (const auto& br : branches) {
        check_bus(br.from, "branch");
        check_bus(br.to, "branch");
        if (br.from == br.to) throw ConfigError("branch endpoints must differ");
        if (std::abs(br.z) == 0.0) throw ConfigError("branch impedance must be non-zero");
    }
    std::vector<int> device_seen;
    for (const auto& l : loads) {
        check_bus(l.bus, "load");
        if (l.motor_share < 0.0 || l.motor_share > 1.0) throw ConfigError("motor share must lie in [0, 1]");
        if (l.zone < 0) throw ConfigError("load zone must be non-negative");
        if (l.device >= 0) device_seen.push_back(l.device);
    }
    std::sort(device_seen.begin(), device_seen.end());
    for (std::size_t i = 0; i < device_seen.size(); ++i) {
        if (device_seen[i] != static_cast<int>(i)) throw ConfigError("shedding devices must be numbered 0..n_d-1 once each");
    }
    if (!bus_shunt_b.empty() && static_cast<int>(bus_shunt_b.size()) != n_bus) {
        throw ConfigError("bus_shunt_b must have one entry per bus");
    }
    motor.validate();
    default_fault.validate(n_bus);

    // connectivity by union-find
    const auto n = static_cast<std::size_t>(n_bus);
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& br : branches) {
        parent[find(static_cast<std::size_t>(br.from))] = find(static_cast<std::size_t>(br.to));
    }
    for (std::size_t b = 1; b < n; ++b) {
        if (find(b) != find(0)) throw ConfigError("network '" + name + "' is not connected (bus " + std::to_string(b) + ")");
    }
}

void FaultSpec::validate(int n_bus) const {
    if (bus < 0 || bus >= n_bus) throw ConfigError("fault bus out of range");
    if (!(start_s >= 0.0)) throw ConfigError("fault start must be non-negative");
    if (!(clearing_s > 0.0)) throw ConfigError("fault clearing time must be positive");
    if (!(shunt > 0.0)) throw ConfigError("fault shunt must be positive");
}

void ScenarioConfig::validate(const NetworkModel& network) const {
    if (static_cast<int>(zone_scaling.size()) != network.n_zones()) {
        throw ConfigError("scenario '" + id + "': expected " + std::to_string(network.n_zones()) + " zone scalings");
    }
    if (motor_share.size() != network.loads.size()) {
        throw ConfigError("scenario '" + id + "': expected one motor share per load");
    }
    for (double k : zone_scaling) {
        if (!(k > 0.0) || !std::isfinite(k)) throw ConfigError("scenario '" + id + "': zone scaling must be positive");
    }
    for (double m : motor_share) {
        if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("scenario '" + id + "': motor share must lie in [0, 1]");
    }
    fault.validate(network.n_bus);
}

NetworkModel two_bus_system() {
    NetworkModel net;
    net.name = "two-bus";
    net.n_bus = 2;
    net.generators = {{.bus = 0, .e_internal = 1.05, .x_transient = 0.05}};
    net.branches = {{.from = 0, .to = 1, .z = {0.0, 0.3}, .b_shunt = 0.0}};
    net.loads = {{.bus = 1, .p = 1.0, .q = 0.3, .motor_share = 0.55, .zone = 0, .device = 0}};
    net.bus_shunt_b = {0.0, 0.5};
    net.default_fault = {.bus = 1, .start_s = 0.1, .clearing_s = 0.18, .shunt = 1e4};
    return net;
}

NetworkModel five_bus_system() {
    NetworkModel net;
    net.name = "five-bus";
    net.n_bus = 5;
    net.generators = {{.bus = 0, .e_internal = 1.05, .x_transient = 0.04}};
    net.branches = {
        {.from = 0, .to = 1, .z = {0.005, 0.06}, .b_shunt = 0.02},
        {.from = 1, .to = 2, .z = {0.01, 0.12}, .b_shunt = 0.01},
        {.from = 1, .to = 3, .z = {0.01, 0.16}, .b_shunt = 0.01},
        {.from = 3, .to = 4, .z = {0.008, 0.10}, .b_shunt = 0.01},
        {.from = 2, .to = 4, .z = {0.02, 0.30}, .b_shunt = 0.0},
    };
    net.loads = {
        {.bus = 2, .p = 0.6, .q = 0.15, .motor_share = 0.55, .zone = 0, .device = -1},
        {.bus = 3, .p = 0.5, .q = 0.15, .motor_share = 0.55, .zone = 1, .device = 0},
        {.bus = 4, .p = 0.5, .q = 0.15, .motor_share = 0.55, .zone = 1, .device = 1},
    };
    net.bus_shunt_b = {0.0, 0.0, 0.25, 0.25, 0.25};
    net.default_fault = {.bus = 3, .start_s = 0.1, .clearing_s = 0.18, .shunt = 1e4};
    return net;
}

const NetworkModel& shipped_system(std::string_view name) {
    static const NetworkModel two = two_bus_system();
    static const NetworkModel five = five_bus_system();
    if (name == two.name) return two;
    if (name == five.name) return five;
    throw ConfigError("unknown system '" + std::string(name) + "'");
}

NetworkModel operating_network(const NetworkModel& base, const ScenarioConfig& scenario) {
    scenario.validate(base);
    NetworkModel op = base;
    for (std::size_t i = 0; i < op.loads.size(); ++i) {
        auto& l = op.loads[i];
        const double k = scenario.zone_scaling[static_cast<std::size_t>(l.zone)];
        l.p *= k;
        l.q *= k;
        l.motor_share = scenario.motor_share[i];
    }
    return op;
}

ScenarioConfig scale_loads(const ScenarioConfig& scenario, double factor) {
    ScenarioConfig out = scenario;
    for (double& k : out.zone_scaling) k *= factor;
    return out;
}

ScenarioConfig nominal_scenario(const NetworkModel& network, double scaling) {
    ScenarioConfig s;
    s.id = network.name + "-nominal";
    s.system = network.name;
    s.zone_scaling.assign(static_cast<std::size_t>(network.n_zones()), scaling);
    for (const auto& l : network.loads) s.motor_share.push_back(l.motor_share);
    s.fault = network.default_fault;
    return s;
}

}  // namespace voltguard::grid
