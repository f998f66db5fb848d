#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace voltguard::grid {

using Complex = std::complex<double>;

/// Induction-motor equivalent-circuit parameters, per unit on the motor's own base.
struct MotorParams {
    double r_s = 0.01;   ///< stator resistance
    double x_s = 0.12;   ///< stator leakage reactance
    double r_r = 0.02;   ///< rotor resistance
    double x_r = 0.12;   ///< rotor leakage reactance
    double x_m = 3.0;    ///< magnetising reactance
    double H = 0.4;      ///< inertia constant (s)
    double T_m = 0.7;    ///< constant mechanical load torque

    void validate() const;
};

struct Branch {
    int from = 0;
    int to = 0;
    Complex z{0.0, 0.1};
    double b_shunt = 0.0;  ///< total line charging, split half at each end
};

/// Classical generator: constant internal voltage behind transient reactance.
struct Generator {
    int bus = 0;
    double e_internal = 1.0;
    double x_transient = 0.05;
};

/// Composite load at one bus. Motors serve `motor_share` of `p`; the rest of
/// `p` and all of `q` are a constant-admittance static load.
struct BusLoad {
    int bus = 0;
    double p = 0.0;
    double q = 0.0;
    double motor_share = 0.0;
    int zone = 0;
    int device = -1;  ///< shedding device index, -1 when not sheddable
};

struct FaultSpec {
    int bus = 0;
    double start_s = 0.1;
    double clearing_s = 0.18;  ///< fault duration
    double shunt = 1e4;        ///< fault shunt admittance magnitude (pu)

    void validate(int n_bus) const;
};

struct NetworkModel {
    std::string name;
    int n_bus = 0;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    std::vector<BusLoad> loads;
    std::vector<double> bus_shunt_b;  ///< fixed shunt susceptance per bus (capacitive > 0)
    MotorParams motor;
    FaultSpec default_fault;  ///< the contingency agents are trained against

    [[nodiscard]] int n_gen() const { return static_cast<int>(generators.size()); }
    [[nodiscard]] int n_zones() const;
    [[nodiscard]] int n_devices() const;

    /// Throws ConfigError on a disconnected graph, bad indices, or out-of-range shares.
    void validate() const;
};

/// One sampling unit: a pre-fault operating point plus the fault to study.
struct ScenarioConfig {
    std::string id;
    std::string system;                ///< name of a shipped NetworkModel
    std::vector<double> zone_scaling;  ///< fraction of base load per zone
    std::vector<double> motor_share;   ///< per load entry, same order as NetworkModel::loads
    FaultSpec fault;
    std::uint64_t seed = 0;

    void validate(const NetworkModel& network) const;
};

/// Infinite bus -> line -> composite load. One generator, one shedding device.
NetworkModel two_bus_system();

/// Two-zone system with three load buses; only the zone-2 buses carry shedding devices.
NetworkModel five_bus_system();

/// Looks up a shipped system by name ("two-bus" or "five-bus").
const NetworkModel& shipped_system(std::string_view name);

/// Network with the scenario's zone scaling and motor shares applied to its loads.
NetworkModel operating_network(const NetworkModel& base, const ScenarioConfig& scenario);

/// Copy of the scenario with every zone scaled by `factor`.
ScenarioConfig scale_loads(const ScenarioConfig& scenario, double factor);

/// The scenario with its base-case defaults: every zone at `scaling`, default motor shares.
ScenarioConfig nominal_scenario(const NetworkModel& network, double scaling = 1.0);

}  // namespace voltguard::grid
