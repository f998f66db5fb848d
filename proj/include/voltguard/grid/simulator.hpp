#pragma once

#include "voltguard/grid/network.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace voltguard::grid {

struct SimOptions {
    double dt = 0.01;
    double check_delay_s = 10.0;  ///< stability is judged this long after the shedding instant
    double v_threshold = 0.8;     ///< stable <=> min bus voltage at the check instant exceeds this
    double residual_tol = 1e-8;   ///< bus-current mismatch allowed at an accepted step
    bool record_trajectory = true;

    void validate() const;
};

/// Bus admittance matrix with branches, line charging, bus shunts, generator
/// transient admittances, constant-admittance static loads and, when given, the fault shunt.
/// Induction motors are not included; they enter the network as slip-dependent admittances.
Eigen::MatrixXcd build_admittance(const NetworkModel& network, const FaultSpec* active_fault = nullptr);

struct MotorElectrical {
    double torque = 0.0;  ///< electrical torque T_e, motor pu
    double q = 0.0;       ///< absorbed reactive power, motor pu
};

/// Closed-form torque and reactive power of the approximate equivalent circuit
/// (magnetising branch at the terminals). Throws std::domain_error for slip <= 0.
MotorElectrical motor_electrical(double v, double slip, const MotorParams& params);

/// Terminal admittance of the same circuit on the motor base.
Complex motor_admittance(double slip, const MotorParams& params);

struct MotorState {
    double slip = 0.0;
    int bus = 0;
    bool stalled = false;
};

struct GridState {
    std::vector<MotorState> motors;
    Eigen::VectorXcd v;  ///< bus voltage phasors consistent with the motor slips
};

/// The algebraic network of one operating point, with the current fault and
/// shedding configuration applied. Cheap to copy.
class Plant {
public:
    explicit Plant(NetworkModel operating);

    [[nodiscard]] const NetworkModel& network() const { return op_; }
    [[nodiscard]] int n_motors() const { return static_cast<int>(motor_size_.size()); }
    [[nodiscard]] int n_devices() const { return n_devices_; }

    void set_fault(const FaultSpec* fault);
    [[nodiscard]] bool fault_active() const { return fault_active_; }

    /// Per-device shed fractions; each scales the device's static load and motor size by (1 - L).
    void set_shed(std::span<const double> per_device);
    [[nodiscard]] const std::vector<double>& shed() const { return shed_; }

    /// Motor rating on the system base after shedding; zero means disconnected.
    [[nodiscard]] double motor_size(int motor) const { return motor_size_[static_cast<std::size_t>(motor)]; }

    [[nodiscard]] Eigen::VectorXcd solve(std::span<const double> slips) const;

    /// ds/dt for every motor at the given slips; also returns the solved voltages.
    void slip_rates(std::span<const double> slips, std::span<double> rates, Eigen::VectorXcd* voltages = nullptr) const;

    /// max |Y v - I| over buses, the algebraic residual of a solved state.
    [[nodiscard]] double current_mismatch(const Eigen::VectorXcd& v, std::span<const double> slips) const;

    [[nodiscard]] GridState initial_state(std::span<const double> slips) const;

private:
    [[nodiscard]] Eigen::MatrixXcd total_admittance(std::span<const double> slips) const;
    void rebuild();

    NetworkModel op_;
    int n_devices_ = 0;
    bool fault_active_ = false;
    FaultSpec fault_;
    std::vector<double> shed_;
    std::vector<double> motor_size_;
    Eigen::MatrixXcd y_fixed_;
    Eigen::VectorXcd i_source_;
};

/// Advances every connected motor's slip by one RK4 step of 2H ds/dt = T_m - T_e(v, s),
/// re-solving the network at each stage. Slips are clamped to (0, 1]; reaching 1 marks a stall.
void step_dynamics(const Plant& plant, GridState& state, double dt, double residual_tol = 1e-8);

/// Pre-fault steady state on the stable (low-slip) branch of every motor's torque curve.
/// Throws InfeasibleScenario when some motor has no torque balance.
GridState find_equilibrium(const Plant& plant);
GridState find_equilibrium(const ScenarioConfig& scenario);

/// Power injected into the branch network at each bus plus generator terminal output.
struct PowerFlow {
    Eigen::VectorXd p, q, v;
    Eigen::VectorXd p_gen, q_gen;
};
PowerFlow power_flow(const Plant& plant, const GridState& state);

struct TrajectoryRecord {
    double dt = 0.0;
    double horizon = 0.0;
    std::vector<double> t;
    std::vector<std::vector<double>> v;     ///< [sample][bus] magnitudes
    std::vector<std::vector<double>> slip;  ///< [sample][motor]
    std::vector<double> action;             ///< shedding in force at the check instant
    bool stalled = false;

    [[nodiscard]] std::size_t samples() const { return t.size(); }
    void write_csv(std::ostream& out) const;
};

struct SimOutcome {
    bool stable = false;
    double min_voltage_at_check = 0.0;
    std::vector<double> v_at_check;
    double deviation_instant = 0.0;  ///< sum_j (v_j - 1)^2 at the check instant
    double deviation_window = 0.0;   ///< same, averaged over samples from shedding to check
    double max_mismatch = 0.0;
    TrajectoryRecord trajectory;
};

/// Sample indices of the scheduled events of one episode.
struct Timeline {
    long fault_on = 0;
    long fault_off = 0;
    long shed = 0;
    long end = 0;
};
Timeline make_timeline(const FaultSpec& fault, const SimOptions& options);

/// Closed-loop hook evaluated at every sample before the network is solved.
/// `measured` holds the previous sample's bus-voltage magnitudes (empty at k = 0).
class ShedController {
public:
    virtual ~ShedController() = default;
    /// Returns true when `shed` was modified.
    virtual bool update(long k, double t, const Timeline& timeline, std::span<const double> measured,
                        std::vector<double>& shed) = 0;
};

/// Applies one fixed action at the clearing instant.
class SingleRoundShed final : public ShedController {
public:
    explicit SingleRoundShed(std::vector<double> action) : action_(std::move(action)) {}
    bool update(long k, double t, const Timeline& timeline, std::span<const double> measured,
                std::vector<double>& shed) override;

private:
    std::vector<double> action_;
};

SimOutcome simulate(const ScenarioConfig& scenario, ShedController& controller, const SimOptions& options = {});

/// Pre-fault equilibrium, fault, single-round shedding at clearing, then `check_delay_s` of recovery.
SimOutcome simulate_episode(const ScenarioConfig& scenario, std::span<const double> action,
                            const SimOptions& options = {});

}  // namespace voltguard::grid
