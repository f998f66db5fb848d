#include "voltguard/grid/simulator.hpp"

#include "voltguard/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace voltguard::grid {

namespace {

constexpr double kMinSlip = 1e-9;
constexpr Complex kJ{0.0, 1.0};

double clamp_slip(double s) { return std::clamp(s, kMinSlip, 1.0); }

double base_motor_size(const BusLoad& load, const MotorParams& motor) {
    const double p_motor = load.motor_share * load.p;
    return motor.T_m > 0.0 ? p_motor / motor.T_m : p_motor;
}

Eigen::MatrixXcd assemble(const NetworkModel& net, std::span<const double> load_scale, const FaultSpec* fault) {
    const auto n = static_cast<Eigen::Index>(net.n_bus);
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : net.branches) {
        const Complex ys = 1.0 / br.z;
        const Complex half_charging = kJ * (0.5 * br.b_shunt);
        y(br.from, br.from) += ys + half_charging;
        y(br.to, br.to) += ys + half_charging;
        y(br.from, br.to) -= ys;
        y(br.to, br.from) -= ys;
    }
    for (std::size_t b = 0; b < net.bus_shunt_b.size(); ++b) {
        y(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)) += kJ * net.bus_shunt_b[b];
    }
    for (const auto& g : net.generators) y(g.bus, g.bus) += 1.0 / (kJ * g.x_transient);
    for (std::size_t i = 0; i < net.loads.size(); ++i) {
        const auto& l = net.loads[i];
        const double scale = load_scale.empty() ? 1.0 : load_scale[i];
        const double p_static = (1.0 - l.motor_share) * l.p * scale;
        const double q_static = l.q * scale;
        y(l.bus, l.bus) += Complex{p_static, -q_static};
    }
    if (fault != nullptr) y(fault->bus, fault->bus) += fault->shunt;
    return y;
}

}  // namespace

void SimOptions::validate() const {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    if (!(check_delay_s > 0.0)) throw ConfigError("check delay must be positive");
    if (!(v_threshold > 0.0)) throw ConfigError("voltage threshold must be positive");
}

Eigen::MatrixXcd build_admittance(const NetworkModel& network, const FaultSpec* active_fault) {
    network.validate();
    if (active_fault != nullptr) active_fault->validate(network.n_bus);
    return assemble(network, {}, active_fault);
}

MotorElectrical motor_electrical(double v, double slip, const MotorParams& params) {
    if (!(slip > 0.0)) throw std::domain_error("motor slip must be positive");
    const double rr_s = params.r_r / slip;
    const double r = params.r_s + rr_s;
    const double x = params.x_s + params.x_r;
    const double den = r * r + x * x;
    const double v2 = v * v;
    return {.torque = v2 * rr_s / den, .q = v2 / params.x_m + v2 * x / den};
}

Complex motor_admittance(double slip, const MotorParams& params) {
    if (!(slip > 0.0)) throw std::domain_error("motor slip must be positive");
    const Complex series{params.r_s + params.r_r / slip, params.x_s + params.x_r};
    return 1.0 / (kJ * params.x_m) + 1.0 / series;
}

// ---------------------------------------------------------------------------

Plant::Plant(NetworkModel operating) : op_(std::move(operating)) {
    op_.validate();
    n_devices_ = op_.n_devices();
    shed_.assign(static_cast<std::size_t>(n_devices_), 0.0);
    const auto n = static_cast<Eigen::Index>(op_.n_bus);
    i_source_ = Eigen::VectorXcd::Zero(n);
    for (const auto& g : op_.generators) i_source_(g.bus) += g.e_internal / (kJ * g.x_transient);
    rebuild();
}

void Plant::set_fault(const FaultSpec* fault) {
    const bool active = fault != nullptr;
    if (active) fault->validate(op_.n_bus);
    if (active == fault_active_ && (!active || (fault->bus == fault_.bus && fault->shunt == fault_.shunt))) return;
    fault_active_ = active;
    if (active) fault_ = *fault;
    rebuild();
}

void Plant::set_shed(std::span<const double> per_device) {
    if (static_cast<int>(per_device.size()) != n_devices_) {
        throw DimensionError("expected " + std::to_string(n_devices_) + " shed fractions, got " +
                             std::to_string(per_device.size()));
    }
    for (double l : per_device) {
        if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("shed fractions must lie in [0, 1]");
    }
    if (std::equal(per_device.begin(), per_device.end(), shed_.begin())) return;
    shed_.assign(per_device.begin(), per_device.end());
    rebuild();
}

void Plant::rebuild() {
    std::vector<double> scale(op_.loads.size(), 1.0);
    motor_size_.assign(op_.loads.size(), 0.0);
    for (std::size_t i = 0; i < op_.loads.size(); ++i) {
        const auto& l = op_.loads[i];
        if (l.device >= 0) scale[i] = 1.0 - shed_[static_cast<std::size_t>(l.device)];
        motor_size_[i] = base_motor_size(l, op_.motor) * scale[i];
    }
    y_fixed_ = assemble(op_, scale, fault_active_ ? &fault_ : nullptr);
}

Eigen::MatrixXcd Plant::total_admittance(std::span<const double> slips) const {
    Eigen::MatrixXcd y = y_fixed_;
    for (std::size_t i = 0; i < motor_size_.size(); ++i) {
        if (motor_size_[i] <= 0.0) continue;
        const int bus = op_.loads[i].bus;
        y(bus, bus) += motor_size_[i] * motor_admittance(clamp_slip(slips[i]), op_.motor);
    }
    return y;
}

Eigen::VectorXcd Plant::solve(std::span<const double> slips) const {
    if (slips.size() != motor_size_.size()) throw DimensionError("one slip per motor required");
    const Eigen::MatrixXcd y = total_admittance(slips);
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y);
    Eigen::VectorXcd v = lu.solve(i_source_);
    if (!v.allFinite()) throw ConfigError("network admittance matrix is singular");
    return v;
}

void Plant::slip_rates(std::span<const double> slips, std::span<double> rates, Eigen::VectorXcd* voltages) const {
    Eigen::VectorXcd v = solve(slips);
    const auto& m = op_.motor;
    for (std::size_t i = 0; i < motor_size_.size(); ++i) {
        if (motor_size_[i] <= 0.0) {
            rates[i] = 0.0;
            continue;
        }
        const double vm = std::abs(v(op_.loads[i].bus));
        const double te = motor_electrical(vm, clamp_slip(slips[i]), m).torque;
        rates[i] = (m.T_m - te) / (2.0 * m.H);
    }
    if (voltages != nullptr) *voltages = std::move(v);
}

double Plant::current_mismatch(const Eigen::VectorXcd& v, std::span<const double> slips) const {
    const Eigen::VectorXcd r = total_admittance(slips) * v - i_source_;
    return r.cwiseAbs().maxCoeff();
}

GridState Plant::initial_state(std::span<const double> slips) const {
    GridState st;
    st.motors.resize(motor_size_.size());
    for (std::size_t i = 0; i < st.motors.size(); ++i) {
        st.motors[i].slip = slips[i];
        st.motors[i].bus = op_.loads[i].bus;
    }
    st.v = solve(slips);
    return st;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> slips_of(const GridState& state) {
    std::vector<double> s(state.motors.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = state.motors[i].slip;
    return s;
}

void rk4_step(const Plant& plant, GridState& state, double dt, double residual_tol) {
    const std::size_t m = state.motors.size();
    std::vector<double> s0 = slips_of(state), tmp(m), k1(m), k2(m), k3(m), k4(m);
    plant.slip_rates(s0, k1);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = clamp_slip(s0[i] + 0.5 * dt * k1[i]);
    plant.slip_rates(tmp, k2);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = clamp_slip(s0[i] + 0.5 * dt * k2[i]);
    plant.slip_rates(tmp, k3);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = clamp_slip(s0[i] + dt * k3[i]);
    plant.slip_rates(tmp, k4);
    for (std::size_t i = 0; i < m; ++i) {
        auto& motor = state.motors[i];
        if (plant.motor_size(static_cast<int>(i)) <= 0.0) continue;
        double s = s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (s >= 1.0) {
            s = 1.0;
            motor.stalled = true;
        }
        motor.slip = clamp_slip(s);
    }
    const std::vector<double> s1 = slips_of(state);
    state.v = plant.solve(s1);
    const double mismatch = plant.current_mismatch(state.v, s1);
    if (!(mismatch <= residual_tol)) {
        throw NumericalError("network solve residual " + std::to_string(mismatch) + " exceeds tolerance");
    }
}

}  // namespace

void step_dynamics(const Plant& plant, GridState& state, double dt, double residual_tol) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    if (static_cast<int>(state.motors.size()) != plant.n_motors()) throw DimensionError("motor state count mismatch");
    rk4_step(plant, state, dt, residual_tol);
}

// ---------------------------------------------------------------------------

namespace {

/// Smallest slip at which motor i's torque balance turns non-negative with the
/// other slips held fixed, or a negative value when none exists.
double stable_root(const Plant& plant, std::vector<double> slips, std::size_t i) {
    std::vector<double> rates(slips.size());
    auto g = [&](double s) {
        slips[i] = s;
        plant.slip_rates(slips, rates);
        return -rates[i];  // proportional to T_e - T_m
    };
    double lo = 1e-7;
    if (g(lo) >= 0.0) return lo;
    double hi = lo;
    bool found = false;
    while (hi < 1.0) {
        const double next = std::min(1.0, hi * 1.15);
        if (g(next) >= 0.0) {
            lo = hi;
            hi = next;
            found = true;
            break;
        }
        hi = next;
    }
    if (!found) return -1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (g(mid) >= 0.0) hi = mid;
        else lo = mid;
    }
    return 0.5 * (lo + hi);
}

double max_abs(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

GridState find_equilibrium(const Plant& plant) {
    const auto m = static_cast<std::size_t>(plant.n_motors());
    std::vector<double> slips(m, 1e-3), rates(m);
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < m; ++i) {
        if (plant.motor_size(static_cast<int>(i)) > 0.0) active.push_back(i);
    }

    auto sweep = [&] {
        double change = 0.0;
        for (std::size_t i : active) {
            const double root = stable_root(plant, slips, i);
            if (root < 0.0) {
                throw InfeasibleScenario("motor at bus " + std::to_string(plant.network().loads[i].bus) +
                                         " has no stable operating slip");
            }
            change = std::max(change, std::abs(root - slips[i]));
            slips[i] = root;
        }
        return change;
    };

    sweep();
    plant.slip_rates(slips, rates);
    // Newton polish on the coupled balance, starting on the stable branch
    for (int it = 0; it < 30 && max_abs(rates) > 1e-13 && active.size() > 1; ++it) {
        const auto k = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd jac(k, k);
        Eigen::VectorXd f(k);
        for (Eigen::Index a = 0; a < k; ++a) f(a) = rates[active[static_cast<std::size_t>(a)]];
        std::vector<double> pert(m);
        for (Eigen::Index c = 0; c < k; ++c) {
            const std::size_t ic = active[static_cast<std::size_t>(c)];
            const double h = 1e-7 * std::max(slips[ic], 1e-4);
            std::vector<double> sp = slips;
            sp[ic] += h;
            plant.slip_rates(sp, pert);
            for (Eigen::Index r = 0; r < k; ++r) jac(r, c) = (pert[active[static_cast<std::size_t>(r)]] - f(r)) / h;
        }
        const Eigen::VectorXd step = jac.partialPivLu().solve(-f);
        for (Eigen::Index a = 0; a < k; ++a) {
            const std::size_t ia = active[static_cast<std::size_t>(a)];
            slips[ia] = std::clamp(slips[ia] + step(a), 0.5 * slips[ia], 2.0 * slips[ia]);
        }
        plant.slip_rates(slips, rates);
    }
    for (int guard = 0; guard < 500 && max_abs(rates) > 1e-12; ++guard) {
        if (sweep() < 1e-15) break;
        plant.slip_rates(slips, rates);
    }
    plant.slip_rates(slips, rates);
    if (!(max_abs(rates) < 1e-9)) {
        throw InfeasibleScenario("pre-fault equilibrium did not converge (residual " + std::to_string(max_abs(rates)) + ")");
    }
    // every motor must sit where its torque rises with slip
    for (std::size_t i : active) {
        std::vector<double> sp = slips, pert(m);
        sp[i] *= 1.0 + 1e-6;
        plant.slip_rates(sp, pert);
        if (!(pert[i] < rates[i])) {
            throw InfeasibleScenario("pre-fault equilibrium lies on the unstable branch of the torque curve");
        }
    }
    return plant.initial_state(slips);
}

GridState find_equilibrium(const ScenarioConfig& scenario) {
    const Plant plant(operating_network(shipped_system(scenario.system), scenario));
    return find_equilibrium(plant);
}

PowerFlow power_flow(const Plant& plant, const GridState& state) {
    const auto& net = plant.network();
    const auto n = static_cast<Eigen::Index>(net.n_bus);
    Eigen::MatrixXcd ybr = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : net.branches) {
        const Complex ys = 1.0 / br.z;
        const Complex half = kJ * (0.5 * br.b_shunt);
        ybr(br.from, br.from) += ys + half;
        ybr(br.to, br.to) += ys + half;
        ybr(br.from, br.to) -= ys;
        ybr(br.to, br.from) -= ys;
    }
    const Eigen::VectorXcd i_net = ybr * state.v;
    PowerFlow pf;
    pf.p.resize(n);
    pf.q.resize(n);
    pf.v.resize(n);
    for (Eigen::Index b = 0; b < n; ++b) {
        const Complex s = state.v(b) * std::conj(i_net(b));
        pf.p(b) = s.real();
        pf.q(b) = s.imag();
        pf.v(b) = std::abs(state.v(b));
    }
    const auto ng = static_cast<Eigen::Index>(net.generators.size());
    pf.p_gen.resize(ng);
    pf.q_gen.resize(ng);
    for (Eigen::Index g = 0; g < ng; ++g) {
        const auto& gen = net.generators[static_cast<std::size_t>(g)];
        const Complex vt = state.v(gen.bus);
        const Complex ig = (gen.e_internal - vt) / (kJ * gen.x_transient);
        const Complex s = vt * std::conj(ig);
        pf.p_gen(g) = s.real();
        pf.q_gen(g) = s.imag();
    }
    return pf;
}

// ---------------------------------------------------------------------------

void TrajectoryRecord::write_csv(std::ostream& out) const {
    const std::size_t nb = v.empty() ? 0 : v.front().size();
    const std::size_t nm = slip.empty() ? 0 : slip.front().size();
    out << "t";
    for (std::size_t b = 0; b < nb; ++b) out << ",v_bus" << b + 1;
    for (std::size_t m = 0; m < nm; ++m) out << ",slip_motor" << m + 1;
    out << '\n';
    out << std::setprecision(12);
    for (std::size_t k = 0; k < t.size(); ++k) {
        out << t[k];
        for (double x : v[k]) out << ',' << x;
        for (double x : slip[k]) out << ',' << x;
        out << '\n';
    }
}

Timeline make_timeline(const FaultSpec& fault, const SimOptions& options) {
    options.validate();
    const double dt = options.dt;
    const long check = std::lround(options.check_delay_s / dt);
    Timeline tl;
    tl.fault_on = std::lround(fault.start_s / dt);
    if (fault.clearing_s >= options.check_delay_s) {
        // sustained fault: never cleared inside the simulated window
        tl.fault_off = std::numeric_limits<long>::max();
        tl.shed = tl.fault_on + check;
    } else {
        tl.fault_off = std::lround((fault.start_s + fault.clearing_s) / dt);
        tl.shed = tl.fault_off;
    }
    tl.end = tl.shed + check;
    return tl;
}

bool SingleRoundShed::update(long k, double, const Timeline& timeline, std::span<const double>,
                             std::vector<double>& shed) {
    if (k != timeline.shed) return false;
    if (action_.size() != shed.size()) throw DimensionError("action length must equal the device count");
    shed = action_;
    return true;
}

SimOutcome simulate(const ScenarioConfig& scenario, ShedController& controller, const SimOptions& options) {
    options.validate();
    const Plant base(operating_network(shipped_system(scenario.system), scenario));
    const GridState eq = find_equilibrium(base);
    Plant plant = base;
    GridState state = eq;
    const Timeline tl = make_timeline(scenario.fault, options);
    const auto nb = static_cast<std::size_t>(plant.network().n_bus);

    SimOutcome out;
    auto& traj = out.trajectory;
    traj.dt = options.dt;
    traj.horizon = static_cast<double>(tl.end) * options.dt;
    if (options.record_trajectory) {
        traj.t.reserve(static_cast<std::size_t>(tl.end + 1));
        traj.v.reserve(static_cast<std::size_t>(tl.end + 1));
        traj.slip.reserve(static_cast<std::size_t>(tl.end + 1));
    }

    std::vector<double> shed(static_cast<std::size_t>(plant.n_devices()), 0.0);
    std::vector<double> measured;
    std::vector<double> vmag(nb);
    double window_sum = 0.0;
    long window_count = 0;

    for (long k = 0; k <= tl.end; ++k) {
        const double t = static_cast<double>(k) * options.dt;
        bool changed = false;
        const bool fault_on = k >= tl.fault_on && k < tl.fault_off;
        if (fault_on != plant.fault_active()) {
            plant.set_fault(fault_on ? &scenario.fault : nullptr);
            changed = true;
        }
        if (controller.update(k, t, tl, measured, shed)) {
            plant.set_shed(shed);
            changed = true;
        }
        const std::vector<double> slips = slips_of(state);
        if (changed) state.v = plant.solve(slips);
        const double mismatch = plant.current_mismatch(state.v, slips);
        out.max_mismatch = std::max(out.max_mismatch, mismatch);
        if (!(mismatch <= options.residual_tol)) {
            throw NumericalError("scenario '" + scenario.id + "': network residual " + std::to_string(mismatch));
        }
        double dev = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            vmag[b] = std::abs(state.v(static_cast<Eigen::Index>(b)));
            dev += (vmag[b] - 1.0) * (vmag[b] - 1.0);
        }
        if (k >= tl.shed) {
            window_sum += dev;
            ++window_count;
        }
        if (options.record_trajectory) {
            traj.t.push_back(t);
            traj.v.push_back(vmag);
            traj.slip.push_back(slips);
        }
        measured = vmag;
        if (k == tl.end) {
            out.v_at_check = vmag;
            out.min_voltage_at_check = *std::min_element(vmag.begin(), vmag.end());
            out.deviation_instant = dev;
            break;
        }
        try {
            rk4_step(plant, state, options.dt, options.residual_tol);
        } catch (const NumericalError& e) {
            throw NumericalError("scenario '" + scenario.id + "': " + e.what());
        }
    }
    out.deviation_window = window_count > 0 ? window_sum / static_cast<double>(window_count) : 0.0;
    out.stable = out.min_voltage_at_check > options.v_threshold;
    traj.action = shed;
    for (const auto& m : state.motors) traj.stalled = traj.stalled || m.stalled;
    return out;
}

SimOutcome simulate_episode(const ScenarioConfig& scenario, std::span<const double> action, const SimOptions& options) {
    for (double a : action) {
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("action components must lie in [0, 1]");
    }
    SingleRoundShed controller(std::vector<double>(action.begin(), action.end()));
    return simulate(scenario, controller, options);
}

}  // namespace voltguard::grid
