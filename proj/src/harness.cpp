#include "flowobs/harness.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <functional>
#include <limits>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "flowobs/error.hpp"
#include "flowobs/io.hpp"
#include "flowobs/noise.hpp"
#include "flowobs/svg.hpp"
#include "flowobs/symmetric_eigen.hpp"
#include "json.hpp"

namespace flowobs {

using json = nlohmann::ordered_json;

std::string to_string(TruthKind k) {
    switch (k) {
        case TruthKind::none: return "none";
        case TruthKind::linear: return "linear";
        case TruthKind::parametric: return "parametric";
    }
    return "unknown";
}

void ExperimentConfig::validate() const {
    battery.validate();
    observer_model.validate();
    const auto n = static_cast<std::size_t>(observer_model.state_dim());
    if (x_hat0.size() != n)
        throw ConfigError("observer.x_hat0 must have " + std::to_string(n) + " entries (order_l + 2)");
    for (double v : x_hat0)
        if (!std::isfinite(v)) throw ConfigError("observer.x_hat0 has a non-finite entry");
    if (!(std::isfinite(observer_dt) && observer_dt > 0.0)) throw ConfigError("observer.dt must be > 0");
    synthesis_config().validate();
    bounds.validate();

    if (!(std::isfinite(truth.k_mt) && truth.k_mt >= 0.0)) throw ConfigError("crossover_truth.k_mt must be >= 0");
    if (!truth.omega0.empty() && truth.omega0.size() != static_cast<std::size_t>(observer_model.order_l))
        throw ConfigError("crossover_truth.omega0 must have order_l entries");

    const auto& e = experiment;
    if (!(std::isfinite(e.horizon) && e.horizon > 0.0)) throw ConfigError("experiment.horizon must be > 0");
    if (!(std::isfinite(e.sim_dt) && e.sim_dt > 0.0)) throw ConfigError("experiment.sim_dt must be > 0");
    if (!(e.sample_period >= e.sim_dt)) throw ConfigError("experiment.sample_period must be >= experiment.sim_dt");
    const double ratio = e.sample_period / e.sim_dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
        throw ConfigError("experiment.sample_period must be an integer multiple of experiment.sim_dt");
    if (!(e.horizon >= e.sample_period)) throw ConfigError("experiment.horizon must be >= experiment.sample_period");
    if (!(std::isfinite(e.noise_mv) && e.noise_mv >= 0.0)) throw ConfigError("experiment.noise_mv must be >= 0");
    for (double v : {e.z0.soc, e.z0.soc_cell})
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("experiment.z0 entries must lie in [0, 1]");
    if (!std::isfinite(e.current)) throw ConfigError("experiment.current must be finite");
    if (!(std::isfinite(e.flow_rate) && e.flow_rate > 0.0)) throw ConfigError("experiment.flow_rate must be > 0");
    if (e.verify_samples < 2) throw ConfigError("experiment.verify_samples must be >= 2");

    if (!(euub.rho > 0.0 && euub.rho <= 1.0)) throw ConfigError("euub.rho must lie in (0, 1]");
    if (!(euub.mu > 0.0 && euub.mu <= 1.0)) throw ConfigError("euub.mu must lie in (0, 1]");
    if (!(euub.r >= 0.0)) throw ConfigError("euub.r must be >= 0");
    if (!(euub.sigma >= 0.0 && euub.sigma <= 1.0)) throw ConfigError("euub.sigma must lie in [0, 1]");
}

SynthesisConfig ExperimentConfig::synthesis_config() const {
    SynthesisConfig sc = synthesis;
    sc.cfg = observer_model;
    sc.params = battery;
    return sc;
}

ObserverConfig ExperimentConfig::observer_config(const Vector& gain_factor) const {
    ObserverConfig oc;
    oc.params = battery;
    oc.cfg = observer_model;
    oc.gain_factor = gain_factor;
    Vector x0(static_cast<Eigen::Index>(x_hat0.size()));
    for (std::size_t i = 0; i < x_hat0.size(); ++i) x0(static_cast<Eigen::Index>(i)) = x_hat0[i];
    oc.x_hat0 = AugmentedState(x0);
    oc.dt = observer_dt;
    oc.flow_range = FlowRange{synthesis.q_min, synthesis.q_max};
    return oc;
}

// ---------------------------------------------------------------------------
// config parsing

namespace {

// Reads one JSON object, tracking which keys were consumed so that leftovers
// can be reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config field '" + path_ + "' must be an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        const auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        seen_.push_back(key);
        return &*it;
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    void number(const std::string& key, double& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number()) throw ConfigError("config field '" + field(key) + "' must be a number");
            out = v->get<double>();
        }
    }

    void integer(const std::string& key, int& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer()) throw ConfigError("config field '" + field(key) + "' must be an integer");
            out = v->get<int>();
        }
    }

    void unsigned_integer(const std::string& key, std::uint64_t& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_unsigned())
                throw ConfigError("config field '" + field(key) + "' must be a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }

    void string(const std::string& key, std::string& out) {
        if (const auto* v = find(key)) {
            if (!v->is_string()) throw ConfigError("config field '" + field(key) + "' must be a string");
            out = v->get<std::string>();
        }
    }

    bool numbers(const std::string& key, std::vector<double>& out) {
        const auto* v = find(key);
        if (!v) return false;
        if (!v->is_array()) throw ConfigError("config field '" + field(key) + "' must be an array of numbers");
        out.clear();
        for (std::size_t i = 0; i < v->size(); ++i) {
            if (!(*v)[i].is_number())
                throw ConfigError("config field '" + field(key) + "[" + std::to_string(i) + "]' must be a number");
            out.push_back((*v)[i].get<double>());
        }
        return true;
    }

    std::optional<Section> child(const std::string& key) {
        const auto* v = find(key);
        if (!v) return std::nullopt;
        return Section(*v, field(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                throw ConfigError("unknown config key '" + field(it.key()) + "'");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

void read_battery(Section s, BatteryParams& b) {
    s.number("v_res", b.v_res);
    s.number("v_cell", b.v_cell);
    s.number("c0", b.c0);
    s.number("epsilon", b.epsilon);
    s.number("e0_cell", b.e0_cell);
    s.number("r_ohm", b.r_ohm);
    if (auto c = s.child("constants")) {
        c->number("faraday", b.constants.faraday);
        c->number("gas_constant", b.constants.gas_constant);
        c->number("temperature", b.constants.temperature);
        c->finish();
    }
    s.finish();
}

void read_solver(Section s, sdp::Options& o) {
    s.number("feas_tol", o.feas_tol);
    s.number("gap_tol", o.gap_tol);
    s.integer("max_iter", o.max_iter);
    s.number("mu_initial", o.mu_initial);
    s.number("mu_factor", o.mu_factor);
    s.number("centering_tol", o.centering_tol);
    s.number("phase1_box", o.phase1_box);
    s.number("armijo", o.armijo);
    s.number("backtrack", o.backtrack);
    s.finish();
}

void read_bounds(Section s, BoundSet& b) {
    s.number("gamma_z", b.gamma_z);
    s.number("gamma_theta", b.gamma_theta);
    s.number("gamma_omega", b.gamma_omega);
    s.number("eps_bar", b.eps_bar);
    s.number("gamma_psi", b.gamma_psi);
    s.number("gamma_psi_tilde", b.gamma_psi_tilde);
    s.number("gamma_s_tilde", b.gamma_s_tilde);
    s.number("gamma_t", b.gamma_t);
    s.number("tau_m", b.tau_m);
    s.number("tau_m_upper", b.tau_m_upper);
    s.finish();
}

std::size_t line_of(const std::string& text, std::size_t byte) {
    const auto end = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n'));
}

std::vector<double> default_x_hat0(int state_dim) {
    std::vector<double> x(static_cast<std::size_t>(state_dim), 0.0);
    x[0] = 0.87;
    x[1] = 0.85;
    return x;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config line " + std::to_string(line_of(text, e.byte)) + ": syntax error: " + e.what());
    }

    ExperimentConfig c;
    Section top(root, "");
    if (auto s = top.child("battery")) read_battery(*s, c.battery);

    bool have_x_hat0 = false;
    if (auto s = top.child("observer")) {
        s->integer("order_l", c.observer_model.order_l);
        s->numbers("lambda", c.observer_model.lambda);
        s->number("varrho", c.observer_model.varrho);
        have_x_hat0 = s->numbers("x_hat0", c.x_hat0);
        s->number("dt", c.observer_dt);
        s->finish();
    }
    if (!have_x_hat0 && c.observer_model.order_l >= 1) c.x_hat0 = default_x_hat0(c.observer_model.state_dim());

    if (auto s = top.child("crossover_truth")) {
        std::string kind = to_string(c.truth.kind);
        s->string("kind", kind);
        if (kind == "none") c.truth.kind = TruthKind::none;
        else if (kind == "linear") c.truth.kind = TruthKind::linear;
        else if (kind == "parametric") c.truth.kind = TruthKind::parametric;
        else throw ConfigError("config field 'crossover_truth.kind' must be one of none, linear, parametric");
        s->number("k_mt", c.truth.k_mt);
        s->numbers("omega0", c.truth.omega0);
        s->finish();
    }

    if (auto s = top.child("synthesis")) {
        auto& sy = c.synthesis;
        s->number("beta", sy.beta);
        s->number("kappa_z", sy.kappa_z);
        s->number("q_min", sy.q_min);
        s->number("q_max", sy.q_max);
        s->number("feas_margin", sy.feas_margin);
        s->number("definiteness_floor", sy.definiteness_floor);
        s->number("gamma_z_cap", sy.gamma_z_cap);
        if (auto so = s->child("solver")) read_solver(*so, sy.solver);
        s->finish();
    }

    if (auto s = top.child("experiment")) {
        auto& e = c.experiment;
        s->number("horizon", e.horizon);
        s->number("sim_dt", e.sim_dt);
        s->number("sample_period", e.sample_period);
        s->number("noise_mv", e.noise_mv);
        s->unsigned_integer("seed", e.seed);
        std::vector<double> z0;
        if (s->numbers("z0", z0)) {
            if (z0.size() != 2) throw ConfigError("config field 'experiment.z0' must have 2 entries");
            e.z0 = {z0[0], z0[1]};
        }
        s->number("current", e.current);
        s->number("flow_rate", e.flow_rate);
        s->integer("verify_samples", e.verify_samples);
        s->finish();
    }

    c.bounds = BoundSet::defaults_for(c.observer_model.varrho > 0.0 ? c.observer_model.varrho : 1.0);
    if (auto s = top.child("bounds")) read_bounds(*s, c.bounds);

    if (auto s = top.child("euub")) {
        s->number("rho", c.euub.rho);
        s->number("mu", c.euub.mu);
        s->number("r", c.euub.r);
        s->number("sigma", c.euub.sigma);
        s->finish();
    }
    top.finish();

    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.filename().string() + ": " + e.what());
    }
}

std::string dump_config(const ExperimentConfig& c) {
    json j;
    const auto& b = c.battery;
    j["battery"] = {{"v_res", b.v_res},     {"v_cell", b.v_cell},   {"c0", b.c0},
                    {"epsilon", b.epsilon}, {"e0_cell", b.e0_cell}, {"r_ohm", b.r_ohm},
                    {"constants",
                     {{"faraday", b.constants.faraday},
                      {"gas_constant", b.constants.gas_constant},
                      {"temperature", b.constants.temperature}}}};
    j["crossover_truth"] = {{"kind", to_string(c.truth.kind)}, {"k_mt", c.truth.k_mt}};
    if (!c.truth.omega0.empty()) j["crossover_truth"]["omega0"] = c.truth.omega0;
    j["observer"] = {{"order_l", c.observer_model.order_l},
                     {"lambda", c.observer_model.lambda},
                     {"varrho", c.observer_model.varrho},
                     {"x_hat0", c.x_hat0},
                     {"dt", c.observer_dt}};
    const auto& s = c.synthesis;
    j["synthesis"] = {{"beta", s.beta},
                      {"kappa_z", s.kappa_z},
                      {"q_min", s.q_min},
                      {"q_max", s.q_max},
                      {"feas_margin", s.feas_margin},
                      {"definiteness_floor", s.definiteness_floor},
                      {"gamma_z_cap", s.gamma_z_cap},
                      {"solver",
                       {{"feas_tol", s.solver.feas_tol},
                        {"gap_tol", s.solver.gap_tol},
                        {"max_iter", s.solver.max_iter},
                        {"mu_initial", s.solver.mu_initial},
                        {"mu_factor", s.solver.mu_factor},
                        {"centering_tol", s.solver.centering_tol},
                        {"phase1_box", s.solver.phase1_box},
                        {"armijo", s.solver.armijo},
                        {"backtrack", s.solver.backtrack}}}};
    const auto& e = c.experiment;
    j["experiment"] = {{"horizon", e.horizon},
                       {"sim_dt", e.sim_dt},
                       {"sample_period", e.sample_period},
                       {"noise_mv", e.noise_mv},
                       {"seed", e.seed},
                       {"z0", {e.z0.soc, e.z0.soc_cell}},
                       {"current", e.current},
                       {"flow_rate", e.flow_rate},
                       {"verify_samples", e.verify_samples}};
    const auto& bd = c.bounds;
    j["bounds"] = {{"gamma_z", bd.gamma_z},
                   {"gamma_theta", bd.gamma_theta},
                   {"gamma_omega", bd.gamma_omega},
                   {"eps_bar", bd.eps_bar},
                   {"gamma_psi", bd.gamma_psi},
                   {"gamma_psi_tilde", bd.gamma_psi_tilde},
                   {"gamma_s_tilde", bd.gamma_s_tilde},
                   {"gamma_t", bd.gamma_t},
                   {"tau_m", bd.tau_m},
                   {"tau_m_upper", bd.tau_m_upper}};
    j["euub"] = {{"rho", c.euub.rho}, {"mu", c.euub.mu}, {"r", c.euub.r}, {"sigma", c.euub.sigma}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// twin

std::vector<MeasurementSample> sample_measurements(const Trajectory& truth, const ExperimentConfig& config) {
    const auto& e = config.experiment;
    SplitMix64 rng(e.seed);
    const double amplitude = e.noise_mv * 1e-3;
    std::vector<MeasurementSample> out;
    out.reserve(truth.samples.size());
    for (const auto& s : truth.samples) {
        const double noise = amplitude > 0.0 ? rng.symmetric(amplitude) : 0.0;
        out.push_back({s.time, s.v_out + noise, e.current, e.flow_rate});
    }
    return out;
}

FluxSummary summarize_flux(const Trajectory& truth, const ObserverTrace& trace) {
    if (truth.samples.empty() || trace.records.empty()) throw IngestError("summarize_flux: empty input");
    FluxSummary f;
    const double t0 = trace.records.front().time;
    const double t1 = trace.records.back().time;
    f.window_begin = t0 + 0.75 * (t1 - t0);

    const auto& ts = truth.samples;
    std::size_t j = 0;
    std::size_t count = 0;
    for (const auto& r : trace.records) {
        f.sup_abs_estimate = std::max({f.sup_abs_estimate, std::abs(r.x_hat(0)), std::abs(r.x_hat(1))});
        if (r.time < f.window_begin) continue;
        while (j + 1 < ts.size() && ts[j + 1].time <= r.time) ++j;
        double q = ts[j].crossover_flux;
        if (j + 1 < ts.size() && ts[j].time < r.time) {
            const double w = (r.time - ts[j].time) / (ts[j + 1].time - ts[j].time);
            q += w * (ts[j + 1].crossover_flux - q);
        }
        f.mean_true += q;
        f.mean_estimate += r.crossover;
        ++count;
    }
    f.mean_true /= static_cast<double>(count);
    f.mean_estimate /= static_cast<double>(count);
    f.relative_error = f.mean_true != 0.0 ? std::abs(f.mean_estimate - f.mean_true) / std::abs(f.mean_true)
                                          : std::numeric_limits<double>::quiet_NaN();
    return f;
}

namespace {

std::vector<double> truth_omega0(const ExperimentConfig& config) {
    if (!config.truth.omega0.empty()) return config.truth.omega0;
    std::vector<double> w(static_cast<std::size_t>(config.observer_model.order_l), 0.0);
    w[0] = config.truth.k_mt * config.battery.c0;
    return w;
}

// End of the transient window used for the decay-rate fit: the first time
// the error falls below 1% of its initial value.
std::optional<double> fit_window_end(const ErrorMetrics& m) {
    if (m.norm_error.empty() || !(m.norm_error.front() > 0.0)) return std::nullopt;
    for (std::size_t i = 0; i < m.norm_error.size(); ++i)
        if (m.norm_error[i] < 0.01 * m.norm_error.front()) return m.times[i];
    return std::nullopt;
}

}  // namespace

TwinRun run_twin(const ExperimentConfig& config, const Vector& gain_factor) {
    config.validate();
    const auto oc = config.observer_config(gain_factor);
    const auto& e = config.experiment;

    SimulationOptions so;
    so.horizon = e.horizon;
    so.dt = e.sim_dt;
    so.record_stride = static_cast<int>(std::llround(e.sample_period / e.sim_dt));

    const double k_mt = config.truth.k_mt;
    const double c0 = config.battery.c0;
    const auto omega0 = truth_omega0(config);
    const auto model = config.observer_model;
    CrossoverLaw law;
    switch (config.truth.kind) {
        case TruthKind::none:
            law = [](const BatteryState&, double) { return 0.0; };
            break;
        case TruthKind::linear:
            law = [k_mt, c0](const BatteryState& z, double) { return linear_crossover_flux(z.soc_cell, k_mt, c0); };
            break;
        case TruthKind::parametric:
            law = [model, omega0](const BatteryState& z, double t) {
                return psi(z.soc_cell) * integrator_chain_theta(model, omega0, t);
            };
            break;
    }
    const PlantInputs u{e.current, e.flow_rate};

    TwinRun run_out;
    run_out.truth = simulate(config.battery, e.z0, [u](double) { return u; }, law, so);
    run_out.measurements = sample_measurements(run_out.truth, config);
    run_out.trace = run(oc, run_out.measurements);
    run_out.metrics = error_metrics(run_out.truth, run_out.trace);
    if (const auto end = fit_window_end(run_out.metrics))
        run_out.metrics = error_metrics(run_out.truth, run_out.trace, end);
    run_out.flux = summarize_flux(run_out.truth, run_out.trace);
    return run_out;
}

// ---------------------------------------------------------------------------
// commands

namespace {

std::string fmt(double v) { return format_double(v); }

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot open " + path.string() + " for writing");
    out << text;
}

std::string certificate_text(const SynthesisResult& result, const CertificateReport& report,
                             const SynthesisConfig& sc) {
    std::ostringstream out;
    out << "status " << result.solver_status << '\n';
    out << "objective " << fmt(result.objective) << '\n';
    out << "alpha_bar " << fmt(result.alpha_bar) << '\n';
    out << "gamma_z " << fmt(result.gamma_z_norm) << '\n';
    out << "newton_steps " << result.iterations << '\n';
    out << "gain_factor";
    for (Eigen::Index i = 0; i < result.gain_factor.size(); ++i) out << ' ' << fmt(result.gain_factor(i));
    out << '\n';
    out << "vertex_margin q_min=" << fmt(sc.q_min) << ' ' << fmt(result.vertex_margins(0)) << '\n';
    out << "vertex_margin q_max=" << fmt(sc.q_max) << ' ' << fmt(result.vertex_margins(1)) << '\n';
    out << "min_eig_P " << fmt(report.min_eig_p) << '\n';
    out << "min_eig_W " << fmt(report.min_eig_w) << '\n';
    RowVector c_e = RowVector::Zero(result.gain_factor.size());
    c_e(1) = 1.0;
    for (const auto& s : report.samples) {
        const Matrix closed = transformed_system_matrix(s.q, sc.params, sc.cfg) - result.gain_factor * c_e;
        Eigen::EigenSolver<Matrix> es(closed, false);
        auto ev = es.eigenvalues();
        std::vector<std::complex<double>> sorted(ev.data(), ev.data() + ev.size());
        std::sort(sorted.begin(), sorted.end(), [](auto a, auto b) {
            return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
        });
        out << "q " << fmt(s.q) << " block_margin " << fmt(s.block_margin) << " spectral_abscissa "
            << fmt(s.spectral_abscissa) << " eigenvalues";
        for (const auto& z : sorted) out << ' ' << fmt(z.real()) << (z.imag() < 0 ? "" : "+") << fmt(z.imag()) << 'i';
        out << '\n';
    }
    out << "verified " << (report.passed ? "yes" : "no") << '\n';
    for (const auto& f : report.failures) out << "failure " << f << '\n';
    return out.str();
}

SynthesisResult read_gain_file(const std::filesystem::path& path, const ExperimentConfig& config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open gain file " + path.string());
    auto result = read_synthesis_result(in);
    if (result.state_dim() != config.observer_model.state_dim()) {
        throw ConfigError("gain file " + path.filename().string() + " has state dimension " +
                          std::to_string(result.state_dim()) + " but the config expects " +
                          std::to_string(config.observer_model.state_dim()));
    }
    return result;
}

ExperimentConfig load_with_overrides(const CommandOptions& opts) {
    auto config = load_config(opts.config);
    if (opts.seed) config.experiment.seed = *opts.seed;
    return config;
}

struct GainOutcome {
    SynthesisResult result;
    CertificateReport report;
};

// Synthesizes (or loads) the gain and re-verifies it, writing gain.txt and
// certificates.txt into out_dir. Returns nullopt when synthesis is infeasible.
std::optional<GainOutcome> obtain_gain(const ExperimentConfig& config, const CommandOptions& opts,
                                       RunArtifacts& art) {
    const auto sc = config.synthesis_config();
    GainOutcome g;
    art.certificates = opts.out_dir / "certificates.txt";
    if (opts.gain) {
        g.result = read_gain_file(*opts.gain, config);
        art.gain_file = *opts.gain;
    } else {
        spdlog::info("synthesizing observer gain (state dimension {})", sc.state_dim());
        try {
            g.result = synthesize(sc);
        } catch (const SynthesisInfeasible& e) {
            write_text(art.certificates, std::string("status infeasible\nphase1_margin ") +
                                             fmt(e.phase1_margin()) + "\nmessage " + e.what() + "\n");
            spdlog::error("synthesis infeasible: {} (phase-1 margin {})", e.what(), e.phase1_margin());
            return std::nullopt;
        } catch (const SynthesisNumericalError& e) {
            std::string text = std::string("status numerical\nmessage ") + e.what() + "\nstage_objectives";
            for (double v : e.stage_objectives()) text += " " + fmt(v);
            write_text(art.certificates, text + "\n");
            spdlog::error("synthesis failed: {}", e.what());
            return std::nullopt;
        }
        art.gain_file = opts.out_dir / "gain.txt";
        std::ofstream gout(art.gain_file, std::ios::binary);
        if (!gout) throw IngestError("cannot open " + art.gain_file.string() + " for writing");
        write_synthesis_result(gout, g.result);
    }
    g.report = verify_solution(g.result, sc, config.experiment.verify_samples);
    write_text(art.certificates, certificate_text(g.result, g.report, sc));
    if (!g.report.passed) {
        for (const auto& f : g.report.failures) spdlog::error("certificate failure: {}", f);
    }
    return g;
}

json euub_json(const EuubReport& r) {
    return {{"valid", r.valid},
            {"note", r.note},
            {"c_m", r.c_m},
            {"c_M", r.c_big_m},
            {"c_W", r.c_w},
            {"c_bar", r.c_bar},
            {"gamma_E", r.gamma_e},
            {"delta_bar", r.delta_bar},
            {"Delta", r.delta_cap},
            {"r_delta", r.r_delta},
            {"r_xtilde", r.r_xtilde},
            {"decay_rate_per_min", r.decay_rate},
            {"alpha_beta_admissible", r.alpha_beta_admissible}};
}

const char* kTruthColor = "#222222";
const char* kEstimateColor = "#d62728";

std::vector<double> column(const ObserverTrace& t, const std::function<double(const TraceRecord&)>& f) {
    std::vector<double> v;
    v.reserve(t.records.size());
    for (const auto& r : t.records) v.push_back(f(r));
    return v;
}

std::vector<std::filesystem::path> write_plots(const std::filesystem::path& dir, const Trajectory* truth,
                                               const std::vector<MeasurementSample>& meas, const ObserverTrace& trace,
                                               const ExperimentConfig& config) {
    std::vector<std::filesystem::path> out;
    const auto times = column(trace, [](const TraceRecord& r) { return r.time; });
    std::vector<double> tt, soc, cell, flux;
    if (truth) {
        for (const auto& s : truth->samples) {
            tt.push_back(s.time);
            soc.push_back(s.state.soc);
            cell.push_back(s.state.soc_cell);
            flux.push_back(s.crossover_flux);
        }
    }
    auto panel = [&](const std::string& title, const std::string& ylabel, const std::vector<double>& truth_y,
                     const std::vector<double>& est) {
        PlotPanel p{title, ylabel, {}};
        if (!truth_y.empty()) p.series.push_back({"truth", tt, truth_y, kTruthColor, true});
        p.series.push_back({"estimate", times, est, kEstimateColor, false});
        return p;
    };

    PlotFigure states;
    states.panels.push_back(panel("SOC", "SOC", soc, column(trace, [](const TraceRecord& r) { return r.x_hat(0); })));
    states.panels.push_back(
        panel("SOC_cell", "SOC_cell", cell, column(trace, [](const TraceRecord& r) { return r.x_hat(1); })));
    out.push_back(dir / "states.svg");
    write_svg(out.back(), states);

    PlotFigure qx;
    qx.panels.push_back(
        panel("crossover flux", "Q_x [mol/min]", flux, column(trace, [](const TraceRecord& r) { return r.crossover; })));
    out.push_back(dir / "crossover.svg");
    write_svg(out.back(), qx);

    PlotFigure params;
    const auto n = config.observer_model.state_dim();
    for (int i = 2; i < n; ++i) {
        const std::string name = i == 2 ? "theta_hat" : "omega_" + std::to_string(i - 1) + "_hat";
        PlotPanel p{name, name, {}};
        p.series.push_back({"estimate", times, column(trace, [i](const TraceRecord& r) { return r.x_hat(i); }),
                            kEstimateColor, false});
        params.panels.push_back(std::move(p));
    }
    out.push_back(dir / "parameters.svg");
    write_svg(out.back(), params);

    PlotFigure volts;
    PlotPanel vp{"output voltage", "V_out [V]", {}};
    std::vector<double> mt, mv;
    for (const auto& m : meas) {
        mt.push_back(m.time);
        mv.push_back(m.v_out);
    }
    vp.series.push_back({"measured", mt, mv, kTruthColor, true});
    std::vector<double> est_v;
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const double current = i < meas.size() ? meas[i].current : 0.0;
        est_v.push_back(nernst_voltage(trace.records[i].y_hat, current, config.battery).volts);
    }
    vp.series.push_back({"estimate", times, est_v, kEstimateColor, false});
    volts.panels.push_back(std::move(vp));
    out.push_back(dir / "voltage.svg");
    write_svg(out.back(), volts);
    return out;
}

template <class F>
int guarded(const char* name, F&& body) {
    try {
        return body();
    } catch (const Error& e) {
        spdlog::error("{}: {}", name, e.what());
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    } catch (const std::exception& e) {
        spdlog::error("{}: unexpected failure: {}", name, e.what());
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
}

}  // namespace

int cmd_synthesize(const CommandOptions& opts, RunArtifacts* artifacts) {
    return guarded("synthesize", [&] {
        const auto config = load_with_overrides(opts);
        std::filesystem::create_directories(opts.out_dir);
        RunArtifacts art;
        CommandOptions o = opts;
        o.gain.reset();
        const auto g = obtain_gain(config, o, art);
        if (artifacts) *artifacts = art;
        if (!g) {
            std::cout << "synthesis failed, see " << art.certificates.string() << '\n';
            return kExitCertificate;
        }
        std::ifstream cert(art.certificates);
        std::cout << cert.rdbuf();
        std::cout << "gain file " << art.gain_file.string() << '\n';
        return g->report.passed ? kExitOk : kExitCertificate;
    });
}

int cmd_twin(const CommandOptions& opts, RunArtifacts* artifacts) {
    return guarded("twin", [&] {
        const auto config = load_with_overrides(opts);
        std::filesystem::create_directories(opts.out_dir);
        RunArtifacts art;
        const auto g = obtain_gain(config, opts, art);
        if (!g) {
            if (artifacts) *artifacts = art;
            return kExitCertificate;
        }

        spdlog::info("running twin: horizon {} min, truth {}", config.experiment.horizon, to_string(config.truth.kind));
        const auto twin = run_twin(config, g->result.gain_factor);
        const auto euub = euub_report(g->result, config.synthesis_config(), config.bounds, config.euub);

        art.truth_csv = opts.out_dir / "truth.csv";
        art.measurements_csv = opts.out_dir / "measurements.csv";
        art.trace_csv = opts.out_dir / "trace.csv";
        art.report = opts.out_dir / "report.json";
        write_truth_csv(art.truth_csv, twin.truth);
        write_measurements_csv(art.measurements_csv, twin.measurements);
        write_trace_csv(art.trace_csv, twin.trace);

        const auto& m = twin.metrics;
        json rep;
        rep["command"] = "twin";
        rep["truth"] = to_string(config.truth.kind);
        rep["seed"] = config.experiment.seed;
        rep["noise_mv"] = config.experiment.noise_mv;
        rep["certificates_passed"] = g->report.passed;
        rep["error"] = {{"initial_norm", m.norm_error.front()},
                        {"terminal_norm", m.terminal_norm},
                        {"sup_norm", m.sup_norm},
                        {"terminal_ratio", m.terminal_norm / m.norm_error.front()},
                        {"fitted_rate_per_min", m.fitted_rate}};
        rep["crossover"] = {{"window_begin_min", twin.flux.window_begin},
                            {"mean_true_mol_per_min", twin.flux.mean_true},
                            {"mean_estimate_mol_per_min", twin.flux.mean_estimate},
                            {"sup_abs_z_hat", twin.flux.sup_abs_estimate}};
        if (std::isfinite(twin.flux.relative_error)) rep["crossover"]["relative_error"] = twin.flux.relative_error;
        rep["euub"] = euub_json(euub);
        rep["warnings"] = twin.trace.warnings;
        write_text(art.report, rep.dump(2) + "\n");

        if (opts.plots)
            art.plots = write_plots(opts.out_dir, &twin.truth, twin.measurements, twin.trace, config);
        for (const auto& w : twin.trace.warnings) spdlog::warn("{}", w);

        std::ostringstream msg;
        msg << "twin " << opts.out_dir.string() << ": terminal |z~| " << fmt(m.terminal_norm) << " (initial "
            << fmt(m.norm_error.front()) << "), mean Q_x estimate " << fmt(twin.flux.mean_estimate) << " vs truth "
            << fmt(twin.flux.mean_true) << " mol/min\n";
        std::cout << msg.str();
        if (artifacts) *artifacts = art;
        return g->report.passed ? kExitOk : kExitCertificate;
    });
}

int cmd_observe(const CommandOptions& opts, RunArtifacts* artifacts) {
    return guarded("observe", [&] {
        if (!opts.measurements) throw ConfigError("observe requires --measurements PATH");
        const auto config = load_with_overrides(opts);
        const auto meas = read_measurements_csv(*opts.measurements);
        std::filesystem::create_directories(opts.out_dir);
        RunArtifacts art;
        art.measurements_csv = *opts.measurements;
        const auto g = obtain_gain(config, opts, art);
        if (!g) {
            if (artifacts) *artifacts = art;
            return kExitCertificate;
        }
        const auto trace = run(config.observer_config(g->result.gain_factor), meas);
        art.trace_csv = opts.out_dir / "trace.csv";
        art.report = opts.out_dir / "report.json";
        write_trace_csv(art.trace_csv, trace);

        json rep;
        rep["command"] = "observe";
        rep["samples"] = meas.size();
        rep["certificates_passed"] = g->report.passed;
        const auto& last = trace.records.back();
        rep["final"] = {{"time_min", last.time},
                        {"soc_hat", last.x_hat(0)},
                        {"soc_cell_hat", last.x_hat(1)},
                        {"crossover_hat_mol_per_min", last.crossover}};
        rep["gamma_t_estimate"] = trace.gamma_t_estimate;
        rep["warnings"] = trace.warnings;
        write_text(art.report, rep.dump(2) + "\n");
        for (const auto& w : trace.warnings) spdlog::warn("{}", w);
        if (opts.plots) art.plots = write_plots(opts.out_dir, nullptr, meas, trace, config);
        std::cout << "observe " << opts.out_dir.string() << ": " << meas.size() << " samples, final Q_x estimate "
                  << fmt(last.crossover) << " mol/min\n";
        if (artifacts) *artifacts = art;
        return g->report.passed ? kExitOk : kExitCertificate;
    });
}

int cmd_verify(const CommandOptions& opts) {
    return guarded("verify", [&] {
        if (!opts.gain) throw ConfigError("verify requires --gain PATH");
        const auto config = load_with_overrides(opts);
        const auto result = read_gain_file(*opts.gain, config);
        const auto sc = config.synthesis_config();
        const auto report = verify_solution(result, sc, config.experiment.verify_samples);
        const auto euub = euub_report(result, sc, config.bounds, config.euub);
        std::cout << certificate_text(result, report, sc);
        std::cout << "euub " << (euub.valid ? "valid" : "invalid");
        if (!euub.note.empty()) std::cout << " (" << euub.note << ")";
        std::cout << '\n';
        std::cout << "c_bar " << fmt(euub.c_bar) << '\n';
        std::cout << "r_xtilde " << fmt(euub.r_xtilde) << '\n';
        std::cout << "decay_rate_per_min " << fmt(euub.decay_rate) << '\n';
        return report.passed && euub.valid ? kExitOk : kExitCertificate;
    });
}

int cmd_sweep(const std::vector<std::filesystem::path>& configs, const CommandOptions& opts) {
    return guarded("sweep", [&] {
        if (configs.empty()) throw ConfigError("sweep requires at least one --config");
        std::vector<std::string> stems;
        for (const auto& c : configs) {
            const auto stem = c.stem().string();
            if (std::find(stems.begin(), stems.end(), stem) != stems.end())
                throw ConfigError("sweep configs must have distinct file names (duplicate '" + stem + "')");
            stems.push_back(stem);
        }
        std::vector<std::future<int>> jobs;
        for (std::size_t i = 0; i < configs.size(); ++i) {
            CommandOptions o = opts;
            o.config = configs[i];
            o.out_dir = opts.out_dir / stems[i];
            jobs.push_back(std::async(std::launch::async, [o] { return cmd_twin(o); }));
        }
        int worst = kExitOk;
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            const int rc = jobs[i].get();
            spdlog::info("sweep {} finished with exit code {}", stems[i], rc);
            worst = std::max(worst, rc);
        }
        return worst;
    });
}

void init_logging() {
    auto logger = spdlog::stderr_color_mt("flowobs");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char* env = std::getenv("FLOWOBS_LOG")) {
        level = spdlog::level::from_str(env);
        // from_str maps unknown names to off; keep info unless "off" was meant.
        if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::info;
    }
    spdlog::set_level(level);
}

}  // namespace flowobs
