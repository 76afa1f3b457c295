#include "flowobs/observer.hpp"

#include <algorithm>
#include <cmath>

#include "flowobs/error.hpp"

namespace flowobs {

void ObserverConfig::validate() const {
    params.validate();
    cfg.validate();
    if (!(std::isfinite(dt) && dt > 0.0)) throw ConfigError("observer.dt must be > 0");
    const auto n = cfg.state_dim();
    if (gain_factor.size() != n)
        throw ConfigError("gain factor has dimension " + std::to_string(gain_factor.size()) + ", expected " +
                          std::to_string(n));
    if (!gain_factor.allFinite()) throw ConfigError("gain factor has non-finite entries");
    if (x_hat0.vector().size() != n) throw ConfigError("initial estimate has wrong dimension");
    if (flow_range && !(flow_range->q_min > 0.0 && flow_range->q_min < flow_range->q_max))
        throw ConfigError("observer flow range requires 0 < q_min < q_max");
}

namespace {

// Direct evaluation of A_e x + B_e I + H (y - C_e x) without forming matrices.
void observer_rhs(const Vector& x, double y_meas, const PlantInputs& u, const ObserverConfig& oc,
                  const Vector& e, Vector& out) {
    const Eigen::Index n = x.size();
    const double psi_val = psi(x(1));
    const double mix = oc.params.mixing_rate(u.flow_rate);
    const double inv_f = 1.0 / oc.params.constants.faraday;
    const double flux = psi_val * x(2);

    out.resize(n);
    out(0) = e(0) * flux + e(0) * inv_f * u.current;
    out(1) = mix * (x(0) - x(1)) + e(1) * flux + e(1) * inv_f * u.current;
    for (Eigen::Index i = 2; i + 1 < n; ++i) out(i) = oc.cfg.lambda[static_cast<std::size_t>(i - 2)] * x(i + 1);
    out(n - 1) = 0.0;

    const double innovation = y_meas - x(1);
    const double scale = oc.cfg.varrho / psi_val;
    out(0) += oc.gain_factor(0) * innovation;
    out(1) += oc.gain_factor(1) * innovation;
    for (Eigen::Index i = 2; i < n; ++i) out(i) += oc.gain_factor(i) * scale * innovation;
}

Vector current_gain(const Vector& x, const ObserverConfig& oc) {
    return oc.gain_factor.cwiseQuotient(build_transform(psi(x(1)), oc.cfg).diag);
}

}  // namespace

Vector observer_derivative(const Vector& x_hat, double y_meas, const PlantInputs& u,
                           const ObserverConfig& oc) {
    if (!x_hat.allFinite() || !std::isfinite(y_meas) || !std::isfinite(u.current) || !std::isfinite(u.flow_rate))
        throw DomainError("observer_derivative: non-finite input");
    if (x_hat.size() != oc.cfg.state_dim()) throw ConfigError("observer state has wrong dimension");
    Vector out;
    observer_rhs(x_hat, y_meas, u, oc, crossover_input_vector(oc.params), out);
    return out;
}

ObserverState step(const ObserverState& state, const MeasurementSample& sample,
                   const MeasurementSample& next_sample, const ObserverConfig& oc) {
    const double span = next_sample.time - sample.time;
    if (span < 0.0) throw IngestError("observer step: next sample precedes current sample");
    if (span == 0.0) return state;

    const double y = invert_nernst(sample.v_out, sample.current, oc.params);
    const PlantInputs u{sample.current, sample.flow_rate};
    const Vector e = crossover_input_vector(oc.params);

    const auto substeps = std::max<long>(1, static_cast<long>(std::ceil(span / oc.dt - 1e-9)));
    const double h = span / static_cast<double>(substeps);
    ObserverState s = state;
    Vector k1, k2, k3, k4;
    for (long k = 0; k < substeps; ++k) {
        observer_rhs(s.x_hat, y, u, oc, e, k1);
        observer_rhs(s.x_hat + 0.5 * h * k1, y, u, oc, e, k2);
        observer_rhs(s.x_hat + 0.5 * h * k2, y, u, oc, e, k3);
        observer_rhs(s.x_hat + h * k3, y, u, oc, e, k4);
        s.x_hat += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s.time = (k + 1 == substeps) ? next_sample.time : sample.time + static_cast<double>(k + 1) * h;
        if (!s.x_hat.allFinite()) throw IntegrationError("observer state became non-finite", s.time);
    }
    return s;
}

ObserverTrace run(const ObserverConfig& oc, const std::vector<MeasurementSample>& stream) {
    oc.validate();
    if (stream.size() < 2) throw IngestError("measurement stream needs at least 2 samples");
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const auto& s = stream[i];
        if (!std::isfinite(s.time) || !std::isfinite(s.v_out) || !std::isfinite(s.current) ||
            !std::isfinite(s.flow_rate))
            throw IngestError("measurement " + std::to_string(i) + " has a non-finite field");
        if (!(s.flow_rate > 0.0)) throw IngestError("measurement " + std::to_string(i) + " has flow rate <= 0");
        if (i > 0 && !(s.time > stream[i - 1].time))
            throw IngestError("measurement times must be strictly increasing (index " + std::to_string(i) + ")");
    }

    ObserverTrace trace;
    trace.records.reserve(stream.size());
    std::size_t flagged = 0;
    std::size_t first_flagged = 0;

    auto record = [&](const ObserverState& st, const MeasurementSample& s) {
        TraceRecord r;
        r.time = st.time;
        r.x_hat = st.x_hat;
        r.y_hat = st.x_hat(1);
        r.innovation = invert_nernst(s.v_out, s.current, oc.params) - r.y_hat;
        r.gain = current_gain(st.x_hat, oc);
        r.crossover = crossover_estimate(psi(st.x_hat(1)), st.x_hat(2));
        if (!trace.records.empty()) {
            const auto& prev = trace.records.back();
            const double psi_prev = psi(prev.x_hat(1));
            const double rate = std::abs((psi(r.x_hat(1)) - psi_prev) / (r.time - prev.time)) / psi(r.x_hat(1));
            trace.gamma_t_estimate = std::max(trace.gamma_t_estimate, rate);
        }
        trace.records.push_back(std::move(r));
    };

    ObserverState st{stream.front().time, oc.x_hat0.vector()};
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const auto& s = stream[i];
        if (oc.flow_range && (s.flow_rate < oc.flow_range->q_min || s.flow_rate > oc.flow_range->q_max)) {
            if (flagged++ == 0) first_flagged = i;
        }
        record(st, s);
        if (i + 1 < stream.size()) st = step(st, s, stream[i + 1], oc);
    }
    if (flagged > 0) {
        trace.warnings.push_back(std::to_string(flagged) + " sample(s) have a flow rate outside the synthesis range " +
                                 "(first at index " + std::to_string(first_flagged) + ")");
    }
    return trace;
}

double fit_exponential_rate(const std::vector<double>& times, const std::vector<double>& values,
                            double t_begin, double t_end) {
    if (times.size() != values.size()) throw DomainError("fit_exponential_rate: size mismatch");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t_begin || times[i] > t_end || !(values[i] > 0.0)) continue;
        const double x = times[i];
        const double yv = std::log(values[i]);
        sx += x;
        sy += yv;
        sxx += x * x;
        sxy += x * yv;
        ++m;
    }
    if (m < 2) throw DomainError("fit_exponential_rate: fewer than 2 usable points in window");
    const double md = static_cast<double>(m);
    const double denom = md * sxx - sx * sx;
    if (denom == 0.0) throw DomainError("fit_exponential_rate: degenerate time window");
    return -(md * sxy - sx * sy) / denom;
}

ErrorMetrics error_metrics(const Trajectory& truth, const ObserverTrace& trace,
                           std::optional<double> fit_window_end, std::optional<double> reference_rate) {
    const auto& ts = truth.samples;
    if (ts.empty() || trace.records.empty()) throw IngestError("error_metrics: empty input");
    const double t_lo = ts.front().time;
    const double t_hi = ts.back().time;

    ErrorMetrics m;
    m.reference_rate = reference_rate;
    std::size_t j = 0;
    for (const auto& r : trace.records) {
        if (r.time < t_lo || r.time > t_hi) continue;
        while (j + 1 < ts.size() && ts[j + 1].time < r.time) ++j;
        BatteryState z = ts[j].state;
        if (j + 1 < ts.size() && ts[j].time < r.time) {
            const double w = (r.time - ts[j].time) / (ts[j + 1].time - ts[j].time);
            z.soc += w * (ts[j + 1].state.soc - ts[j].state.soc);
            z.soc_cell += w * (ts[j + 1].state.soc_cell - ts[j].state.soc_cell);
        }
        const double e0 = z.soc - r.x_hat(0);
        const double e1 = z.soc_cell - r.x_hat(1);
        m.times.push_back(r.time);
        m.soc_error.push_back(e0);
        m.soc_cell_error.push_back(e1);
        m.norm_error.push_back(std::hypot(e0, e1));
    }
    if (m.times.empty()) throw IngestError("error_metrics: truth and trace time ranges do not overlap");

    m.sup_norm = *std::max_element(m.norm_error.begin(), m.norm_error.end());
    m.terminal_norm = m.norm_error.back();
    const double end = fit_window_end.value_or(m.times.back());
    std::size_t usable = 0;
    for (std::size_t i = 0; i < m.times.size(); ++i)
        if (m.times[i] <= end && m.norm_error[i] > 0.0) ++usable;
    m.fitted_rate = usable >= 2 ? fit_exponential_rate(m.times, m.norm_error, m.times.front(), end) : 0.0;
    return m;
}

double integrator_chain_theta(const CrossoverModelConfig& cfg, const std::vector<double>& omega0, double t) {
    if (static_cast<int>(omega0.size()) != cfg.order_l) throw ConfigError("omega0 must hold order_l entries");
    // theta(t) = sum_k (Lambda^k omega0)_0 t^k / k!
    std::vector<double> w = omega0;
    double theta = 0.0;
    double coeff = 1.0;
    for (int k = 0; k < cfg.order_l; ++k) {
        theta += coeff * w[0];
        for (int i = 0; i + 1 < cfg.order_l; ++i) w[static_cast<std::size_t>(i)] = cfg.lambda[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i + 1)];
        w[static_cast<std::size_t>(cfg.order_l - 1)] = 0.0;
        coeff *= t / static_cast<double>(k + 1);
    }
    return theta;
}

}  // namespace flowobs
