#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "cardiokit/errors.hpp"
#include "cardiokit/record.hpp"

namespace cardiokit {

// One biquad, denominator normalized to a0 = 1.
struct SosSection {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

struct IirFilter {
    std::vector<SosSection> sections;
    int order = 0; // analog prototype order; the bandpass is order 2x
    double lo_hz = 0.0;
    double hi_hz = 0.0;
    double fs = 0.0;

    std::complex<double> response(double freq_hz) const {
        const std::complex<double> z = std::polar(1.0, 2.0 * M_PI * freq_hz / fs);
        const std::complex<double> zi1 = 1.0 / z;
        const std::complex<double> zi2 = zi1 * zi1;
        std::complex<double> h{1.0, 0.0};
        for (const auto& s : sections)
            h *= (s.b0 + s.b1 * zi1 + s.b2 * zi2) / (1.0 + s.a1 * zi1 + s.a2 * zi2);
        return h;
    }

    double magnitude_db(double freq_hz) const {
        return 20.0 * std::log10(std::abs(response(freq_hz)));
    }

    bool stable() const {
        for (const auto& s : sections) {
            // poles of z^2 + a1 z + a2: product is a2, so |a2| < 1 is
            // necessary; check the pair explicitly via the triangle rule.
            if (std::fabs(s.a2) >= 1.0 || std::fabs(s.a1) >= 1.0 + s.a2)
                return false;
        }
        return true;
    }

    std::size_t settle_length() const {
        return 3 * (2 * static_cast<std::size_t>(order) + 1);
    }
};

// Analog Butterworth prototype -> lowpass-to-bandpass transform ->
// bilinear map with pre-warped edges, emitted as second-order sections.
inline IirFilter design_butterworth_bandpass(int order, double lo_hz, double hi_hz, double fs) {
    if (order < 1)
        throw config_error("filter design: order must be >= 1");
    if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs / 2.0))
        throw config_error("filter design: need 0 < lo < hi < fs/2");

    using cd = std::complex<double>;
    const double fs2 = 2.0 * fs;
    const double w1 = fs2 * std::tan(M_PI * lo_hz / fs);
    const double w2 = fs2 * std::tan(M_PI * hi_hz / fs);
    const double w0 = std::sqrt(w1 * w2);
    const double bw = w2 - w1;

    // Prototype poles on the unit circle, left half-plane.
    std::vector<cd> analog_poles;
    analog_poles.reserve(2 * static_cast<std::size_t>(order));
    for (int k = 0; k < order; ++k) {
        const double theta = M_PI * (2.0 * k + order + 1.0) / (2.0 * order);
        const cd p{std::cos(theta), std::sin(theta)};
        // s -> (s^2 + w0^2) / (bw * s): each prototype pole splits in two.
        const cd pb = p * bw;
        const cd disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
        analog_poles.push_back((pb + disc) / 2.0);
        analog_poles.push_back((pb - disc) / 2.0);
    }

    std::vector<cd> digital_poles;
    digital_poles.reserve(analog_poles.size());
    for (const cd& s : analog_poles)
        digital_poles.push_back((fs2 + s) / (fs2 - s));

    // Pair each complex pole with its conjugate; real poles pair together.
    std::vector<cd> pole_pairs; // one representative per section
    std::vector<bool> used(digital_poles.size(), false);
    std::vector<double> real_poles;
    for (std::size_t i = 0; i < digital_poles.size(); ++i) {
        if (used[i])
            continue;
        if (std::fabs(digital_poles[i].imag()) < 1e-12) {
            real_poles.push_back(digital_poles[i].real());
            used[i] = true;
            continue;
        }
        std::size_t best = digital_poles.size();
        double best_dist = 1e300;
        for (std::size_t j = i + 1; j < digital_poles.size(); ++j) {
            if (used[j])
                continue;
            const double d = std::abs(digital_poles[j] - std::conj(digital_poles[i]));
            if (d < best_dist) {
                best_dist = d;
                best = j;
            }
        }
        if (best == digital_poles.size())
            throw config_error("filter design: unpaired complex pole");
        used[i] = used[best] = true;
        pole_pairs.push_back(digital_poles[i]);
    }

    IirFilter f;
    f.order = order;
    f.lo_hz = lo_hz;
    f.hi_hz = hi_hz;
    f.fs = fs;

    for (const cd& p : pole_pairs) {
        SosSection s;
        s.b0 = 1.0;
        s.b1 = 0.0;
        s.b2 = -1.0; // (z - 1)(z + 1): one bandpass zero at DC, one at Nyquist
        s.a1 = -2.0 * p.real();
        s.a2 = std::norm(p);
        f.sections.push_back(s);
    }
    std::sort(real_poles.begin(), real_poles.end());
    for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
        SosSection s;
        s.b0 = 1.0;
        s.b1 = 0.0;
        s.b2 = -1.0;
        s.a1 = -(real_poles[i] + real_poles[i + 1]);
        s.a2 = real_poles[i] * real_poles[i + 1];
        f.sections.push_back(s);
    }
    if (real_poles.size() % 2 != 0)
        throw config_error("filter design: odd real pole count");

    // Sections with poles nearest the unit circle go last.
    std::sort(f.sections.begin(), f.sections.end(),
              [](const SosSection& a, const SosSection& b) { return a.a2 < b.a2; });

    // Normalize to unit gain at the (warped) band center.
    const double f_center = fs / M_PI * std::atan(w0 / fs2);
    const double g = std::abs(f.response(f_center));
    if (!(g > 0.0) || !std::isfinite(g))
        throw config_error("filter design: degenerate gain normalization");
    const double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(f.sections.size()));
    for (auto& s : f.sections) {
        s.b0 *= per_section;
        s.b1 *= per_section;
        s.b2 *= per_section;
    }

    if (!f.stable())
        throw config_error("filter design: unstable section produced");
    return f;
}

namespace detail {

// Direct-form II transposed state for one section.
struct SosState {
    double z1 = 0.0, z2 = 0.0;
};

inline double sos_step(const SosSection& s, SosState& st, double x) {
    const double y = s.b0 * x + st.z1;
    st.z1 = s.b1 * x - s.a1 * y + st.z2;
    st.z2 = s.b2 * x - s.a2 * y;
    return y;
}

// Steady-state initial conditions for a constant input level, chained
// section to section so the startup transient is suppressed.
inline std::vector<SosState> steady_state(const IirFilter& f, double level) {
    std::vector<SosState> states(f.sections.size());
    double c = level;
    for (std::size_t i = 0; i < f.sections.size(); ++i) {
        const auto& s = f.sections[i];
        const double h1 = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        states[i].z1 = (h1 - s.b0) * c;
        states[i].z2 = (s.b2 - s.a2 * h1) * c;
        c *= h1;
    }
    return states;
}

inline void sosfilt_inplace(const IirFilter& f, std::vector<double>& x,
                            std::vector<SosState>& states) {
    for (std::size_t sec = 0; sec < f.sections.size(); ++sec) {
        const auto& s = f.sections[sec];
        auto& st = states[sec];
        for (double& v : x)
            v = sos_step(s, st, v);
    }
}

} // namespace detail

// Single forward pass from zero state (mainly for diagnostics and tests).
inline std::vector<double> sosfilt(const IirFilter& f, std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end());
    std::vector<detail::SosState> states(f.sections.size());
    detail::sosfilt_inplace(f, y, states);
    return y;
}

// Forward-backward filtering: zero phase, squared magnitude response.
// Odd-reflection padding plus steady-state initial conditions at both ends.
inline std::vector<double> filtfilt(const IirFilter& f, std::span<const double> x) {
    const std::size_t padlen = f.settle_length();
    if (x.size() <= padlen)
        throw data_error("filtfilt: input of " + std::to_string(x.size()) +
                         " samples is too short (needs > " + std::to_string(padlen) + ")");
    for (double v : x)
        if (!std::isfinite(v))
            throw data_error("filtfilt: non-finite sample in input");

    const std::size_t n = x.size();
    std::vector<double> ext;
    ext.reserve(n + 2 * padlen);
    for (std::size_t i = padlen; i >= 1; --i)
        ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 2; i <= padlen + 1; ++i)
        ext.push_back(2.0 * x[n - 1] - x[n - i]);

    auto states = detail::steady_state(f, ext.front());
    detail::sosfilt_inplace(f, ext, states);
    std::reverse(ext.begin(), ext.end());
    states = detail::steady_state(f, ext.front());
    detail::sosfilt_inplace(f, ext, states);
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(padlen),
                               ext.begin() + static_cast<std::ptrdiff_t>(padlen + n));
}

// ECG band 1-40 Hz, ICG band 0.5-40 Hz, both 4th-order zero-phase.
inline SignalRecord preprocess_record(const SignalRecord& rec) {
    rec.validate();
    const IirFilter f_ecg = design_butterworth_bandpass(4, 1.0, 40.0, rec.fs);
    const IirFilter f_icg = design_butterworth_bandpass(4, 0.5, 40.0, rec.fs);
    SignalRecord out = rec;
    out.ecg = filtfilt(f_ecg, rec.ecg);
    out.icg = filtfilt(f_icg, rec.icg);
    return out;
}

} // namespace cardiokit
