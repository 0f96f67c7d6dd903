#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cardiokit/errors.hpp"
#include "cardiokit/record.hpp"

namespace cardiokit {

// 750 ms ensemble-averaged beat pair. The ECG template is aligned on R and
// the ICG template on C, both anchored at 250 ms.
struct TemplatePair {
    std::vector<double> ecg_tpl;
    std::vector<double> icg_tpl;
    double rr_mean = 0.0; // seconds
    double rc_mean = 0.0; // seconds
    double fs = 0.0;
    int cohort_index = 0;

    void validate() const {
        const auto expect = static_cast<std::size_t>(std::llround(0.750 * fs));
        if (ecg_tpl.size() != expect || icg_tpl.size() != expect)
            throw data_error("template pair: length != 750 ms");
        if (!(rr_mean > 0.3 && rr_mean < 2.0))
            throw data_error("template pair: rr_mean " + format_double(rr_mean) +
                             " outside (0.3, 2.0) s");
        if (!(rc_mean > 0.0 && rc_mean < 0.4))
            throw data_error("template pair: rc_mean " + format_double(rc_mean) +
                             " outside (0, 0.4) s");
    }
};

// Sample indices within the 750 ms templates.
struct FiducialMap {
    std::size_t q = 0, r = 0, s = 0, t1 = 0, t = 0, t2 = 0; // ECG
    std::size_t b = 0, c = 0, x = 0;                        // ICG

    void validate() const {
        if (!(q < r && r < s && s < t1 && t1 < t && t < t2))
            throw data_error("fiducials: ECG ordering Q<R<S<T1<T<T2 violated");
        if (!(b < c && c < x))
            throw data_error("fiducials: ICG ordering B<C<X violated");
    }
};

struct DelineatedTemplate {
    TemplatePair pair;
    FiducialMap fiducials;
    bool edge_flagged = false; // some point landed on a search-window edge
};

namespace detail {

inline std::size_t ms_to_samples(double ms, double fs) {
    return static_cast<std::size_t>(std::llround(ms / 1000.0 * fs));
}

inline std::size_t argmax_range(std::span<const double> x, std::size_t lo, std::size_t hi) {
    std::size_t best = lo;
    for (std::size_t i = lo + 1; i <= hi; ++i)
        if (x[i] > x[best])
            best = i;
    return best;
}

inline std::size_t argmin_range(std::span<const double> x, std::size_t lo, std::size_t hi) {
    std::size_t best = lo;
    for (std::size_t i = lo + 1; i <= hi; ++i)
        if (x[i] < x[best])
            best = i;
    return best;
}

// Centered moving average with an odd window.
inline std::vector<double> smooth(const std::vector<double>& x, std::size_t win) {
    if (win <= 1)
        return x;
    if (win % 2 == 0)
        ++win;
    const std::size_t half = win / 2;
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = (i >= half) ? i - half : 0;
        const std::size_t hi = std::min(i + half, x.size() - 1);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j)
            s += x[j];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

} // namespace detail

// Replaces each candidate with the argmax of the signal within +-window_ms.
inline std::vector<std::size_t> refine_peaks(std::span<const double> x,
                                             const std::vector<std::size_t>& candidates, double fs,
                                             double window_ms = 30.0) {
    const std::size_t w = detail::ms_to_samples(window_ms, fs);
    std::vector<std::size_t> out;
    out.reserve(candidates.size());
    for (std::size_t c : candidates) {
        if (c >= x.size())
            continue;
        const std::size_t lo = (c >= w) ? c - w : 0;
        const std::size_t hi = std::min(c + w, x.size() - 1);
        out.push_back(detail::argmax_range(x, lo, hi));
    }
    return out;
}

// Modified Pan-Tompkins QRS detector: derivative, squaring, moving-window
// integration, adaptive dual thresholds with search-back, then refinement
// to the local ECG maximum within +-30 ms. 200 ms refractory.
inline std::vector<std::size_t> detect_r_peaks(std::span<const double> ecg, double fs) {
    if (fs < 250.0)
        throw config_error("detect_r_peaks: fs must be >= 250");
    const std::size_t n = ecg.size();
    if (n < static_cast<std::size_t>(fs))
        return {};

    // Five-point derivative, squared.
    std::vector<double> sq(n, 0.0);
    for (std::size_t i = 4; i < n; ++i) {
        const double d =
            (2.0 * ecg[i] + ecg[i - 1] - ecg[i - 3] - 2.0 * ecg[i - 4]) / 8.0;
        sq[i] = d * d;
    }

    // Moving-window integration over 150 ms.
    const std::size_t win = std::max<std::size_t>(1, detail::ms_to_samples(150.0, fs));
    std::vector<double> mwi(n, 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += sq[i];
        if (i >= win)
            acc -= sq[i - win];
        mwi[i] = acc / static_cast<double>(win);
    }

    // Local maxima of the integrated signal, >= 200 ms apart.
    const std::size_t refractory = detail::ms_to_samples(200.0, fs);
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (mwi[i] <= 0.0 || mwi[i] < mwi[i - 1] || mwi[i] <= mwi[i + 1])
            continue;
        if (!peaks.empty() && i - peaks.back() < refractory) {
            if (mwi[i] > mwi[peaks.back()])
                peaks.back() = i;
            continue;
        }
        peaks.push_back(i);
    }
    if (peaks.empty())
        return {};

    // Adaptive thresholding with the classic 0.25/0.125 running updates.
    const std::size_t learn = std::min(n - 1, static_cast<std::size_t>(2.0 * fs));
    double max_learn = 0.0, mean_learn = 0.0;
    for (std::size_t i = 0; i <= learn; ++i) {
        max_learn = std::max(max_learn, mwi[i]);
        mean_learn += mwi[i];
    }
    mean_learn /= static_cast<double>(learn + 1);
    double spki = 0.5 * max_learn;
    double npki = 0.5 * mean_learn;

    std::vector<std::size_t> accepted;
    std::vector<std::size_t> rejected;
    std::vector<double> rr_recent;
    auto rr_average = [&]() {
        if (rr_recent.empty())
            return 0.0;
        double s = 0.0;
        for (double v : rr_recent)
            s += v;
        return s / static_cast<double>(rr_recent.size());
    };
    auto push_rr = [&](double rr) {
        rr_recent.push_back(rr);
        if (rr_recent.size() > 8)
            rr_recent.erase(rr_recent.begin());
    };

    for (std::size_t p : peaks) {
        const double thr1 = npki + 0.25 * (spki - npki);
        if (mwi[p] > thr1) {
            if (!accepted.empty())
                push_rr(static_cast<double>(p - accepted.back()));
            accepted.push_back(p);
            spki = 0.125 * mwi[p] + 0.875 * spki;
        } else {
            // Search-back: a long gap means a beat was probably missed.
            const double rr_avg = rr_average();
            if (!accepted.empty() && rr_avg > 0.0 &&
                static_cast<double>(p - accepted.back()) > 1.66 * rr_avg &&
                mwi[p] > 0.5 * thr1) {
                push_rr(static_cast<double>(p - accepted.back()));
                accepted.push_back(p);
                spki = 0.25 * mwi[p] + 0.75 * spki;
            } else {
                rejected.push_back(p);
                npki = 0.125 * mwi[p] + 0.875 * npki;
            }
        }
    }
    if (accepted.empty())
        return {};

    // The MWI peak trails the R wave by up to the integration window; pull
    // each mark back to the strongest ECG sample in that span first.
    std::vector<std::size_t> candidates;
    candidates.reserve(accepted.size());
    const std::size_t pre = win;
    const std::size_t post = detail::ms_to_samples(30.0, fs);
    for (std::size_t p : accepted) {
        const std::size_t lo = (p >= pre) ? p - pre : 0;
        const std::size_t hi = std::min(p + post, n - 1);
        candidates.push_back(detail::argmax_range(ecg, lo, hi));
    }

    std::vector<std::size_t> refined = refine_peaks(ecg, candidates, fs);
    std::sort(refined.begin(), refined.end());
    refined.erase(std::unique(refined.begin(), refined.end()), refined.end());

    // Enforce the refractory period on the final indices.
    std::vector<std::size_t> out;
    for (std::size_t r : refined) {
        if (!out.empty() && r - out.back() < refractory) {
            if (ecg[r] > ecg[out.back()])
                out.back() = r;
        } else {
            out.push_back(r);
        }
    }
    return out;
}

// One C point per RR interval: the ICG maximum strictly between
// consecutive R peaks.
inline std::vector<std::size_t> detect_c_points(std::span<const double> icg,
                                                const std::vector<std::size_t>& r_peaks) {
    if (r_peaks.size() < 2)
        throw data_error("detect_c_points: need at least 2 R peaks");
    std::vector<std::size_t> c_points;
    c_points.reserve(r_peaks.size() - 1);
    for (std::size_t i = 0; i + 1 < r_peaks.size(); ++i) {
        const std::size_t lo = std::min(r_peaks[i] + 1, icg.size() - 1);
        const std::size_t hi = std::min(r_peaks[i + 1] - 1, icg.size() - 1);
        if (lo > hi)
            throw data_error("detect_c_points: empty RR interval");
        c_points.push_back(detail::argmax_range(icg, lo, hi));
    }
    return c_points;
}

namespace detail {

inline std::vector<double> average_windows(std::span<const double> sig,
                                           std::span<const std::size_t> anchors, std::size_t pre,
                                           std::size_t len) {
    std::vector<double> avg(len, 0.0);
    for (std::size_t a : anchors) {
        const std::size_t start = a - pre;
        for (std::size_t i = 0; i < len; ++i)
            avg[i] += sig[start + i];
    }
    for (double& v : avg)
        v /= static_cast<double>(anchors.size());
    return avg;
}

} // namespace detail

// Ensemble averaging: the first 90 usable beats form 9 consecutive,
// non-overlapping cohorts of 10. ECG windows align on R, ICG windows on C,
// both spanning -250/+500 ms.
inline std::vector<TemplatePair> ensemble_average(const SignalRecord& rec,
                                                  const std::vector<std::size_t>& r_peaks,
                                                  const std::vector<std::size_t>& c_points) {
    const double fs = rec.fs;
    const auto tpl_len = static_cast<std::size_t>(std::llround(0.750 * fs));
    const auto pre = static_cast<std::size_t>(std::llround(0.250 * fs));
    const std::size_t n = rec.ecg.size();

    std::vector<std::size_t> usable; // beat indices into r_peaks/c_points
    for (std::size_t i = 0; i < c_points.size() && i < r_peaks.size(); ++i) {
        const bool ecg_fits = r_peaks[i] >= pre && r_peaks[i] - pre + tpl_len <= n;
        const bool icg_fits = c_points[i] >= pre && c_points[i] - pre + tpl_len <= n;
        if (ecg_fits && icg_fits)
            usable.push_back(i);
    }
    if (usable.size() < 90)
        throw data_error("ensemble_average: only " + std::to_string(usable.size()) +
                         " usable beats, need 90");

    std::vector<TemplatePair> out;
    out.reserve(9);
    for (int cohort = 0; cohort < 9; ++cohort) {
        std::vector<std::size_t> r_anchor, c_anchor;
        double rr_sum = 0.0, rc_sum = 0.0;
        for (int k = 0; k < 10; ++k) {
            const std::size_t beat = usable[static_cast<std::size_t>(cohort * 10 + k)];
            r_anchor.push_back(r_peaks[beat]);
            c_anchor.push_back(c_points[beat]);
            rr_sum += static_cast<double>(r_peaks[beat + 1] - r_peaks[beat]) / fs;
            rc_sum += static_cast<double>(c_points[beat] - r_peaks[beat]) / fs;
        }
        TemplatePair tp;
        tp.ecg_tpl = detail::average_windows(rec.ecg, r_anchor, pre, tpl_len);
        tp.icg_tpl = detail::average_windows(rec.icg, c_anchor, pre, tpl_len);
        tp.rr_mean = rr_sum / 10.0;
        tp.rc_mean = rc_sum / 10.0;
        tp.fs = fs;
        tp.cohort_index = cohort;
        tp.validate();
        out.push_back(std::move(tp));
    }
    return out;
}

struct EcgFiducials {
    std::size_t q = 0, r = 0, s = 0, t1 = 0, t = 0, t2 = 0;
    bool edge_flagged = false;
};

struct IcgFiducials {
    std::size_t b = 0, c = 0, x = 0;
    bool edge_flagged = false;
};

// Q and S troughs around the 250 ms R anchor, T apex, and derivative-based
// T-wave boundaries.
inline EcgFiducials delineate_ecg_template(const std::vector<double>& tpl, double fs) {
    EcgFiducials f;
    bool edge = false;
    const std::size_t len = tpl.size();
    const std::size_t r = detail::ms_to_samples(250.0, fs);
    if (r + 1 >= len)
        throw data_error("delineate_ecg_template: template shorter than the R anchor");
    f.r = r;

    const std::size_t q_lo = r - detail::ms_to_samples(50.0, fs);
    f.q = detail::argmin_range(tpl, q_lo, r - 1);
    edge |= (f.q == q_lo || f.q == r - 1);

    const std::size_t s_hi = std::min(r + detail::ms_to_samples(100.0, fs), len - 1);
    f.s = detail::argmin_range(tpl, r + 1, s_hi);
    edge |= (f.s == r + 1 || f.s == s_hi);

    const std::size_t t_lo = f.s + detail::ms_to_samples(80.0, fs);
    const std::size_t t_hi = std::min(f.s + detail::ms_to_samples(360.0, fs), len - 1);
    if (t_lo >= len || t_lo > t_hi)
        throw data_error("delineate_ecg_template: empty T search window");
    f.t = detail::argmax_range(tpl, t_lo, t_hi);
    edge |= (f.t == t_lo || f.t == t_hi);

    // Smoothed first difference (5 ms moving average). sd[i] sits between
    // samples i and i+1.
    std::vector<double> d(len - 1);
    for (std::size_t i = 0; i + 1 < len; ++i)
        d[i] = tpl[i + 1] - tpl[i];
    const std::vector<double> sd =
        detail::smooth(d, std::max<std::size_t>(1, detail::ms_to_samples(5.0, fs)));

    // Upright T rises into the apex and falls after it; an inverted wave
    // flips both expected signs.
    const double apex_sign = (sd[f.t - 1] >= 0.0) ? 1.0 : -1.0;

    // Zero crossings are taken with a tolerance of 5% of the wave's peak
    // slope: high-pass recovery drift keeps the raw derivative slightly
    // off zero in the isoelectric stretch before and after the wave.
    const std::size_t t1_lo =
        std::max(f.t - std::min(f.t, detail::ms_to_samples(200.0, fs)), f.s + 1);
    const std::size_t t2_hi = std::min(f.t + detail::ms_to_samples(250.0, fs), len - 2);
    double peak_slope = 0.0;
    for (std::size_t i = t1_lo; i <= t2_hi; ++i)
        peak_slope = std::max(peak_slope, std::fabs(sd[i]));
    const double slope_floor = 0.05 * peak_slope;

    // T1: walk left from the apex, skip the flat apex shoulder, ride the
    // rising limb, and take the sample where the slope dies out again.
    bool t1_found = false;
    f.t1 = t1_lo;
    bool in_limb = false;
    for (std::size_t i = f.t - 1; i >= t1_lo; --i) {
        if (!in_limb) {
            in_limb = sd[i] * apex_sign > slope_floor;
        } else if (sd[i] * apex_sign <= slope_floor) {
            f.t1 = std::min(i + 1, f.t - 1);
            t1_found = true;
            break;
        }
        if (i == t1_lo)
            break;
    }
    edge |= !t1_found;

    // T2: mirror image to the right along the falling limb.
    bool t2_found = false;
    f.t2 = std::min(std::max(t2_hi, f.t + 1), len - 1);
    in_limb = false;
    for (std::size_t i = f.t + 1; i <= t2_hi; ++i) {
        if (!in_limb) {
            in_limb = sd[i] * apex_sign < -slope_floor;
        } else if (sd[i] * apex_sign >= -slope_floor) {
            f.t2 = i;
            t2_found = true;
            break;
        }
    }
    edge |= !t2_found;

    f.edge_flagged = edge;
    return f;
}

// B from the smoothed second difference ahead of C, X as the post-C trough.
inline IcgFiducials delineate_icg_template(const std::vector<double>& tpl, double fs) {
    IcgFiducials f;
    const std::size_t len = tpl.size();
    const std::size_t c = detail::ms_to_samples(250.0, fs);
    if (c + 1 >= len)
        throw data_error("delineate_icg_template: template shorter than the C anchor");
    f.c = c;

    std::vector<double> dd(len, 0.0);
    for (std::size_t i = 1; i + 1 < len; ++i)
        dd[i] = tpl[i + 1] - 2.0 * tpl[i] + tpl[i - 1];
    const std::vector<double> sdd =
        detail::smooth(dd, std::max<std::size_t>(1, detail::ms_to_samples(5.0, fs)));

    const std::size_t b_lo = c - detail::ms_to_samples(150.0, fs);
    const std::size_t b_hi = c - detail::ms_to_samples(10.0, fs);
    f.b = detail::argmax_range(sdd, b_lo, b_hi);
    if (f.b == b_lo || f.b == b_hi)
        f.edge_flagged = true;

    const std::size_t x_hi = std::min(c + detail::ms_to_samples(300.0, fs), len - 1);
    f.x = detail::argmin_range(tpl, c + 1, x_hi);
    if (f.x == c + 1 || f.x == x_hi)
        f.edge_flagged = true;

    return f;
}

inline DelineatedTemplate delineate_template(const TemplatePair& pair) {
    const EcgFiducials e = delineate_ecg_template(pair.ecg_tpl, pair.fs);
    const IcgFiducials i = delineate_icg_template(pair.icg_tpl, pair.fs);
    DelineatedTemplate out;
    out.pair = pair;
    out.fiducials.q = e.q;
    out.fiducials.r = e.r;
    out.fiducials.s = e.s;
    out.fiducials.t1 = e.t1;
    out.fiducials.t = e.t;
    out.fiducials.t2 = e.t2;
    out.fiducials.b = i.b;
    out.fiducials.c = i.c;
    out.fiducials.x = i.x;
    out.edge_flagged = e.edge_flagged || i.edge_flagged;
    out.fiducials.validate();
    return out;
}

} // namespace cardiokit
