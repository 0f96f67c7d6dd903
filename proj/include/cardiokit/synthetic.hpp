#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cardiokit/errors.hpp"
#include "cardiokit/record.hpp"
#include "cardiokit/rng.hpp"

namespace cardiokit {

// Per-subject waveform morphology. ECG beats are Gaussian Q/R/S bumps plus
// a compact raised-sine T wave; the ICG beat is a tri-phasic B-C-X lobe
// locked to R through the subject's RC latency. Times in seconds relative
// to the R peak, amplitudes in signal units.
struct SubjectParams {
    double rr_mean_s = 0.8;
    double rr_jitter_s = 0.02;

    double q_amp = -0.12, q_center = -0.035, q_width = 0.010;
    double r_amp = 1.2, r_width = 0.010;
    double s_amp = -0.22, s_center = 0.034, s_width = 0.010;
    double t_amp = 0.35, t_center = 0.26, t_halfwidth = 0.08;

    double c_amp = 1.0, x_depth = 0.35;
    double rc_latency = 0.115, bc_interval = 0.07, cx_interval = 0.13;
    double icg_recovery = 0.075;
};

// True fiducial offsets (seconds relative to R) for one beat.
struct FiducialOffsets {
    double q = 0, s = 0, t1 = 0, t = 0, t2 = 0;
    double b = 0, c = 0, x = 0;
};

struct SyntheticGroundTruth {
    std::vector<std::size_t> r_times; // sample indices, strictly increasing
    std::vector<FiducialOffsets> fiducial_offsets; // one per beat
    SubjectParams subject_params;

    void validate() const {
        for (std::size_t i = 1; i < r_times.size(); ++i)
            if (r_times[i] <= r_times[i - 1])
                throw data_error("ground truth: r_times not strictly increasing");
        for (const auto& f : fiducial_offsets) {
            for (double off : {f.q, f.s, f.t1, f.t, f.t2, f.b, f.c, f.x})
                if (std::fabs(off) > 0.5)
                    throw data_error("ground truth: fiducial offset beyond 500 ms");
        }
    }
};

struct SynthOptions {
    // Additive white noise level relative to each channel's RMS; a
    // non-finite value disables noise.
    double snr_db = 20.0;

    // Mild autonomic shift applied to the anger segment.
    double anger_hr_scale = 1.10;
    double anger_t_amp_scale = 0.93;
    double anger_c_amp_scale = 0.96;
    double anger_rc_shift_s = -0.006;
    double anger_t_center_shift_s = -0.010;
};

struct SyntheticCohort {
    std::vector<SignalRecord> records; // subject-major, baseline then anger
    std::vector<SyntheticGroundTruth> truths; // parallel to records
};

namespace detail {

inline SubjectParams draw_subject_params(Rng& rng) {
    SubjectParams p;
    const double hr = rng.uniform(55.0, 85.0);
    p.rr_mean_s = 60.0 / hr;
    p.rr_jitter_s = rng.uniform(0.010, 0.030);

    p.q_amp = -rng.uniform(0.08, 0.18);
    p.q_center = -rng.uniform(0.030, 0.040);
    p.q_width = rng.uniform(0.008, 0.012);
    p.r_amp = rng.uniform(0.9, 1.5);
    p.r_width = rng.uniform(0.008, 0.012);
    p.s_amp = -rng.uniform(0.15, 0.30);
    p.s_center = rng.uniform(0.028, 0.040);
    p.s_width = rng.uniform(0.008, 0.013);
    p.t_amp = rng.uniform(0.25, 0.45);
    p.t_center = rng.uniform(0.24, 0.29);
    p.t_halfwidth = rng.uniform(0.070, 0.095);

    p.c_amp = rng.uniform(0.8, 1.3);
    p.x_depth = rng.uniform(0.25, 0.45);
    p.rc_latency = rng.uniform(0.095, 0.135);
    p.bc_interval = rng.uniform(0.055, 0.085);
    p.cx_interval = rng.uniform(0.110, 0.150);
    p.icg_recovery = rng.uniform(0.060, 0.090);
    return p;
}

inline SubjectParams anger_variant(const SubjectParams& base, const SynthOptions& opt) {
    SubjectParams p = base;
    p.rr_mean_s = base.rr_mean_s / opt.anger_hr_scale;
    p.t_amp = base.t_amp * opt.anger_t_amp_scale;
    p.c_amp = base.c_amp * opt.anger_c_amp_scale;
    p.rc_latency = base.rc_latency + opt.anger_rc_shift_s;
    p.t_center = base.t_center + opt.anger_t_center_shift_s;
    return p;
}

inline void add_gaussian(std::vector<double>& sig, double fs, double center_s, double amp,
                         double width_s) {
    const double span = 4.0 * width_s;
    const auto lo = static_cast<std::ptrdiff_t>(std::floor((center_s - span) * fs));
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil((center_s + span) * fs));
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(lo, 0);
         i <= hi && i < static_cast<std::ptrdiff_t>(sig.size()); ++i) {
        const double dt = static_cast<double>(i) / fs - center_s;
        sig[static_cast<std::size_t>(i)] += amp * std::exp(-dt * dt / (2.0 * width_s * width_s));
    }
}

// Raised-sine bump with compact support [t0, t1]; zero value and zero
// slope at both ends, peak at the midpoint.
inline void add_raised_sine(std::vector<double>& sig, double fs, double t0, double t1, double amp) {
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(t0 * fs));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(t1 * fs));
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(lo, 0);
         i <= hi && i < static_cast<std::ptrdiff_t>(sig.size()); ++i) {
        const double u = (static_cast<double>(i) / fs - t0) / (t1 - t0);
        const double s = std::sin(M_PI * u);
        sig[static_cast<std::size_t>(i)] += amp * s * s;
    }
}

// B-C-X lobe: sin^2 upstroke from B to C, fall into the X trough, then a
// smooth recovery back to baseline. The second derivative peaks at B.
inline void add_icg_beat(std::vector<double>& sig, double fs, double r_time_s,
                         const SubjectParams& p) {
    const double tb = r_time_s + p.rc_latency - p.bc_interval;
    const double tc = r_time_s + p.rc_latency;
    const double tx = tc + p.cx_interval;
    const double tr = tx + p.icg_recovery;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(tb * fs));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(tr * fs));
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(lo, 0);
         i <= hi && i < static_cast<std::ptrdiff_t>(sig.size()); ++i) {
        const double t = static_cast<double>(i) / fs;
        double v = 0.0;
        if (t <= tc) {
            const double u = (t - tb) / (tc - tb);
            const double s = std::sin(0.5 * M_PI * u);
            v = p.c_amp * s * s;
        } else if (t <= tx) {
            const double u = (t - tc) / (tx - tc);
            const double s = std::sin(0.5 * M_PI * u);
            v = p.c_amp - (p.c_amp + p.x_depth) * s * s;
        } else {
            const double u = (t - tx) / (tr - tx);
            const double s = std::cos(0.5 * M_PI * u);
            v = -p.x_depth * s * s;
        }
        sig[static_cast<std::size_t>(i)] += v;
    }
}

inline FiducialOffsets offsets_for(const SubjectParams& p) {
    FiducialOffsets f;
    f.q = p.q_center;
    f.s = p.s_center;
    f.t = p.t_center;
    f.t1 = p.t_center - p.t_halfwidth;
    f.t2 = p.t_center + p.t_halfwidth;
    f.c = p.rc_latency;
    f.b = p.rc_latency - p.bc_interval;
    f.x = p.rc_latency + p.cx_interval;
    return f;
}

inline void add_noise(std::vector<double>& sig, Rng& rng, double snr_db) {
    if (!std::isfinite(snr_db))
        return;
    double power = 0.0;
    for (double v : sig)
        power += v * v;
    const double sigma =
        std::sqrt(power / static_cast<double>(sig.size())) * std::pow(10.0, -snr_db / 20.0);
    for (double& v : sig)
        v += sigma * rng.normal();
}

} // namespace detail

// Deterministic synthetic cohort: n_subjects, two segments each, with
// known beat times and fiducial offsets. One extra trailing heartbeat is
// rendered per record so that all beats_per_segment beats have a following
// R peak (the C point search needs the closing interval).
inline SyntheticCohort generate_synthetic_cohort(std::size_t n_subjects,
                                                 std::size_t beats_per_segment, double fs,
                                                 std::uint64_t seed,
                                                 const SynthOptions& opt = {}) {
    if (n_subjects < 2)
        throw config_error("synthetic cohort: need at least 2 subjects");
    if (beats_per_segment < 90)
        throw config_error("synthetic cohort: beats_per_segment must be >= 90 "
                           "(9 cohorts of 10 beats)");
    if (fs < 250.0)
        throw config_error("synthetic cohort: fs must be >= 250");

    SyntheticCohort cohort;
    for (std::size_t subj = 0; subj < n_subjects; ++subj) {
        Rng rng_params(derive_seed(seed, {kStreamSubjectParams, subj}));
        const SubjectParams base = detail::draw_subject_params(rng_params);

        for (int seg = 0; seg < 2; ++seg) {
            const SubjectParams p =
                (seg == 0) ? base : detail::anger_variant(base, opt);

            Rng rng_beats(derive_seed(seed, {kStreamBeatTimes, subj, static_cast<std::uint64_t>(seg)}));
            Rng rng_noise(derive_seed(seed, {kStreamNoise, subj, static_cast<std::uint64_t>(seg)}));

            std::vector<std::size_t> r_samples;
            double t = 1.0 + p.rr_mean_s / 2.0;
            for (std::size_t b = 0; b < beats_per_segment + 1; ++b) {
                const auto samp = static_cast<std::size_t>(std::llround(t * fs));
                if (!r_samples.empty() && samp <= r_samples.back())
                    r_samples.push_back(r_samples.back() + 1);
                else
                    r_samples.push_back(samp);
                t += std::max(0.35, rng_beats.normal(p.rr_mean_s, p.rr_jitter_s));
            }

            const auto n_samples =
                static_cast<std::size_t>(std::llround((t + 1.0) * fs));
            SignalRecord rec;
            char name[32];
            std::snprintf(name, sizeof(name), "S%03zu", subj);
            rec.subject_id = name;
            rec.segment = (seg == 0) ? Segment::Baseline : Segment::Anger;
            rec.fs = fs;
            rec.ecg.assign(n_samples, 0.0);
            rec.icg.assign(n_samples, 0.0);

            for (std::size_t r : r_samples) {
                const double tr = static_cast<double>(r) / fs;
                detail::add_gaussian(rec.ecg, fs, tr + p.q_center, p.q_amp, p.q_width);
                detail::add_gaussian(rec.ecg, fs, tr, p.r_amp, p.r_width);
                detail::add_gaussian(rec.ecg, fs, tr + p.s_center, p.s_amp, p.s_width);
                detail::add_raised_sine(rec.ecg, fs, tr + p.t_center - p.t_halfwidth,
                                        tr + p.t_center + p.t_halfwidth, p.t_amp);
                detail::add_icg_beat(rec.icg, fs, tr, p);
            }
            detail::add_noise(rec.ecg, rng_noise, opt.snr_db);
            detail::add_noise(rec.icg, rng_noise, opt.snr_db);
            rec.validate();

            SyntheticGroundTruth truth;
            truth.r_times = r_samples;
            truth.fiducial_offsets.assign(r_samples.size(), detail::offsets_for(p));
            truth.subject_params = p;
            truth.validate();

            cohort.records.push_back(std::move(rec));
            cohort.truths.push_back(std::move(truth));
        }
    }
    return cohort;
}

} // namespace cardiokit
