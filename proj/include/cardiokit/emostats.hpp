#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cardiokit/errors.hpp"
#include "cardiokit/features.hpp"
#include "cardiokit/forest.hpp"
#include "cardiokit/interpret.hpp"
#include "cardiokit/mathutil.hpp"

namespace cardiokit {

// Shapiro-Wilk normality test, Royston's AS R94 approximation.
// Valid for 3 <= n <= 5000; returns (W, p).
inline std::pair<double, double> shapiro_wilk(std::span<const double> sample) {
    const std::size_t n = sample.size();
    if (n < 3 || n > 5000)
        throw data_error("shapiro_wilk: n must be in [3, 5000]");

    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    if (x.front() == x.back())
        throw data_error("shapiro_wilk: sample has zero range");

    const double nd = static_cast<double>(n);
    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i)
        m[i] = normal_ppf((static_cast<double>(i + 1) - 0.375) / (nd + 0.25));
    double ssumm2 = 0.0;
    for (double v : m)
        ssumm2 += v * v;

    std::vector<double> a(n, 0.0);
    const double rsn = 1.0 / std::sqrt(nd);
    if (n == 3) {
        a[0] = -std::sqrt(0.5);
        a[2] = std::sqrt(0.5);
    } else {
        const double an =
            m[n - 1] / std::sqrt(ssumm2) +
            rsn * (0.221157 +
                   rsn * (-0.147981 + rsn * (-2.071190 + rsn * (4.434685 + rsn * -2.706056))));
        if (n > 5) {
            const double an1 =
                m[n - 2] / std::sqrt(ssumm2) +
                rsn * (0.042981 +
                       rsn * (-0.293762 + rsn * (-1.752461 + rsn * (5.682633 + rsn * -3.582633))));
            const double phi = (ssumm2 - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
                               (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
            a[n - 1] = an;
            a[n - 2] = an1;
            a[0] = -an;
            a[1] = -an1;
            for (std::size_t i = 2; i + 2 < n; ++i)
                a[i] = m[i] / std::sqrt(phi);
        } else {
            const double phi = (ssumm2 - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
            a[n - 1] = an;
            a[0] = -an;
            for (std::size_t i = 1; i + 1 < n; ++i)
                a[i] = m[i] / std::sqrt(phi);
        }
    }

    const double xbar = mean(x);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += a[i] * x[i];
        den += (x[i] - xbar) * (x[i] - xbar);
    }
    double w = num * num / den;
    if (w > 1.0)
        w = 1.0;

    double p;
    if (n == 3) {
        const double pi6 = 6.0 / M_PI;
        const double stqr = std::asin(std::sqrt(0.75));
        p = pi6 * (std::asin(std::sqrt(w)) - stqr);
        p = std::clamp(p, 0.0, 1.0);
    } else if (n <= 11) {
        const double gamma = -2.273 + 0.459 * nd;
        const double lw = -std::log(gamma - std::log1p(-w));
        const double mu = 0.5440 + nd * (-0.39978 + nd * (0.025054 + nd * -0.0006714));
        const double sigma = std::exp(1.3822 + nd * (-0.77857 + nd * (0.062767 + nd * -0.0020322)));
        p = normal_sf((lw - mu) / sigma);
    } else {
        const double ln_n = std::log(nd);
        const double lw = std::log1p(-w);
        const double mu = -1.5861 + ln_n * (-0.31082 + ln_n * (-0.083751 + ln_n * 0.0038915));
        const double sigma = std::exp(-0.4803 + ln_n * (-0.082676 + ln_n * 0.0030302));
        p = normal_sf((lw - mu) / sigma);
    }
    return {w, p};
}

// Student's two-sample t-test, pooled variance, two-sided p.
inline std::pair<double, double> ttest_ind(std::span<const double> a, std::span<const double> b) {
    const std::size_t na = a.size(), nb = b.size();
    if (na < 2 || nb < 2)
        throw data_error("ttest_ind: both samples need n >= 2");
    const double va = variance(a), vb = variance(b);
    const double df = static_cast<double>(na + nb - 2);
    const double pooled =
        ((static_cast<double>(na - 1)) * va + (static_cast<double>(nb - 1)) * vb) / df;
    if (pooled <= 0.0)
        throw data_error("ttest_ind: pooled variance is zero");
    const double se =
        std::sqrt(pooled * (1.0 / static_cast<double>(na) + 1.0 / static_cast<double>(nb)));
    const double t = (mean(a) - mean(b)) / se;
    return {t, t_two_sided_p(t, df)};
}

// Mann-Whitney U for the first sample; two-sided p via the normal
// approximation with tie-corrected variance and continuity correction.
inline std::pair<double, double> mann_whitney_u(std::span<const double> a,
                                                std::span<const double> b) {
    const std::size_t na = a.size(), nb = b.size();
    if (na < 1 || nb < 1)
        throw data_error("mann_whitney_u: both samples must be non-empty");

    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = average_ranks(pooled);
    double ra = 0.0;
    for (std::size_t i = 0; i < na; ++i)
        ra += ranks[i];
    const double u = ra - static_cast<double>(na) * (static_cast<double>(na) + 1.0) / 2.0;

    const double n = static_cast<double>(na + nb);
    const double mu = static_cast<double>(na) * static_cast<double>(nb) / 2.0;

    // Tie correction from run lengths in the sorted pooled sample.
    std::sort(pooled.begin(), pooled.end());
    double tie_term = 0.0;
    std::size_t i = 0;
    while (i < pooled.size()) {
        std::size_t j = i;
        while (j + 1 < pooled.size() && pooled[j + 1] == pooled[i])
            ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    const double var_u = static_cast<double>(na) * static_cast<double>(nb) / 12.0 *
                         ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var_u <= 0.0)
        return {u, 1.0}; // both samples constant and equal
    const double z = std::max(0.0, std::fabs(u - mu) - 0.5) / std::sqrt(var_u);
    const double p = std::min(1.0, 2.0 * normal_sf(z));
    return {u, p};
}

inline double cohens_d(std::span<const double> a, std::span<const double> b) {
    const std::size_t na = a.size(), nb = b.size();
    if (na < 2 || nb < 2)
        throw data_error("cohens_d: both samples need n >= 2");
    const double pooled =
        ((static_cast<double>(na - 1)) * variance(a) + (static_cast<double>(nb - 1)) * variance(b)) /
        static_cast<double>(na + nb - 2);
    if (pooled <= 0.0)
        throw data_error("cohens_d: zero pooled standard deviation");
    return (mean(a) - mean(b)) / std::sqrt(pooled);
}

// Dominance-count effect size in [-1, 1].
inline double cliffs_delta(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty())
        throw data_error("cliffs_delta: both samples must be non-empty");
    long long greater = 0, less = 0;
    for (double va : a) {
        for (double vb : b) {
            if (va > vb)
                ++greater;
            else if (va < vb)
                ++less;
        }
    }
    return static_cast<double>(greater - less) /
           (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

inline std::vector<double> bonferroni(const std::vector<double>& p, std::size_t m = 0) {
    if (m == 0)
        m = p.size();
    std::vector<double> out;
    out.reserve(p.size());
    for (double v : p) {
        if (v < 0.0 || v > 1.0)
            throw data_error("bonferroni: p-value outside [0,1]");
        out.push_back(std::min(1.0, v * static_cast<double>(m)));
    }
    return out;
}

enum class TestKind { TTest, MannWhitney };
enum class EffectKind { CohensD, CliffsDelta };

struct FeatureTestResult {
    std::string feature;
    double shapiro_w_baseline = 0.0, shapiro_p_baseline = 0.0;
    double shapiro_w_anger = 0.0, shapiro_p_anger = 0.0;
    TestKind test = TestKind::MannWhitney;
    double statistic = 0.0;
    double p_raw = 1.0;
    double p_adjusted = 1.0;
    EffectKind effect_kind = EffectKind::CliffsDelta;
    double effect_size = 0.0;
    bool significant = false;
};

namespace detail {

inline void require_both_segments(const FeatureMatrix& m) {
    std::set<std::string> base, anger;
    for (const auto& r : m.rows)
        (r.segment == Segment::Baseline ? base : anger).insert(r.subject_id);
    if (base.empty() || anger.empty() || base != anger)
        throw data_error("emotion analysis: every subject needs both segments");
}

} // namespace detail

// Per feature: Shapiro-Wilk on each segment group; t-test + Cohen's d when
// both groups look normal (p >= 0.05), otherwise Mann-Whitney + Cliff's
// delta. Bonferroni over all 29 features, significance at adjusted p < 0.05.
inline std::vector<FeatureTestResult> emotion_feature_tests(const FeatureMatrix& m,
                                                            double alpha = 0.05) {
    detail::require_both_segments(m);
    const FeatureMatrix base = m.filter_segment(Segment::Baseline);
    const FeatureMatrix anger = m.filter_segment(Segment::Anger);

    std::vector<FeatureTestResult> results;
    results.reserve(kNumFeatures);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        FeatureTestResult r;
        r.feature = feature_names()[f];
        const std::vector<double> ga = base.column(f);
        const std::vector<double> gb = anger.column(f);
        std::tie(r.shapiro_w_baseline, r.shapiro_p_baseline) = shapiro_wilk(ga);
        std::tie(r.shapiro_w_anger, r.shapiro_p_anger) = shapiro_wilk(gb);
        if (r.shapiro_p_baseline >= alpha && r.shapiro_p_anger >= alpha) {
            r.test = TestKind::TTest;
            std::tie(r.statistic, r.p_raw) = ttest_ind(ga, gb);
            r.effect_kind = EffectKind::CohensD;
            r.effect_size = cohens_d(ga, gb);
        } else {
            r.test = TestKind::MannWhitney;
            std::tie(r.statistic, r.p_raw) = mann_whitney_u(ga, gb);
            r.effect_kind = EffectKind::CliffsDelta;
            r.effect_size = cliffs_delta(ga, gb);
        }
        results.push_back(r);
    }
    std::vector<double> raw;
    for (const auto& r : results)
        raw.push_back(r.p_raw);
    const std::vector<double> adj = bonferroni(raw, kNumFeatures);
    for (std::size_t f = 0; f < results.size(); ++f) {
        results[f].p_adjusted = adj[f];
        results[f].significant = adj[f] < alpha;
    }
    return results;
}

struct OppositePair {
    std::string feature1, feature2;
    double r = 0.0;
    bool significant1 = false, significant2 = false;
};

// High-correlation pairs whose members land on opposite sides of the
// significance threshold.
inline std::vector<OppositePair> opposite_significance_pairs(
    const std::vector<CorrelationEdge>& edges, const std::vector<FeatureTestResult>& tests) {
    std::vector<OppositePair> out;
    for (const auto& e : edges) {
        const bool s1 = tests.at(e.a).significant;
        const bool s2 = tests.at(e.b).significant;
        if (s1 == s2)
            continue;
        out.push_back({tests.at(e.a).feature, tests.at(e.b).feature, e.r, s1, s2});
    }
    std::sort(out.begin(), out.end(), [](const OppositePair& a, const OppositePair& b) {
        return std::fabs(a.r) > std::fabs(b.r);
    });
    return out;
}

struct GenCell {
    double accuracy = 0.0;
    double f1 = 0.0;
};

// 4 rows (within-segment CV and cross-segment generalization, both
// directions) x 3 feature-set columns (all, non-significant, significant).
struct GeneralizationReport {
    static constexpr std::array<const char*, 4> row_names = {
        "baseline_cv", "baseline_to_anger", "anger_cv", "anger_to_baseline"};
    static constexpr std::array<const char*, 3> column_names = {"all", "non_significant",
                                                                "significant"};
    std::array<std::array<std::optional<GenCell>, 3>, 4> cells;
    std::vector<std::string> significant_features;
    std::vector<std::string> non_significant_features;
};

// Within-segment rows use stratified 3-fold CV; cross-segment rows train
// on the whole source segment and score on the whole target segment.
inline GeneralizationReport emotion_generalization(const FeatureMatrix& m,
                                                   const ForestParams& params,
                                                   std::uint64_t seed, std::size_t workers = 1,
                                                   double alpha = 0.05) {
    detail::require_both_segments(m);
    const std::vector<FeatureTestResult> tests = emotion_feature_tests(m, alpha);

    GeneralizationReport report;
    std::array<std::vector<std::size_t>, 3> subsets;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        subsets[0].push_back(f);
        if (tests[f].significant) {
            subsets[2].push_back(f);
            report.significant_features.push_back(tests[f].feature);
        } else {
            subsets[1].push_back(f);
            report.non_significant_features.push_back(tests[f].feature);
        }
    }

    const FeatureMatrix base = m.filter_segment(Segment::Baseline);
    const FeatureMatrix anger = m.filter_segment(Segment::Anger);

    for (std::size_t col = 0; col < 3; ++col) {
        if (subsets[col].empty())
            continue; // reported as a missing column
        const std::array<const FeatureMatrix*, 2> segs = {&base, &anger};
        for (std::size_t s = 0; s < 2; ++s) {
            const Dataset within = make_dataset(*segs[s], subsets[col]);
            ForestParams p = params;
            p.seed = derive_seed(seed, {kStreamKFold, 100 + s, col});
            const std::vector<Metrics> folds =
                cross_validate(within, p, 3, derive_seed(seed, {kStreamKFold, 200 + s, col}),
                               workers);
            GenCell cv;
            for (const auto& fm : folds) {
                cv.accuracy += fm.accuracy;
                cv.f1 += fm.f1;
            }
            cv.accuracy /= static_cast<double>(folds.size());
            cv.f1 /= static_cast<double>(folds.size());
            report.cells[s == 0 ? 0 : 2][col] = cv;

            ForestParams pg = params;
            pg.seed = derive_seed(seed, {kStreamKFold, 300 + s, col});
            const Forest forest = fit_forest(within, pg, workers);
            const Dataset other = make_dataset_like(*segs[1 - s], forest, subsets[col]);
            const Metrics gen = evaluate(forest, other, workers);
            report.cells[s == 0 ? 1 : 3][col] = GenCell{gen.accuracy, gen.f1};
        }
    }
    return report;
}

} // namespace cardiokit
