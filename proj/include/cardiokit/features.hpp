#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cardiokit/delineation.hpp"
#include "cardiokit/errors.hpp"
#include "cardiokit/mathutil.hpp"
#include "cardiokit/record.hpp"
#include "cardiokit/rng.hpp"

namespace cardiokit {

inline constexpr std::size_t kNumFeatures = 29;

// Canonical feature order; every matrix, report and model uses it.
inline const std::array<std::string, kNumFeatures>& feature_names() {
    static const std::array<std::string, kNumFeatures> names = {
        "RR_int",      "QRS_int",   "T_int",     "QT_int",    "ST_int",
        "RQ_amp",      "RS_amp",    "RT_amp",    "TT1_amp",   "TT2_amp",
        "QR_slope",    "RS_slope",  "TT1_slope", "TT2_slope", "ECGQRScrest",
        "ECGTcrest",   "BX_int",    "CB_amp",    "CX_amp",    "CB_slope",
        "CX_slope",    "ICGcrest",  "RC_int",    "QX_int",    "QB_int",
        "SX_int",      "SB_int",    "BT_int",    "TX_int"};
    return names;
}

inline std::size_t feature_index(const std::string& name) {
    const auto& names = feature_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name)
            return i;
    throw config_error("unknown feature name: " + name);
}

// Bazett's heart-rate correction: interval / sqrt(RR).
inline double bazett_correct(double interval_s, double rr_s) {
    if (rr_s <= 0.0)
        throw config_error("bazett_correct: rr must be positive");
    return interval_s / std::sqrt(rr_s);
}

// Peak magnitude over RMS of a wave segment.
inline double crest_factor(std::span<const double> segment) {
    if (segment.empty())
        throw config_error("crest_factor: empty segment");
    double peak = 0.0, power = 0.0;
    for (double v : segment) {
        peak = std::max(peak, std::fabs(v));
        power += v * v;
    }
    if (power <= 0.0)
        throw config_error("crest_factor: all-zero segment");
    return peak / std::sqrt(power / static_cast<double>(segment.size()));
}

struct FeatureVector {
    std::array<double, kNumFeatures> values{};
    std::string subject_id;
    Segment segment = Segment::Baseline;
    int cohort_index = 0;

    double operator[](const std::string& name) const {
        return values[feature_index(name)];
    }
};

// All 29 features from one averaged template pair. Same-signal intervals
// read off template indices; cross-signal intervals bridge the two anchors
// through rc_mean. Every temporal feature except RR is Bazett-corrected.
inline FeatureVector extract_features(const TemplatePair& tp, const FiducialMap& fm) {
    fm.validate();
    const double fs = tp.fs;
    const double rr = tp.rr_mean;
    const std::vector<double>& ecg = tp.ecg_tpl;
    const std::vector<double>& icg = tp.icg_tpl;

    auto tpl_time = [&](std::size_t idx) {
        return (static_cast<double>(idx) - 0.250 * fs) / fs;
    };
    // ICG template is anchored on C, so an ICG sample's time relative to R
    // is its offset from the anchor plus the cohort RC latency.
    auto ecg_time = [&](std::size_t idx) { return tpl_time(idx); };
    auto icg_time = [&](std::size_t idx) { return tpl_time(idx) + tp.rc_mean; };
    auto bz = [&](double interval_s) { return bazett_correct(interval_s, rr); };
    auto span_of = [](const std::vector<double>& sig, std::size_t lo, std::size_t hi) {
        return std::span<const double>(sig.data() + lo, hi - lo + 1);
    };

    FeatureVector out;
    auto set = [&](const char* name, double v) { out.values[feature_index(name)] = v; };

    set("RR_int", rr); // deliberately uncorrected

    set("QRS_int", bz(static_cast<double>(fm.s - fm.q) / fs));
    set("T_int", bz(static_cast<double>(fm.t2 - fm.t1) / fs));
    set("QT_int", bz(static_cast<double>(fm.t2 - fm.q) / fs));
    set("ST_int", bz(static_cast<double>(fm.t2 - fm.s) / fs));
    set("BX_int", bz(static_cast<double>(fm.x - fm.b) / fs));

    set("RQ_amp", ecg[fm.r] - ecg[fm.q]);
    set("RS_amp", ecg[fm.r] - ecg[fm.s]);
    set("RT_amp", ecg[fm.r] - ecg[fm.t]);
    set("TT1_amp", ecg[fm.t] - ecg[fm.t1]);
    set("TT2_amp", ecg[fm.t] - ecg[fm.t2]);
    set("CB_amp", icg[fm.c] - icg[fm.b]);
    set("CX_amp", icg[fm.c] - icg[fm.x]);

    auto slope = [&](double v_from, double v_to, double t_from, double t_to) {
        return (v_to - v_from) / (t_to - t_from);
    };
    set("QR_slope", slope(ecg[fm.q], ecg[fm.r], ecg_time(fm.q), ecg_time(fm.r)));
    set("RS_slope", slope(ecg[fm.s], ecg[fm.r], ecg_time(fm.s), ecg_time(fm.r)));
    set("TT1_slope", slope(ecg[fm.t1], ecg[fm.t], ecg_time(fm.t1), ecg_time(fm.t)));
    set("TT2_slope", slope(ecg[fm.t], ecg[fm.t2], ecg_time(fm.t), ecg_time(fm.t2)));
    set("CB_slope", slope(icg[fm.b], icg[fm.c], icg_time(fm.b), icg_time(fm.c)));
    set("CX_slope", slope(icg[fm.c], icg[fm.x], icg_time(fm.c), icg_time(fm.x)));

    set("ECGQRScrest", crest_factor(span_of(ecg, fm.q, fm.s)));
    set("ECGTcrest", crest_factor(span_of(ecg, fm.t1, fm.t2)));
    set("ICGcrest", crest_factor(span_of(icg, fm.b, fm.x)));

    set("RC_int", bz(tp.rc_mean));
    set("QX_int", bz(icg_time(fm.x) - ecg_time(fm.q)));
    set("QB_int", bz(icg_time(fm.b) - ecg_time(fm.q)));
    set("SX_int", bz(icg_time(fm.x) - ecg_time(fm.s)));
    set("SB_int", bz(icg_time(fm.b) - ecg_time(fm.s)));
    set("BT_int", bz(icg_time(fm.b) - ecg_time(fm.t)));
    set("TX_int", bz(icg_time(fm.x) - ecg_time(fm.t)));

    for (double v : out.values)
        if (!std::isfinite(v))
            throw data_error("extract_features: non-finite feature value");
    return out;
}

struct FeatureMatrix {
    std::vector<FeatureVector> rows;

    std::size_t n_rows() const { return rows.size(); }

    std::vector<std::string> subjects() const {
        std::vector<std::string> out;
        for (const auto& r : rows)
            if (std::find(out.begin(), out.end(), r.subject_id) == out.end())
                out.push_back(r.subject_id);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<double> column(std::size_t feature) const {
        std::vector<double> col;
        col.reserve(rows.size());
        for (const auto& r : rows)
            col.push_back(r.values[feature]);
        return col;
    }

    FeatureMatrix filter_segment(Segment seg) const {
        FeatureMatrix out;
        for (const auto& r : rows)
            if (r.segment == seg)
                out.rows.push_back(r);
        return out;
    }
};

struct LabeledTemplates {
    std::string subject_id;
    Segment segment = Segment::Baseline;
    std::vector<DelineatedTemplate> templates;
};

struct BuildResult {
    FeatureMatrix matrix;
    std::size_t dropped = 0; // quality-flagged cohorts skipped
};

// 18 rows per clean subject: 9 cohorts x 2 segments, ordered by subject,
// then segment, then cohort. Edge-flagged templates are dropped.
inline BuildResult build_feature_matrix(std::vector<LabeledTemplates> groups) {
    std::sort(groups.begin(), groups.end(), [](const LabeledTemplates& a, const LabeledTemplates& b) {
        if (a.subject_id != b.subject_id)
            return a.subject_id < b.subject_id;
        return static_cast<int>(a.segment) < static_cast<int>(b.segment);
    });
    BuildResult out;
    for (const auto& g : groups) {
        for (const auto& dt : g.templates) {
            if (dt.edge_flagged) {
                ++out.dropped;
                continue;
            }
            FeatureVector fv = extract_features(dt.pair, dt.fiducials);
            fv.subject_id = g.subject_id;
            fv.segment = g.segment;
            fv.cohort_index = dt.pair.cohort_index;
            out.matrix.rows.push_back(std::move(fv));
        }
    }
    return out;
}

// Per-subject stratified split. Test row count rounds to nearest with ties
// toward test; assignments are a deterministic per-subject shuffle.
inline std::pair<FeatureMatrix, FeatureMatrix> stratified_split(const FeatureMatrix& m,
                                                                double test_ratio,
                                                                std::uint64_t seed) {
    if (!(test_ratio > 0.0 && test_ratio < 1.0))
        throw config_error("stratified_split: test_ratio must be in (0,1)");

    std::map<std::string, std::vector<std::size_t>> by_subject;
    for (std::size_t i = 0; i < m.rows.size(); ++i)
        by_subject[m.rows[i].subject_id].push_back(i);

    std::vector<bool> is_test(m.rows.size(), false);
    std::uint64_t subject_ordinal = 0;
    for (auto& [subject, idx] : by_subject) {
        const auto n = idx.size();
        const auto n_test =
            static_cast<std::size_t>(std::floor(test_ratio * static_cast<double>(n) + 0.5));
        if (n_test == 0 || n_test >= n)
            throw data_error("stratified_split: subject " + subject + " has too few rows (" +
                             std::to_string(n) + ") for both partitions");
        Rng rng(derive_seed(seed, {kStreamSplit, subject_ordinal++}));
        rng.shuffle(idx);
        for (std::size_t k = 0; k < n_test; ++k)
            is_test[idx[k]] = true;
    }

    FeatureMatrix train, test;
    for (std::size_t i = 0; i < m.rows.size(); ++i)
        (is_test[i] ? test : train).rows.push_back(m.rows[i]);
    return {train, test};
}

// CSV persistence: header `subject,segment,cohort,<29 names>`.
inline void write_feature_csv(const FeatureMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw io_error("cannot write feature matrix: " + path);
    out << "subject,segment,cohort";
    for (const auto& n : feature_names())
        out << ',' << n;
    out << '\n';
    for (const auto& r : m.rows) {
        out << r.subject_id << ',' << segment_name(r.segment) << ',' << r.cohort_index;
        for (double v : r.values)
            out << ',' << format_double(v);
        out << '\n';
    }
}

inline FeatureMatrix read_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw io_error("missing feature matrix: " + path);
    FeatureMatrix m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos)
                break;
            start = comma + 1;
        }
        if (line_no == 1) {
            if (cells.size() != 3 + kNumFeatures)
                throw parse_error(path + ": expected " + std::to_string(3 + kNumFeatures) +
                                  " columns in header");
            for (std::size_t i = 0; i < kNumFeatures; ++i)
                if (cells[3 + i] != feature_names()[i])
                    throw parse_error(path + ": unexpected feature column '" + cells[3 + i] + "'");
            continue;
        }
        if (cells.size() != 3 + kNumFeatures)
            throw parse_error(path + ": ragged row " + std::to_string(line_no));
        FeatureVector fv;
        fv.subject_id = cells[0];
        fv.segment = parse_segment(cells[1]);
        fv.cohort_index = std::stoi(cells[2]);
        for (std::size_t i = 0; i < kNumFeatures; ++i)
            fv.values[i] = detail::parse_csv_cell(cells[3 + i], path, line_no);
        m.rows.push_back(std::move(fv));
    }
    return m;
}

} // namespace cardiokit
