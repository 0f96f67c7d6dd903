#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cardiokit/errors.hpp"
#include "cardiokit/record.hpp"

namespace cardiokit {

// Everything a pipeline run needs; defaults reproduce the published setup
// at desk scale. Exactly one dataset source must be active.
struct PipelineConfig {
    std::string source = "synthetic"; // "synthetic" | "manifest"
    std::string manifest_path;
    std::uint64_t seed = 7;
    std::string out_dir;
    std::size_t workers = 1;

    std::size_t synth_subjects = 20;
    std::size_t synth_beats = 90;
    double synth_fs = 500.0;
    double synth_snr_db = 20.0;

    int filter_order = 4;
    double ecg_band_lo_hz = 1.0;
    double ecg_band_hi_hz = 40.0;
    double icg_band_lo_hz = 0.5;
    double icg_band_hi_hz = 40.0;

    double test_ratio = 0.33;

    std::size_t forest_trees = 100;
    std::size_t forest_max_features = 0; // 0 = floor(sqrt(d))
    std::size_t forest_min_samples_split = 2;
    std::size_t forest_min_samples_leaf = 1;
    std::size_t forest_max_depth = 0; // 0 = unlimited
    bool forest_bootstrap = true;

    std::size_t permutation_repeats = 100;
    std::size_t cluster_shuffle_repeats = 100;
    double correlation_threshold = 0.7;
    std::size_t importance_top_k = 10;

    std::size_t rfecv_folds = 5;
    std::size_t rfecv_step = 1;
    std::size_t ga_population = 50;
    std::size_t ga_generations = 50;
    double ga_crossover_prob = 0.5;
    double ga_mutation_prob = 0.1;
    std::size_t ga_tournament_size = 3;
    double ga_per_gene_flip = 0.05;
    std::size_t ga_cv_folds = 3;

    double alpha = 0.05;

    bool run_importance = true;
    bool run_select = true;
    bool run_emostats = true;

    void validate() const {
        if (source != "synthetic" && source != "manifest")
            throw config_error("config: source must be 'synthetic' or 'manifest'");
        if (source == "manifest" && manifest_path.empty())
            throw config_error("config: manifest source requires manifest_path");
        if (out_dir.empty())
            throw config_error("config: output directory not set (use --out or CARDIOKIT_OUT)");
        if (!(test_ratio > 0.0 && test_ratio < 1.0))
            throw config_error("config: test_ratio must be in (0,1)");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw config_error("config: alpha must be in (0,1)");
    }
};

namespace detail {

struct ConfigEntry {
    std::string key;
    std::string comment;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw config_error("config: bad integer for key '" + key + "': " + v);
    return out;
}

inline double parse_f64(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw config_error("config: bad number for key '" + key + "': " + v);
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "off")
        return false;
    throw config_error("config: bad boolean for key '" + key + "': " + v);
}

inline const std::vector<ConfigEntry>& config_entries() {
    auto u64 = [](std::size_t PipelineConfig::* member) {
        return std::make_pair(
            [member](const PipelineConfig& c) { return std::to_string(c.*member); },
            [member](PipelineConfig& c, const std::string& v) {
                c.*member = static_cast<std::size_t>(parse_u64("", v));
            });
    };
    auto f64 = [](double PipelineConfig::* member) {
        return std::make_pair(
            [member](const PipelineConfig& c) { return format_double(c.*member); },
            [member](PipelineConfig& c, const std::string& v) { c.*member = parse_f64("", v); });
    };
    auto b = [](bool PipelineConfig::* member) {
        return std::make_pair(
            [member](const PipelineConfig& c) { return std::string(c.*member ? "true" : "false"); },
            [member](PipelineConfig& c, const std::string& v) { c.*member = parse_bool("", v); });
    };
    auto str = [](std::string PipelineConfig::* member) {
        return std::make_pair([member](const PipelineConfig& c) { return c.*member; },
                              [member](PipelineConfig& c, const std::string& v) { c.*member = v; });
    };

    static const std::vector<ConfigEntry> entries = [&] {
        std::vector<ConfigEntry> e;
        auto add = [&e](const char* key, const char* comment, auto accessors) {
            e.push_back({key, comment, accessors.first, accessors.second});
        };
        add("source", "dataset source: synthetic | manifest", str(&PipelineConfig::source));
        add("manifest_path", "dataset manifest (JSON), used when source = manifest",
            str(&PipelineConfig::manifest_path));
        add("seed", "master seed; all randomness derives from it",
            std::make_pair(
                [](const PipelineConfig& c) { return std::to_string(c.seed); },
                [](PipelineConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }));
        add("out_dir", "output directory for stage artifacts", str(&PipelineConfig::out_dir));
        add("workers", "worker threads; never changes numeric results",
            u64(&PipelineConfig::workers));
        add("synth_subjects", "synthetic cohort size", u64(&PipelineConfig::synth_subjects));
        add("synth_beats", "beats per synthetic segment (>= 90)",
            u64(&PipelineConfig::synth_beats));
        add("synth_fs", "synthetic sampling rate, Hz", f64(&PipelineConfig::synth_fs));
        add("synth_snr_db", "synthetic additive-noise SNR in dB (inf disables noise)",
            f64(&PipelineConfig::synth_snr_db));
        add("filter_order", "Butterworth prototype order",
            std::make_pair(
                [](const PipelineConfig& c) { return std::to_string(c.filter_order); },
                [](PipelineConfig& c, const std::string& v) {
                    c.filter_order = static_cast<int>(parse_u64("filter_order", v));
                }));
        add("ecg_band_lo_hz", "ECG bandpass low edge, Hz", f64(&PipelineConfig::ecg_band_lo_hz));
        add("ecg_band_hi_hz", "ECG bandpass high edge, Hz", f64(&PipelineConfig::ecg_band_hi_hz));
        add("icg_band_lo_hz", "ICG bandpass low edge, Hz", f64(&PipelineConfig::icg_band_lo_hz));
        add("icg_band_hi_hz", "ICG bandpass high edge, Hz", f64(&PipelineConfig::icg_band_hi_hz));
        add("test_ratio", "stratified test fraction", f64(&PipelineConfig::test_ratio));
        add("forest_trees", "number of trees", u64(&PipelineConfig::forest_trees));
        add("forest_max_features", "features per split; 0 = floor(sqrt(d))",
            u64(&PipelineConfig::forest_max_features));
        add("forest_min_samples_split", "minimum rows to split a node",
            u64(&PipelineConfig::forest_min_samples_split));
        add("forest_min_samples_leaf", "minimum rows per leaf",
            u64(&PipelineConfig::forest_min_samples_leaf));
        add("forest_max_depth", "maximum tree depth; 0 = unlimited",
            u64(&PipelineConfig::forest_max_depth));
        add("forest_bootstrap", "bootstrap resampling per tree",
            b(&PipelineConfig::forest_bootstrap));
        add("permutation_repeats", "permutation-importance repeats",
            u64(&PipelineConfig::permutation_repeats));
        add("cluster_shuffle_repeats", "cluster-shuffle repeats",
            u64(&PipelineConfig::cluster_shuffle_repeats));
        add("correlation_threshold", "|r| threshold for correlation edges (strict)",
            f64(&PipelineConfig::correlation_threshold));
        add("importance_top_k", "top-k cut for the importance consensus",
            u64(&PipelineConfig::importance_top_k));
        add("rfecv_folds", "stratified CV folds inside RFECV", u64(&PipelineConfig::rfecv_folds));
        add("rfecv_step", "features dropped per RFECV step", u64(&PipelineConfig::rfecv_step));
        add("ga_population", "GA population size", u64(&PipelineConfig::ga_population));
        add("ga_generations", "GA generations", u64(&PipelineConfig::ga_generations));
        add("ga_crossover_prob", "GA crossover probability",
            f64(&PipelineConfig::ga_crossover_prob));
        add("ga_mutation_prob", "GA per-individual mutation probability",
            f64(&PipelineConfig::ga_mutation_prob));
        add("ga_tournament_size", "GA tournament size", u64(&PipelineConfig::ga_tournament_size));
        add("ga_per_gene_flip", "GA per-gene flip probability inside mutation",
            f64(&PipelineConfig::ga_per_gene_flip));
        add("ga_cv_folds", "stratified CV folds for GA fitness", u64(&PipelineConfig::ga_cv_folds));
        add("alpha", "significance level for statistical tests", f64(&PipelineConfig::alpha));
        add("run_importance", "run importance + cluster analyses",
            b(&PipelineConfig::run_importance));
        add("run_select", "run RFECV/GA feature selection", b(&PipelineConfig::run_select));
        add("run_emostats", "run the emotion statistics battery",
            b(&PipelineConfig::run_emostats));
        return e;
    }();
    return entries;
}

} // namespace detail

// Commented key-value template holding the built-in defaults.
inline void emit_config_template(const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw io_error("cannot write config template: " + path);
    out << "# cardiokit pipeline configuration\n"
        << "# key = value; '#' starts a comment; unknown keys are rejected\n\n";
    const PipelineConfig defaults;
    for (const auto& entry : detail::config_entries()) {
        out << "# " << entry.comment << "\n";
        out << entry.key << " = " << entry.get(defaults) << "\n\n";
    }
}

inline PipelineConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw io_error("cannot open config file: " + path);
    PipelineConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.resize(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return (b == std::string::npos) ? std::string{} : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config " + path + ": expected key = value at line " +
                               std::to_string(line_no));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        bool known = false;
        for (const auto& entry : detail::config_entries()) {
            if (entry.key == key) {
                entry.set(config, value);
                known = true;
                break;
            }
        }
        if (!known)
            throw config_error("config " + path + ": unknown key '" + key + "'");
    }
    return config;
}

} // namespace cardiokit
