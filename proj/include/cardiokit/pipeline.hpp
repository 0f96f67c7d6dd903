#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cardiokit/config.hpp"
#include "cardiokit/delineation.hpp"
#include "cardiokit/dsp.hpp"
#include "cardiokit/emostats.hpp"
#include "cardiokit/features.hpp"
#include "cardiokit/forest.hpp"
#include "cardiokit/interpret.hpp"
#include "cardiokit/record.hpp"
#include "cardiokit/selection.hpp"
#include "cardiokit/shap.hpp"
#include "cardiokit/synthetic.hpp"

namespace cardiokit {

namespace fsys = std::filesystem;

// Flat layout of every stage artifact inside the output directory.
struct StagePaths {
    fsys::path out;
    explicit StagePaths(const std::string& out_dir) : out(out_dir) {}

    fsys::path raw_dir() const { return out / "raw"; }
    fsys::path manifest() const { return out / "manifest.json"; }
    fsys::path ground_truth() const { return out / "ground_truth.json"; }
    fsys::path filtered_dir() const { return out / "filtered"; }
    fsys::path filtered_manifest() const { return out / "filtered_manifest.json"; }
    fsys::path template_dir() const { return out / "templates"; }
    fsys::path fiducials() const { return out / "fiducials.json"; }
    fsys::path features() const { return out / "features.csv"; }
    fsys::path train() const { return out / "train.csv"; }
    fsys::path test() const { return out / "test.csv"; }
    fsys::path model() const { return out / "model.json"; }
    fsys::path metrics() const { return out / "metrics.json"; }
    fsys::path importance() const { return out / "importance.csv"; }
    fsys::path venn_importance() const { return out / "venn_importance.json"; }
    fsys::path consensus_metrics() const { return out / "consensus_metrics.json"; }
    fsys::path correlation() const { return out / "correlation.csv"; }
    fsys::path heatmap() const { return out / "heatmap.csv"; }
    fsys::path clusters() const { return out / "clusters.json"; }
    fsys::path cluster_shuffle() const { return out / "cluster_shuffle.csv"; }
    fsys::path selection_rfecv() const { return out / "selection_rfecv.json"; }
    fsys::path selection_ga() const { return out / "selection_ga.json"; }
    fsys::path selection_intersection() const { return out / "selection_intersection.json"; }
    fsys::path stat_tests() const { return out / "stat_tests.csv"; }
    fsys::path opposite_pairs() const { return out / "opposite_pairs.csv"; }
    fsys::path generalization() const { return out / "generalization.csv"; }
    fsys::path table1() const { return out / "table1.csv"; }
    fsys::path table2() const { return out / "table2.csv"; }
    fsys::path table3() const { return out / "table3.csv"; }
    fsys::path table4() const { return out / "table4.csv"; }
    fsys::path venn_selection() const { return out / "venn_selection.json"; }
};

namespace detail {

inline void require_artifact(const fsys::path& p) {
    if (!fsys::exists(p))
        throw data_error("missing stage artifact: " + p.string() +
                         " (run the producing stage first)");
}

inline void write_json(const nlohmann::json& j, const fsys::path& p) {
    std::ofstream out(p);
    if (!out)
        throw io_error("cannot write " + p.string());
    out << j.dump(1) << "\n";
}

inline nlohmann::json read_json(const fsys::path& p) {
    require_artifact(p);
    std::ifstream in(p);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(p.string() + ": " + e.what());
    }
    return j;
}

inline ForestParams forest_params_from(const PipelineConfig& config) {
    ForestParams p;
    p.n_trees = config.forest_trees;
    p.max_features = config.forest_max_features;
    p.min_samples_split = config.forest_min_samples_split;
    p.min_samples_leaf = config.forest_min_samples_leaf;
    if (config.forest_max_depth > 0)
        p.max_depth = config.forest_max_depth;
    p.bootstrap = config.forest_bootstrap;
    p.seed = config.seed;
    return p;
}

inline GaParams ga_params_from(const PipelineConfig& config) {
    GaParams g;
    g.population = config.ga_population;
    g.generations = config.ga_generations;
    g.crossover_prob = config.ga_crossover_prob;
    g.mutation_prob = config.ga_mutation_prob;
    g.tournament_size = config.ga_tournament_size;
    g.per_gene_flip = config.ga_per_gene_flip;
    g.seed = config.seed;
    return g;
}

// Manifest entry paths resolve relative to the manifest file itself.
inline DatasetManifest load_manifest_resolved(const fsys::path& manifest_path) {
    DatasetManifest manifest = DatasetManifest::from_json_file(manifest_path.string());
    for (auto& e : manifest.entries) {
        fsys::path p(e.path);
        if (p.is_relative())
            e.path = (manifest_path.parent_path() / p).string();
    }
    return manifest;
}

inline std::string record_stem(const SignalRecord& rec) {
    return rec.subject_id + "_" + segment_name(rec.segment);
}

inline std::vector<std::string> labels29() {
    return std::vector<std::string>(feature_names().begin(), feature_names().end());
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json j;
    j["accuracy"] = m.accuracy;
    j["precision_macro"] = m.precision;
    j["recall_macro"] = m.recall;
    j["f1_macro"] = m.f1;
    j["n_classes"] = m.n_classes;
    return j;
}

} // namespace detail

// ---- stages -------------------------------------------------------------

inline void stage_synth(const PipelineConfig& config) {
    if (config.source != "synthetic")
        return; // manifest runs skip generation
    const StagePaths paths(config.out_dir);
    fsys::create_directories(paths.raw_dir());

    SynthOptions opt;
    opt.snr_db = config.synth_snr_db;
    const SyntheticCohort cohort = generate_synthetic_cohort(
        config.synth_subjects, config.synth_beats, config.synth_fs, config.seed, opt);

    DatasetManifest manifest;
    nlohmann::json truth = nlohmann::json::array();
    for (std::size_t i = 0; i < cohort.records.size(); ++i) {
        const SignalRecord& rec = cohort.records[i];
        const std::string rel = "raw/" + detail::record_stem(rec) + ".csv";
        write_signal_csv(rec, (paths.out / rel).string());
        manifest.entries.push_back({rec.subject_id, rec.segment, rel, rec.fs});

        const SyntheticGroundTruth& gt = cohort.truths[i];
        nlohmann::json jt;
        jt["subject_id"] = rec.subject_id;
        jt["segment"] = segment_name(rec.segment);
        jt["r_times"] = gt.r_times;
        const FiducialOffsets& off = gt.fiducial_offsets.front();
        jt["offsets"] = {{"q", off.q}, {"s", off.s},   {"t1", off.t1}, {"t", off.t},
                         {"t2", off.t2}, {"b", off.b}, {"c", off.c},   {"x", off.x}};
        truth.push_back(std::move(jt));
    }
    manifest.to_json_file(paths.manifest().string());
    detail::write_json(truth, paths.ground_truth());
}

inline void stage_preprocess(const PipelineConfig& config) {
    const StagePaths paths(config.out_dir);
    const fsys::path manifest_path =
        (config.source == "synthetic") ? paths.manifest() : fsys::path(config.manifest_path);
    detail::require_artifact(manifest_path);
    const DatasetManifest manifest = detail::load_manifest_resolved(manifest_path);

    fsys::create_directories(paths.filtered_dir());
    DatasetManifest filtered_manifest;
    for (const auto& entry : manifest.entries) {
        SignalRecord rec = load_signal_csv(entry);
        rec.validate();
        const IirFilter f_ecg = design_butterworth_bandpass(
            config.filter_order, config.ecg_band_lo_hz, config.ecg_band_hi_hz, rec.fs);
        const IirFilter f_icg = design_butterworth_bandpass(
            config.filter_order, config.icg_band_lo_hz, config.icg_band_hi_hz, rec.fs);
        rec.ecg = filtfilt(f_ecg, rec.ecg);
        rec.icg = filtfilt(f_icg, rec.icg);
        const std::string rel = "filtered/" + detail::record_stem(rec) + ".csv";
        write_signal_csv(rec, (paths.out / rel).string());
        filtered_manifest.entries.push_back({rec.subject_id, rec.segment, rel, rec.fs});
    }
    filtered_manifest.to_json_file(paths.filtered_manifest().string());
}

inline void stage_delineate(const PipelineConfig& config) {
    const StagePaths paths(config.out_dir);
    detail::require_artifact(paths.filtered_manifest());
    const DatasetManifest manifest = detail::load_manifest_resolved(paths.filtered_manifest());

    fsys::create_directories(paths.template_dir());
    nlohmann::json all = nlohmann::json::array();
    for (const auto& entry : manifest.entries) {
        const SignalRecord rec = load_signal_csv(entry);
        const std::vector<std::size_t> r = detect_r_peaks(rec.ecg, rec.fs);
        const std::vector<std::size_t> c = detect_c_points(rec.icg, r);
        for (const TemplatePair& tp : ensemble_average(rec, r, c)) {
            const DelineatedTemplate dt = delineate_template(tp);
            const std::string stem = detail::record_stem(rec) + "_" +
                                     std::to_string(tp.cohort_index);
            {
                std::ofstream out(paths.template_dir() / (stem + ".csv"));
                if (!out)
                    throw io_error("cannot write template " + stem);
                out << "t_ms,ecg,icg\n";
                for (std::size_t i = 0; i < tp.ecg_tpl.size(); ++i)
                    out << format_double(static_cast<double>(i) / tp.fs * 1000.0) << ','
                        << format_double(tp.ecg_tpl[i]) << ',' << format_double(tp.icg_tpl[i])
                        << '\n';
            }
            nlohmann::json j;
            j["subject_id"] = rec.subject_id;
            j["segment"] = segment_name(rec.segment);
            j["cohort"] = tp.cohort_index;
            j["fs"] = tp.fs;
            j["rr_mean"] = tp.rr_mean;
            j["rc_mean"] = tp.rc_mean;
            j["template_csv"] = "templates/" + stem + ".csv";
            j["edge_flagged"] = dt.edge_flagged;
            j["ecg"] = {{"Q", dt.fiducials.q}, {"R", dt.fiducials.r}, {"S", dt.fiducials.s},
                        {"T1", dt.fiducials.t1}, {"T", dt.fiducials.t}, {"T2", dt.fiducials.t2}};
            j["icg"] = {{"B", dt.fiducials.b}, {"C", dt.fiducials.c}, {"X", dt.fiducials.x}};
            all.push_back(std::move(j));
        }
    }
    detail::write_json(all, paths.fiducials());
}

inline void stage_features(const PipelineConfig& config) {
    const StagePaths paths(config.out_dir);
    const nlohmann::json all = detail::read_json(paths.fiducials());

    std::map<std::pair<std::string, int>, LabeledTemplates> groups;
    for (const auto& j : all) {
        const std::string subject = j.at("subject_id").get<std::string>();
        const Segment segment = parse_segment(j.at("segment").get<std::string>());

        TemplatePair tp;
        tp.fs = j.at("fs").get<double>();
        tp.rr_mean = j.at("rr_mean").get<double>();
        tp.rc_mean = j.at("rc_mean").get<double>();
        tp.cohort_index = j.at("cohort").get<int>();
        const fsys::path tpl_csv = paths.out / j.at("template_csv").get<std::string>();
        detail::require_artifact(tpl_csv);
        {
            std::ifstream in(tpl_csv);
            std::string line;
            std::getline(in, line); // header
            while (std::getline(in, line)) {
                if (line.empty())
                    continue;
                const auto c1 = line.find(',');
                const auto c2 = line.find(',', c1 + 1);
                tp.ecg_tpl.push_back(
                    detail::parse_csv_cell(line.substr(c1 + 1, c2 - c1 - 1), tpl_csv.string(), 0));
                tp.icg_tpl.push_back(
                    detail::parse_csv_cell(line.substr(c2 + 1), tpl_csv.string(), 0));
            }
        }

        DelineatedTemplate dt;
        dt.pair = std::move(tp);
        dt.edge_flagged = j.at("edge_flagged").get<bool>();
        dt.fiducials.q = j.at("ecg").at("Q").get<std::size_t>();
        dt.fiducials.r = j.at("ecg").at("R").get<std::size_t>();
        dt.fiducials.s = j.at("ecg").at("S").get<std::size_t>();
        dt.fiducials.t1 = j.at("ecg").at("T1").get<std::size_t>();
        dt.fiducials.t = j.at("ecg").at("T").get<std::size_t>();
        dt.fiducials.t2 = j.at("ecg").at("T2").get<std::size_t>();
        dt.fiducials.b = j.at("icg").at("B").get<std::size_t>();
        dt.fiducials.c = j.at("icg").at("C").get<std::size_t>();
        dt.fiducials.x = j.at("icg").at("X").get<std::size_t>();

        auto& group = groups[{subject, static_cast<int>(segment)}];
        group.subject_id = subject;
        group.segment = segment;
        group.templates.push_back(std::move(dt));
    }

    std::vector<LabeledTemplates> list;
    for (auto& [key, group] : groups)
        list.push_back(std::move(group));
    const BuildResult result = build_feature_matrix(std::move(list));
    if (result.dropped > 0)
        std::cerr << "warning: dropped " << result.dropped << " edge-flagged cohort(s)\n";
    write_feature_csv(result.matrix, paths.features().string());
}

inline void stage_train(const PipelineConfig& config) {
    const StagePaths paths(config.out_dir);
    detail::require_artifact(paths.features());
    const FeatureMatrix matrix = read_feature_csv(paths.features().string());
    const auto [train_m, test_m] = stratified_split(matrix, config.test_ratio, config.seed);
    write_feature_csv(train_m, paths.train().string());
    write_feature_csv(test_m, paths.test().string());
    const Forest forest =
        fit_forest(make_dataset(train_m), detail::forest_params_from(config), config.workers);
    save_forest(forest, paths.model().string());
}

inline void stage_evaluate(const PipelineConfig& config) {
    const StagePaths paths(config.out_dir);
    detail::require_artifact(paths.model());
    detail::require_artifact(paths.test());
    const Forest forest = load_forest(paths.model().string());
    const FeatureMatrix test_m = read_feature_csv(paths.test().string());
    const Metrics m = evaluate(forest, make_dataset_like(test_m, forest), config.workers);
    nlohmann::json j = detail::metrics_to_json(m);
    j["confusion_trace"] = [&] {
        std::size_t trace = 0;
        for (std::size_t c = 0; c < m.n_classes; ++c)
            trace += m.confusion[c * m.n_classes + c];
        return trace;
    }();
    detail::write_json(j, paths.metrics());
}

inline void stage_importance(const PipelineConfig& config) {
    const StagePaths paths(config.out_dir);
    detail::require_artifact(paths.model());
    detail::require_artifact(paths.train());
    detail::require_artifact(paths.test());
    const Forest forest = load_forest(paths.model().string());
    const FeatureMatrix train_m = read_feature_csv(paths.train().string());
    const FeatureMatrix test_m = read_feature_csv(paths.test().string());
    const Dataset test = make_dataset_like(test_m, forest);
    const std::vector<std::string> labels = detail::labels29();

    const ImportanceReport gini = gini_importance_report(forest, labels);
    const ImportanceReport perm = permutation_importance(
        forest, test, labels, config.seed, config.permutation_repeats, config.workers);
    const ImportanceReport shap = shap_importance_report(forest, test, labels, config.workers);

    {
        std::ofstream out(paths.importance());
        if (!out)
            throw io_error("cannot write " + paths.importance().string());
        out << "feature,gini,permutation_mean,permutation_std,shap\n";
        for (std::size_t f = 0; f < labels.size(); ++f)
            out << labels[f] << ',' << format_double(gini.score[f]) << ','
                << format_double(perm.score[f]) << ',' << format_double(perm.score_std[f]) << ','
                << format_double(shap.score[f]) << '\n';
    }

    const std::vector<std::string> consensus =
        consensus_top_k({gini, perm, shap}, config.importance_top_k);
    nlohmann::json venn;
    venn["gini_top"] = gini.top_k(config.importance_top_k);
    venn["permutation_top"] = perm.top_k(config.importance_top_k);
    venn["shap_top"] = shap.top_k(config.importance_top_k);
    venn["intersection"] = consensus;
    detail::write_json(venn, paths.venn_importance());

    nlohmann::json cm;
    cm["features"] = consensus;
    if (!consensus.empty()) {
        std::vector<std::size_t> subset;
        for (const auto& name : consensus)
            subset.push_back(feature_index(name));
        std::sort(subset.begin(), subset.end());
        const Forest retrained = fit_forest(make_dataset(train_m, subset),
                                            detail::forest_params_from(config), config.workers);
        cm["metrics"] = detail::metrics_to_json(
            evaluate(retrained, make_dataset_like(test_m, retrained, subset), config.workers));
    }
    detail::write_json(cm, paths.consensus_metrics());
}

inline void stage_clusters(const PipelineConfig& config) {
    const StagePaths paths(config.out_dir);
    detail::require_artifact(paths.features());
    detail::require_artifact(paths.model());
    detail::require_artifact(paths.train());
    detail::require_artifact(paths.test());
    const FeatureMatrix matrix = read_feature_csv(paths.features().string());
    const Forest forest = load_forest(paths.model().string());
    const FeatureMatrix train_m = read_feature_csv(paths.train().string());
    const FeatureMatrix test_m = read_feature_csv(paths.test().string());
    const Dataset train = make_dataset(train_m);
    const Dataset test = make_dataset_like(test_m, forest);
    const std::vector<std::string> labels = detail::labels29();

    const CorrelationResult corr = correlation_analysis(matrix);
    {
        std::ofstream out(paths.correlation());
        if (!out)
            throw io_error("cannot write " + paths.correlation().string());
        out << "feature1,feature2,pearson_r,pearson_p,spearman_rho,spearman_p\n";
        for (std::size_t i = 0; i < corr.d; ++i)
            for (std::size_t j = i + 1; j < corr.d; ++j) {
                if (!corr.valid[i * corr.d + j])
                    continue;
                out << labels[i] << ',' << labels[j] << ','
                    << format_double(corr.pearson_r[i * corr.d + j]) << ','
                    << format_double(corr.pearson_p[i * corr.d + j]) << ','
                    << format_double(corr.spearman_rho[i * corr.d + j]) << ','
                    << format_double(corr.spearman_p[i * corr.d + j]) << '\n';
            }
    }
    {
        std::ofstream out(paths.heatmap());
        out << "feature";
        for (const auto& l : labels)
            out << ',' << l;
        out << '\n';
        for (std::size_t i = 0; i < corr.d; ++i) {
            out << labels[i];
            for (std::size_t j = 0; j < corr.d; ++j)
                out << ','
                    << (corr.valid[i * corr.d + j]
                            ? format_double(corr.pearson_r[i * corr.d + j])
                            : std::string(""));
            out << '\n';
        }
    }

    const FeatureClusterSet clusters = cluster_features(corr, config.correlation_threshold);
    nlohmann::json jc;
    jc["threshold"] = clusters.threshold;
    jc["clusters"] = clusters.named_clusters();
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : clusters.edges)
        edges.push_back({{"feature1", labels[e.a]}, {"feature2", labels[e.b]}, {"r", e.r}});
    jc["edges"] = edges;
    detail::write_json(jc, paths.clusters());

    std::ofstream out(paths.cluster_shuffle());
    if (!out)
        throw io_error("cannot write " + paths.cluster_shuffle().string());
    out << "cluster,representative,partner,pair_r,partner_importance_change_pct,"
           "others_min,others_q25,others_median,others_q75,others_max,accuracy_drop_pct\n";
    for (std::size_t k = 0; k < clusters.clusters.size(); ++k) {
        const auto& cluster = clusters.clusters[k];
        const double drop = cluster_shuffle_accuracy(forest, test, cluster, config.seed,
                                                     config.cluster_shuffle_repeats,
                                                     config.workers);
        const std::size_t rep = cluster_representative(clusters, cluster);
        std::vector<std::size_t> partners;
        for (std::size_t f : cluster)
            if (f != rep)
                partners.push_back(f);
        const RepresentativeShuffleResult rsr = representative_shuffle_gini(
            train, test, rep, partners, labels, detail::forest_params_from(config), config.seed,
            config.workers);
        auto pair_r = [&](std::size_t f) {
            return corr.valid[rep * corr.d + f] ? corr.pearson_r[rep * corr.d + f] : 0.0;
        };
        for (const auto& [partner_name, change] : rsr.partner_changes) {
            out << k << ',' << labels[rep] << ',' << partner_name << ','
                << format_double(pair_r(feature_index(partner_name))) << ','
                << format_double(change) << ',' << format_double(rsr.others_min) << ','
                << format_double(rsr.others_q25) << ',' << format_double(rsr.others_median)
                << ',' << format_double(rsr.others_q75) << ',' << format_double(rsr.others_max)
                << ',' << format_double(drop) << '\n';
        }
    }
}

namespace detail {

inline nlohmann::json selection_to_json(const SelectionResult& res) {
    nlohmann::json j;
    j["method"] = selection_method_name(res.method);
    j["selected"] = res.selected_names;
    j["n_selected"] = res.selected_names.size();
    j["seed"] = res.seed;
    if (!res.score_curve.empty()) {
        nlohmann::json curve = nlohmann::json::array();
        for (const auto& [size, acc] : res.score_curve)
            curve.push_back({{"size", size}, {"cv_accuracy", acc}});
        j["score_curve"] = curve;
    }
    if (!res.fitness_history.empty())
        j["fitness_history"] = res.fitness_history;
    if (res.empty_warning)
        j["warning"] = "empty intersection";
    return j;
}

} // namespace detail

inline void stage_select(const PipelineConfig& config) {
    const StagePaths paths(config.out_dir);
    detail::require_artifact(paths.train());
    detail::require_artifact(paths.test());
    const FeatureMatrix train_m = read_feature_csv(paths.train().string());
    const FeatureMatrix test_m = read_feature_csv(paths.test().string());
    const Dataset train = make_dataset(train_m);
    const std::vector<std::string> labels = detail::labels29();
    const ForestParams fp = detail::forest_params_from(config);

    auto retrain_metrics = [&](const std::vector<std::size_t>& subset) {
        const Forest forest =
            fit_forest(make_dataset(train_m, subset), fp, config.workers);
        return detail::metrics_to_json(
            evaluate(forest, make_dataset_like(test_m, forest, subset), config.workers));
    };

    const SelectionResult r =
        rfecv(train, labels, fp, config.rfecv_folds, config.rfecv_step, config.workers);
    nlohmann::json jr = detail::selection_to_json(r);
    jr["test_metrics"] = retrain_metrics(r.selected);
    detail::write_json(jr, paths.selection_rfecv());

    const SelectionResult g = ga_select(train, labels, fp, detail::ga_params_from(config),
                                        config.ga_cv_folds, config.workers);
    nlohmann::json jg = detail::selection_to_json(g);
    jg["test_metrics"] = retrain_metrics(g.selected);
    detail::write_json(jg, paths.selection_ga());

    const SelectionResult inter = intersect_subsets(r, g, labels);
    nlohmann::json ji = detail::selection_to_json(inter);
    if (!inter.selected.empty())
        ji["test_metrics"] = retrain_metrics(inter.selected);
    detail::write_json(ji, paths.selection_intersection());

    nlohmann::json venn;
    venn["rfecv"] = r.selected_names;
    venn["ga"] = g.selected_names;
    venn["intersection"] = inter.selected_names;
    detail::write_json(venn, paths.venn_selection());
}

inline void stage_emostats(const PipelineConfig& config) {
    const StagePaths paths(config.out_dir);
    detail::require_artifact(paths.features());
    const FeatureMatrix matrix = read_feature_csv(paths.features().string());

    const std::vector<FeatureTestResult> tests = emotion_feature_tests(matrix, config.alpha);
    {
        std::ofstream out(paths.stat_tests());
        if (!out)
            throw io_error("cannot write " + paths.stat_tests().string());
        out << "feature,shapiro_w_baseline,shapiro_p_baseline,shapiro_w_anger,shapiro_p_anger,"
               "test,statistic,p_raw,p_adjusted,effect_kind,effect_size,significant\n";
        for (const auto& t : tests) {
            out << t.feature << ',' << format_double(t.shapiro_w_baseline) << ','
                << format_double(t.shapiro_p_baseline) << ',' << format_double(t.shapiro_w_anger)
                << ',' << format_double(t.shapiro_p_anger) << ','
                << (t.test == TestKind::TTest ? "t_test" : "mann_whitney") << ','
                << format_double(t.statistic) << ',' << format_double(t.p_raw) << ','
                << format_double(t.p_adjusted) << ','
                << (t.effect_kind == EffectKind::CohensD ? "cohens_d" : "cliffs_delta") << ','
                << format_double(t.effect_size) << ',' << (t.significant ? "true" : "false")
                << '\n';
        }
    }

    const CorrelationResult corr = correlation_analysis(matrix);
    const FeatureClusterSet clusters = cluster_features(corr, config.correlation_threshold);
    const std::vector<OppositePair> pairs = opposite_significance_pairs(clusters.edges, tests);
    {
        std::ofstream out(paths.opposite_pairs());
        out << "feature1,feature2,r,significant1,significant2\n";
        for (const auto& p : pairs)
            out << p.feature1 << ',' << p.feature2 << ',' << format_double(p.r) << ','
                << (p.significant1 ? "true" : "false") << ','
                << (p.significant2 ? "true" : "false") << '\n';
    }

    const GeneralizationReport rep = emotion_generalization(
        matrix, detail::forest_params_from(config), config.seed, config.workers, config.alpha);
    {
        std::ofstream out(paths.generalization());
        out << "setting";
        for (const char* col : GeneralizationReport::column_names)
            out << ',' << col << "_accuracy," << col << "_f1";
        out << '\n';
        for (std::size_t row = 0; row < rep.row_names.size(); ++row) {
            out << rep.row_names[row];
            for (std::size_t col = 0; col < 3; ++col) {
                if (rep.cells[row][col]) {
                    out << ',' << format_double(rep.cells[row][col]->accuracy) << ','
                        << format_double(rep.cells[row][col]->f1);
                } else {
                    out << ",,";
                }
            }
            out << '\n';
        }
    }
}

inline void stage_report(const PipelineConfig& config) {
    const StagePaths paths(config.out_dir);
    // The report describes the trained model; insist on the root artifacts.
    detail::require_artifact(paths.model());
    detail::require_artifact(paths.metrics());

    // table1: high-correlation pairs with the identifying method.
    detail::require_artifact(paths.features());
    const FeatureMatrix matrix = read_feature_csv(paths.features().string());
    const CorrelationResult corr = correlation_analysis(matrix);
    {
        struct Row {
            std::string f1, f2, method;
            double r, rho;
        };
        std::vector<Row> rows;
        for (std::size_t i = 0; i < corr.d; ++i)
            for (std::size_t j = i + 1; j < corr.d; ++j) {
                if (!corr.valid[i * corr.d + j])
                    continue;
                const double r = corr.pearson_r[i * corr.d + j];
                const double rho = corr.spearman_rho[i * corr.d + j];
                const bool by_r = std::fabs(r) > config.correlation_threshold;
                const bool by_rho = std::fabs(rho) > config.correlation_threshold;
                if (!by_r && !by_rho)
                    continue;
                rows.push_back({corr.feature_labels[i], corr.feature_labels[j],
                                by_r && by_rho ? "Both" : (by_r ? "Pearson only" : "Spearman only"),
                                r, rho});
            }
        std::sort(rows.begin(), rows.end(),
                  [](const Row& a, const Row& b) { return std::fabs(a.r) > std::fabs(b.r); });
        std::ofstream out(paths.table1());
        out << "feature1,feature2,pearson,spearman,method\n";
        for (const auto& row : rows)
            out << row.f1 << ',' << row.f2 << ',' << format_double(row.r) << ','
                << format_double(row.rho) << ',' << row.method << '\n';
    }

    if (config.run_importance) {
        detail::require_artifact(paths.cluster_shuffle());
        // table2: cluster shuffle rows ordered by accuracy drop.
        std::ifstream in(paths.cluster_shuffle());
        std::string header, line;
        std::getline(in, header);
        struct Entry {
            double drop;
            std::size_t cluster;
            std::vector<std::string> lines;
        };
        std::map<std::size_t, Entry> by_cluster;
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            const std::size_t cluster = std::stoul(line.substr(0, line.find(',')));
            const double drop = std::stod(line.substr(line.rfind(',') + 1));
            auto& e = by_cluster[cluster];
            e.cluster = cluster;
            e.drop = drop;
            e.lines.push_back(line);
        }
        std::vector<Entry> entries;
        for (auto& [k, e] : by_cluster)
            entries.push_back(std::move(e));
        std::sort(entries.begin(), entries.end(),
                  [](const Entry& a, const Entry& b) { return a.drop > b.drop; });
        std::ofstream out(paths.table2());
        out << header << '\n';
        for (const auto& e : entries)
            for (const auto& l : e.lines)
                out << l << '\n';
    }

    if (config.run_emostats) {
        detail::require_artifact(paths.opposite_pairs());
        detail::require_artifact(paths.generalization());
        fsys::copy_file(paths.opposite_pairs(), paths.table3(),
                        fsys::copy_options::overwrite_existing);
        fsys::copy_file(paths.generalization(), paths.table4(),
                        fsys::copy_options::overwrite_existing);
    }

    if (config.run_importance)
        detail::require_artifact(paths.venn_importance());
    if (config.run_select)
        detail::require_artifact(paths.venn_selection());
    // heatmap.csv is produced by the clusters stage and is already in place.
    if (config.run_importance)
        detail::require_artifact(paths.heatmap());
}

inline void run_all(const PipelineConfig& config) {
    stage_synth(config);
    stage_preprocess(config);
    stage_delineate(config);
    stage_features(config);
    stage_train(config);
    stage_evaluate(config);
    if (config.run_importance) {
        stage_importance(config);
        stage_clusters(config);
    }
    if (config.run_select)
        stage_select(config);
    if (config.run_emostats)
        stage_emostats(config);
    stage_report(config);
}

inline int run_subcommand(const std::string& name, const PipelineConfig& config) {
    config.validate();
    try {
        fsys::create_directories(config.out_dir);
    } catch (const fsys::filesystem_error& e) {
        throw config_error("output directory is not writable: " + config.out_dir + " (" +
                           e.what() + ")");
    }
    if (name == "synth") {
        if (config.source != "synthetic")
            throw config_error("synth stage requires a synthetic source");
        stage_synth(config);
    } else if (name == "preprocess") {
        stage_preprocess(config);
    } else if (name == "delineate") {
        stage_delineate(config);
    } else if (name == "features") {
        stage_features(config);
    } else if (name == "train") {
        stage_train(config);
    } else if (name == "evaluate") {
        stage_evaluate(config);
    } else if (name == "importance") {
        stage_importance(config);
    } else if (name == "clusters") {
        stage_clusters(config);
    } else if (name == "select") {
        stage_select(config);
    } else if (name == "emostats") {
        stage_emostats(config);
    } else if (name == "report") {
        stage_report(config);
    } else if (name == "all") {
        run_all(config);
    } else {
        throw config_error("unknown subcommand: " + name);
    }
    return 0;
}

} // namespace cardiokit
