#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cardiokit/errors.hpp"
#include "cardiokit/forest.hpp"
#include "cardiokit/mathutil.hpp"
#include "cardiokit/parallel.hpp"
#include "cardiokit/rng.hpp"
#include "cardiokit/shap.hpp"

namespace cardiokit {

enum class ImportanceMethod { Gini, Permutation, Shap };

inline const char* importance_method_name(ImportanceMethod m) {
    switch (m) {
    case ImportanceMethod::Gini:
        return "gini";
    case ImportanceMethod::Permutation:
        return "permutation";
    default:
        return "shap";
    }
}

struct ImportanceReport {
    ImportanceMethod method = ImportanceMethod::Gini;
    std::vector<std::string> feature_labels;
    std::vector<double> score;
    std::vector<double> score_std; // permutation only, zeros otherwise
    std::vector<std::size_t> ranking; // feature indices, best first

    std::vector<std::string> top_k(std::size_t k) const {
        if (k > feature_labels.size())
            throw config_error("top_k: k exceeds feature count");
        std::vector<std::string> out;
        for (std::size_t i = 0; i < k; ++i)
            out.push_back(feature_labels[ranking[i]]);
        return out;
    }
};

// Descending score; ties resolve lexicographically by feature name so a
// cut at any rank k is deterministic.
inline std::vector<std::size_t> rank_features(const std::vector<double>& score,
                                              const std::vector<std::string>& labels) {
    std::vector<std::size_t> order(score.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b])
            return score[a] > score[b];
        return labels[a] < labels[b];
    });
    return order;
}

inline ImportanceReport make_importance_report(ImportanceMethod method,
                                               std::vector<std::string> labels,
                                               std::vector<double> score,
                                               std::vector<double> score_std = {}) {
    ImportanceReport r;
    r.method = method;
    r.feature_labels = std::move(labels);
    r.score = std::move(score);
    r.score_std = score_std.empty() ? std::vector<double>(r.score.size(), 0.0)
                                    : std::move(score_std);
    r.ranking = rank_features(r.score, r.feature_labels);
    return r;
}

// Mean test-accuracy drop over n_repeat independent column permutations;
// the spread across repeats is reported as the std.
inline ImportanceReport permutation_importance(const Forest& forest, const Dataset& test,
                                               const std::vector<std::string>& labels,
                                               std::uint64_t seed, std::size_t n_repeat = 100,
                                               std::size_t workers = 1) {
    if (n_repeat < 1)
        throw config_error("permutation_importance: n_repeat must be >= 1");
    if (test.n_rows() == 0)
        throw data_error("permutation_importance: empty test set");
    const std::size_t d = test.n_features();
    if (labels.size() != d)
        throw config_error("permutation_importance: label count mismatch");

    const double baseline = evaluate(forest, test, workers).accuracy;
    const std::size_t n = test.n_rows();

    std::vector<double> score(d, 0.0), score_std(d, 0.0);
    parallel_for(d, workers, [&](std::size_t f) {
        std::vector<double> drops(n_repeat);
        Dataset shuffled = test;
        std::vector<std::size_t> perm(n);
        for (std::size_t rep = 0; rep < n_repeat; ++rep) {
            Rng rng(derive_seed(seed, {kStreamPermutation, f, rep}));
            for (std::size_t i = 0; i < n; ++i)
                perm[i] = i;
            rng.shuffle(perm);
            for (std::size_t i = 0; i < n; ++i)
                shuffled.x[i][f] = test.x[perm[i]][f];
            std::size_t correct = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (predict_class(forest, shuffled.x[i]) == test.y[i])
                    ++correct;
            drops[rep] = baseline - static_cast<double>(correct) / static_cast<double>(n);
        }
        score[f] = mean(drops);
        score_std[f] = (n_repeat > 1) ? std::sqrt(variance(drops) *
                                                  static_cast<double>(n_repeat - 1) /
                                                  static_cast<double>(n_repeat))
                                      : 0.0;
    });
    return make_importance_report(ImportanceMethod::Permutation, labels, std::move(score),
                                  std::move(score_std));
}

inline ImportanceReport gini_importance_report(const Forest& forest,
                                               const std::vector<std::string>& labels) {
    return make_importance_report(ImportanceMethod::Gini, labels, gini_importance(forest));
}

inline ImportanceReport shap_importance_report(const Forest& forest, const Dataset& data,
                                               const std::vector<std::string>& labels,
                                               std::size_t workers = 1) {
    const ShapResult shap = shap_values(forest, data.x, workers);
    return make_importance_report(ImportanceMethod::Shap, labels, shap_global(shap));
}

// Features present in every report's top k.
inline std::vector<std::string> consensus_top_k(const std::vector<ImportanceReport>& reports,
                                                std::size_t k = 10) {
    if (reports.empty())
        throw config_error("consensus_top_k: no reports");
    std::vector<std::string> result;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (reports[i].feature_labels != reports[0].feature_labels)
            throw config_error("consensus_top_k: reports disagree on the feature universe");
        std::vector<std::string> top = reports[i].top_k(k);
        std::sort(top.begin(), top.end());
        if (i == 0) {
            result = std::move(top);
        } else {
            std::vector<std::string> merged;
            std::set_intersection(result.begin(), result.end(), top.begin(), top.end(),
                                  std::back_inserter(merged));
            result = std::move(merged);
        }
    }
    return result;
}

// ---- correlation -------------------------------------------------------

struct CorrelationResult {
    std::size_t d = 0;
    std::vector<std::string> feature_labels;
    std::vector<double> pearson_r, pearson_p;
    std::vector<double> spearman_rho, spearman_p;
    std::vector<bool> valid; // false when either column is constant
    std::size_t n_rows = 0;

    double& at(std::vector<double>& mat, std::size_t i, std::size_t j) { return mat[i * d + j]; }
    double get(const std::vector<double>& mat, std::size_t i, std::size_t j) const {
        return mat[i * d + j];
    }
};

namespace detail {

inline std::pair<double, double> pearson_with_p(std::span<const double> a,
                                                std::span<const double> b) {
    const std::size_t n = a.size();
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    double r = sab / std::sqrt(saa * sbb);
    r = std::clamp(r, -1.0, 1.0);
    const double df = static_cast<double>(n - 2);
    double p = 1.0;
    if (std::fabs(r) >= 1.0) {
        p = 0.0;
    } else {
        const double t = r * std::sqrt(df / (1.0 - r * r));
        p = t_two_sided_p(t, df);
    }
    return {r, p};
}

} // namespace detail

// Pearson r per pair plus Spearman as Pearson on average ranks; two-sided
// p-values from the t distribution with n-2 df. Constant columns yield
// flagged missing entries.
inline CorrelationResult correlation_analysis(const FeatureMatrix& m) {
    if (m.rows.size() < 3)
        throw data_error("correlation_analysis: need at least 3 rows");
    CorrelationResult out;
    out.d = kNumFeatures;
    out.feature_labels.assign(feature_names().begin(), feature_names().end());
    out.n_rows = m.rows.size();
    const std::size_t d = out.d;
    out.pearson_r.assign(d * d, std::numeric_limits<double>::quiet_NaN());
    out.pearson_p.assign(d * d, std::numeric_limits<double>::quiet_NaN());
    out.spearman_rho.assign(d * d, std::numeric_limits<double>::quiet_NaN());
    out.spearman_p.assign(d * d, std::numeric_limits<double>::quiet_NaN());
    out.valid.assign(d * d, false);

    std::vector<std::vector<double>> cols(d), ranks(d);
    std::vector<bool> constant(d, false);
    for (std::size_t f = 0; f < d; ++f) {
        cols[f] = m.column(f);
        constant[f] =
            std::all_of(cols[f].begin(), cols[f].end(), [&](double v) { return v == cols[f][0]; });
        if (!constant[f])
            ranks[f] = average_ranks(cols[f]);
    }

    for (std::size_t i = 0; i < d; ++i) {
        out.pearson_r[i * d + i] = 1.0;
        out.spearman_rho[i * d + i] = 1.0;
        out.pearson_p[i * d + i] = 0.0;
        out.spearman_p[i * d + i] = 0.0;
        out.valid[i * d + i] = !constant[i];
        for (std::size_t j = i + 1; j < d; ++j) {
            if (constant[i] || constant[j])
                continue;
            const auto [r, pr] = detail::pearson_with_p(cols[i], cols[j]);
            const auto [rho, ps] = detail::pearson_with_p(ranks[i], ranks[j]);
            out.pearson_r[i * d + j] = out.pearson_r[j * d + i] = r;
            out.pearson_p[i * d + j] = out.pearson_p[j * d + i] = pr;
            out.spearman_rho[i * d + j] = out.spearman_rho[j * d + i] = rho;
            out.spearman_p[i * d + j] = out.spearman_p[j * d + i] = ps;
            out.valid[i * d + j] = out.valid[j * d + i] = true;
        }
    }
    return out;
}

struct CorrelationEdge {
    std::size_t a = 0, b = 0; // feature indices, a < b
    double r = 0.0;
};

struct FeatureClusterSet {
    std::vector<std::vector<std::size_t>> clusters; // each sorted; size >= 2
    std::vector<CorrelationEdge> edges;
    double threshold = 0.7;
    std::vector<std::string> feature_labels;

    std::vector<std::vector<std::string>> named_clusters() const {
        std::vector<std::vector<std::string>> out;
        for (const auto& c : clusters) {
            std::vector<std::string> names;
            for (std::size_t f : c)
                names.push_back(feature_labels[f]);
            out.push_back(std::move(names));
        }
        return out;
    }
};

// Graph islands over |r| > threshold edges (strict); singletons drop out.
inline FeatureClusterSet cluster_features(const CorrelationResult& corr, double threshold = 0.7,
                                          bool use_pearson = true) {
    const std::size_t d = corr.d;
    const auto& mat = use_pearson ? corr.pearson_r : corr.spearman_rho;
    FeatureClusterSet out;
    out.threshold = threshold;
    out.feature_labels = corr.feature_labels;

    std::vector<std::size_t> parent(d);
    for (std::size_t i = 0; i < d; ++i)
        parent[i] = i;
    auto find = [&](std::size_t v) {
        while (parent[v] != v) {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        return v;
    };

    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            if (!corr.valid[i * d + j])
                continue;
            const double r = mat[i * d + j];
            if (std::fabs(r) > threshold) {
                out.edges.push_back({i, j, r});
                parent[find(i)] = find(j);
            }
        }
    }

    std::map<std::size_t, std::vector<std::size_t>> comps;
    for (const auto& e : out.edges) {
        comps[find(e.a)];
        comps[find(e.b)];
    }
    for (std::size_t i = 0; i < d; ++i) {
        auto it = comps.find(find(i));
        if (it != comps.end())
            it->second.push_back(i);
    }
    for (auto& [root, members] : comps) {
        std::sort(members.begin(), members.end());
        out.clusters.push_back(members);
    }
    std::sort(out.clusters.begin(), out.clusters.end(),
              [](const auto& a, const auto& b) { return a[0] < b[0]; });
    return out;
}

// Accuracy drop (percentage points) when every feature in the cluster is
// independently permuted in a test copy, averaged over repeats.
inline double cluster_shuffle_accuracy(const Forest& forest, const Dataset& test,
                                       const std::vector<std::size_t>& cluster,
                                       std::uint64_t seed, std::size_t n_repeat,
                                       std::size_t workers = 1) {
    if (cluster.empty())
        throw config_error("cluster_shuffle_accuracy: empty cluster");
    for (std::size_t f : cluster)
        if (f >= test.n_features())
            throw config_error("cluster_shuffle_accuracy: feature index out of range");

    const double baseline = evaluate(forest, test, workers).accuracy;
    const std::size_t n = test.n_rows();
    std::vector<double> accs(n_repeat, 0.0);
    parallel_for(n_repeat, workers, [&](std::size_t rep) {
        Dataset shuffled = test;
        for (std::size_t f : cluster) {
            Rng rng(derive_seed(seed, {kStreamClusterShuffle, f, rep}));
            std::vector<std::size_t> perm(n);
            for (std::size_t i = 0; i < n; ++i)
                perm[i] = i;
            rng.shuffle(perm);
            for (std::size_t i = 0; i < n; ++i)
                shuffled.x[i][f] = test.x[perm[i]][f];
        }
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (predict_class(forest, shuffled.x[i]) == test.y[i])
                ++correct;
        accs[rep] = static_cast<double>(correct) / static_cast<double>(n);
    });
    return (baseline - mean(accs)) * 100.0;
}

struct RepresentativeShuffleResult {
    std::string feature;
    std::vector<std::pair<std::string, double>> partner_changes; // relative Gini change, %
    double others_min = 0.0, others_q25 = 0.0, others_median = 0.0, others_q75 = 0.0,
           others_max = 0.0;
    double accuracy_drop_points = 0.0;
    std::vector<double> relative_change; // all features, %
};

// Shuffle one representative feature in the training set, retrain, and
// report how the Gini importances and test accuracy move.
inline RepresentativeShuffleResult representative_shuffle_gini(
    const Dataset& train, const Dataset& test, std::size_t feature,
    const std::vector<std::size_t>& partners, const std::vector<std::string>& labels,
    const ForestParams& params, std::uint64_t seed, std::size_t workers = 1) {
    if (feature >= train.n_features())
        throw config_error("representative_shuffle_gini: feature index out of range");

    const Forest base = fit_forest(train, params, workers);
    const std::vector<double> imp_before = gini_importance(base);
    const double acc_before = evaluate(base, test, workers).accuracy;

    Dataset shuffled = train;
    Rng rng(derive_seed(seed, {kStreamRepresentative, feature}));
    std::vector<std::size_t> perm(train.n_rows());
    for (std::size_t i = 0; i < perm.size(); ++i)
        perm[i] = i;
    rng.shuffle(perm);
    for (std::size_t i = 0; i < perm.size(); ++i)
        shuffled.x[i][feature] = train.x[perm[i]][feature];

    const Forest refit = fit_forest(shuffled, params, workers);
    const std::vector<double> imp_after = gini_importance(refit);
    const double acc_after = evaluate(refit, test, workers).accuracy;

    RepresentativeShuffleResult out;
    out.feature = labels.at(feature);
    out.relative_change.assign(train.n_features(), 0.0);
    for (std::size_t f = 0; f < train.n_features(); ++f) {
        out.relative_change[f] =
            (imp_before[f] != 0.0)
                ? (imp_after[f] - imp_before[f]) / imp_before[f] * 100.0
                : 0.0;
    }

    std::set<std::size_t> partner_set(partners.begin(), partners.end());
    std::vector<double> others;
    for (std::size_t f = 0; f < train.n_features(); ++f) {
        if (f == feature)
            continue;
        if (partner_set.count(f))
            out.partner_changes.emplace_back(labels.at(f), out.relative_change[f]);
        else
            others.push_back(out.relative_change[f]);
    }
    if (!others.empty()) {
        out.others_min = percentile(others, 0.0);
        out.others_q25 = percentile(others, 25.0);
        out.others_median = percentile(others, 50.0);
        out.others_q75 = percentile(others, 75.0);
        out.others_max = percentile(others, 100.0);
    }
    out.accuracy_drop_points = (acc_before - acc_after) * 100.0;
    return out;
}

// The cluster member adjacent to every other member (max degree on ties,
// then canonical order).
inline std::size_t cluster_representative(const FeatureClusterSet& clusters,
                                          const std::vector<std::size_t>& cluster) {
    std::map<std::size_t, std::size_t> degree;
    for (std::size_t f : cluster)
        degree[f] = 0;
    for (const auto& e : clusters.edges) {
        if (degree.count(e.a) && degree.count(e.b)) {
            ++degree[e.a];
            ++degree[e.b];
        }
    }
    std::size_t best = cluster.front();
    for (std::size_t f : cluster)
        if (degree[f] > degree[best])
            best = f;
    return best;
}

} // namespace cardiokit
