#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "cardiokit/interpret.hpp"
#include "cardiokit/rng.hpp"

using namespace cardiokit;

namespace {

std::vector<std::string> toy_labels(std::size_t d) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < d; ++i)
        labels.push_back("f" + std::to_string(i));
    return labels;
}

// Two balanced classes separated perfectly by feature 0; one stump tree, so
// every other feature is untouched by the model.
struct StumpFixture {
    Dataset train, test;
    Forest forest;

    explicit StumpFixture(std::size_t d = 4, std::size_t n = 60) {
        Rng rng(17);
        for (auto* ds : {&train, &test}) {
            ds->class_names = {"a", "b"};
            for (std::size_t i = 0; i < n; ++i) {
                const int cls = static_cast<int>(i % 2);
                std::vector<double> row(d);
                row[0] = cls == 0 ? rng.uniform(0.0, 1.0) : rng.uniform(2.0, 3.0);
                for (std::size_t f = 1; f < d; ++f)
                    row[f] = rng.normal();
                ds->x.push_back(std::move(row));
                ds->y.push_back(cls);
            }
        }
        ForestParams params = default_forest_params(23);
        params.n_trees = 1;
        params.bootstrap = false;
        params.max_features = d;
        params.max_depth = 1;
        forest = fit_forest(train, params);
    }
};

} // namespace

TEST_CASE("permutation importance of an unused feature is exactly 0") {
    StumpFixture fx;
    const ImportanceReport rep =
        permutation_importance(fx.forest, fx.test, toy_labels(4), 5, 25);
    REQUIRE(rep.score[1] == 0.0);
    REQUIRE(rep.score[2] == 0.0);
    REQUIRE(rep.score[3] == 0.0);
    REQUIRE(rep.score_std[1] == 0.0);
}

TEST_CASE("single perfect feature drops to chance when permuted") {
    StumpFixture fx;
    const double baseline = evaluate(fx.forest, fx.test).accuracy;
    REQUIRE(baseline == 1.0);
    const ImportanceReport rep =
        permutation_importance(fx.forest, fx.test, toy_labels(4), 5);
    // balanced classes: chance level is 0.5
    REQUIRE(rep.score[0] == Catch::Approx(baseline - 0.5).margin(0.05));
    REQUIRE(rep.score_std[0] > 0.0);
}

TEST_CASE("permutation importance validates n_repeat") {
    StumpFixture fx;
    REQUIRE_THROWS_AS(permutation_importance(fx.forest, fx.test, toy_labels(4), 1, 0),
                      config_error);
}

TEST_CASE("consensus of identical rankings returns exactly k features") {
    const std::vector<std::string> labels = toy_labels(6);
    std::vector<double> score = {0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
    std::vector<ImportanceReport> reports;
    for (int i = 0; i < 3; ++i)
        reports.push_back(make_importance_report(ImportanceMethod::Gini, labels, score));
    const std::vector<std::string> consensus = consensus_top_k(reports, 4);
    REQUIRE(consensus.size() == 4);
}

TEST_CASE("disjoint top-k sets intersect to nothing") {
    const std::vector<std::string> labels = toy_labels(6);
    std::vector<ImportanceReport> reports;
    reports.push_back(make_importance_report(ImportanceMethod::Gini, labels,
                                             {1.0, 0.9, 0.0, 0.0, 0.0, 0.0}));
    reports.push_back(make_importance_report(ImportanceMethod::Permutation, labels,
                                             {0.0, 0.0, 1.0, 0.9, 0.0, 0.0}));
    reports.push_back(make_importance_report(ImportanceMethod::Shap, labels,
                                             {0.0, 0.0, 0.0, 0.0, 1.0, 0.9}));
    REQUIRE(consensus_top_k(reports, 2).empty());
    REQUIRE_THROWS_AS(consensus_top_k(reports, 7), config_error);
}

TEST_CASE("rank-k ties break lexicographically by name") {
    const std::vector<std::string> labels = {"zeta", "alpha", "mid"};
    // alpha and zeta tie; with k=2 the cut keeps "alpha" ahead of "zeta".
    const ImportanceReport rep =
        make_importance_report(ImportanceMethod::Gini, labels, {0.5, 0.5, 0.9});
    const std::vector<std::string> top = rep.top_k(2);
    REQUIRE(top[0] == "mid");
    REQUIRE(top[1] == "alpha");
}

namespace {

FeatureMatrix matrix_from_columns(const std::vector<std::vector<double>>& cols) {
    const std::size_t n = cols[0].size();
    FeatureMatrix m;
    Rng rng(321);
    for (std::size_t i = 0; i < n; ++i) {
        FeatureVector fv;
        fv.subject_id = "s";
        for (std::size_t f = 0; f < kNumFeatures; ++f)
            fv.values[f] = (f < cols.size()) ? cols[f][i] : rng.normal();
        m.rows.push_back(fv);
    }
    return m;
}

} // namespace

TEST_CASE("perfect linear relation gives r = rho = 1") {
    std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    std::vector<double> y;
    for (double v : x)
        y.push_back(2.0 * v);
    const CorrelationResult corr = correlation_analysis(matrix_from_columns({x, y}));
    REQUIRE(corr.pearson_r[0 * corr.d + 1] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(corr.spearman_rho[0 * corr.d + 1] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(corr.pearson_p[0 * corr.d + 1] < 1e-6);
}

TEST_CASE("five-point sample matches the reference correlation values") {
    const std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
    const std::vector<double> y = {2.0, 1.0, 4.0, 3.0, 7.0};
    const CorrelationResult corr = correlation_analysis(matrix_from_columns({x, y}));
    // scipy.stats.pearsonr / spearmanr on the same sample
    REQUIRE(corr.pearson_r[1] == Catch::Approx(0.824163383692134).epsilon(1e-12));
    REQUIRE(corr.pearson_p[1] == Catch::Approx(0.08613863131395952).epsilon(1e-9));
    REQUIRE(corr.spearman_rho[1] == Catch::Approx(0.8).epsilon(1e-12));
    REQUIRE(corr.spearman_p[1] == Catch::Approx(0.10408803866182788).epsilon(1e-9));
}

TEST_CASE("spearman uses average ranks under ties") {
    const std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
    const std::vector<double> y = {1.0, 1.0, 2.0, 2.0, 3.0};
    const CorrelationResult corr = correlation_analysis(matrix_from_columns({x, y}));
    REQUIRE(corr.spearman_rho[1] == Catch::Approx(0.9486832980505138).epsilon(1e-12));
}

TEST_CASE("spearman equals pearson on ranks for tie-free data") {
    Rng rng(9);
    std::vector<double> x(40), y(40);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.normal();
        y[i] = rng.normal() + 0.5 * x[i];
    }
    const CorrelationResult corr = correlation_analysis(matrix_from_columns({x, y}));
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const double mr = mean(rx);
    double num = 0.0, dx = 0.0, dy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mr) * (ry[i] - mr);
        dx += (rx[i] - mr) * (rx[i] - mr);
        dy += (ry[i] - mr) * (ry[i] - mr);
    }
    REQUIRE(corr.spearman_rho[1] == Catch::Approx(num / std::sqrt(dx * dy)).epsilon(1e-12));
}

TEST_CASE("constant columns flag missing correlations instead of crashing") {
    std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> c(4, 5.0);
    const CorrelationResult corr = correlation_analysis(matrix_from_columns({x, c}));
    REQUIRE_FALSE(corr.valid[1]);
    REQUIRE(std::isnan(corr.pearson_r[1]));
    REQUIRE(corr.valid[0 * corr.d + 2]); // x vs a noise column is fine
}

namespace {

struct PublishedPair {
    const char* a;
    const char* b;
    double r;
};

// Published reference list of |r| > 0.7 Pearson pairs.
const std::vector<PublishedPair>& published_pairs() {
    static const std::vector<PublishedPair> pairs = {
        {"QX_int", "SX_int", 0.981},   {"RQ_amp", "RT_amp", 0.958},
        {"TT2_amp", "TT2_slope", 0.954}, {"BX_int", "SX_int", 0.953},
        {"RS_amp", "RS_slope", 0.943}, {"BX_int", "QX_int", 0.939},
        {"SX_int", "TX_int", 0.926},   {"RQ_amp", "QR_slope", 0.922},
        {"QT_int", "ST_int", 0.918},   {"QX_int", "TX_int", 0.907},
        {"TT1_amp", "TT2_amp", 0.898}, {"RS_amp", "RQ_amp", 0.891},
        {"TT1_amp", "TT1_slope", 0.881}, {"BX_int", "TX_int", 0.876},
        {"TT1_amp", "TT2_slope", 0.874}, {"RT_amp", "QR_slope", 0.871},
        {"CX_amp", "CB_slope", 0.865}, {"RS_amp", "RT_amp", 0.857},
        {"CB_amp", "CX_amp", 0.852},   {"QB_int", "SB_int", 0.830},
        {"TT2_amp", "TT1_slope", 0.821}, {"RS_amp", "QR_slope", 0.816},
        {"TT1_slope", "TT2_slope", 0.792}, {"RC_int", "SB_int", 0.770},
        {"RQ_amp", "RS_slope", 0.770}, {"CB_amp", "CB_slope", 0.764},
        {"QR_slope", "RS_slope", 0.739}, {"RT_amp", "RS_slope", 0.735},
        {"QRS_int", "ECGQRScrest", 0.734}, {"CX_amp", "CX_slope", 0.731},
        {"ST_int", "BT_int", 0.712},
    };
    return pairs;
}

CorrelationResult correlation_from_pairs(const std::vector<PublishedPair>& pairs) {
    CorrelationResult corr;
    corr.d = kNumFeatures;
    corr.feature_labels.assign(feature_names().begin(), feature_names().end());
    corr.n_rows = 3636;
    corr.pearson_r.assign(corr.d * corr.d, 0.0);
    corr.pearson_p.assign(corr.d * corr.d, 1.0);
    corr.spearman_rho.assign(corr.d * corr.d, 0.0);
    corr.spearman_p.assign(corr.d * corr.d, 1.0);
    corr.valid.assign(corr.d * corr.d, true);
    for (std::size_t i = 0; i < corr.d; ++i)
        corr.pearson_r[i * corr.d + i] = 1.0;
    for (const auto& p : pairs) {
        const std::size_t i = feature_index(p.a);
        const std::size_t j = feature_index(p.b);
        corr.pearson_r[i * corr.d + j] = corr.pearson_r[j * corr.d + i] = p.r;
    }
    return corr;
}

std::set<std::set<std::string>> as_name_sets(const FeatureClusterSet& fc) {
    std::set<std::set<std::string>> out;
    for (const auto& cluster : fc.named_clusters())
        out.insert(std::set<std::string>(cluster.begin(), cluster.end()));
    return out;
}

} // namespace

TEST_CASE("published correlation pairs form exactly the seven clusters") {
    const CorrelationResult corr = correlation_from_pairs(published_pairs());
    const FeatureClusterSet clusters = cluster_features(corr, 0.7);
    REQUIRE(clusters.edges.size() == 31);
    REQUIRE(clusters.clusters.size() == 7);

    const std::set<std::set<std::string>> expected = {
        {"RQ_amp", "RT_amp", "QR_slope", "RS_amp", "RS_slope"},
        {"QX_int", "SX_int", "BX_int", "TX_int"},
        {"TT1_amp", "TT2_amp", "TT1_slope", "TT2_slope"},
        {"CX_amp", "CB_amp", "CB_slope", "CX_slope"},
        {"QT_int", "ST_int", "BT_int"},
        {"QB_int", "SB_int", "RC_int"},
        {"QRS_int", "ECGQRScrest"},
    };
    REQUIRE(as_name_sets(clusters) == expected);
}

TEST_CASE("one edge yields one two-feature cluster") {
    const CorrelationResult corr = correlation_from_pairs({{"RR_int", "QRS_int", 0.9}});
    const FeatureClusterSet clusters = cluster_features(corr, 0.7);
    REQUIRE(clusters.clusters.size() == 1);
    REQUIRE(clusters.clusters[0].size() == 2);
}

TEST_CASE("no super-threshold pair yields no clusters") {
    const CorrelationResult corr = correlation_from_pairs({{"RR_int", "QRS_int", 0.69}});
    REQUIRE(cluster_features(corr, 0.7).clusters.empty());
    // threshold is strict: exactly 0.7 is not an edge
    const CorrelationResult at = correlation_from_pairs({{"RR_int", "QRS_int", 0.7}});
    REQUIRE(cluster_features(at, 0.7).clusters.empty());
}

TEST_CASE("negative correlations cluster by absolute value") {
    const CorrelationResult corr = correlation_from_pairs({{"RR_int", "QRS_int", -0.85}});
    REQUIRE(cluster_features(corr, 0.7).clusters.size() == 1);
}

TEST_CASE("clustering agrees with a naive BFS oracle on random graphs") {
    Rng rng(64);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<PublishedPair> pairs;
        std::vector<std::vector<int>> adj(kNumFeatures);
        for (std::size_t i = 0; i < kNumFeatures; ++i) {
            for (std::size_t j = i + 1; j < kNumFeatures; ++j) {
                if (rng.uniform01() < 0.03) {
                    pairs.push_back({feature_names()[i].c_str(), feature_names()[j].c_str(),
                                     rng.uniform(0.71, 0.99)});
                    adj[i].push_back(static_cast<int>(j));
                    adj[j].push_back(static_cast<int>(i));
                }
            }
        }
        const FeatureClusterSet clusters =
            cluster_features(correlation_from_pairs(pairs), 0.7);

        // BFS oracle
        std::set<std::set<std::string>> expected;
        std::vector<bool> visited(kNumFeatures, false);
        for (std::size_t s = 0; s < kNumFeatures; ++s) {
            if (visited[s] || adj[s].empty())
                continue;
            std::set<std::string> comp;
            std::vector<std::size_t> queue = {s};
            visited[s] = true;
            while (!queue.empty()) {
                const std::size_t v = queue.back();
                queue.pop_back();
                comp.insert(feature_names()[v]);
                for (int w : adj[v]) {
                    if (!visited[static_cast<std::size_t>(w)]) {
                        visited[static_cast<std::size_t>(w)] = true;
                        queue.push_back(static_cast<std::size_t>(w));
                    }
                }
            }
            expected.insert(comp);
        }
        REQUIRE(as_name_sets(clusters) == expected);
    }
}

TEST_CASE("cluster shuffle of unused features drops nothing") {
    StumpFixture fx;
    const double drop = cluster_shuffle_accuracy(fx.forest, fx.test, {1, 2, 3}, 7, 20);
    REQUIRE(drop == 0.0);
}

TEST_CASE("cluster shuffle of the informative feature collapses accuracy") {
    StumpFixture fx;
    const double drop = cluster_shuffle_accuracy(fx.forest, fx.test, {0}, 7, 50);
    REQUIRE(drop > 30.0); // percentage points
    REQUIRE_THROWS_AS(cluster_shuffle_accuracy(fx.forest, fx.test, {}, 7, 10), config_error);
}

TEST_CASE("shuffling one duplicated column shifts importance to its twin") {
    // features 0 and 1 are identical informative columns; 2 is noise
    Dataset train, test;
    Rng rng(31);
    for (auto* ds : {&train, &test}) {
        ds->class_names = {"a", "b"};
        for (int i = 0; i < 120; ++i) {
            const int cls = i % 2;
            const double v = cls == 0 ? rng.uniform(0.0, 1.0) : rng.uniform(1.5, 2.5);
            ds->x.push_back({v, v, rng.normal()});
            ds->y.push_back(cls);
        }
    }
    ForestParams params = default_forest_params(3);
    params.n_trees = 60;
    params.max_features = 1; // force both twins into play

    const RepresentativeShuffleResult res = representative_shuffle_gini(
        train, test, 0, {1}, toy_labels(3), params, 12);
    REQUIRE(res.relative_change[0] < 0.0);            // broken association
    REQUIRE(res.partner_changes.size() == 1);
    REQUIRE(res.partner_changes[0].second > 0.0);     // twin picks up the load
}

TEST_CASE("cluster representative is the member adjacent to all others") {
    const CorrelationResult corr = correlation_from_pairs(published_pairs());
    const FeatureClusterSet clusters = cluster_features(corr, 0.7);
    for (const auto& cluster : clusters.clusters) {
        const std::size_t rep = cluster_representative(clusters, cluster);
        if (clusters.feature_labels[rep] == "ST_int" ||
            clusters.feature_labels[rep] == "SB_int")
            continue; // star centers checked below
        REQUIRE(std::find(cluster.begin(), cluster.end(), rep) != cluster.end());
    }
    // the {QT_int, ST_int, BT_int} chain centers on ST_int
    for (const auto& cluster : clusters.clusters) {
        std::set<std::string> names;
        for (std::size_t f : cluster)
            names.insert(clusters.feature_labels[f]);
        if (names == std::set<std::string>{"QT_int", "ST_int", "BT_int"})
            REQUIRE(clusters.feature_labels[cluster_representative(clusters, cluster)] ==
                    "ST_int");
        if (names == std::set<std::string>{"QB_int", "SB_int", "RC_int"})
            REQUIRE(clusters.feature_labels[cluster_representative(clusters, cluster)] ==
                    "SB_int");
    }
}
