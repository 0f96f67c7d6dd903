#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <limits>

#include "cardiokit/forest.hpp"
#include "cardiokit/rng.hpp"
#include "cardiokit/synthetic.hpp"
#include "cardiokit/dsp.hpp"
#include "cardiokit/delineation.hpp"

using namespace cardiokit;

namespace {

Dataset toy_dataset(std::size_t n_per_class, std::size_t n_classes, std::size_t d,
                    std::uint64_t seed, double informative_gap = 4.0) {
    Dataset data;
    Rng rng(seed);
    for (std::size_t c = 0; c < n_classes; ++c)
        data.class_names.push_back("C" + std::to_string(c));
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            std::vector<double> row(d);
            row[0] = informative_gap * static_cast<double>(c) + rng.normal();
            for (std::size_t f = 1; f < d; ++f)
                row[f] = rng.normal();
            data.x.push_back(std::move(row));
            data.y.push_back(static_cast<int>(c));
        }
    }
    return data;
}

// Naive exhaustive CART used as the bagging-off oracle: same stopping
// rules and tie-breaking, independent recount-based split scoring.
struct NaiveCart {
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        int left = -1, right = -1;
        std::vector<double> counts;
    };
    std::vector<Node> nodes;
    std::size_t n_classes = 0;

    void fit(const Dataset& data) {
        n_classes = data.n_classes();
        std::vector<std::size_t> idx(data.n_rows());
        for (std::size_t i = 0; i < idx.size(); ++i)
            idx[i] = i;
        build(data, idx);
    }

    int build(const Dataset& data, const std::vector<std::size_t>& idx) {
        const int id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        std::vector<double> counts(n_classes, 0.0);
        for (std::size_t i : idx)
            counts[static_cast<std::size_t>(data.y[i])] += 1.0;
        std::size_t present = 0;
        for (double c : counts)
            present += c > 0.0;

        bool found = false;
        std::size_t best_f = 0;
        double best_thr = 0.0, best_score = 0.0;
        if (present > 1 && idx.size() >= 2) {
            for (std::size_t f = 0; f < data.n_features(); ++f) {
                std::vector<double> vals;
                for (std::size_t i : idx)
                    vals.push_back(data.x[i][f]);
                std::sort(vals.begin(), vals.end());
                for (std::size_t k = 1; k < vals.size(); ++k) {
                    if (vals[k] <= vals[k - 1])
                        continue;
                    const double thr = (vals[k - 1] + vals[k]) / 2.0;
                    std::vector<double> lc(n_classes, 0.0), rc(n_classes, 0.0);
                    std::size_t nl = 0, nr = 0;
                    for (std::size_t i : idx) {
                        if (data.x[i][f] <= thr) {
                            lc[static_cast<std::size_t>(data.y[i])] += 1.0;
                            ++nl;
                        } else {
                            rc[static_cast<std::size_t>(data.y[i])] += 1.0;
                            ++nr;
                        }
                    }
                    double suml2 = 0.0, sumr2 = 0.0;
                    for (std::size_t c = 0; c < n_classes; ++c) {
                        suml2 += lc[c] * lc[c];
                        sumr2 += rc[c] * rc[c];
                    }
                    const double score = suml2 / static_cast<double>(nl) +
                                         sumr2 / static_cast<double>(nr);
                    if (!found || score > best_score) {
                        found = true;
                        best_score = score;
                        best_f = f;
                        best_thr = thr;
                    }
                }
            }
        }
        if (!found) {
            nodes[static_cast<std::size_t>(id)].counts = counts;
            return id;
        }
        std::vector<std::size_t> li, ri;
        for (std::size_t i : idx)
            (data.x[i][best_f] <= best_thr ? li : ri).push_back(i);
        nodes[static_cast<std::size_t>(id)].feature = static_cast<int>(best_f);
        nodes[static_cast<std::size_t>(id)].threshold = best_thr;
        const int l = build(data, li);
        nodes[static_cast<std::size_t>(id)].left = l;
        const int r = build(data, ri);
        nodes[static_cast<std::size_t>(id)].right = r;
        return id;
    }
};

} // namespace

TEST_CASE("perfectly separable data trains to accuracy 1") {
    const Dataset data = toy_dataset(20, 2, 3, 1, 10.0);
    ForestParams params = default_forest_params(5);
    params.n_trees = 20;
    const Forest forest = fit_forest(data, params);
    REQUIRE(evaluate(forest, data).accuracy == 1.0);
}

TEST_CASE("thread count does not change the forest") {
    const Dataset train = toy_dataset(15, 3, 5, 2, 2.0);
    const Dataset test = toy_dataset(10, 3, 5, 99, 2.0);
    ForestParams params = default_forest_params(7);
    params.n_trees = 40;
    const Forest f1 = fit_forest(train, params, 1);
    const Forest f8 = fit_forest(train, params, 8);
    REQUIRE(f1.trees.size() == f8.trees.size());
    for (std::size_t t = 0; t < f1.trees.size(); ++t) {
        REQUIRE(f1.trees[t].nodes.size() == f8.trees[t].nodes.size());
        for (std::size_t n = 0; n < f1.trees[t].nodes.size(); ++n) {
            REQUIRE(f1.trees[t].nodes[n].feature == f8.trees[t].nodes[n].feature);
            REQUIRE(f1.trees[t].nodes[n].threshold == f8.trees[t].nodes[n].threshold);
        }
    }
    for (const auto& row : test.x)
        REQUIRE(predict_proba(f1, row) == predict_proba(f8, row));
}

TEST_CASE("bagging off with full features equals the naive CART oracle") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        Rng rng(seed);
        const std::size_t d = 1 + rng.below(5);
        const std::size_t n_classes = 2 + rng.below(2);
        Dataset data;
        for (std::size_t c = 0; c < n_classes; ++c)
            data.class_names.push_back("C" + std::to_string(c));
        const std::size_t n = 10 + rng.below(41);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row(d);
            for (auto& v : row)
                v = static_cast<double>(rng.below(12)); // grid values force ties
            data.x.push_back(std::move(row));
            data.y.push_back(static_cast<int>(rng.below(n_classes)));
        }
        {
            std::vector<bool> seen(n_classes, false);
            bool two = false;
            std::size_t cnt = 0;
            for (int c : data.y)
                if (!seen[static_cast<std::size_t>(c)]) {
                    seen[static_cast<std::size_t>(c)] = true;
                    ++cnt;
                }
            two = cnt >= 2;
            if (!two)
                data.y[0] = data.y[0] == 0 ? 1 : 0;
        }

        ForestParams params = default_forest_params(3);
        params.n_trees = 1;
        params.bootstrap = false;
        params.max_features = d;
        const Forest forest = fit_forest(data, params);

        NaiveCart oracle;
        oracle.fit(data);

        REQUIRE(forest.trees[0].nodes.size() == oracle.nodes.size());
        for (std::size_t k = 0; k < oracle.nodes.size(); ++k) {
            REQUIRE(forest.trees[0].nodes[k].feature == oracle.nodes[k].feature);
            if (oracle.nodes[k].feature >= 0) {
                REQUIRE(forest.trees[0].nodes[k].threshold == oracle.nodes[k].threshold);
                REQUIRE(forest.trees[0].nodes[k].left == oracle.nodes[k].left);
                REQUIRE(forest.trees[0].nodes[k].right == oracle.nodes[k].right);
            } else {
                REQUIRE(forest.trees[0].nodes[k].class_counts == oracle.nodes[k].counts);
            }
        }
    }
}

TEST_CASE("single-tree probabilities equal the leaf frequencies") {
    const Dataset data = toy_dataset(10, 2, 3, 4, 1.0);
    ForestParams params = default_forest_params(11);
    params.n_trees = 1;
    const Forest forest = fit_forest(data, params);
    for (const auto& row : data.x) {
        const TreeNode& leaf = forest.trees[0].leaf_for(row);
        double total = 0.0;
        for (double c : leaf.class_counts)
            total += c;
        const std::vector<double> proba = predict_proba(forest, row);
        for (std::size_t c = 0; c < proba.size(); ++c)
            REQUIRE(proba[c] == Catch::Approx(leaf.class_counts[c] / total).epsilon(1e-14));
    }
}

TEST_CASE("probabilities live on the simplex") {
    const Dataset data = toy_dataset(12, 4, 6, 8, 1.5);
    ForestParams params = default_forest_params(13);
    params.n_trees = 30;
    const Forest forest = fit_forest(data, params);
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> row(6);
        for (auto& v : row)
            v = rng.normal() * 3.0;
        const std::vector<double> proba = predict_proba(forest, row);
        double sum = 0.0;
        for (double p : proba) {
            REQUIRE(p >= 0.0);
            sum += p;
        }
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("duplicating every tree leaves probabilities unchanged") {
    const Dataset data = toy_dataset(10, 3, 4, 21, 2.0);
    ForestParams params = default_forest_params(17);
    params.n_trees = 10;
    Forest forest = fit_forest(data, params);
    const std::vector<double> before = predict_proba(forest, data.x[0]);
    const std::vector<Tree> copy = forest.trees;
    forest.trees.insert(forest.trees.end(), copy.begin(), copy.end());
    const std::vector<double> after = predict_proba(forest, data.x[0]);
    for (std::size_t c = 0; c < before.size(); ++c)
        REQUIRE(after[c] == Catch::Approx(before[c]).margin(1e-15));
}

TEST_CASE("metrics: perfect predictions score 1 everywhere") {
    std::vector<int> truth = {0, 1, 2, 0, 1, 2};
    const Metrics m = compute_metrics(truth, truth, 3);
    REQUIRE(m.accuracy == 1.0);
    REQUIRE(m.precision == 1.0);
    REQUIRE(m.recall == 1.0);
    REQUIRE(m.f1 == 1.0);
}

TEST_CASE("metrics: constant predictor on balanced classes") {
    std::vector<int> truth, pred;
    for (int i = 0; i < 10; ++i) {
        truth.push_back(i % 2);
        pred.push_back(0);
    }
    const Metrics m = compute_metrics(truth, pred, 2);
    REQUIRE(m.accuracy == Catch::Approx(0.5));
    REQUIRE(m.recall == Catch::Approx(0.5));
    REQUIRE(m.precision == Catch::Approx(0.25));
}

TEST_CASE("unseen test label is an evaluation error") {
    FeatureMatrix train_m;
    for (int s = 0; s < 2; ++s)
        for (int i = 0; i < 4; ++i) {
            FeatureVector fv;
            fv.subject_id = "S" + std::to_string(s);
            fv.values.fill(static_cast<double>(s) + 0.1 * i);
            train_m.rows.push_back(fv);
        }
    const Dataset train = make_dataset(train_m);
    ForestParams params = default_forest_params(1);
    params.n_trees = 5;
    const Forest forest = fit_forest(train, params);
    FeatureMatrix test_m;
    FeatureVector fv;
    fv.subject_id = "stranger";
    fv.values.fill(0.5);
    test_m.rows.push_back(fv);
    REQUIRE_THROWS_AS(make_dataset_like(test_m, forest), data_error);
}

TEST_CASE("gini importance sums to 1 and tracks the informative feature") {
    const Dataset data = toy_dataset(25, 2, 5, 31, 8.0);
    ForestParams params = default_forest_params(23);
    params.n_trees = 50;
    const Forest forest = fit_forest(data, params);
    const std::vector<double> imp = gini_importance(forest);
    double sum = 0.0;
    for (double v : imp)
        sum += v;
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
    // feature 0 carries all the signal
    for (std::size_t f = 1; f < imp.size(); ++f)
        REQUIRE(imp[0] > imp[f]);
    REQUIRE(imp[0] > 0.5);
}

TEST_CASE("pure-noise features stay below uniform importance") {
    std::size_t wins = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Dataset data = toy_dataset(20, 2, 6, 100 + seed, 6.0);
        ForestParams params = default_forest_params(seed);
        params.n_trees = 30;
        const Forest forest = fit_forest(data, params);
        const std::vector<double> imp = gini_importance(forest);
        bool ok = true;
        for (std::size_t f = 1; f < imp.size(); ++f)
            ok = ok && imp[f] < 1.0 / 6.0;
        wins += ok;
    }
    REQUIRE(wins >= 18);
}

TEST_CASE("single-class training data is a fit error") {
    Dataset data;
    data.class_names = {"only"};
    for (int i = 0; i < 5; ++i) {
        data.x.push_back({static_cast<double>(i)});
        data.y.push_back(0);
    }
    REQUIRE_THROWS_AS(fit_forest(data, default_forest_params(1)), data_error);
}

TEST_CASE("forest serialization round-trips exactly") {
    const Dataset data = toy_dataset(15, 3, 4, 37, 2.0);
    ForestParams params = default_forest_params(41);
    params.n_trees = 12;
    params.max_depth = 6;
    const Forest forest = fit_forest(data, params);
    const auto path = std::filesystem::temp_directory_path() / "cardiokit_forest_test.json";
    save_forest(forest, path.string());
    const Forest back = load_forest(path.string());
    REQUIRE(back.class_names == forest.class_names);
    REQUIRE(back.n_features == forest.n_features);
    REQUIRE(back.params.n_trees == forest.params.n_trees);
    REQUIRE(back.params.max_depth == forest.params.max_depth);
    REQUIRE(back.trees.size() == forest.trees.size());
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        REQUIRE(back.trees[t].importance == forest.trees[t].importance);
        REQUIRE(back.trees[t].nodes.size() == forest.trees[t].nodes.size());
        for (std::size_t n = 0; n < forest.trees[t].nodes.size(); ++n) {
            REQUIRE(back.trees[t].nodes[n].feature == forest.trees[t].nodes[n].feature);
            REQUIRE(back.trees[t].nodes[n].threshold == forest.trees[t].nodes[n].threshold);
            REQUIRE(back.trees[t].nodes[n].n_samples == forest.trees[t].nodes[n].n_samples);
            REQUIRE(back.trees[t].nodes[n].class_counts == forest.trees[t].nodes[n].class_counts);
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("stratified k-fold balances classes and validates sizes") {
    std::vector<int> y;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 9; ++i)
            y.push_back(c);
    const std::vector<std::size_t> fold = stratified_kfold(y, 3, 3, 5);
    std::map<std::pair<std::size_t, int>, int> count;
    for (std::size_t i = 0; i < y.size(); ++i)
        ++count[{fold[i], y[i]}];
    for (std::size_t f = 0; f < 3; ++f)
        for (int c = 0; c < 3; ++c)
            REQUIRE(count[{f, c}] == 3);

    std::vector<int> small = {0, 0, 1};
    REQUIRE_THROWS_AS(stratified_kfold(small, 2, 2, 1), config_error);
}

TEST_CASE("desk-scale pipeline reaches high accuracy") {
    const SyntheticCohort cohort = generate_synthetic_cohort(6, 90, 500.0, 7);
    std::vector<LabeledTemplates> groups;
    for (std::size_t i = 0; i < cohort.records.size(); ++i) {
        const SignalRecord filtered = preprocess_record(cohort.records[i]);
        const std::vector<std::size_t> r = detect_r_peaks(filtered.ecg, filtered.fs);
        const std::vector<std::size_t> c = detect_c_points(filtered.icg, r);
        LabeledTemplates group;
        group.subject_id = filtered.subject_id;
        group.segment = filtered.segment;
        for (const auto& tp : ensemble_average(filtered, r, c))
            group.templates.push_back(delineate_template(tp));
        groups.push_back(std::move(group));
    }
    const FeatureMatrix matrix = build_feature_matrix(std::move(groups)).matrix;
    const auto [train_m, test_m] = stratified_split(matrix, 0.33, 7);
    const Dataset train = make_dataset(train_m);
    const Forest forest = fit_forest(train, default_forest_params(7), 4);
    const Dataset test = make_dataset_like(test_m, forest);
    REQUIRE(evaluate(forest, test).accuracy >= 0.95);
}
