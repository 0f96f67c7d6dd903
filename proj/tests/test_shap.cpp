#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cardiokit/forest.hpp"
#include "cardiokit/rng.hpp"
#include "cardiokit/shap.hpp"

using namespace cardiokit;

namespace {

// Conditional expectation of one tree for coalition S (bitmask over
// features): follow x on features in S, cover-weighted average otherwise.
std::vector<double> expvalue(const Tree& tree, std::size_t node_id, const std::vector<double>& x,
                             unsigned mask, std::size_t n_classes) {
    const TreeNode& node = tree.nodes[node_id];
    if (node.feature < 0) {
        double total = 0.0;
        for (double c : node.class_counts)
            total += c;
        std::vector<double> out(n_classes);
        for (std::size_t c = 0; c < n_classes; ++c)
            out[c] = node.class_counts[c] / total;
        return out;
    }
    const auto f = static_cast<unsigned>(node.feature);
    if (mask & (1u << f)) {
        const auto next = static_cast<std::size_t>(
            x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
        return expvalue(tree, next, x, mask, n_classes);
    }
    const auto l = static_cast<std::size_t>(node.left);
    const auto r = static_cast<std::size_t>(node.right);
    const std::vector<double> lv = expvalue(tree, l, x, mask, n_classes);
    const std::vector<double> rv = expvalue(tree, r, x, mask, n_classes);
    std::vector<double> out(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c)
        out[c] = (tree.nodes[l].n_samples * lv[c] + tree.nodes[r].n_samples * rv[c]) /
                 node.n_samples;
    return out;
}

// Exhaustive Shapley values over 2^d coalitions with the same
// path-dependent conditional expectation as the fast algorithm.
std::vector<std::vector<double>> brute_force_shap(const Forest& forest,
                                                  const std::vector<double>& x) {
    const std::size_t d = forest.n_features;
    const std::size_t k = forest.class_names.size();
    const unsigned n_masks = 1u << d;

    // v[mask][class], averaged over trees
    std::vector<std::vector<double>> v(n_masks, std::vector<double>(k, 0.0));
    for (unsigned mask = 0; mask < n_masks; ++mask) {
        for (const auto& tree : forest.trees) {
            const std::vector<double> ev = expvalue(tree, 0, x, mask, k);
            for (std::size_t c = 0; c < k; ++c)
                v[mask][c] += ev[c];
        }
        for (std::size_t c = 0; c < k; ++c)
            v[mask][c] /= static_cast<double>(forest.trees.size());
    }

    std::vector<double> factorial(d + 1, 1.0);
    for (std::size_t i = 1; i <= d; ++i)
        factorial[i] = factorial[i - 1] * static_cast<double>(i);

    std::vector<std::vector<double>> phi(k, std::vector<double>(d, 0.0));
    for (std::size_t f = 0; f < d; ++f) {
        for (unsigned mask = 0; mask < n_masks; ++mask) {
            if (mask & (1u << f))
                continue;
            const auto s = static_cast<std::size_t>(__builtin_popcount(mask));
            const double w =
                factorial[s] * factorial[d - s - 1] / factorial[d];
            const unsigned with_f = mask | (1u << f);
            for (std::size_t c = 0; c < k; ++c)
                phi[c][f] += w * (v[with_f][c] - v[mask][c]);
        }
    }
    return phi;
}

Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d, std::size_t n_classes) {
    Dataset data;
    for (std::size_t c = 0; c < n_classes; ++c)
        data.class_names.push_back("C" + std::to_string(c));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(d);
        const auto cls = rng.below(n_classes);
        for (std::size_t f = 0; f < d; ++f)
            row[f] = rng.normal() + ((f % n_classes) == cls ? 1.5 : 0.0);
        data.x.push_back(std::move(row));
        data.y.push_back(static_cast<int>(cls));
    }
    bool multi = false;
    for (int y : data.y)
        multi = multi || y != data.y[0];
    if (!multi)
        data.y[0] = (data.y[0] + 1) % static_cast<int>(n_classes);
    return data;
}

} // namespace

TEST_CASE("shap matches brute-force coalition enumeration") {
    Rng rng(2024);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t d = 2 + rng.below(7);          // up to 8 features
        const std::size_t n_classes = 2 + rng.below(2);  // 2-3 classes
        const std::size_t n = 20 + rng.below(60);
        const Dataset data = random_dataset(rng, n, d, n_classes);
        ForestParams params = default_forest_params(1000 + static_cast<std::uint64_t>(trial));
        params.n_trees = 5;
        const Forest forest = fit_forest(data, params);

        for (int probe = 0; probe < 3; ++probe) {
            std::vector<double> x(d);
            for (auto& v : x)
                v = rng.normal() * 1.5;
            const ShapResult fast = shap_values(forest, {x});
            const std::vector<std::vector<double>> slow = brute_force_shap(forest, x);
            for (std::size_t c = 0; c < n_classes; ++c)
                for (std::size_t f = 0; f < d; ++f)
                    REQUIRE(fast.attributions[0][c][f] ==
                            Catch::Approx(slow[c][f]).margin(1e-9));
        }
    }
}

TEST_CASE("shap handles features revisited along deep paths") {
    // Two features and unbounded depth force many repeated splits on the
    // same feature within a single path.
    Rng rng(31337);
    Dataset data;
    data.class_names = {"a", "b", "c"};
    for (int i = 0; i < 150; ++i) {
        const double x0 = rng.uniform(0.0, 8.0);
        const double x1 = rng.uniform(0.0, 8.0);
        data.x.push_back({x0, x1});
        data.y.push_back(static_cast<int>(static_cast<long long>(x0 + x1)) % 3);
    }
    data.y[0] = 0;
    data.y[1] = 1;
    data.y[2] = 2;
    ForestParams params = default_forest_params(77);
    params.n_trees = 6;
    const Forest forest = fit_forest(data, params);

    std::size_t max_depth_seen = 0;
    for (const auto& tree : forest.trees)
        max_depth_seen = std::max(max_depth_seen, tree.nodes.size());
    REQUIRE(max_depth_seen > 20); // genuinely deep trees over 2 features

    for (int probe = 0; probe < 10; ++probe) {
        const std::vector<double> x = {rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0)};
        const ShapResult fast = shap_values(forest, {x});
        const std::vector<std::vector<double>> slow = brute_force_shap(forest, x);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t f = 0; f < 2; ++f)
                REQUIRE(fast.attributions[0][c][f] == Catch::Approx(slow[c][f]).margin(1e-9));
    }
}

TEST_CASE("shap satisfies local accuracy on every row and class") {
    Rng rng(555);
    const Dataset data = random_dataset(rng, 80, 6, 3);
    ForestParams params = default_forest_params(5);
    params.n_trees = 25;
    const Forest forest = fit_forest(data, params);
    const ShapResult shap = shap_values(forest, data.x, 4);
    for (std::size_t r = 0; r < data.n_rows(); ++r) {
        const std::vector<double> proba = predict_proba(forest, data.x[r]);
        for (std::size_t c = 0; c < proba.size(); ++c) {
            double sum = shap.base_values[c];
            for (double a : shap.attributions[r][c])
                sum += a;
            REQUIRE(sum == Catch::Approx(proba[c]).margin(1e-9));
        }
    }
}

TEST_CASE("a stump attributes only through its split feature") {
    Dataset data;
    data.class_names = {"a", "b"};
    for (int i = 0; i < 20; ++i) {
        data.x.push_back({static_cast<double>(i), 100.0 - i});
        data.y.push_back(i < 10 ? 0 : 1);
    }
    ForestParams params = default_forest_params(3);
    params.n_trees = 1;
    params.bootstrap = false;
    params.max_features = 2;
    params.max_depth = 1;
    const Forest forest = fit_forest(data, params);
    REQUIRE(forest.trees[0].nodes[0].feature >= 0);
    const auto split_feature = static_cast<std::size_t>(forest.trees[0].nodes[0].feature);

    const ShapResult shap = shap_values(forest, {{3.0, 97.0}, {15.0, 85.0}});
    for (const auto& row : shap.attributions)
        for (const auto& cls : row)
            for (std::size_t f = 0; f < cls.size(); ++f)
                if (f != split_feature)
                    REQUIRE(cls[f] == 0.0);
}

TEST_CASE("shap_global applies class-mean, abs, row-mean in that order") {
    // One row, one class: plain absolute values.
    ShapResult single;
    single.base_values = {0.0};
    single.attributions = {{{-0.25, 0.5}}};
    const std::vector<double> g1 = shap_global(single);
    REQUIRE(g1[0] == Catch::Approx(0.25));
    REQUIRE(g1[1] == Catch::Approx(0.5));

    // Class attributions +a and -a cancel before the absolute value.
    ShapResult cancel;
    cancel.base_values = {0.0, 0.0};
    cancel.attributions = {{{0.7, -0.3}, {-0.7, 0.3}}};
    const std::vector<double> g2 = shap_global(cancel);
    REQUIRE(g2[0] == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(g2[1] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("shap_global matches an independent reduction on a random forest") {
    Rng rng(777);
    const Dataset data = random_dataset(rng, 60, 5, 2);
    ForestParams params = default_forest_params(9);
    params.n_trees = 15;
    const Forest forest = fit_forest(data, params);
    const ShapResult shap = shap_values(forest, data.x);
    const std::vector<double> global = shap_global(shap);

    const std::size_t k = forest.class_names.size();
    for (std::size_t f = 0; f < 5; ++f) {
        double acc = 0.0;
        for (std::size_t r = 0; r < data.n_rows(); ++r) {
            double cm = 0.0;
            for (std::size_t c = 0; c < k; ++c)
                cm += shap.attributions[r][c][f];
            acc += std::fabs(cm / static_cast<double>(k));
        }
        acc /= static_cast<double>(data.n_rows());
        REQUIRE(global[f] == Catch::Approx(acc).margin(1e-12));
    }
}

TEST_CASE("base values are the cover-weighted leaf expectation") {
    Rng rng(888);
    const Dataset data = random_dataset(rng, 50, 4, 2);
    ForestParams params = default_forest_params(2);
    params.n_trees = 10;
    const Forest forest = fit_forest(data, params);
    const ShapResult shap = shap_values(forest, {data.x[0]});
    double sum = 0.0;
    for (double b : shap.base_values) {
        REQUIRE(b >= 0.0);
        sum += b;
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("shap rejects wrong dimensionality") {
    Rng rng(999);
    const Dataset data = random_dataset(rng, 30, 4, 2);
    ForestParams params = default_forest_params(4);
    params.n_trees = 3;
    const Forest forest = fit_forest(data, params);
    REQUIRE_THROWS_AS(shap_values(forest, {{1.0, 2.0}}), data_error);
}
