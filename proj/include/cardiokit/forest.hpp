#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cardiokit/errors.hpp"
#include "cardiokit/features.hpp"
#include "cardiokit/parallel.hpp"
#include "cardiokit/rng.hpp"

namespace cardiokit {

struct ForestParams {
    std::size_t n_trees = 100;
    std::size_t max_features = 0; // 0 = floor(sqrt(d)), min 1
    std::size_t min_samples_split = 2;
    std::size_t min_samples_leaf = 1;
    std::optional<std::size_t> max_depth; // nullopt = unlimited
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

// Row-major training/evaluation view with integer class ids.
struct Dataset {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    std::vector<std::string> class_names;

    std::size_t n_rows() const { return x.size(); }
    std::size_t n_features() const { return x.empty() ? 0 : x[0].size(); }
    std::size_t n_classes() const { return class_names.size(); }
};

// Classes are the sorted subject ids; an optional feature subset copies
// only the selected columns (by canonical index).
inline Dataset make_dataset(const FeatureMatrix& m,
                            const std::vector<std::size_t>& feature_subset = {}) {
    Dataset d;
    d.class_names = m.subjects();
    std::map<std::string, int> ids;
    for (std::size_t i = 0; i < d.class_names.size(); ++i)
        ids[d.class_names[i]] = static_cast<int>(i);
    for (const auto& row : m.rows) {
        std::vector<double> v;
        if (feature_subset.empty()) {
            v.assign(row.values.begin(), row.values.end());
        } else {
            v.reserve(feature_subset.size());
            for (std::size_t f : feature_subset)
                v.push_back(row.values.at(f));
        }
        d.x.push_back(std::move(v));
        d.y.push_back(ids.at(row.subject_id));
    }
    return d;
}

struct TreeNode {
    std::int32_t feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double n_samples = 0.0;          // bootstrap rows through this node
    std::vector<double> class_counts; // leaves only
};

struct Tree {
    std::vector<TreeNode> nodes;
    std::vector<double> importance; // summed weighted impurity decrease per feature

    const TreeNode& leaf_for(const std::vector<double>& x) const {
        std::size_t i = 0;
        while (nodes[i].feature >= 0) {
            const auto& n = nodes[i];
            i = static_cast<std::size_t>(
                x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
        }
        return nodes[i];
    }
};

struct Forest {
    ForestParams params;
    std::vector<Tree> trees;
    std::vector<std::string> class_names;
    std::size_t n_features = 0;
};

namespace detail {

struct SplitChoice {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double score = -1.0; // sum(c^2)/n over both children, maximized
    double decrease = 0.0;
};

// Candidate score shared with the test oracle: sum over children of
// (sum of squared class counts) / child size. Maximizing it minimizes the
// weighted Gini impurity; ties resolve to the lowest feature index, then
// threshold, via ascending evaluation order and strict improvement.
inline SplitChoice best_split_for_feature(const std::vector<std::vector<double>>& x,
                                          const std::vector<int>& y,
                                          const std::vector<std::size_t>& idx,
                                          std::size_t feature, std::size_t n_classes,
                                          std::size_t min_leaf) {
    const std::size_t n = idx.size();
    std::vector<std::pair<double, int>> vals;
    vals.reserve(n);
    for (std::size_t i : idx)
        vals.emplace_back(x[i][feature], y[i]);
    std::sort(vals.begin(), vals.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<double> left(n_classes, 0.0), right(n_classes, 0.0);
    for (const auto& [v, c] : vals)
        right[static_cast<std::size_t>(c)] += 1.0;

    SplitChoice best;
    best.feature = feature;
    for (std::size_t i = 1; i < n; ++i) {
        const auto c = static_cast<std::size_t>(vals[i - 1].second);
        left[c] += 1.0;
        right[c] -= 1.0;
        if (vals[i].first <= vals[i - 1].first)
            continue;
        const std::size_t nl = i, nr = n - i;
        if (nl < min_leaf || nr < min_leaf)
            continue;
        double suml2 = 0.0, sumr2 = 0.0;
        for (std::size_t k = 0; k < n_classes; ++k) {
            suml2 += left[k] * left[k];
            sumr2 += right[k] * right[k];
        }
        const double score =
            suml2 / static_cast<double>(nl) + sumr2 / static_cast<double>(nr);
        if (!best.found || score > best.score) {
            best.found = true;
            best.score = score;
            best.threshold = (vals[i - 1].first + vals[i].first) / 2.0;
        }
    }
    return best;
}

struct TreeBuilder {
    const std::vector<std::vector<double>>& x;
    const std::vector<int>& y;
    std::size_t n_classes;
    std::size_t n_features;
    ForestParams params;
    std::size_t mtry;
    double n_total;
    Rng rng;
    Tree tree;

    std::int32_t build(std::vector<std::size_t>& idx, std::size_t depth) {
        const auto node_id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        const std::size_t n = idx.size();
        tree.nodes[static_cast<std::size_t>(node_id)].n_samples = static_cast<double>(n);

        std::vector<double> counts(n_classes, 0.0);
        for (std::size_t i : idx)
            counts[static_cast<std::size_t>(y[i])] += 1.0;
        double sum2 = 0.0;
        std::size_t present = 0;
        for (double c : counts) {
            sum2 += c * c;
            present += (c > 0.0) ? 1 : 0;
        }

        const bool stop = present <= 1 || n < params.min_samples_split ||
                          (params.max_depth && depth >= *params.max_depth);
        SplitChoice best;
        if (!stop) {
            std::vector<std::size_t> cand = rng.sample_without_replacement(n_features, mtry);
            std::sort(cand.begin(), cand.end());
            for (std::size_t f : cand) {
                SplitChoice c = best_split_for_feature(x, y, idx, f, n_classes,
                                                       params.min_samples_leaf);
                if (c.found && (!best.found || c.score > best.score))
                    best = c;
            }
        }

        if (!best.found) {
            tree.nodes[static_cast<std::size_t>(node_id)].class_counts = std::move(counts);
            return node_id;
        }

        // Impurity decrease weighted by the node fraction, for Gini importance.
        const double nn = static_cast<double>(n);
        const double decrease = best.score / nn - sum2 / (nn * nn);
        tree.importance[best.feature] += (nn / n_total) * decrease;

        std::vector<std::size_t> left_idx, right_idx;
        left_idx.reserve(n);
        right_idx.reserve(n);
        for (std::size_t i : idx)
            (x[i][best.feature] <= best.threshold ? left_idx : right_idx).push_back(i);
        idx.clear();
        idx.shrink_to_fit();

        tree.nodes[static_cast<std::size_t>(node_id)].feature =
            static_cast<std::int32_t>(best.feature);
        tree.nodes[static_cast<std::size_t>(node_id)].threshold = best.threshold;
        const std::int32_t left = build(left_idx, depth + 1);
        tree.nodes[static_cast<std::size_t>(node_id)].left = left;
        const std::int32_t right = build(right_idx, depth + 1);
        tree.nodes[static_cast<std::size_t>(node_id)].right = right;
        return node_id;
    }
};

inline Tree fit_tree(const Dataset& data, const ForestParams& params, std::size_t mtry,
                     std::uint64_t tree_seed) {
    Rng rng(tree_seed);
    const std::size_t n = data.n_rows();
    std::vector<std::size_t> idx;
    idx.reserve(n);
    if (params.bootstrap) {
        for (std::size_t i = 0; i < n; ++i)
            idx.push_back(rng.below(n));
    } else {
        for (std::size_t i = 0; i < n; ++i)
            idx.push_back(i);
    }
    TreeBuilder builder{data.x,        data.y, data.n_classes(), data.n_features(),
                        params,        mtry,   static_cast<double>(n),
                        std::move(rng), Tree{}};
    builder.tree.importance.assign(data.n_features(), 0.0);
    builder.build(idx, 0);
    return std::move(builder.tree);
}

} // namespace detail

// Bagged CART ensemble with Gini splits. Per-tree seeds derive from
// (params.seed, tree index), so results do not depend on the worker count.
inline Forest fit_forest(const Dataset& data, const ForestParams& params,
                         std::size_t workers = 1) {
    if (data.n_rows() == 0 || data.n_features() == 0)
        throw data_error("fit_forest: empty training data");
    if (params.n_trees < 1)
        throw config_error("fit_forest: n_trees must be >= 1");
    {
        std::vector<bool> seen(data.n_classes(), false);
        std::size_t distinct = 0;
        for (int c : data.y)
            if (!seen[static_cast<std::size_t>(c)]) {
                seen[static_cast<std::size_t>(c)] = true;
                ++distinct;
            }
        if (distinct < 2)
            throw data_error("fit_forest: need at least 2 classes");
    }

    std::size_t mtry = params.max_features;
    if (mtry == 0)
        mtry = static_cast<std::size_t>(
            std::floor(std::sqrt(static_cast<double>(data.n_features()))));
    mtry = std::max<std::size_t>(1, std::min(mtry, data.n_features()));

    Forest forest;
    forest.params = params;
    forest.class_names = data.class_names;
    forest.n_features = data.n_features();
    forest.trees.resize(params.n_trees);
    parallel_for(params.n_trees, workers, [&](std::size_t t) {
        forest.trees[t] =
            detail::fit_tree(data, params, mtry, derive_seed(params.seed, {kStreamForestTree, t}));
    });
    return forest;
}

inline ForestParams default_forest_params(std::uint64_t seed) {
    ForestParams p;
    p.seed = seed;
    return p;
}

// Mean of per-tree leaf class frequencies.
inline std::vector<double> predict_proba(const Forest& forest, const std::vector<double>& x) {
    if (x.size() != forest.n_features)
        throw data_error("predict: expected " + std::to_string(forest.n_features) +
                         " features, got " + std::to_string(x.size()));
    const std::size_t k = forest.class_names.size();
    std::vector<double> proba(k, 0.0);
    for (const auto& tree : forest.trees) {
        const TreeNode& leaf = tree.leaf_for(x);
        double total = 0.0;
        for (double c : leaf.class_counts)
            total += c;
        for (std::size_t i = 0; i < k; ++i)
            proba[i] += leaf.class_counts[i] / total;
    }
    for (double& p : proba)
        p /= static_cast<double>(forest.trees.size());
    return proba;
}

// Argmax class; ties resolve to the lowest class id.
inline int predict_class(const Forest& forest, const std::vector<double>& x) {
    const std::vector<double> proba = predict_proba(forest, x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < proba.size(); ++i)
        if (proba[i] > proba[best])
            best = i;
    return static_cast<int>(best);
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0; // macro
    double recall = 0.0;    // macro
    double f1 = 0.0;        // macro
    std::vector<ClassMetrics> per_class;
    std::vector<std::size_t> confusion; // k x k row-major, rows = truth
    std::size_t n_classes = 0;
};

inline std::vector<int> predict_all(const Forest& forest, const Dataset& data,
                                    std::size_t workers = 1) {
    std::vector<int> pred(data.n_rows());
    parallel_for(data.n_rows(), workers, [&](std::size_t i) {
        pred[i] = predict_class(forest, data.x[i]);
    });
    return pred;
}

// Accuracy plus macro-averaged one-vs-rest precision/recall/F1 over the
// classes present in the truth labels. A class never predicted scores
// precision 0.
inline Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                               std::size_t n_classes) {
    if (truth.size() != pred.size() || truth.empty())
        throw data_error("compute_metrics: label size mismatch");
    Metrics m;
    m.n_classes = n_classes;
    m.confusion.assign(n_classes * n_classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++m.confusion[static_cast<std::size_t>(truth[i]) * n_classes +
                      static_cast<std::size_t>(pred[i])];

    std::size_t correct = 0;
    m.per_class.resize(n_classes);
    double psum = 0.0, rsum = 0.0, fsum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::size_t tp = m.confusion[c * n_classes + c];
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < n_classes; ++j) {
            row += m.confusion[c * n_classes + j];
            col += m.confusion[j * n_classes + c];
        }
        correct += tp;
        ClassMetrics& cm = m.per_class[c];
        cm.support = row;
        cm.precision = (col > 0) ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        cm.recall = (row > 0) ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        cm.f1 = (cm.precision + cm.recall > 0.0)
                    ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                    : 0.0;
        if (row > 0) {
            ++present;
            psum += cm.precision;
            rsum += cm.recall;
            fsum += cm.f1;
        }
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    m.precision = psum / static_cast<double>(present);
    m.recall = rsum / static_cast<double>(present);
    m.f1 = fsum / static_cast<double>(present);
    return m;
}

inline Metrics evaluate(const Forest& forest, const Dataset& test, std::size_t workers = 1) {
    if (test.n_rows() == 0)
        throw data_error("evaluate: empty test set");
    if (test.class_names != forest.class_names)
        throw data_error("evaluate: test class universe differs from training");
    const std::vector<int> pred = predict_all(forest, test, workers);
    return compute_metrics(test.y, pred, forest.class_names.size());
}

// Test dataset in the forest's class universe; unseen labels are an error.
inline Dataset make_dataset_like(const FeatureMatrix& m, const Forest& forest,
                                 const std::vector<std::size_t>& feature_subset = {}) {
    Dataset d;
    d.class_names = forest.class_names;
    std::map<std::string, int> ids;
    for (std::size_t i = 0; i < d.class_names.size(); ++i)
        ids[d.class_names[i]] = static_cast<int>(i);
    for (const auto& row : m.rows) {
        auto it = ids.find(row.subject_id);
        if (it == ids.end())
            throw data_error("evaluate: label '" + row.subject_id + "' unseen in training");
        std::vector<double> v;
        if (feature_subset.empty()) {
            v.assign(row.values.begin(), row.values.end());
        } else {
            v.reserve(feature_subset.size());
            for (std::size_t f : feature_subset)
                v.push_back(row.values.at(f));
        }
        d.x.push_back(std::move(v));
        d.y.push_back(it->second);
    }
    return d;
}

// Per-feature sum of weighted impurity decreases, averaged over trees and
// normalized to sum 1.
inline std::vector<double> gini_importance(const Forest& forest) {
    std::vector<double> imp(forest.n_features, 0.0);
    for (const auto& tree : forest.trees)
        for (std::size_t f = 0; f < forest.n_features; ++f)
            imp[f] += tree.importance[f];
    double total = 0.0;
    for (double& v : imp) {
        v /= static_cast<double>(forest.trees.size());
        total += v;
    }
    if (total > 0.0)
        for (double& v : imp)
            v /= total;
    return imp;
}

// ---- stratified k-fold -----------------------------------------------

// fold id per row; within each class the shuffled rows deal round-robin.
inline std::vector<std::size_t> stratified_kfold(const std::vector<int>& y, std::size_t k,
                                                 std::size_t n_classes, std::uint64_t seed) {
    if (k < 2)
        throw config_error("stratified_kfold: need k >= 2");
    std::vector<std::vector<std::size_t>> per_class(n_classes);
    for (std::size_t i = 0; i < y.size(); ++i)
        per_class[static_cast<std::size_t>(y[i])].push_back(i);
    std::vector<std::size_t> fold(y.size(), 0);
    for (std::size_t c = 0; c < n_classes; ++c) {
        auto& rows = per_class[c];
        if (!rows.empty() && rows.size() < k)
            throw config_error("stratified_kfold: class " + std::to_string(c) + " has only " +
                               std::to_string(rows.size()) + " rows for " + std::to_string(k) +
                               " folds");
        Rng rng(derive_seed(seed, {kStreamKFold, c}));
        rng.shuffle(rows);
        for (std::size_t i = 0; i < rows.size(); ++i)
            fold[rows[i]] = i % k;
    }
    return fold;
}

inline Dataset subset_rows(const Dataset& d, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.class_names = d.class_names;
    out.x.reserve(rows.size());
    out.y.reserve(rows.size());
    for (std::size_t i : rows) {
        out.x.push_back(d.x[i]);
        out.y.push_back(d.y[i]);
    }
    return out;
}

// One Metrics per fold: fit on the complement, score on the fold.
inline std::vector<Metrics> cross_validate(const Dataset& data, const ForestParams& params,
                                           std::size_t k, std::uint64_t cv_seed,
                                           std::size_t workers = 1) {
    const std::vector<std::size_t> fold = stratified_kfold(data.y, k, data.n_classes(), cv_seed);
    std::vector<Metrics> out(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t i = 0; i < fold.size(); ++i)
            (fold[i] == f ? test_rows : train_rows).push_back(i);
        if (test_rows.empty() || train_rows.empty())
            throw config_error("cross_validate: empty fold");
        ForestParams p = params;
        p.seed = derive_seed(params.seed, {kStreamKFold, 1000 + f});
        const Forest forest = fit_forest(subset_rows(data, train_rows), p, workers);
        Dataset test = subset_rows(data, test_rows);
        const std::vector<int> pred = predict_all(forest, test, workers);
        out[f] = compute_metrics(test.y, pred, data.n_classes());
    }
    return out;
}

inline double cv_mean_accuracy(const std::vector<Metrics>& folds) {
    double s = 0.0;
    for (const auto& m : folds)
        s += m.accuracy;
    return s / static_cast<double>(folds.size());
}

// ---- serialization -----------------------------------------------------

inline nlohmann::json forest_to_json(const Forest& forest) {
    nlohmann::json j;
    j["format"] = "cardiokit-forest";
    j["version"] = 1;
    j["classes"] = forest.class_names;
    j["n_features"] = forest.n_features;
    nlohmann::json params;
    params["n_trees"] = forest.params.n_trees;
    params["max_features"] = forest.params.max_features;
    params["min_samples_split"] = forest.params.min_samples_split;
    params["min_samples_leaf"] = forest.params.min_samples_leaf;
    params["max_depth"] = forest.params.max_depth ? nlohmann::json(*forest.params.max_depth)
                                                  : nlohmann::json(nullptr);
    params["bootstrap"] = forest.params.bootstrap;
    params["seed"] = forest.params.seed;
    j["params"] = params;
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : forest.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : tree.nodes) {
            nlohmann::json node = {n.feature, n.threshold, n.left, n.right, n.n_samples};
            node.push_back(n.class_counts);
            nodes.push_back(std::move(node));
        }
        nlohmann::json t;
        t["nodes"] = std::move(nodes);
        t["importance"] = tree.importance;
        trees.push_back(std::move(t));
    }
    j["trees"] = std::move(trees);
    return j;
}

inline Forest forest_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j["format"] != "cardiokit-forest")
        throw parse_error("model file: not a cardiokit forest");
    if (j.at("version").get<int>() != 1)
        throw parse_error("model file: unsupported version");
    Forest forest;
    forest.class_names = j.at("classes").get<std::vector<std::string>>();
    forest.n_features = j.at("n_features").get<std::size_t>();
    const auto& params = j.at("params");
    forest.params.n_trees = params.at("n_trees").get<std::size_t>();
    forest.params.max_features = params.at("max_features").get<std::size_t>();
    forest.params.min_samples_split = params.at("min_samples_split").get<std::size_t>();
    forest.params.min_samples_leaf = params.at("min_samples_leaf").get<std::size_t>();
    if (!params.at("max_depth").is_null())
        forest.params.max_depth = params.at("max_depth").get<std::size_t>();
    forest.params.bootstrap = params.at("bootstrap").get<bool>();
    forest.params.seed = params.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("trees")) {
        Tree tree;
        tree.importance = t.at("importance").get<std::vector<double>>();
        for (const auto& n : t.at("nodes")) {
            TreeNode node;
            node.feature = n.at(0).get<std::int32_t>();
            node.threshold = n.at(1).get<double>();
            node.left = n.at(2).get<std::int32_t>();
            node.right = n.at(3).get<std::int32_t>();
            node.n_samples = n.at(4).get<double>();
            node.class_counts = n.at(5).get<std::vector<double>>();
            tree.nodes.push_back(std::move(node));
        }
        forest.trees.push_back(std::move(tree));
    }
    return forest;
}

inline void save_forest(const Forest& forest, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw io_error("cannot write model file: " + path);
    out << forest_to_json(forest).dump(1) << "\n";
}

inline Forest load_forest(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw io_error("missing model file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("model file " + path + ": " + e.what());
    }
    return forest_from_json(j);
}

} // namespace cardiokit
