#pragma once

#include <cstddef>
#include <vector>

#include "cardiokit/errors.hpp"
#include "cardiokit/forest.hpp"
#include "cardiokit/parallel.hpp"

namespace cardiokit {

// Per-row, per-class, per-feature attributions satisfying local accuracy:
// base_values[c] + sum_f attributions[r][c][f] == predict_proba(r)[c].
struct ShapResult {
    std::vector<std::vector<std::vector<double>>> attributions;
    std::vector<double> base_values;
};

namespace shap_detail {

struct PathElem {
    int feature = -1;
    double zero_fraction = 1.0; // cover fraction carried when the feature is out
    double one_fraction = 1.0;  // 1 when x follows every split on this feature
    double pweight = 1.0;
};

using Path = std::vector<PathElem>;

inline void extend(Path& m, double pz, double po, int pi) {
    const int depth = static_cast<int>(m.size());
    m.push_back({pi, pz, po, depth == 0 ? 1.0 : 0.0});
    for (int i = depth - 1; i >= 0; --i) {
        m[static_cast<std::size_t>(i + 1)].pweight +=
            po * m[static_cast<std::size_t>(i)].pweight * (i + 1) /
            static_cast<double>(depth + 1);
        m[static_cast<std::size_t>(i)].pweight =
            pz * m[static_cast<std::size_t>(i)].pweight * (depth - i) /
            static_cast<double>(depth + 1);
    }
}

inline void unwind(Path& m, int i) {
    const int depth = static_cast<int>(m.size()) - 1;
    double n = m[static_cast<std::size_t>(depth)].pweight;
    if (m[static_cast<std::size_t>(i)].one_fraction != 0.0) {
        for (int j = depth - 1; j >= 0; --j) {
            const double tmp = m[static_cast<std::size_t>(j)].pweight;
            m[static_cast<std::size_t>(j)].pweight =
                n * (depth + 1) / static_cast<double>(j + 1);
            n = tmp - m[static_cast<std::size_t>(j)].pweight *
                          m[static_cast<std::size_t>(i)].zero_fraction * (depth - j) /
                          static_cast<double>(depth + 1);
        }
    } else {
        for (int j = depth - 1; j >= 0; --j) {
            m[static_cast<std::size_t>(j)].pweight =
                m[static_cast<std::size_t>(j)].pweight * (depth + 1) /
                (m[static_cast<std::size_t>(i)].zero_fraction * (depth - j));
        }
    }
    for (int j = i; j < depth; ++j) {
        m[static_cast<std::size_t>(j)].feature = m[static_cast<std::size_t>(j + 1)].feature;
        m[static_cast<std::size_t>(j)].zero_fraction =
            m[static_cast<std::size_t>(j + 1)].zero_fraction;
        m[static_cast<std::size_t>(j)].one_fraction =
            m[static_cast<std::size_t>(j + 1)].one_fraction;
    }
    m.pop_back();
}

inline double unwound_sum(const Path& m, int i) {
    const int depth = static_cast<int>(m.size()) - 1;
    double total = 0.0;
    if (m[static_cast<std::size_t>(i)].one_fraction != 0.0) {
        double n = m[static_cast<std::size_t>(depth)].pweight;
        for (int j = depth - 1; j >= 0; --j) {
            const double tmp =
                n / ((j + 1) * m[static_cast<std::size_t>(i)].one_fraction);
            total += tmp;
            n = m[static_cast<std::size_t>(j)].pweight -
                tmp * m[static_cast<std::size_t>(i)].zero_fraction * (depth - j);
        }
    } else {
        for (int j = depth - 1; j >= 0; --j) {
            total += m[static_cast<std::size_t>(j)].pweight /
                     ((depth - j) * m[static_cast<std::size_t>(i)].zero_fraction);
        }
    }
    return total * (depth + 1);
}

inline std::vector<double> leaf_distribution(const TreeNode& leaf) {
    double total = 0.0;
    for (double c : leaf.class_counts)
        total += c;
    std::vector<double> dist(leaf.class_counts.size());
    for (std::size_t i = 0; i < dist.size(); ++i)
        dist[i] = leaf.class_counts[i] / total;
    return dist;
}

// phi is (n_features x n_classes), row-major.
inline void recurse(const Tree& tree, const std::vector<double>& x, std::vector<double>& phi,
                    std::size_t n_classes, std::size_t node_id, Path m, double pz, double po,
                    int pi) {
    extend(m, pz, po, pi);
    const TreeNode& node = tree.nodes[node_id];

    if (node.feature < 0) {
        const std::vector<double> dist = leaf_distribution(node);
        for (int i = 1; i < static_cast<int>(m.size()); ++i) {
            const double w = unwound_sum(m, i) * (m[static_cast<std::size_t>(i)].one_fraction -
                                                  m[static_cast<std::size_t>(i)].zero_fraction);
            const auto f = static_cast<std::size_t>(m[static_cast<std::size_t>(i)].feature);
            for (std::size_t c = 0; c < n_classes; ++c)
                phi[f * n_classes + c] += w * dist[c];
        }
        return;
    }

    const auto hot_id = static_cast<std::size_t>(
        x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
    const auto cold_id = static_cast<std::size_t>(
        x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.right : node.left);

    // A feature already on the path folds into the new step.
    double iz = 1.0, io = 1.0;
    for (int k = 1; k < static_cast<int>(m.size()); ++k) {
        if (m[static_cast<std::size_t>(k)].feature == node.feature) {
            iz = m[static_cast<std::size_t>(k)].zero_fraction;
            io = m[static_cast<std::size_t>(k)].one_fraction;
            unwind(m, k);
            break;
        }
    }

    const double hot_ratio = tree.nodes[hot_id].n_samples / node.n_samples;
    const double cold_ratio = tree.nodes[cold_id].n_samples / node.n_samples;
    recurse(tree, x, phi, n_classes, hot_id, m, iz * hot_ratio, io, node.feature);
    recurse(tree, x, phi, n_classes, cold_id, m, iz * cold_ratio, 0.0, node.feature);
}

inline void expected_value(const Tree& tree, std::size_t node_id, double weight,
                           std::vector<double>& acc) {
    const TreeNode& node = tree.nodes[node_id];
    if (node.feature < 0) {
        const std::vector<double> dist = leaf_distribution(node);
        for (std::size_t c = 0; c < acc.size(); ++c)
            acc[c] += weight * dist[c];
        return;
    }
    const auto l = static_cast<std::size_t>(node.left);
    const auto r = static_cast<std::size_t>(node.right);
    expected_value(tree, l, weight * tree.nodes[l].n_samples / node.n_samples, acc);
    expected_value(tree, r, weight * tree.nodes[r].n_samples / node.n_samples, acc);
}

} // namespace shap_detail

// Path-dependent TreeSHAP: cover-weighted conditional expectations along
// decision paths, summed over trees and divided by the tree count.
inline ShapResult shap_values(const Forest& forest,
                              const std::vector<std::vector<double>>& rows,
                              std::size_t workers = 1) {
    const std::size_t n_classes = forest.class_names.size();
    const std::size_t n_features = forest.n_features;

    ShapResult result;
    result.base_values.assign(n_classes, 0.0);
    for (const auto& tree : forest.trees) {
        std::vector<double> acc(n_classes, 0.0);
        shap_detail::expected_value(tree, 0, 1.0, acc);
        for (std::size_t c = 0; c < n_classes; ++c)
            result.base_values[c] += acc[c];
    }
    for (double& b : result.base_values)
        b /= static_cast<double>(forest.trees.size());

    result.attributions.assign(
        rows.size(), std::vector<std::vector<double>>(n_classes, std::vector<double>(n_features, 0.0)));

    parallel_for(rows.size(), workers, [&](std::size_t r) {
        if (rows[r].size() != n_features)
            throw data_error("shap_values: row has wrong feature count");
        std::vector<double> phi(n_features * n_classes, 0.0);
        for (const auto& tree : forest.trees)
            shap_detail::recurse(tree, rows[r], phi, n_classes, 0, shap_detail::Path{}, 1.0, 1.0,
                                 -1);
        const double scale = 1.0 / static_cast<double>(forest.trees.size());
        for (std::size_t f = 0; f < n_features; ++f)
            for (std::size_t c = 0; c < n_classes; ++c)
                result.attributions[r][c][f] = phi[f * n_classes + c] * scale;
    });
    return result;
}

// Global ranking reduction, in this exact order: average across classes,
// absolute value, average across samples.
inline std::vector<double> shap_global(const ShapResult& shap) {
    if (shap.attributions.empty())
        throw data_error("shap_global: no attributions");
    const std::size_t n_classes = shap.attributions[0].size();
    const std::size_t n_features = shap.attributions[0][0].size();
    std::vector<double> global(n_features, 0.0);
    for (const auto& row : shap.attributions) {
        for (std::size_t f = 0; f < n_features; ++f) {
            double class_mean = 0.0;
            for (std::size_t c = 0; c < n_classes; ++c)
                class_mean += row[c][f];
            class_mean /= static_cast<double>(n_classes);
            global[f] += std::fabs(class_mean);
        }
    }
    for (double& g : global)
        g /= static_cast<double>(shap.attributions.size());
    return global;
}

} // namespace cardiokit
