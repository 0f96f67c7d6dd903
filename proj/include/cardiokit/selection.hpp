#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cardiokit/errors.hpp"
#include "cardiokit/forest.hpp"
#include "cardiokit/rng.hpp"

namespace cardiokit {

enum class SelectionMethod { Rfecv, Ga, Intersection };

inline const char* selection_method_name(SelectionMethod m) {
    switch (m) {
    case SelectionMethod::Rfecv:
        return "rfecv";
    case SelectionMethod::Ga:
        return "ga";
    default:
        return "intersection";
    }
}

struct SelectionResult {
    SelectionMethod method = SelectionMethod::Rfecv;
    std::vector<std::size_t> selected; // canonical feature indices, sorted
    std::vector<std::string> selected_names;
    // RFECV: (subset size, CV accuracy) per visited size, descending size.
    // GA: best population fitness per generation.
    std::vector<std::pair<std::size_t, double>> score_curve;
    std::vector<double> fitness_history;
    std::uint64_t seed = 0;
    bool empty_warning = false;
};

struct GaParams {
    std::size_t population = 50;
    std::size_t generations = 50;
    double crossover_prob = 0.5;
    double mutation_prob = 0.1;
    std::size_t tournament_size = 3;
    double per_gene_flip = 0.05;
    std::uint64_t seed = 0;

    void validate() const {
        if (population < 2)
            throw config_error("ga: population must be >= 2");
        for (double p : {crossover_prob, mutation_prob, per_gene_flip})
            if (p < 0.0 || p > 1.0)
                throw config_error("ga: probabilities must lie in [0,1]");
    }
};

namespace detail {

inline std::vector<std::string> names_for(const std::vector<std::size_t>& selected,
                                          const std::vector<std::string>& labels) {
    std::vector<std::string> out;
    out.reserve(selected.size());
    for (std::size_t f : selected)
        out.push_back(labels.at(f));
    return out;
}

inline Dataset select_columns(const Dataset& d, const std::vector<std::size_t>& subset) {
    Dataset out;
    out.class_names = d.class_names;
    out.y = d.y;
    out.x.reserve(d.n_rows());
    for (const auto& row : d.x) {
        std::vector<double> v;
        v.reserve(subset.size());
        for (std::size_t f : subset)
            v.push_back(row[f]);
        out.x.push_back(std::move(v));
    }
    return out;
}

} // namespace detail

// Recursive feature elimination: drop the lowest-Gini-ranked feature each
// step, recording stratified CV accuracy at every visited size. Returns
// the subset with the best CV accuracy; ties favor the smaller subset.
inline SelectionResult rfecv(const Dataset& train, const std::vector<std::string>& labels,
                             const ForestParams& params, std::size_t cv_folds = 5,
                             std::size_t step = 1, std::size_t workers = 1) {
    if (cv_folds < 2)
        throw config_error("rfecv: cv_folds must be >= 2");
    if (step < 1)
        throw config_error("rfecv: step must be >= 1");
    const std::size_t d = train.n_features();
    if (d == 0)
        throw data_error("rfecv: no features");

    std::vector<std::size_t> current(d);
    for (std::size_t f = 0; f < d; ++f)
        current[f] = f;

    SelectionResult result;
    result.method = SelectionMethod::Rfecv;
    result.seed = params.seed;

    std::vector<std::size_t> best_subset;
    double best_score = -1.0;

    while (true) {
        const Dataset masked = detail::select_columns(train, current);
        const double cv_acc = cv_mean_accuracy(
            cross_validate(masked, params, cv_folds, derive_seed(params.seed, {kStreamKFold, 7}),
                           workers));
        result.score_curve.emplace_back(current.size(), cv_acc);
        if (cv_acc >= best_score) { // >= prefers the smaller, later subset
            best_score = cv_acc;
            best_subset = current;
        }
        if (current.size() == 1)
            break;

        const Forest forest = fit_forest(masked, params, workers);
        const std::vector<double> imp = gini_importance(forest);
        // Rank current features by importance; drop the weakest `step`.
        std::vector<std::size_t> order(current.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (imp[a] != imp[b])
                return imp[a] < imp[b];
            return current[a] > current[b];
        });
        const std::size_t n_drop = std::min(step, current.size() - 1);
        std::vector<bool> drop(current.size(), false);
        for (std::size_t i = 0; i < n_drop; ++i)
            drop[order[i]] = true;
        std::vector<std::size_t> next;
        next.reserve(current.size() - n_drop);
        for (std::size_t i = 0; i < current.size(); ++i)
            if (!drop[i])
                next.push_back(current[i]);
        current = std::move(next);
    }

    result.selected = std::move(best_subset);
    std::sort(result.selected.begin(), result.selected.end());
    result.selected_names = detail::names_for(result.selected, labels);
    return result;
}

namespace detail {

using Mask = std::vector<std::uint8_t>;

inline std::vector<std::size_t> mask_to_subset(const Mask& mask) {
    std::vector<std::size_t> subset;
    for (std::size_t f = 0; f < mask.size(); ++f)
        if (mask[f])
            subset.push_back(f);
    return subset;
}

inline void repair_mask(Mask& mask, Rng& rng) {
    for (std::uint8_t g : mask)
        if (g)
            return;
    mask[rng.below(mask.size())] = 1;
}

} // namespace detail

// Bitmask GA over feature subsets. Fitness is the stratified 3-fold CV
// accuracy of a forest on the masked columns, a pure function of the mask
// (fold assignment and forest seeds are fixed up front), so it is memoized
// and the elitist best-per-generation history cannot decrease.
inline SelectionResult ga_select(const Dataset& train, const std::vector<std::string>& labels,
                                 const ForestParams& forest_params, const GaParams& ga,
                                 std::size_t cv_folds = 3, std::size_t workers = 1) {
    ga.validate();
    const std::size_t d = train.n_features();
    if (d < 2)
        throw data_error("ga_select: need at least 2 features");

    std::map<detail::Mask, double> fitness_cache;
    auto fitness = [&](const detail::Mask& mask) {
        auto it = fitness_cache.find(mask);
        if (it != fitness_cache.end())
            return it->second;
        const Dataset masked = detail::select_columns(train, detail::mask_to_subset(mask));
        ForestParams fp = forest_params;
        std::uint64_t h = 0;
        for (std::size_t f = 0; f < mask.size(); ++f)
            if (mask[f])
                h = mix64(h ^ (f + 0x9e3779b97f4a7c15ull));
        fp.seed = derive_seed(ga.seed, {kStreamGaFitness, h});
        const double acc = cv_mean_accuracy(
            cross_validate(masked, fp, cv_folds, derive_seed(ga.seed, {kStreamKFold, 11}),
                           workers));
        fitness_cache.emplace(mask, acc);
        return acc;
    };

    Rng rng(derive_seed(ga.seed, {kStreamGa}));
    std::vector<detail::Mask> population(ga.population, detail::Mask(d, 0));
    for (auto& mask : population) {
        for (auto& g : mask)
            g = rng.bernoulli(0.5) ? 1 : 0;
        detail::repair_mask(mask, rng);
    }

    SelectionResult result;
    result.method = SelectionMethod::Ga;
    result.seed = ga.seed;

    detail::Mask best_ever;
    double best_ever_fit = -1.0;

    for (std::size_t gen = 0; gen <= ga.generations; ++gen) {
        std::vector<double> fits(population.size());
        for (std::size_t i = 0; i < population.size(); ++i)
            fits[i] = fitness(population[i]);

        std::size_t gen_best = 0;
        for (std::size_t i = 1; i < population.size(); ++i)
            if (fits[i] > fits[gen_best])
                gen_best = i;
        result.fitness_history.push_back(fits[gen_best]);
        if (fits[gen_best] > best_ever_fit) {
            best_ever_fit = fits[gen_best];
            best_ever = population[gen_best];
        }
        if (gen == ga.generations)
            break;

        // Tournament selection, size 3, ties to the earliest drawn.
        std::vector<detail::Mask> offspring;
        offspring.reserve(population.size());
        for (std::size_t i = 0; i < population.size(); ++i) {
            std::size_t winner = rng.below(population.size());
            for (std::size_t t = 1; t < ga.tournament_size; ++t) {
                const std::size_t challenger = rng.below(population.size());
                if (fits[challenger] > fits[winner])
                    winner = challenger;
            }
            offspring.push_back(population[winner]);
        }

        // Two-point crossover on adjacent pairs.
        for (std::size_t i = 0; i + 1 < offspring.size(); i += 2) {
            if (!rng.bernoulli(ga.crossover_prob))
                continue;
            std::size_t p1 = 1 + rng.below(d - 1);
            std::size_t p2 = 1 + rng.below(d - 1);
            if (p1 > p2)
                std::swap(p1, p2);
            for (std::size_t g = p1; g < p2; ++g)
                std::swap(offspring[i][g], offspring[i + 1][g]);
        }

        // Per-individual mutation with per-gene flips.
        for (auto& mask : offspring) {
            if (!rng.bernoulli(ga.mutation_prob))
                continue;
            for (auto& g : mask)
                if (rng.bernoulli(ga.per_gene_flip))
                    g = g ? 0 : 1;
        }
        for (auto& mask : offspring)
            detail::repair_mask(mask, rng);

        // Elitism of 1: the generation's best survives verbatim.
        offspring[0] = population[gen_best];
        population = std::move(offspring);
    }

    result.selected = detail::mask_to_subset(best_ever);
    result.selected_names = detail::names_for(result.selected, labels);
    return result;
}

inline SelectionResult intersect_subsets(const SelectionResult& a, const SelectionResult& b,
                                         const std::vector<std::string>& labels) {
    SelectionResult out;
    out.method = SelectionMethod::Intersection;
    std::set_intersection(a.selected.begin(), a.selected.end(), b.selected.begin(),
                          b.selected.end(), std::back_inserter(out.selected));
    out.selected_names = detail::names_for(out.selected, labels);
    out.empty_warning = out.selected.empty();
    return out;
}

} // namespace cardiokit
