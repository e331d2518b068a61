#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "sino/image.hpp"
#include "sino/rng.hpp"

namespace sino::metrics {

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& actual) {
    if (predicted.empty() || predicted.size() != actual.size())
        throw std::invalid_argument("accuracy: vectors must be nonempty and equal length");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == actual[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

/// ROC curve with AUC. The curve runs from (0,0) to (1,1); AUC is the
/// Mann-Whitney statistic with ties counted 1/2.
struct RocResult {
    std::vector<double> thresholds;
    std::vector<double> fpr;
    std::vector<double> tpr;
    double auc = 0.0;
};

namespace detail {

inline void check_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.empty() || scores.size() != labels.size())
        throw std::invalid_argument("roc: scores and labels must be nonempty and equal length");
    bool has_pos = false, has_neg = false;
    for (int l : labels) {
        if (l == 1) has_pos = true;
        else if (l == 0) has_neg = true;
        else throw std::invalid_argument("roc: labels must be 0 or 1");
    }
    if (!has_pos || !has_neg) throw std::invalid_argument("roc: both classes must be present");
}

/// Midranks of v (average rank of tied groups, 1-based).
inline std::vector<double> midranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
        i = j + 1;
    }
    return rank;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace detail

/// AUC alone, by the midrank identity. Exact for tied scores.
inline double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
    detail::check_binary(scores, labels);
    const auto rank = detail::midranks(scores);
    double rank_sum = 0.0;
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (labels[i] == 1) {
            rank_sum += rank[i];
            ++n1;
        }
    const std::size_t n0 = scores.size() - n1;
    return (rank_sum - static_cast<double>(n1) * (n1 + 1) / 2.0) /
           (static_cast<double>(n1) * static_cast<double>(n0));
}

inline RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    detail::check_binary(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::size_t n1 = 0;
    for (int l : labels) n1 += (l == 1);
    const std::size_t n0 = n - n1;

    RocResult roc;
    roc.thresholds.push_back(std::numeric_limits<double>::infinity());
    roc.fpr.push_back(0.0);
    roc.tpr.push_back(0.0);
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < n) {
        const double t = scores[order[i]];
        while (i < n && scores[order[i]] == t) {
            if (labels[order[i]] == 1) ++tp;
            else ++fp;
            ++i;
        }
        roc.thresholds.push_back(t);
        roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n0));
        roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n1));
    }
    roc.auc = auc_score(scores, labels);
    return roc;
}

/// Placement values underlying the DeLong covariance estimate.
struct DelongResult {
    double auc_a = 0.0;
    double auc_b = 0.0;
    double z = 0.0;
    double p = 1.0;
};

/// Paired comparison of two score vectors over the same cases.
inline DelongResult delong_test(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                                const std::vector<int>& labels) {
    detail::check_binary(scores_a, labels);
    detail::check_binary(scores_b, labels);
    if (scores_a.size() != scores_b.size())
        throw std::invalid_argument("delong_test: score vectors must be paired");

    std::vector<double> pos_a, pos_b, neg_a, neg_b;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            pos_a.push_back(scores_a[i]);
            pos_b.push_back(scores_b[i]);
        } else {
            neg_a.push_back(scores_a[i]);
            neg_b.push_back(scores_b[i]);
        }
    }
    const std::size_t n1 = pos_a.size(), n0 = neg_a.size();

    auto placements = [](const std::vector<double>& pos, const std::vector<double>& neg) {
        std::vector<double> v10(pos.size()), v01(neg.size(), 0.0);
        for (std::size_t i = 0; i < pos.size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < neg.size(); ++j) {
                double w = pos[i] > neg[j] ? 1.0 : (pos[i] == neg[j] ? 0.5 : 0.0);
                s += w;
                v01[j] += w;
            }
            v10[i] = s / static_cast<double>(neg.size());
        }
        for (auto& v : v01) v /= static_cast<double>(pos.size());
        return std::pair{v10, v01};
    };
    auto [v10_a, v01_a] = placements(pos_a, neg_a);
    auto [v10_b, v01_b] = placements(pos_b, neg_b);

    auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    auto covar = [&](const std::vector<double>& x, const std::vector<double>& y) {
        if (x.size() < 2) return 0.0;
        const double mx = mean(x), my = mean(y);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
        return s / static_cast<double>(x.size() - 1);
    };

    DelongResult res;
    res.auc_a = mean(v10_a);
    res.auc_b = mean(v10_b);
    const double var = covar(v10_a, v10_a) / n1 + covar(v01_a, v01_a) / n0 +
                       covar(v10_b, v10_b) / n1 + covar(v01_b, v01_b) / n0 -
                       2.0 * (covar(v10_a, v10_b) / n1 + covar(v01_a, v01_b) / n0);
    if (!(var > 1e-16)) {  // identical or degenerate scores
        res.z = 0.0;
        res.p = 1.0;
        return res;
    }
    res.z = (res.auc_a - res.auc_b) / std::sqrt(var);
    res.p = 2.0 * (1.0 - detail::normal_cdf(std::abs(res.z)));
    return res;
}

struct BootstrapCi {
    double point = 0.0;
    double lo95 = 0.0;
    double hi95 = 0.0;
};

/// Percentile bootstrap (2.5th / 97.5th of the resampled distribution).
/// Iteration i draws from a child generator seeded by seed + i, so results
/// are reproducible and independent of evaluation order. Resamples that
/// lose a label class are redrawn.
inline BootstrapCi bootstrap_ci(const std::function<double(const std::vector<double>&, const std::vector<int>&)>& metric,
                                const std::vector<double>& scores, const std::vector<int>& labels,
                                int n_iter, std::uint64_t seed) {
    if (scores.empty() || scores.size() != labels.size())
        throw std::invalid_argument("bootstrap_ci: scores and labels must be nonempty and equal length");
    const std::size_t n = scores.size();
    const int distinct = [&] {
        std::vector<int> u(labels);
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        return static_cast<int>(u.size());
    }();

    BootstrapCi ci;
    ci.point = metric(scores, labels);

    std::vector<double> stats(n_iter);
    std::vector<double> rs(n);
    std::vector<int> rl(n);
    const std::uint64_t stream = mix_seed(seed);
    for (int it = 0; it < n_iter; ++it) {
        // child seed keyed on (seed, iteration): adjacent base seeds must
        // not produce overlapping iteration streams
        Rng rng(mix_seed(stream + static_cast<std::uint64_t>(it)));
        for (int attempt = 0;; ++attempt) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t j = rng.uniform_index(n);
                rs[i] = scores[j];
                rl[i] = labels[j];
            }
            if (distinct < 2 || attempt >= 1000) break;
            bool has_first = false;
            int first = 0;
            bool mixed = false;
            for (std::size_t i = 0; i < n && !mixed; ++i) {
                if (!has_first) {
                    first = rl[i];
                    has_first = true;
                } else if (rl[i] != first) {
                    mixed = true;
                }
            }
            if (mixed) break;
        }
        stats[it] = metric(rs, rl);
    }
    std::sort(stats.begin(), stats.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(n_iter - 1);
        const std::size_t idx = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(idx);
        if (idx + 1 >= stats.size()) return stats.back();
        return stats[idx] * (1.0 - frac) + stats[idx + 1] * frac;
    };
    ci.lo95 = quantile(0.025);
    ci.hi95 = quantile(0.975);
    return ci;
}

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("rmse: dims must match");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

inline double rmse(const ImageGrid& a, const ImageGrid& b) {
    if (a.side != b.side) throw std::invalid_argument("rmse: dims must match");
    return rmse(a.data, b.data);
}

}  // namespace sino::metrics
