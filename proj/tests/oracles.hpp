#pragma once

// Independent reference implementations used to check the library. These are
// deliberately written as straight-line code with their own conventions (no
// shared helpers with the library beyond basic containers).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "tome/autograd.hpp"
#include "tome/mat.hpp"

namespace oracle {

// Selection-sort top-k over scores: k rounds, each picking the best remaining
// (higher score, then lower index).
inline std::vector<std::size_t> topk_scan(const std::vector<float>& scores, int k) {
    std::vector<bool> used(scores.size(), false);
    std::vector<std::size_t> out;
    const int rounds = std::min<int>(k, static_cast<int>(scores.size()));
    for (int r = 0; r < rounds; ++r) {
        std::size_t best = scores.size();
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (used[i]) continue;
            if (best == scores.size() || scores[i] > scores[best]) best = i;
        }
        used[best] = true;
        out.push_back(best);
    }
    return out;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double sum = 0.0;
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i] - mx);
        sum += y[i];
    }
    for (double& v : y) v /= sum;
    return y;
}

// Eqs. 6-9 in one straight line: query from the span representation, softmax
// attention over the given keys, value aggregation, W_U projection, residual
// into layer norm at the start position.
struct MemoryAttentionFixture {
    std::vector<double> h_start, h_end;          // d
    tome::Mat<double> query_w;                   // d_K x 2d
    std::vector<double> query_b;                 // d_K
    tome::Mat<double> keys;                      // R x d_K
    tome::Mat<double> values;                    // R x d_V
    tome::Mat<double> w_u;                       // d x d_V
    std::vector<double> ln_gain, ln_bias;        // d
    double eps = 1e-6;
};

inline std::vector<double> memory_attention_row(const MemoryAttentionFixture& f) {
    const int d = static_cast<int>(f.h_start.size());
    const int d_k = f.query_w.rows;
    std::vector<double> cat(f.h_start);
    cat.insert(cat.end(), f.h_end.begin(), f.h_end.end());
    std::vector<double> q(d_k, 0.0);
    for (int i = 0; i < d_k; ++i) {
        q[i] = f.query_b[i];
        for (int j = 0; j < 2 * d; ++j) q[i] += f.query_w.at(i, j) * cat[j];
    }
    std::vector<double> scores(f.keys.rows, 0.0);
    for (int r = 0; r < f.keys.rows; ++r)
        for (int j = 0; j < d_k; ++j) scores[r] += q[j] * f.keys.at(r, j);
    std::vector<double> alpha = softmax(scores);
    std::vector<double> value(f.values.cols, 0.0);
    for (int r = 0; r < f.values.rows; ++r)
        for (int j = 0; j < f.values.cols; ++j) value[j] += alpha[r] * f.values.at(r, j);
    std::vector<double> x(f.h_start);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < f.w_u.cols; ++j) x[i] += f.w_u.at(i, j) * value[j];
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= d;
    std::vector<double> out(d);
    for (int i = 0; i < d; ++i)
        out[i] = f.ln_gain[i] * (x[i] - mean) / std::sqrt(var + f.eps) + f.ln_bias[i];
    return out;
}

// Softmax-then-group-sum EntProb over (score, entity) pairs.
inline std::map<std::uint32_t, double> entprob(const std::vector<double>& scores,
                                               const std::vector<std::uint32_t>& entities) {
    std::vector<double> w = softmax(scores);
    std::map<std::uint32_t, double> out;
    for (std::size_t i = 0; i < w.size(); ++i) out[entities[i]] += w[i];
    return out;
}

// Naive double-loop in-batch coreference loss. No log-sum-exp shifts; only
// meant for fixtures with moderate score magnitudes.
inline double coref_loss(const tome::Mat<double>& z, const std::vector<std::uint32_t>& entities,
                         const std::vector<std::uint32_t>& samples, bool formula_variant,
                         std::size_t* contributing_out = nullptr) {
    const int n = z.rows;
    auto score = [&](int a, int b) {
        double acc = 0.0;
        for (int c = 0; c < z.cols; ++c) acc += z.at(a, c) * z.at(b, c);
        return acc;
    };
    double total = 0.0;
    std::size_t contributing = 0;
    for (int m = 0; m < n; ++m) {
        std::vector<int> pos, neg;
        for (int o = 0; o < n; ++o) {
            if (samples[o] == samples[m]) continue;
            if (entities[o] == entities[m])
                pos.push_back(o);
            else
                neg.push_back(o);
        }
        if (pos.empty()) continue;
        ++contributing;
        double neg_sum = 0.0;
        for (int o : neg) neg_sum += std::exp(score(m, o));
        if (!formula_variant) {
            double lm = 0.0;
            for (int p : pos) {
                double ep = std::exp(score(m, p));
                lm += -std::log(ep / (ep + neg_sum));
            }
            total += lm / pos.size();
        } else {
            double r = 0.0;
            for (int p : pos) {
                double ep = std::exp(score(m, p));
                r += ep / (ep + neg_sum);
            }
            total += -std::log(r) / pos.size();
        }
    }
    if (contributing_out) *contributing_out = contributing;
    return contributing ? total / contributing : 0.0;
}

// Mean -log EntProb(gold) over eligible mentions, from raw (scores, entities)
// candidate lists per mention.
inline double entity_prediction_loss(const std::vector<std::vector<double>>& scores,
                                     const std::vector<std::vector<std::uint32_t>>& entities,
                                     const std::vector<std::uint32_t>& gold,
                                     std::size_t* eligible_out = nullptr) {
    double total = 0.0;
    std::size_t eligible = 0;
    for (std::size_t m = 0; m < scores.size(); ++m) {
        if (scores[m].empty()) continue;
        auto dist = entprob(scores[m], entities[m]);
        auto it = dist.find(gold[m]);
        if (it == dist.end() || it->second <= 0.0) continue;
        ++eligible;
        total += -std::log(it->second);
    }
    if (eligible_out) *eligible_out = eligible;
    return eligible ? total / eligible : 0.0;
}

// Quadratic greedy clustering: recompute the union entity set and every
// Jaccard score from scratch at each step.
struct ArticleFixture {
    std::uint32_t id;
    std::size_t passages;
    std::set<std::uint32_t> entities;
};

inline std::vector<std::vector<std::uint32_t>> greedy_clusters(std::vector<ArticleFixture> articles,
                                                               std::size_t target_passages) {
    std::vector<std::vector<std::uint32_t>> clusters;
    std::vector<bool> used(articles.size(), false);
    std::size_t remaining = articles.size();
    while (remaining > 0) {
        // Seed: most passages, ties to lowest id.
        std::size_t seed = articles.size();
        for (std::size_t i = 0; i < articles.size(); ++i) {
            if (used[i]) continue;
            if (seed == articles.size() || articles[i].passages > articles[seed].passages ||
                (articles[i].passages == articles[seed].passages && articles[i].id < articles[seed].id))
                seed = i;
        }
        used[seed] = true;
        --remaining;
        std::vector<std::uint32_t> cluster = {articles[seed].id};
        std::set<std::uint32_t> pool = articles[seed].entities;
        std::size_t passages = articles[seed].passages;
        while (passages < target_passages && remaining > 0) {
            std::size_t best = articles.size();
            double best_j = -1.0;
            for (std::size_t i = 0; i < articles.size(); ++i) {
                if (used[i]) continue;
                std::vector<std::uint32_t> inter;
                std::set_intersection(pool.begin(), pool.end(), articles[i].entities.begin(),
                                      articles[i].entities.end(), std::back_inserter(inter));
                std::vector<std::uint32_t> uni;
                std::set_union(pool.begin(), pool.end(), articles[i].entities.begin(),
                               articles[i].entities.end(), std::back_inserter(uni));
                double j = uni.empty() ? 0.0 : static_cast<double>(inter.size()) / uni.size();
                if (j > best_j || (j == best_j && (best == articles.size() || articles[i].id < articles[best].id))) {
                    best_j = j;
                    best = i;
                }
            }
            used[best] = true;
            --remaining;
            cluster.push_back(articles[best].id);
            pool.insert(articles[best].entities.begin(), articles[best].entities.end());
            passages += articles[best].passages;
        }
        clusters.push_back(std::move(cluster));
    }
    return clusters;
}

// Central-difference gradient check. build must construct the loss from leaf
// ids in a fresh tape; it is re-run for every probe. Relative error uses
// max(|analytic|, |numeric|, 1e-4) as the denominator.
struct FdReport {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::size_t checked = 0;
};

template <typename Build>
FdReport fd_check(std::vector<tome::Mat<double>> tensors, Build&& build, double step = 1e-4,
                  int max_coords_per_tensor = 24, std::uint64_t seed = 17) {
    tome::Tape<double> tape;
    std::vector<int> ids;
    for (auto& t : tensors) ids.push_back(tape.leaf(t, true));
    int loss = build(tape, ids);
    tape.backward(loss);
    std::vector<tome::Mat<double>> analytic;
    analytic.reserve(ids.size());
    for (int id : ids) analytic.push_back(tape.grad(id));

    auto eval = [&](const std::vector<tome::Mat<double>>& ts) {
        tome::Tape<double> t2;
        std::vector<int> ids2;
        for (const auto& t : ts) ids2.push_back(t2.leaf(t, false));
        return static_cast<double>(t2.value(build(t2, ids2)).at(0, 0));
    };

    tome::Rng rng(seed);
    FdReport rep;
    for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
        std::vector<std::size_t> coords(tensors[ti].a.size());
        for (std::size_t c = 0; c < coords.size(); ++c) coords[c] = c;
        if (static_cast<int>(coords.size()) > max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(max_coords_per_tensor);
        }
        for (std::size_t c : coords) {
            const double saved = tensors[ti].a[c];
            tensors[ti].a[c] = saved + step;
            const double lp = eval(tensors);
            tensors[ti].a[c] = saved - step;
            const double lm = eval(tensors);
            tensors[ti].a[c] = saved;
            const double fd = (lp - lm) / (2.0 * step);
            const double an = analytic[ti].a[c];
            const double abs_err = std::abs(fd - an);
            const double rel = abs_err / std::max({std::abs(fd), std::abs(an), 1e-4});
            rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
            rep.max_rel_err = std::max(rep.max_rel_err, rel);
            ++rep.checked;
        }
    }
    return rep;
}

}  // namespace oracle
