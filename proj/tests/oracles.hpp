#pragma once

// Test-side reference implementations. Each one is deliberately naive and
// shares no code with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "mmattack/centroids.hpp"
#include "mmattack/dataset.hpp"
#include "mmattack/embedder.hpp"
#include "mmattack/evo.hpp"
#include "mmattack/metrics.hpp"

namespace oracle {

using mmattack::Matrix;
using mmattack::Vector;

inline Matrix two_pass_covariance(const std::vector<Vector>& xs) {
    const std::size_t n = xs.size(), d = xs[0].size();
    Vector mean(d, 0.0);
    for (const auto& x : xs)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x[j];
    for (auto& m : mean) m /= static_cast<double>(n);
    Matrix s(d, d);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
            double acc = 0.0;
            for (const auto& x : xs) acc += (x[a] - mean[a]) * (x[b] - mean[b]);
            s(a, b) = acc / static_cast<double>(n - 1);
        }
    return s;
}

inline double quad_form(const Vector& x, const Vector& y, const Matrix& m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) acc += (x[i] - y[i]) * m(i, j) * (x[j] - y[j]);
    return acc;
}

// Position (0-based) of each gallery item in the ranked list of query q, by repeated selection.
inline std::vector<std::size_t> ranked_gallery(const mmattack::DistanceMatrix& dm, std::size_t q) {
    const std::size_t g = dm.distances.cols();
    std::vector<bool> used(g, false);
    std::vector<std::size_t> order;
    for (std::size_t r = 0; r < g; ++r) {
        std::size_t best = g;
        for (std::size_t j = 0; j < g; ++j) {
            if (used[j]) continue;
            if (best == g || dm.distances(q, j) < dm.distances(q, best)) best = j;
        }
        used[best] = true;
        order.push_back(best);
    }
    return order;
}

inline double cmc(const mmattack::DistanceMatrix& dm, std::size_t k) {
    double hits = 0.0;
    for (std::size_t q = 0; q < dm.distances.rows(); ++q) {
        const auto order = ranked_gallery(dm, q);
        for (std::size_t r = 0; r < std::min(k, order.size()); ++r)
            if (dm.gallery_labels[order[r]] == dm.query_labels[q]) {
                hits += 1.0;
                break;
            }
    }
    return hits / static_cast<double>(dm.distances.rows());
}

inline double average_precision(const mmattack::DistanceMatrix& dm, std::size_t q) {
    const auto order = ranked_gallery(dm, q);
    double sum = 0.0;
    std::size_t relevant = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (dm.gallery_labels[order[r]] != dm.query_labels[q]) continue;
        ++relevant;
        sum += static_cast<double>(relevant) / static_cast<double>(r + 1);
    }
    return sum / static_cast<double>(relevant);
}

inline double mean_ap(const mmattack::DistanceMatrix& dm) {
    double s = 0.0;
    for (std::size_t q = 0; q < dm.distances.rows(); ++q) s += average_precision(dm, q);
    return s / static_cast<double>(dm.distances.rows());
}

inline bool dominates(const mmattack::ObjectiveVector& a, const mmattack::ObjectiveVector& b) {
    const double sa = 1.0 - a.s_tilde, sb = 1.0 - b.s_tilde;
    if (sa > sb) return true;
    if (sa < sb) return false;
    if (sa > 0.0) return a.eta_l2 < b.eta_l2;
    return a.d_tilde < b.d_tilde;
}

// O(n^3) peeling: each round scans every pair among the remaining individuals.
inline std::vector<std::vector<std::size_t>> peel_fronts(const std::vector<mmattack::ObjectiveVector>& pop) {
    std::set<std::size_t> remaining;
    for (std::size_t i = 0; i < pop.size(); ++i) remaining.insert(i);
    std::vector<std::vector<std::size_t>> fronts;
    while (!remaining.empty()) {
        std::vector<std::size_t> front;
        for (auto i : remaining) {
            bool dominated = false;
            for (auto j : remaining)
                if (j != i && oracle::dominates(pop[j], pop[i])) dominated = true;
            if (!dominated) front.push_back(i);
        }
        for (auto i : front) remaining.erase(i);
        fronts.push_back(front);
    }
    return fronts;
}

// Three-layer formula written out element by element.
inline Vector forward(const mmattack::ModalityModel& m, const mmattack::ImageTensor& img) {
    const std::size_t in = img.size();
    Vector hidden(m.d_hidden);
    for (std::size_t h = 0; h < m.d_hidden; ++h) {
        double z = m.b1[h];
        for (std::size_t i = 0; i < in; ++i) z += m.w1(h, i) * (img[i] / 255.0);
        hidden[h] = m.activation == mmattack::Activation::tanh ? std::tanh(z) : z;
    }
    Vector out(m.d_feat);
    for (std::size_t f = 0; f < m.d_feat; ++f) {
        double z = m.b2[f];
        for (std::size_t h = 0; h < m.d_hidden; ++h) z += m.w2(f, h) * hidden[h];
        out[f] = z;
    }
    return out;
}

inline std::size_t nearest_gallery(const Vector& f, const std::vector<Vector>& gallery) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gallery.size(); ++g) {
        double d = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) d += (f[i] - gallery[g][i]) * (f[i] - gallery[g][i]);
        if (d < best_d) {
            best_d = d;
            best = g;
        }
    }
    return best;
}

struct ObjectiveOracle {
    double total_loss;
    double d_tilde;
    double s_tilde;
    double eta_l2;
};

// Straight-line recomputation of the evolutionary objective vector.
inline ObjectiveOracle objectives(const mmattack::SparseIndividual& eta, const mmattack::UniversalPerturbation& delta,
                                  const std::vector<mmattack::EvoTarget>& targets) {
    const auto shape = delta.delta.shape();
    std::vector<double> combined(delta.delta.raw());
    std::size_t nonzero = 0;
    for (const auto& g : eta.genes) {
        if (g.value == 0) continue;
        ++nonzero;
        combined[shape.index(g.h, g.w, g.c)] += eta.step_scale * g.value;
    }
    for (auto& v : combined) v = std::max(-delta.epsilon, std::min(delta.epsilon, v));

    double total = 0.0, succ = 0.0;
    for (const auto& t : targets) {
        double loss = 0.0;
        std::size_t wrong = 0;
        for (std::size_t j = 0; j < t.images.size(); ++j) {
            mmattack::ImageTensor adv = *t.images[j];
            for (std::size_t i = 0; i < adv.size(); ++i) adv[i] = std::max(0.0, std::min(255.0, adv[i] + combined[i]));
            const Vector f = oracle::forward(*t.model, adv);
            const Vector clean = oracle::forward(*t.model, *t.images[j]);
            // home centroid: nearest to the clean feature, lowest index on ties
            std::size_t home = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < t.bank->centroids.size(); ++c) {
                const double d = quad_form(t.bank->centroids[c], clean, t.bank->s_inv);
                if (d < best) {
                    best = d;
                    home = c;
                }
            }
            loss += quad_form(f, t.bank->centroids[home], t.bank->s_inv);
            if (t.gallery_labels[nearest_gallery(f, t.gallery_features)] != t.labels[j]) ++wrong;
        }
        total += loss / static_cast<double>(t.images.size());
        if (static_cast<double>(wrong) > 0.5 * static_cast<double>(t.images.size())) succ += 1.0;
    }
    const double s_tilde = 1.0 - succ / static_cast<double>(targets.size());
    return {total, std::exp(-total), s_tilde, eta.step_scale * std::sqrt(static_cast<double>(nonzero))};
}

// Central difference of a scalar function along coordinate i.
inline double central_difference(const std::function<double(const Vector&)>& fn, Vector x, std::size_t i, double h) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = fn(x);
    x[i] = x0 - h;
    const double down = fn(x);
    return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
