#pragma once

#include <limits>
#include <list>
#include <unordered_map>
#include <vector>

#include "peep/common.hpp"

namespace peep {

// Soft-margin binary SVM with a Gaussian kernel, trained by sequential
// pairwise optimization of the dual:
//
//   min 1/2 a^T Q a - e^T a   s.t. 0 <= a_i <= C, y^T a = 0,
//   Q_ij = y_i y_j k(x_i, x_j),  k(a,b) = exp(-gamma ||a-b||^2)
//
// Working pairs come from second-order selection on the maximal violating
// pair; bounded variables that sit firmly at their bounds are shrunk out of
// the selection and reactivated before convergence is declared. Everything is
// deterministic: ties break on the lowest index.

struct SvmParams {
    double c = 1.0;
    double gamma = 1.0;
    double tol = 1e-3;
    long max_iter = 100000;
    std::size_t cache_bytes = std::size_t{256} << 20;
};

struct BinarySvmModel {
    Mat support;                    // support vectors, row-major
    std::vector<double> dual_coef;  // alpha_i * y_i, in [-C, C]
    double bias = 0.0;
    double gamma = 0.0;
    double c = 0.0;
    bool converged = false;
    long iterations = 0;
    double kkt_violation = 0.0;

    double decision(const double* x, std::size_t dim) const {
        double acc = 0.0;
        for (std::size_t s = 0; s < support.rows; ++s) {
            const double* sv = support.row(s);
            double d2 = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = sv[k] - x[k];
                d2 += d * d;
            }
            acc += dual_coef[s] * std::exp(-gamma * d2);
        }
        return acc + bias;
    }
};

namespace detail {

/// LRU cache of kernel rows, bounded by bytes.
class KernelCache {
public:
    KernelCache(const Mat& x, double gamma, std::size_t max_bytes)
        : x_(x), gamma_(gamma) {
        const std::size_t row_bytes = x.rows * sizeof(double);
        max_rows_ = std::max<std::size_t>(2, row_bytes ? max_bytes / row_bytes : x.rows);
        diag_.resize(x.rows, 1.0);  // k(x, x) = 1 for the Gaussian kernel
    }

    const std::vector<double>& row(std::size_t i) {
        auto it = index_.find(i);
        if (it != index_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second.second);
            return it->second.first;
        }
        if (index_.size() >= max_rows_) {
            index_.erase(lru_.back());
            lru_.pop_back();
        }
        lru_.push_front(i);
        auto& slot = index_[i];
        slot.second = lru_.begin();
        slot.first.resize(x_.rows);
        const double* xi = x_.row(i);
        for (std::size_t j = 0; j < x_.rows; ++j) {
            const double* xj = x_.row(j);
            double d2 = 0.0;
            for (std::size_t k = 0; k < x_.cols; ++k) {
                const double d = xi[k] - xj[k];
                d2 += d * d;
            }
            slot.first[j] = std::exp(-gamma_ * d2);
        }
        return slot.first;
    }

    double diag(std::size_t i) const { return diag_[i]; }

private:
    const Mat& x_;
    double gamma_;
    std::size_t max_rows_;
    std::vector<double> diag_;
    std::list<std::size_t> lru_;
    std::unordered_map<std::size_t, std::pair<std::vector<double>, std::list<std::size_t>::iterator>>
        index_;
};

}  // namespace detail

inline BinarySvmModel train_binary_svm(const Mat& x, const std::vector<double>& y,
                                       const SvmParams& p) {
    const std::size_t n = x.rows;
    if (n == 0 || y.size() != n) throw ValidationError("svm: labels do not match rows");
    bool has_pos = false, has_neg = false;
    for (double v : y) {
        if (v == 1.0) has_pos = true;
        else if (v == -1.0) has_neg = true;
        else throw ValidationError("svm: labels must be +1/-1");
    }
    if (!has_pos || !has_neg) throw ValidationError("svm: need at least one example of each sign");
    for (double v : x.v)
        if (!std::isfinite(v)) throw ValidationError("svm: non-finite feature value");
    if (p.c <= 0.0 || p.gamma <= 0.0) throw ValidationError("svm: C and gamma must be positive");

    const double C = p.c;
    const double tau = 1e-12;
    detail::KernelCache cache(x, p.gamma, p.cache_bytes);

    std::vector<double> alpha(n, 0.0);
    std::vector<double> grad(n, -1.0);
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), std::size_t{0});
    bool unshrunk = false;

    auto is_upper = [&](std::size_t t) { return y[t] > 0 ? alpha[t] >= C : alpha[t] <= 0.0; };
    auto is_lower = [&](std::size_t t) { return y[t] > 0 ? alpha[t] <= 0.0 : alpha[t] >= C; };

    auto reconstruct_gradient = [&]() {
        // recompute stale entries from scratch over the support set
        std::vector<char> in_active(n, 0);
        for (auto t : active) in_active[t] = 1;
        for (std::size_t t = 0; t < n; ++t) {
            if (in_active[t]) continue;
            grad[t] = -1.0;
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (alpha[j] <= 0.0) continue;
            const auto& kj = cache.row(j);
            for (std::size_t t = 0; t < n; ++t) {
                if (in_active[t]) continue;
                grad[t] += alpha[j] * y[t] * y[j] * kj[t];
            }
        }
    };

    long iter = 0;
    const long shrink_period = static_cast<long>(std::min<std::size_t>(n, 1000));
    long since_shrink = 0;
    double last_violation = std::numeric_limits<double>::infinity();
    BinarySvmModel model;
    model.gamma = p.gamma;
    model.c = C;

    while (iter < p.max_iter) {
        // working pair on the active set
        double g_max = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t i = -1;
        for (auto t : active) {
            if (is_upper(t)) continue;
            const double v = -y[t] * grad[t];
            if (v > g_max) {
                g_max = v;
                i = static_cast<std::ptrdiff_t>(t);
            }
        }
        double g_min = std::numeric_limits<double>::infinity();
        std::ptrdiff_t j = -1;
        const std::vector<double>* ki = i >= 0 ? &cache.row(static_cast<std::size_t>(i)) : nullptr;
        double obj_best = std::numeric_limits<double>::infinity();
        for (auto t : active) {
            if (is_lower(t)) continue;
            const double v = -y[t] * grad[t];
            g_min = std::min(g_min, v);
            if (i < 0) continue;
            const double b = g_max - v;
            if (b > 0.0) {
                const double a = std::max(
                    cache.diag(static_cast<std::size_t>(i)) + cache.diag(t) - 2.0 * (*ki)[t],
                    tau);
                const double obj = -(b * b) / a;
                if (obj < obj_best) {
                    obj_best = obj;
                    j = static_cast<std::ptrdiff_t>(t);
                }
            }
        }

        const double violation = g_max - g_min;
        if (i < 0 || j < 0 || violation < p.tol) {
            if (active.size() == n) {
                model.converged = i < 0 || j < 0 || violation < p.tol;
                last_violation = std::max(violation, 0.0);
                break;
            }
            // converged on the shrunk set: bring everyone back and recheck
            reconstruct_gradient();
            active.resize(n);
            std::iota(active.begin(), active.end(), std::size_t{0});
            unshrunk = true;
            since_shrink = 0;
            continue;
        }
        last_violation = violation;

        const auto ii = static_cast<std::size_t>(i);
        const auto jj = static_cast<std::size_t>(j);
        const auto& kj = cache.row(jj);
        const auto& kirow = *ki;

        const double old_ai = alpha[ii], old_aj = alpha[jj];
        const double quad =
            std::max(cache.diag(ii) + cache.diag(jj) - 2.0 * kirow[jj], tau);
        if (y[ii] != y[jj]) {
            const double delta = (-grad[ii] - grad[jj]) / quad;
            const double diff = alpha[ii] - alpha[jj];
            alpha[ii] += delta;
            alpha[jj] += delta;
            if (diff > 0.0) {
                if (alpha[jj] < 0.0) { alpha[jj] = 0.0; alpha[ii] = diff; }
            } else {
                if (alpha[ii] < 0.0) { alpha[ii] = 0.0; alpha[jj] = -diff; }
            }
            if (diff > 0.0) {
                if (alpha[ii] > C) { alpha[ii] = C; alpha[jj] = C - diff; }
            } else {
                if (alpha[jj] > C) { alpha[jj] = C; alpha[ii] = C + diff; }
            }
        } else {
            const double delta = (grad[ii] - grad[jj]) / quad;
            const double sum = alpha[ii] + alpha[jj];
            alpha[ii] -= delta;
            alpha[jj] += delta;
            if (sum > C) {
                if (alpha[ii] > C) { alpha[ii] = C; alpha[jj] = sum - C; }
            } else {
                if (alpha[jj] < 0.0) { alpha[jj] = 0.0; alpha[ii] = sum; }
            }
            if (sum > C) {
                if (alpha[jj] > C) { alpha[jj] = C; alpha[ii] = sum - C; }
            } else {
                if (alpha[ii] < 0.0) { alpha[ii] = 0.0; alpha[jj] = sum; }
            }
        }

        const double dai = alpha[ii] - old_ai;
        const double daj = alpha[jj] - old_aj;
        for (auto t : active)
            grad[t] += y[t] * (y[ii] * dai * kirow[t] + y[jj] * daj * kj[t]);

        ++iter;
        ++since_shrink;
        if (!unshrunk && since_shrink >= shrink_period && active.size() > 2) {
            // drop bounded variables that are beyond both violation margins
            std::vector<std::size_t> kept;
            kept.reserve(active.size());
            for (auto t : active) {
                const double v = -y[t] * grad[t];
                const bool shrinkable = (is_upper(t) && v > g_max) || (is_lower(t) && v < g_min);
                if (!shrinkable || (!is_upper(t) && !is_lower(t)))
                    kept.push_back(t);
            }
            if (kept.size() >= 2 && kept.size() < active.size()) active = std::move(kept);
            since_shrink = 0;
        }
    }
    model.iterations = iter;
    model.kkt_violation = last_violation;
    if (iter >= p.max_iter) {
        if (active.size() < n) reconstruct_gradient();
        model.converged = false;
    }

    // bias from free vectors, else midpoint of the violation interval
    double bias_acc = 0.0;
    std::size_t n_free = 0;
    double up = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
        const double v = -y[t] * grad[t];
        if (alpha[t] > 0.0 && alpha[t] < C) {
            bias_acc += v;
            ++n_free;
        }
        if (!is_upper(t)) up = std::max(up, v);
        if (!is_lower(t)) lo = std::min(lo, v);
    }
    model.bias = n_free ? bias_acc / static_cast<double>(n_free) : (up + lo) / 2.0;

    std::size_t n_sv = 0;
    for (std::size_t t = 0; t < n; ++t)
        if (alpha[t] > 0.0) ++n_sv;
    model.support = Mat(n_sv, x.cols);
    model.dual_coef.reserve(n_sv);
    std::size_t s = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] <= 0.0) continue;
        std::copy(x.row(t), x.row(t) + x.cols, model.support.row(s));
        model.dual_coef.push_back(alpha[t] * y[t]);
        ++s;
    }
    return model;
}

}  // namespace peep
