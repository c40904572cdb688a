#include "actlearn/lwr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "actlearn/kernels.hpp"

namespace actlearn::lwr {

namespace {

constexpr double kTinyWeight = 1e-12;    // below this total weight a fit is empty
constexpr double kEigRatio = 1e-10;      // relative eigenvalue cutoff for degeneracy
constexpr double kCondRel = 1e-12;       // conditional variance below this fraction
                                         // of the marginal is treated as zero

double kernel_one(double k, double sq_dist) {
    double out;
    kernels::active().exp_neg_scale(&sq_dist, 1, k, &out);
    return out;
}

double sq_norm(const Vec& a, const Vec& b) { return (a - b).squaredNorm(); }

// degenerate local fit: under two effective points, or near-singular input
// spread (collinear or effectively single-point neighbourhoods)
bool spread_degenerate(double n, const Mat& cov_x) {
    if (n < 2.0) return true;
    const double tr = cov_x.trace();
    if (!(tr > 0.0)) return true;
    if (cov_x.rows() == 1) return cov_x(0, 0) < kEigRatio * tr;
    if (cov_x.rows() == 2) {
        // smallest eigenvalue of a symmetric 2x2, in closed form
        const double half_tr = 0.5 * tr;
        const double det = cov_x(0, 0) * cov_x(1, 1) - cov_x(0, 1) * cov_x(1, 0);
        const double disc = std::sqrt(std::max(0.0, half_tr * half_tr - det));
        return (half_tr - disc) < kEigRatio * tr;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(cov_x);
    return es.eigenvalues().minCoeff() < kEigRatio * tr;
}

// sum h^2 (x - mu)(x - mu)^T reconstructed from the raw cached sums
Mat centered_sq_sum(const LocalFit& f, const Vec& mu) {
    return f.s2xx - f.s2x * mu.transpose() - mu * f.s2x.transpose() +
           f.s2 * (mu * mu.transpose());
}

} // namespace

LwrState::LwrState(Dataset data, double k) : data_(std::move(data)), k_(k) {
    if (!(k > 0.0)) throw ConfigError("smoothing parameter k must be > 0");
    x_cols_.assign(static_cast<std::size_t>(data_.d_x()), {});
    y_cols_.assign(static_cast<std::size_t>(data_.d_y()), {});
    for (auto& c : x_cols_) c.reserve(static_cast<std::size_t>(data_.m()));
    for (auto& c : y_cols_) c.reserve(static_cast<std::size_t>(data_.m()));
    for (int i = 0; i < data_.m(); ++i) {
        for (int d = 0; d < data_.d_x(); ++d)
            x_cols_[static_cast<std::size_t>(d)].push_back(data_[i].input[d]);
        for (int t = 0; t < data_.d_y(); ++t)
            y_cols_[static_cast<std::size_t>(t)].push_back(data_[i].output[t]);
    }
    refresh_global_stats();
}

void LwrState::refresh_global_stats() {
    const int dy = data_.d_y();
    const int m = data_.m();
    global_y_mean_ = Vec::Zero(dy);
    global_y_var_ = Vec::Zero(dy);
    if (m == 0) return;
    for (int t = 0; t < dy; ++t) {
        double mean = 0.0;
        for (double v : y_cols_[static_cast<std::size_t>(t)]) mean += v;
        mean /= m;
        double var = 0.0;
        for (double v : y_cols_[static_cast<std::size_t>(t)]) var += (v - mean) * (v - mean);
        global_y_mean_[t] = mean;
        global_y_var_[t] = var / m;
    }
}

LwrState LwrState::with_k(double k) const {
    LwrState out = *this;
    if (!(k > 0.0)) throw ConfigError("smoothing parameter k must be > 0");
    out.k_ = k;
    return out;
}

LwrState add_sample(const LwrState& state, const Sample& sample) {
    LwrState out = state;
    out.data_.add(sample); // validates dimensions / finiteness
    for (int d = 0; d < out.data_.d_x(); ++d)
        out.x_cols_[static_cast<std::size_t>(d)].push_back(sample.input[d]);
    for (int t = 0; t < out.data_.d_y(); ++t)
        out.y_cols_[static_cast<std::size_t>(t)].push_back(sample.output[t]);
    out.refresh_global_stats();
    return out;
}

namespace {

// moments from the weight vector already stored in fit.weights; reuses the
// fit's buffers so repeated calls stay allocation-free
void local_fit_moments(LocalFit& fit, const LwrState& state, const Vec& center) {
    const auto& kb = kernels::active();
    const int dx = state.d_x();
    const int dy = state.d_y();
    const std::size_t m = fit.weights.size();

    fit.center = center;
    const double* w = fit.weights.data();
    fit.n = kb.sum(w, m);
    fit.mu_x = Vec::Zero(dx);
    fit.mu_y = Vec::Zero(dy);
    fit.cov_x = Mat::Zero(dx, dx);
    fit.cov_xy = Mat::Zero(dx, dy);
    fit.cov_y = Mat::Zero(dy, dy);
    fit.s2x = Vec::Zero(dx);
    fit.s2xx = Mat::Zero(dx, dx);
    fit.s2 = kb.sum_sq(w, m);
    fit.empty = fit.n < kTinyWeight;
    if (fit.empty) return;

    for (int d = 0; d < dx; ++d) fit.mu_x[d] = kb.dot(w, state.x_col(d).data(), m) / fit.n;
    for (int t = 0; t < dy; ++t) fit.mu_y[t] = kb.dot(w, state.y_col(t).data(), m) / fit.n;

    for (int a = 0; a < dx; ++a) {
        for (int b = a; b < dx; ++b) {
            const double v = kb.centered_dot(w, state.x_col(a).data(), fit.mu_x[a],
                                             state.x_col(b).data(), fit.mu_x[b], m) /
                             fit.n;
            fit.cov_x(a, b) = v;
            fit.cov_x(b, a) = v;
        }
        for (int t = 0; t < dy; ++t) {
            fit.cov_xy(a, t) = kb.centered_dot(w, state.x_col(a).data(), fit.mu_x[a],
                                               state.y_col(t).data(), fit.mu_y[t], m) /
                               fit.n;
        }
        fit.s2x[a] = kb.dot_sq(w, state.x_col(a).data(), m);
        for (int b = a; b < dx; ++b) {
            const double v = kb.dot_sq2(w, state.x_col(a).data(), state.x_col(b).data(), m);
            fit.s2xx(a, b) = v;
            fit.s2xx(b, a) = v;
        }
    }
    for (int s = 0; s < dy; ++s) {
        for (int t = s; t < dy; ++t) {
            const double v = kb.centered_dot(w, state.y_col(s).data(), fit.mu_y[s],
                                             state.y_col(t).data(), fit.mu_y[t], m) /
                             fit.n;
            fit.cov_y(s, t) = v;
            fit.cov_y(t, s) = v;
        }
    }
}

void compute_weights(const LwrState& state, const Vec& x, int skip,
                     std::vector<double>& out) {
    const auto& kb = kernels::active();
    const std::size_t m = static_cast<std::size_t>(state.m());
    thread_local std::vector<double> sq;
    sq.resize(m);
    for (int d = 0; d < state.d_x(); ++d) {
        if (d == 0) {
            kb.sq_dist(state.x_col(d).data(), m, x[d], sq.data());
        } else {
            kb.sq_dist_acc(state.x_col(d).data(), m, x[d], sq.data());
        }
    }
    out.resize(m);
    kb.exp_neg_scale(sq.data(), m, state.k(), out.data());
    if (skip >= 0 && skip < state.m()) out[static_cast<std::size_t>(skip)] = 0.0;
}

} // namespace

LocalFit kernel_weights(const LwrState& state, const Vec& x, int skip) {
    if (state.m() < 1) throw PreconditionError("kernel_weights requires at least one sample");
    if (x.size() != state.d_x()) throw DataError("kernel_weights: input dimension mismatch");
    LocalFit fit;
    compute_weights(state, x, skip, fit.weights);
    local_fit_moments(fit, state, x);
    return fit;
}

PredictiveDistribution predict(const LwrState& state, const LocalFit& fit) {
    const int dy = state.d_y();
    PredictiveDistribution out;

    if (fit.empty) {
        // no local information at all: report the global sample statistics
        out.mean = state.global_y_mean();
        out.cond_cov = state.global_y_var().asDiagonal();
        out.learner_variance = state.global_y_var().sum();
        return out;
    }

    Eigen::LLT<Mat> llt;
    const bool degenerate = spread_degenerate(fit.n, fit.cov_x);
    if (!degenerate) llt.compute(fit.cov_x);
    if (degenerate || llt.info() != Eigen::Success) {
        // weighted-mean fallback: no usable local slope
        out.mean = fit.mu_y;
        out.cond_cov = fit.cov_y;
        out.learner_variance = fit.cov_y.trace() * fit.s2 / (fit.n * fit.n);
        return out;
    }
    const Vec centered = fit.center - fit.mu_x;
    const Vec u = llt.solve(centered);
    const Mat b = llt.solve(fit.cov_xy); // d_x x d_y
    out.mean = fit.mu_y + fit.cov_xy.transpose() * u;
    out.cond_cov = fit.cov_y - fit.cov_xy.transpose() * b;

    const double quad = u.dot(centered_sq_sum(fit, fit.mu_x) * u);
    double lv = 0.0;
    for (int t = 0; t < dy; ++t) {
        double cond = out.cond_cov(t, t);
        if (cond < kCondRel * std::max(fit.cov_y(t, t), 0.0)) cond = 0.0;
        lv += cond * (fit.s2 + quad);
    }
    lv /= fit.n * fit.n;
    // a prediction is never more uncertain than knowing nothing at all;
    // this also bounds the blow-ups of barely supported fits
    const double ceiling = state.global_y_var().sum();
    if (!std::isfinite(lv)) lv = ceiling;
    out.learner_variance = std::clamp(lv, 0.0, ceiling);
    return out;
}

PredictiveDistribution predict(const LwrState& state, const Vec& x) {
    if (state.m() < 1) throw PreconditionError("predict requires at least one sample");
    return predict(state, kernel_weights(state, x));
}

namespace {

std::vector<double> log_grid(double mean_sq, int points) {
    if (points < 2) throw ConfigError("bandwidth grid needs at least two points");
    const double lo = 1e-2 / mean_sq;
    const double hi = 1e4 / mean_sq;
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        grid[static_cast<std::size_t>(i)] =
            lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
    }
    return grid;
}

} // namespace

std::vector<double> default_bandwidth_grid(const Dataset& data, int points) {
    double mean_sq = 1.0;
    if (data.m() >= 2) {
        double acc = 0.0;
        long pairs = 0;
        for (int i = 0; i < data.m(); ++i) {
            for (int j = i + 1; j < data.m(); ++j) {
                acc += (data[i].input - data[j].input).squaredNorm();
                ++pairs;
            }
        }
        if (acc > 0.0) mean_sq = acc / static_cast<double>(pairs);
    }
    return log_grid(mean_sq, points);
}

std::vector<double> region_bandwidth_grid(const InputRegion& region, int points) {
    region.validate();
    // E||u - v||^2 for independent uniform draws: twice the summed variances
    const Vec w = region.width();
    const double mean_sq = 2.0 * w.cwiseProduct(w).sum() / 12.0;
    return log_grid(mean_sq, points);
}

double select_bandwidth(const Dataset& data, const std::vector<Vec>& refs,
                        BandwidthMethod method, const std::vector<double>& grid,
                        double fixed_support_target) {
    if (grid.empty()) throw ConfigError("bandwidth grid is empty");
    if (!std::is_sorted(grid.begin(), grid.end())) {
        throw ConfigError("bandwidth grid must be sorted ascending");
    }
    if (method == BandwidthMethod::CrossValidation && data.m() < 2) {
        throw PreconditionError("cross-validation needs at least two samples");
    }
    if (method != BandwidthMethod::CrossValidation && refs.empty()) {
        throw PreconditionError("bandwidth selection needs reference points");
    }

    double best_k = grid.front();
    double best_crit = std::numeric_limits<double>::infinity();
    for (double k : grid) {
        const LwrState state(data, k);
        double crit = 0.0;
        switch (method) {
        case BandwidthMethod::VarianceMin: {
            for (const Vec& r : refs) crit += predict(state, r).learner_variance;
            crit /= static_cast<double>(refs.size());
            break;
        }
        case BandwidthMethod::FixedSupport: {
            double n_mean = 0.0;
            for (const Vec& r : refs) n_mean += kernel_weights(state, r).n;
            n_mean /= static_cast<double>(refs.size());
            crit = std::abs(n_mean - fixed_support_target);
            break;
        }
        case BandwidthMethod::CrossValidation: {
            for (int j = 0; j < data.m(); ++j) {
                const LocalFit fit = kernel_weights(state, data[j].input, j);
                crit += (data[j].output - predict(state, fit).mean).squaredNorm();
            }
            crit /= static_cast<double>(data.m());
            break;
        }
        }
        if (crit < best_crit) { // strict: ties keep the smallest k
            best_crit = crit;
            best_k = k;
        }
    }
    return best_k;
}

namespace {

// Expected learner variance at one reference after adding (query, y~), where
// the reference's kernel fit is `fit` and the query's predictive moments are
// (yhat, cond_diag). h_tilde is the query's weight under that kernel.
double posterior_at_ref(const LwrState& state, const LocalFit& fit, const Vec& ref,
                        const Vec& query, double h_tilde, const Vec& yhat,
                        const Vec& cond_diag) {
    if (h_tilde == 0.0) {
        // exact reduction: nothing changes at this reference
        return predict(state, fit).learner_variance;
    }
    const int dy = state.d_y();
    if (fit.empty) return 0.0; // the query would be the only supported point

    const double n = fit.n;
    const double nt = n + h_tilde;
    const Vec delta = query - fit.mu_x;
    const double w1 = n / nt;
    const double w2 = n * h_tilde / (nt * nt);

    Vec e_var_y(dy);
    for (int t = 0; t < dy; ++t) {
        const double dt = yhat[t] - fit.mu_y[t];
        e_var_y[t] = w1 * fit.cov_y(t, t) + w2 * (cond_diag[t] + dt * dt);
    }

    const Vec mu_upd = fit.mu_x + (h_tilde / nt) * delta;
    const Mat cov_upd = w1 * fit.cov_x + w2 * (delta * delta.transpose());

    Eigen::LLT<Mat> llt;
    const bool degenerate = spread_degenerate(nt, cov_upd);
    if (!degenerate) llt.compute(cov_upd);
    if (degenerate || llt.info() != Eigen::Success) {
        return e_var_y.sum() * (fit.s2 + h_tilde * h_tilde) / (nt * nt);
    }
    const Vec a = w2 * delta;
    const double q2 = a.dot(llt.solve(a));
    double total = 0.0;
    for (int t = 0; t < dy; ++t) {
        const Vec c_upd = w1 * fit.cov_xy.col(t) + (yhat[t] - fit.mu_y[t]) * a;
        const double q1 = c_upd.dot(llt.solve(c_upd));
        total += std::max(0.0, e_var_y[t] - q1 - cond_diag[t] * q2);
    }

    const Vec qc = query - mu_upd;
    const Mat s_hh = centered_sq_sum(fit, mu_upd) + (h_tilde * h_tilde) * (qc * qc.transpose());
    const Vec centered = ref - mu_upd;
    const Vec u = llt.solve(centered);
    const double quad = u.dot(s_hh * u);
    double lv = total * (fit.s2 + h_tilde * h_tilde + quad) / (nt * nt);
    const double ceiling = state.global_y_var().sum(); // same bound as predict
    if (!std::isfinite(lv)) lv = ceiling;
    return std::clamp(lv, 0.0, ceiling);
}

Vec clamped_cond_diag(const PredictiveDistribution& p) {
    return p.cond_cov.diagonal().cwiseMax(0.0);
}

} // namespace

double expected_posterior_variance(const LwrState& state, const Vec& query,
                                   const std::vector<Vec>& refs) {
    if (refs.empty()) throw PreconditionError("expected_posterior_variance: refs empty");
    if (state.m() < 1) throw PreconditionError("expected_posterior_variance requires data");

    const PredictiveDistribution qp = predict(state, query);
    const Vec cond_diag = clamped_cond_diag(qp);

    double sum = 0.0;
    for (const Vec& r : refs) {
        const LocalFit fit = kernel_weights(state, r);
        const double ht = kernel_one(state.k(), sq_norm(r, query));
        sum += posterior_at_ref(state, fit, r, query, ht, qp.mean, cond_diag);
    }
    return sum / static_cast<double>(refs.size());
}

std::vector<double> expected_posterior_variance_batch(const LwrState& state,
                                                      const std::vector<Vec>& candidates,
                                                      const std::vector<Vec>& refs) {
    if (refs.empty()) throw PreconditionError("expected_posterior_variance: refs empty");
    if (state.m() < 1) throw PreconditionError("expected_posterior_variance requires data");

    std::vector<Vec> yhat;
    std::vector<Vec> cond_diag;
    yhat.reserve(candidates.size());
    cond_diag.reserve(candidates.size());
    for (const Vec& c : candidates) {
        const PredictiveDistribution qp = predict(state, c);
        yhat.push_back(qp.mean);
        cond_diag.push_back(clamped_cond_diag(qp));
    }

    std::vector<double> scores(candidates.size(), 0.0);
    for (const Vec& r : refs) {
        const LocalFit fit = kernel_weights(state, r); // shared across candidates
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const double ht = kernel_one(state.k(), sq_norm(r, candidates[c]));
            scores[c] += posterior_at_ref(state, fit, r, candidates[c], ht, yhat[c],
                                          cond_diag[c]);
        }
    }
    for (double& s : scores) s /= static_cast<double>(refs.size());
    return scores;
}

// ---------------------------------------------------------------------------
// Per-point bandwidth selection
// ---------------------------------------------------------------------------

struct AdaptiveLwr::PointFit {
    std::size_t index = 0; // grid position of the chosen k
    LocalFit fit;
    PredictiveDistribution pred;
};

AdaptiveLwr::AdaptiveLwr(Dataset data, std::vector<double> grid) {
    if (grid.empty()) throw ConfigError("bandwidth grid is empty");
    if (!std::is_sorted(grid.begin(), grid.end())) {
        throw ConfigError("bandwidth grid must be sorted ascending");
    }
    states_.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (i == 0) {
            states_.emplace_back(std::move(data), grid[i]);
        } else {
            states_.push_back(states_.front().with_k(grid[i]));
        }
    }
}

AdaptiveLwr::PointFit AdaptiveLwr::fit_at(const Vec& x) const {
    PointFit best;
    double best_var = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < states_.size(); ++i) {
        LocalFit fit = kernel_weights(states_[i], x);
        PredictiveDistribution pred = lwr::predict(states_[i], fit);
        if (pred.learner_variance < best_var) { // strict: ties keep the smallest k
            best_var = pred.learner_variance;
            best.index = i;
            best.fit = std::move(fit);
            best.pred = std::move(pred);
        }
    }
    return best;
}

double AdaptiveLwr::bandwidth_at(const Vec& x) const {
    return states_[fit_at(x).index].k();
}

PredictiveDistribution AdaptiveLwr::predict(const Vec& x) const {
    return fit_at(x).pred;
}

double AdaptiveLwr::expected_posterior_variance(const Vec& query,
                                                const std::vector<Vec>& refs) const {
    return score_candidates({query}, refs).front();
}

std::vector<double> AdaptiveLwr::score_candidates(const std::vector<Vec>& candidates,
                                                  const std::vector<Vec>& refs) const {
    if (refs.empty()) throw PreconditionError("expected_posterior_variance: refs empty");
    if (m() < 1) throw PreconditionError("expected_posterior_variance requires data");

    std::vector<Vec> yhat;
    std::vector<Vec> cond_diag;
    yhat.reserve(candidates.size());
    cond_diag.reserve(candidates.size());
    for (const Vec& c : candidates) {
        const PredictiveDistribution qp = predict(c);
        yhat.push_back(qp.mean);
        cond_diag.push_back(clamped_cond_diag(qp));
    }

    std::vector<double> scores(candidates.size(), 0.0);
    for (const Vec& r : refs) {
        const PointFit pf = fit_at(r); // reference-specific bandwidth
        const LwrState& state = states_[pf.index];
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const double ht = kernel_one(state.k(), sq_norm(r, candidates[c]));
            scores[c] += posterior_at_ref(state, pf.fit, r, candidates[c], ht, yhat[c],
                                          cond_diag[c]);
        }
    }
    for (double& s : scores) s /= static_cast<double>(refs.size());
    return scores;
}

McEstimate mc_expected_variance(const LwrState& state, const Vec& query,
                                const std::vector<Vec>& refs, int n_draws,
                                RandomStream& rng) {
    if (refs.empty()) throw PreconditionError("mc_expected_variance: refs empty");
    if (n_draws < 1000) throw PreconditionError("mc_expected_variance: n_draws must be >= 1000");
    if (state.m() < 1) throw PreconditionError("mc_expected_variance requires data");
    const int dy = state.d_y();

    const PredictiveDistribution qp = predict(state, query);
    Mat cond = qp.cond_cov;
    Eigen::LLT<Mat> llt(cond);
    if (llt.info() != Eigen::Success) {
        cond.diagonal().array() += 1e-12 * (cond.trace() + 1e-300);
        llt.compute(cond);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("query conditional covariance not factorizable");
        }
    }
    const Mat l_cond = llt.matrixL();

    // augmented state; each draw rewrites the appended label and recomputes
    LwrState aug = add_sample(state, Sample{query, Vec::Zero(dy)});
    std::vector<std::vector<double>> ref_weights(refs.size());
    for (std::size_t ri = 0; ri < refs.size(); ++ri) {
        compute_weights(aug, refs[ri], -1, ref_weights[ri]);
    }

    Vec u(dy), ytilde(dy);
    LocalFit fit;
    double mean = 0.0;
    double m2 = 0.0;
    for (int draw = 0; draw < n_draws; ++draw) {
        for (int t = 0; t < dy; ++t) u[t] = rng.normal(0.0, 1.0);
        ytilde = qp.mean + l_cond * u;
        for (int t = 0; t < dy; ++t) aug.y_cols_[static_cast<std::size_t>(t)].back() = ytilde[t];
        aug.refresh_global_stats();

        double v = 0.0;
        for (std::size_t ri = 0; ri < refs.size(); ++ri) {
            fit.weights = ref_weights[ri]; // buffer reuse, no allocation
            local_fit_moments(fit, aug, refs[ri]);
            v += predict(aug, fit).learner_variance;
        }
        v /= static_cast<double>(refs.size());

        const double delta_m = v - mean;
        mean += delta_m / static_cast<double>(draw + 1);
        m2 += delta_m * (v - mean);
    }
    const double var = n_draws > 1 ? m2 / static_cast<double>(n_draws - 1) : 0.0;
    return McEstimate{mean, std::sqrt(var / static_cast<double>(n_draws))};
}

} // namespace actlearn::lwr
