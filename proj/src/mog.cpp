#include "actlearn/mog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

namespace actlearn::mog {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
// components with less support than this carry no information and are
// excluded from prediction and scoring
constexpr double kDeadSupport = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const Vec& v) {
    const double mx = v.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (int i = 0; i < v.size(); ++i) s += std::exp(v[i] - mx);
    return mx + std::log(s);
}

// Clamp the eigenvalues of `cov`, measured relative to the squared
// per-dimension scale, to at least `floor_rel`. Returns true if any
// eigenvalue actually needed clamping.
bool floor_covariance(Mat& cov, const Vec& scale, double floor_rel) {
    const int dim = static_cast<int>(cov.rows());
    Mat scaled(dim, dim);
    for (int a = 0; a < dim; ++a) {
        for (int b = 0; b < dim; ++b) {
            scaled(a, b) = cov(a, b) / (scale[a] * scale[b]);
        }
    }
    scaled = 0.5 * (scaled + scaled.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(scaled);
    if (es.info() != Eigen::Success) {
        throw NumericalError("eigendecomposition failed while flooring a covariance");
    }
    if (es.eigenvalues().minCoeff() >= floor_rel) return false;
    Vec ev = es.eigenvalues().cwiseMax(floor_rel);
    scaled = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    for (int a = 0; a < dim; ++a) {
        for (int b = 0; b < dim; ++b) {
            cov(a, b) = scaled(a, b) * scale[a] * scale[b];
        }
    }
    return true;
}

struct LogDensity {
    Eigen::LLT<Mat> llt;
    double log_norm; // -(dim/2) log 2pi - 0.5 log|cov|

    void prepare(const Mat& cov, const char* what) {
        llt.compute(cov);
        if (llt.info() != Eigen::Success) {
            throw NumericalError(std::string("covariance not positive definite: ") + what);
        }
        double log_det = 0.0;
        for (int d = 0; d < cov.rows(); ++d) log_det += std::log(llt.matrixL()(d, d));
        log_det *= 2.0;
        log_norm = -0.5 * (static_cast<double>(cov.rows()) * kLog2Pi + log_det);
    }

    double operator()(const Vec& centered, Vec& scratch) const {
        scratch = centered;
        llt.matrixL().solveInPlace(scratch);
        return log_norm - 0.5 * scratch.squaredNorm();
    }
};

} // namespace

double MixtureModel::total_support() const {
    double s = 0.0;
    for (const auto& c : components) s += c.support;
    return s;
}

// ---------------------------------------------------------------------------
// EM fit
// ---------------------------------------------------------------------------

MixtureModel em_fit(const Dataset& data, const MogFitConfig& cfg,
                    const std::vector<Vec>& reference_pool, RandomStream& rng,
                    const MixtureModel* warm_from) {
    if (data.m() < 1) throw PreconditionError("em_fit requires at least one sample");
    if (cfg.n_components < 1) throw ConfigError("n_components must be >= 1");
    if (cfg.em_iterations < 1) throw ConfigError("em_iterations must be >= 1");
    if (cfg.variance_floor <= 0.0) throw ConfigError("variance_floor must be > 0");
    if (cfg.correction_enabled && reference_pool.empty()) {
        throw ConfigError("correction requires a non-empty reference pool");
    }

    const int m = data.m();
    const int dx = data.d_x();
    const int dy = data.d_y();
    const int dim = dx + dy;
    const int n_comp = cfg.n_components;
    const int n_ref = static_cast<int>(reference_pool.size());

    Mat joint(m, dim);
    for (int j = 0; j < m; ++j) joint.row(j) = data.joint(j).transpose();

    const InputRegion box = bounding_hypercube(data);
    const Vec scale = box.width();
    const Vec scale_x = scale.head(dx);

    MixtureModel model;
    model.d_x = dx;
    model.d_y = dy;
    model.correction_enabled = cfg.correction_enabled;
    if (cfg.correction_enabled) {
        model.reference_input_stats = input_stats_from_pool(reference_pool);
        for (const Vec& r : reference_pool) {
            if (r.size() != dx) throw ConfigError("reference pool dimension mismatch");
        }
    }

    if (cfg.warm_start && warm_from != nullptr) {
        if (warm_from->n_components() != n_comp || warm_from->d_x != dx ||
            warm_from->d_y != dy) {
            throw StateError("warm-start model does not match the requested fit");
        }
        model.components = warm_from->components;
    } else {
        model.components.reserve(static_cast<std::size_t>(n_comp));
        for (int i = 0; i < n_comp; ++i) {
            Vec mean(dim);
            for (int d = 0; d < dim; ++d) mean[d] = rng.uniform(box.lower[d], box.upper[d]);
            model.components.push_back(
                {std::move(mean), Mat::Identity(dim, dim), static_cast<double>(m) / n_comp});
        }
    }

    Mat resp(m, n_comp);
    std::vector<LogDensity> joint_dens(static_cast<std::size_t>(n_comp));
    std::vector<LogDensity> input_dens(static_cast<std::size_t>(n_comp));
    Vec centered(dim), centered_x(dx), scratch(dim), scratch_x(dx);
    Vec log_joint(n_comp), log_weight(n_comp), log_marg(n_comp);

    // per-component reference marginals (diagonal), refreshed every E-step
    std::vector<InputStats> ref_stats(static_cast<std::size_t>(n_comp));
    std::vector<bool> has_ref(static_cast<std::size_t>(n_comp), false);
    Mat ref_resp(std::max(n_ref, 1), n_comp);

    // Standard EM: component priors are the support fractions n_i / m, so
    // surplus components shed weight instead of being forced to carve the
    // data into ever-tighter cells.
    Vec log_prior(n_comp);

    const auto refresh_reference_stats = [&] {
        // attribute the reference pool by the current input marginals
        for (int r = 0; r < n_ref; ++r) {
            for (int i = 0; i < n_comp; ++i) {
                const auto& comp = model.components[static_cast<std::size_t>(i)];
                if (comp.support < kDeadSupport) {
                    log_weight[i] = kNegInf;
                    continue;
                }
                centered_x = reference_pool[static_cast<std::size_t>(r)] - comp.mean.head(dx);
                log_weight[i] =
                    log_prior[i] + input_dens[static_cast<std::size_t>(i)](centered_x, scratch_x);
            }
            const double lse = log_sum_exp(log_weight);
            if (!std::isfinite(lse)) {
                ref_resp.row(r).setConstant(1.0 / n_comp);
            } else {
                for (int i = 0; i < n_comp; ++i) ref_resp(r, i) = std::exp(log_weight[i] - lse);
            }
        }
        for (int i = 0; i < n_comp; ++i) {
            has_ref[static_cast<std::size_t>(i)] = false;
            if (model.components[static_cast<std::size_t>(i)].support < kDeadSupport) continue;
            const double mass = ref_resp.col(i).sum();
            if (mass < kDeadSupport) continue; // no reference evidence for this component
            Vec mu = Vec::Zero(dx);
            for (int r = 0; r < n_ref; ++r) {
                mu += ref_resp(r, i) * reference_pool[static_cast<std::size_t>(r)];
            }
            mu /= mass;
            Vec var = Vec::Zero(dx);
            for (int r = 0; r < n_ref; ++r) {
                const Vec d = reference_pool[static_cast<std::size_t>(r)] - mu;
                var += ref_resp(r, i) * d.cwiseProduct(d);
            }
            var /= mass;
            for (int d = 0; d < dx; ++d) {
                var[d] = std::max(var[d], cfg.variance_floor * scale_x[d] * scale_x[d]);
            }
            ref_stats[static_cast<std::size_t>(i)] = InputStats{std::move(mu), std::move(var)};
            has_ref[static_cast<std::size_t>(i)] = true;
        }
    };

    const auto log_diag_density = [&](const InputStats& stats, const Vec& x) {
        double acc = 0.0;
        for (int d = 0; d < x.size(); ++d) {
            const double diff = x[d] - stats.mean[d];
            acc += -0.5 * (kLog2Pi + std::log(stats.var[d])) - 0.5 * diff * diff / stats.var[d];
        }
        return acc;
    };

    const auto e_step = [&](double& log_likelihood) {
        for (int i = 0; i < n_comp; ++i) {
            const auto& comp = model.components[static_cast<std::size_t>(i)];
            log_prior[i] = comp.support > 0.0
                               ? std::log(comp.support / static_cast<double>(m))
                               : kNegInf;
            if (comp.support < kDeadSupport) continue;
            joint_dens[static_cast<std::size_t>(i)].prepare(comp.cov, "joint block");
            if (cfg.correction_enabled) {
                input_dens[static_cast<std::size_t>(i)].prepare(
                    comp.cov.topLeftCorner(dx, dx), "input block");
            }
        }
        if (cfg.correction_enabled) refresh_reference_stats();

        log_likelihood = 0.0;
        for (int j = 0; j < m; ++j) {
            for (int i = 0; i < n_comp; ++i) {
                const auto& comp = model.components[static_cast<std::size_t>(i)];
                if (comp.support < kDeadSupport) {
                    log_joint[i] = kNegInf;
                    continue;
                }
                centered = joint.row(j).transpose() - comp.mean;
                log_joint[i] = log_prior[i] +
                               joint_dens[static_cast<std::size_t>(i)](centered, scratch);
            }
            log_likelihood += log_sum_exp(log_joint);

            if (cfg.correction_enabled) {
                for (int i = 0; i < n_comp; ++i) {
                    const auto& comp = model.components[static_cast<std::size_t>(i)];
                    if (comp.support < kDeadSupport || !has_ref[static_cast<std::size_t>(i)]) {
                        log_weight[i] = log_joint[i];
                        continue;
                    }
                    centered_x = data[j].input - comp.mean.head(dx);
                    const double log_train =
                        input_dens[static_cast<std::size_t>(i)](centered_x, scratch_x);
                    const double log_refm =
                        log_diag_density(ref_stats[static_cast<std::size_t>(i)], data[j].input);
                    log_weight[i] = log_joint[i] + log_refm - log_train;
                }
            } else {
                log_weight = log_joint;
            }

            const double lse = log_sum_exp(log_weight);
            if (!std::isfinite(lse)) {
                resp.row(j).setConstant(1.0 / n_comp); // every density underflowed
            } else {
                for (int i = 0; i < n_comp; ++i) resp(j, i) = std::exp(log_weight[i] - lse);
            }
        }
    };

    model.log_likelihood_trace.clear();
    model.log_likelihood_trace.reserve(static_cast<std::size_t>(cfg.em_iterations) + 1);

    for (int iter = 0; iter < cfg.em_iterations; ++iter) {
        double ll = 0.0;
        e_step(ll);
        model.log_likelihood_trace.push_back(ll);

        for (int i = 0; i < n_comp; ++i) {
            auto& comp = model.components[static_cast<std::size_t>(i)];
            const double n_i = resp.col(i).sum();
            comp.support = n_i;
            if (n_i < kDeadSupport) continue; // no data: keep previous parameters
            const Vec mu = joint.transpose() * resp.col(i) / n_i;
            const Mat c = joint.rowwise() - mu.transpose();
            Mat cov = c.transpose() * resp.col(i).asDiagonal() * c / n_i;
            if (floor_covariance(cov, scale, cfg.variance_floor)) {
                model.floor_activated = true;
            }
            comp.mean = mu;
            comp.cov = std::move(cov);
        }
    }

    double final_ll = 0.0;
    e_step(final_ll); // densities (and reference marginals) of the final parameters
    model.log_likelihood_trace.push_back(final_ll);
    if (cfg.correction_enabled) {
        model.component_reference_stats.resize(static_cast<std::size_t>(n_comp));
        for (int i = 0; i < n_comp; ++i) {
            if (has_ref[static_cast<std::size_t>(i)]) {
                model.component_reference_stats[static_cast<std::size_t>(i)] =
                    ref_stats[static_cast<std::size_t>(i)];
            } else {
                // no reference evidence: fall back to the training marginal
                const auto& comp = model.components[static_cast<std::size_t>(i)];
                model.component_reference_stats[static_cast<std::size_t>(i)] = InputStats{
                    comp.mean.head(dx), comp.cov.topLeftCorner(dx, dx).diagonal()};
            }
        }
    }

    return model;
}

MixtureModel em_fit(const Dataset& data, const MogFitConfig& cfg,
                    const InputRegion& input_region, RandomStream& rng,
                    const MixtureModel* warm_from) {
    std::vector<Vec> pool;
    if (cfg.correction_enabled) {
        pool = draw_uniform(input_region, cfg.correction_pool_size, rng);
    }
    return em_fit(data, cfg, pool, rng, warm_from);
}

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

struct Evaluator::ComponentCache {
    Vec mu_x, mu_y;
    Mat cov_xy;   // d_x x d_y
    Vec yvar;     // marginal output variances
    Mat gain;     // d_y x d_x, Sigma_yx Sigma_xx^-1
    Mat cond_cov; // d_y x d_y
    Vec cond_diag;
    double cond_trace = 0.0;
    double support = 0.0;
    LogDensity input_dens; // training-based input marginal
    // responsibility marginal: the reference-corrected one when available
    bool use_ref_marginal = false;
    Vec ref_mean, ref_var;
    double ref_log_norm = 0.0;
};

Evaluator::~Evaluator() = default;
Evaluator::Evaluator(Evaluator&&) noexcept = default;
Evaluator& Evaluator::operator=(Evaluator&&) noexcept = default;

Evaluator::Evaluator(const MixtureModel& model) : model_(&model) {
    if (model.components.empty()) throw StateError("model has no components");
    const int dx = model.d_x;
    const int dy = model.d_y;
    cache_.resize(model.components.size());
    for (int i = 0; i < model.n_components(); ++i) {
        const auto& comp = model.components[static_cast<std::size_t>(i)];
        auto& c = cache_[static_cast<std::size_t>(i)];
        c.support = comp.support;
        if (comp.support < kDeadSupport) continue;
        c.mu_x = comp.mean.head(dx);
        c.mu_y = comp.mean.tail(dy);
        c.cov_xy = comp.cov.topRightCorner(dx, dy);
        c.yvar = comp.cov.bottomRightCorner(dy, dy).diagonal();
        c.input_dens.prepare(comp.cov.topLeftCorner(dx, dx), "input block");
        c.gain = c.input_dens.llt.solve(c.cov_xy).transpose();
        c.cond_cov = comp.cov.bottomRightCorner(dy, dy) - c.gain * c.cov_xy;
        c.cond_diag = c.cond_cov.diagonal().cwiseMax(0.0);
        c.cond_trace = c.cond_diag.sum();
        if (model.correction_enabled &&
            model.component_reference_stats.size() == model.components.size()) {
            const InputStats& rs = model.component_reference_stats[static_cast<std::size_t>(i)];
            if (rs.mean.size() == dx && rs.var.size() == dx && rs.var.minCoeff() > 0.0) {
                c.use_ref_marginal = true;
                c.ref_mean = rs.mean;
                c.ref_var = rs.var;
                c.ref_log_norm = 0.0;
                for (int d = 0; d < dx; ++d) {
                    c.ref_log_norm -= 0.5 * (kLog2Pi + std::log(rs.var[d]));
                }
            }
        }
        active_.push_back(i);
    }
    if (active_.empty()) throw StateError("model has no supported components");
}

Vec Evaluator::log_input_marginals(const Vec& x) const {
    Vec lw = Vec::Constant(model_->n_components(), kNegInf);
    Vec centered(model_->d_x), scratch(model_->d_x);
    for (int i : active_) {
        const auto& c = cache_[static_cast<std::size_t>(i)];
        double ld;
        if (c.use_ref_marginal) {
            ld = c.ref_log_norm;
            for (int d = 0; d < x.size(); ++d) {
                const double diff = x[d] - c.ref_mean[d];
                ld -= 0.5 * diff * diff / c.ref_var[d];
            }
        } else {
            centered = x - c.mu_x;
            ld = c.input_dens(centered, scratch);
        }
        // weight by the support fraction: the component's prior mass
        lw[i] = std::log(c.support) + ld;
    }
    return lw;
}

Vec Evaluator::responsibility(const Vec& x, bool* underflow) const {
    if (x.size() != model_->d_x) throw DataError("responsibility: input dimension mismatch");
    if (underflow != nullptr) *underflow = false;
    const Vec lw = log_input_marginals(x);
    Vec h = Vec::Zero(model_->n_components());
    // Densities live in log space, so the normalized ratio stays defined for
    // any finite log-density no matter how small the absolute densities are.
    // Underflow means every log-density is -inf: the ratio is 0/0.
    const double lse = log_sum_exp(lw);
    if (!std::isfinite(lse)) {
        if (underflow != nullptr) *underflow = true;
        for (int i : active_) h[i] = 1.0 / static_cast<double>(active_.size());
        return h;
    }
    for (int i : active_) h[i] = std::exp(lw[i] - lse);
    return h;
}

double Evaluator::component_current_variance(int i, const Vec& x) const {
    const auto& c = cache_[static_cast<std::size_t>(i)];
    Vec centered = x - c.mu_x;
    c.input_dens.llt.matrixL().solveInPlace(centered);
    const double mahal = centered.squaredNorm();
    return c.cond_trace / c.support * (1.0 + mahal);
}

PredictiveDistribution Evaluator::predict(const Vec& x) const {
    const int dy = model_->d_y;
    const Vec h = responsibility(x);

    PredictiveDistribution out;
    out.mean = Vec::Zero(dy);
    std::vector<Vec> comp_mean(cache_.size());
    for (int i : active_) {
        if (h[i] == 0.0) continue;
        const auto& c = cache_[static_cast<std::size_t>(i)];
        comp_mean[static_cast<std::size_t>(i)] = c.mu_y + c.gain * (x - c.mu_x);
        out.mean += h[i] * comp_mean[static_cast<std::size_t>(i)];
    }

    out.cond_cov = Mat::Zero(dy, dy);
    out.learner_variance = 0.0;
    for (int i : active_) {
        if (h[i] == 0.0) continue;
        const auto& c = cache_[static_cast<std::size_t>(i)];
        const Vec d = comp_mean[static_cast<std::size_t>(i)] - out.mean;
        out.cond_cov += h[i] * (c.cond_cov + d * d.transpose());
        out.learner_variance += h[i] * h[i] * component_current_variance(i, x);
    }
    return out;
}

double Evaluator::expected_posterior_variance(const Vec& query,
                                              const std::vector<Vec>& refs) const {
    if (refs.empty()) throw PreconditionError("expected_posterior_variance: refs empty");
    const int dx = model_->d_x;
    const int dy = model_->d_y;

    bool underflow = false;
    Vec h_query = responsibility(query, &underflow);
    if (underflow) h_query.setZero(); // a fully remote query changes nothing

    struct Posterior {
        bool updated = false;
        double coef = 0.0; // <sigma~^2_{y|x}> / (n + h~), traced over outputs
        Vec mu_x;
        Eigen::LLT<Mat> llt; // of the updated input covariance
    };
    std::vector<Posterior> post(cache_.size());

    for (int i : active_) {
        const double ht = h_query[i];
        if (ht == 0.0) continue;
        const auto& c = cache_[static_cast<std::size_t>(i)];
        auto& p = post[static_cast<std::size_t>(i)];

        const double n = c.support;
        const double nt = n + ht;
        const Vec delta = query - c.mu_x;
        const Vec dvec = c.gain * delta; // yhat(query) - mu_y
        const double w1 = n / nt;
        const double w2 = n * ht / (nt * nt);

        p.mu_x = c.mu_x + (ht / nt) * delta;
        Mat cov_upd = w1 * model_->components[static_cast<std::size_t>(i)]
                               .cov.topLeftCorner(dx, dx) +
                      w2 * (delta * delta.transpose());
        p.llt.compute(cov_upd);
        if (p.llt.info() != Eigen::Success) {
            throw NumericalError("updated input covariance not positive definite");
        }

        const Vec a = w2 * delta;
        const double q2 = a.dot(p.llt.solve(a));
        double total = 0.0;
        for (int t = 0; t < dy; ++t) {
            const double st = c.cond_diag[t];
            const double dt = dvec[t];
            const double e_var_y = w1 * c.yvar[t] + w2 * (st + dt * dt);
            const Vec c_upd = w1 * c.cov_xy.col(t) + a * dt;
            const double q1 = c_upd.dot(p.llt.solve(c_upd));
            total += std::max(0.0, e_var_y - q1 - st * q2);
        }
        p.coef = total / nt;
        p.updated = true;
    }

    double sum = 0.0;
    for (const Vec& r : refs) {
        const Vec h = responsibility(r);
        double v = 0.0;
        for (int i : active_) {
            if (h[i] == 0.0) continue;
            const auto& p = post[static_cast<std::size_t>(i)];
            if (!p.updated) {
                v += h[i] * h[i] * component_current_variance(i, r);
            } else {
                Vec centered = r - p.mu_x;
                p.llt.matrixL().solveInPlace(centered);
                v += h[i] * h[i] * p.coef * (1.0 + centered.squaredNorm());
            }
        }
        sum += v;
    }
    return sum / static_cast<double>(refs.size());
}

McEstimate Evaluator::mc_expected_variance(const Vec& query, const std::vector<Vec>& refs,
                                           int n_draws, RandomStream& rng) const {
    if (refs.empty()) throw PreconditionError("mc_expected_variance: refs empty");
    if (n_draws < 1000) throw PreconditionError("mc_expected_variance: n_draws must be >= 1000");
    const int dx = model_->d_x;
    const int dy = model_->d_y;

    bool underflow = false;
    Vec h_query = responsibility(query, &underflow);
    if (underflow) h_query.setZero();

    // Everything except the drawn label is deterministic: the updated input
    // covariance, the per-reference responsibilities, and the Mahalanobis
    // terms. Precompute those; each draw then only refreshes the realized
    // output moments of the touched components.
    struct DrawComp {
        int index;
        double n, ht, nt, w1, w2;
        Vec delta;
        Vec yhat;    // predictive mean at the query
        Mat l_cond;  // Cholesky factor of the conditional output covariance
        Eigen::LLT<Mat> llt_upd;
        double ref_weight = 0.0; // mean over refs of h^2 (1 + mahal~) / nt
    };
    std::vector<DrawComp> touched;
    for (int i : active_) {
        if (h_query[i] == 0.0) continue;
        const auto& c = cache_[static_cast<std::size_t>(i)];
        DrawComp d;
        d.index = i;
        d.n = c.support;
        d.ht = h_query[i];
        d.nt = d.n + d.ht;
        d.w1 = d.n / d.nt;
        d.w2 = d.n * d.ht / (d.nt * d.nt);
        d.delta = query - c.mu_x;
        d.yhat = c.mu_y + c.gain * d.delta;
        Mat cc = c.cond_cov;
        Eigen::LLT<Mat> llt_cc(cc);
        if (llt_cc.info() != Eigen::Success) {
            cc.diagonal().array() += 1e-12 * (c.cond_trace + 1e-300);
            llt_cc.compute(cc);
            if (llt_cc.info() != Eigen::Success) {
                throw NumericalError("conditional covariance not factorizable");
            }
        }
        d.l_cond = llt_cc.matrixL();
        Mat cov_upd = d.w1 * model_->components[static_cast<std::size_t>(d.index)]
                                 .cov.topLeftCorner(dx, dx) +
                      d.w2 * (d.delta * d.delta.transpose());
        d.llt_upd.compute(cov_upd);
        if (d.llt_upd.info() != Eigen::Success) {
            throw NumericalError("updated input covariance not positive definite");
        }
        touched.push_back(std::move(d));
    }

    // per-reference constants
    double base = 0.0; // contribution of components that keep their statistics
    for (const Vec& r : refs) {
        const Vec h = responsibility(r);
        double v = 0.0;
        for (int i : active_) {
            if (h[i] == 0.0 || h_query[i] != 0.0) continue;
            v += h[i] * h[i] * component_current_variance(i, r);
        }
        base += v;
        for (auto& d : touched) {
            if (h[d.index] == 0.0) continue;
            const Vec mu_upd = cache_[static_cast<std::size_t>(d.index)].mu_x +
                               (d.ht / d.nt) * d.delta;
            Vec centered = r - mu_upd;
            d.llt_upd.matrixL().solveInPlace(centered);
            d.ref_weight += h[d.index] * h[d.index] * (1.0 + centered.squaredNorm()) / d.nt;
        }
    }
    const double n_refs = static_cast<double>(refs.size());
    base /= n_refs;
    for (auto& d : touched) d.ref_weight /= n_refs;

    double mean = 0.0;
    double m2 = 0.0;
    Vec u(dy), ytilde(dy), resid(dy), c_upd(dx);
    for (int draw = 0; draw < n_draws; ++draw) {
        double v = base;
        for (auto& d : touched) {
            const auto& c = cache_[static_cast<std::size_t>(d.index)];
            for (int t = 0; t < dy; ++t) u[t] = rng.normal(0.0, 1.0);
            ytilde = d.yhat + d.l_cond * u;
            resid = ytilde - c.mu_y;
            // realized rank-one update of the output-side statistics
            double total = 0.0;
            for (int t = 0; t < dy; ++t) {
                const double var_y = d.w1 * c.yvar[t] + d.w2 * resid[t] * resid[t];
                c_upd = d.w1 * c.cov_xy.col(t) + (d.w2 * resid[t]) * d.delta;
                const double cond = var_y - c_upd.dot(d.llt_upd.solve(c_upd));
                total += std::max(0.0, cond);
            }
            v += d.ref_weight * total;
        }
        const double delta_m = v - mean;
        mean += delta_m / static_cast<double>(draw + 1);
        m2 += delta_m * (v - mean);
    }
    const double var = n_draws > 1 ? m2 / static_cast<double>(n_draws - 1) : 0.0;
    return McEstimate{mean, std::sqrt(var / static_cast<double>(n_draws))};
}

// ---------------------------------------------------------------------------
// Free-function forms
// ---------------------------------------------------------------------------

Vec responsibility(const MixtureModel& model, const Vec& x, bool* underflow) {
    return Evaluator(model).responsibility(x, underflow);
}

PredictiveDistribution predict(const MixtureModel& model, const Vec& x) {
    return Evaluator(model).predict(x);
}

double expected_posterior_variance(const MixtureModel& model, const Vec& query,
                                   const std::vector<Vec>& refs) {
    return Evaluator(model).expected_posterior_variance(query, refs);
}

McEstimate mc_expected_variance(const MixtureModel& model, const Vec& query,
                                const std::vector<Vec>& refs, int n_draws,
                                RandomStream& rng) {
    return Evaluator(model).mc_expected_variance(query, refs, n_draws, rng);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::json vec_to_json(const Vec& v) {
    nlohmann::json out = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Vec vec_from_json(const nlohmann::json& j) {
    Vec v(static_cast<int>(j.size()));
    for (int i = 0; i < v.size(); ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

} // namespace

std::string to_json_string(const MixtureModel& model) {
    nlohmann::json j;
    j["d_x"] = model.d_x;
    j["d_y"] = model.d_y;
    j["correction_enabled"] = model.correction_enabled;
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : model.components) {
        nlohmann::json jc;
        jc["mean"] = vec_to_json(c.mean);
        nlohmann::json rows = nlohmann::json::array();
        for (int a = 0; a < c.cov.rows(); ++a) rows.push_back(vec_to_json(c.cov.row(a)));
        jc["cov"] = rows;
        jc["support"] = c.support;
        comps.push_back(std::move(jc));
    }
    j["components"] = std::move(comps);
    if (model.reference_input_stats.has_value()) {
        j["reference_input_stats"] = {
            {"mean", vec_to_json(model.reference_input_stats->mean)},
            {"var", vec_to_json(model.reference_input_stats->var)},
        };
    }
    if (!model.component_reference_stats.empty()) {
        nlohmann::json stats = nlohmann::json::array();
        for (const InputStats& s : model.component_reference_stats) {
            stats.push_back({{"mean", vec_to_json(s.mean)}, {"var", vec_to_json(s.var)}});
        }
        j["component_reference_stats"] = std::move(stats);
    }
    return j.dump();
}

MixtureModel model_from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model JSON parse error: ") + e.what());
    }
    try {
        MixtureModel model;
        model.d_x = j.at("d_x").get<int>();
        model.d_y = j.at("d_y").get<int>();
        model.correction_enabled = j.at("correction_enabled").get<bool>();
        const int dim = model.d_x + model.d_y;
        for (const auto& jc : j.at("components")) {
            GaussianComponent c;
            c.mean = vec_from_json(jc.at("mean"));
            const auto& rows = jc.at("cov");
            c.cov = Mat(dim, dim);
            for (int a = 0; a < dim; ++a) {
                c.cov.row(a) = vec_from_json(rows.at(static_cast<std::size_t>(a))).transpose();
            }
            c.support = jc.at("support").get<double>();
            if (c.mean.size() != dim) throw DataError("component mean has wrong length");
            model.components.push_back(std::move(c));
        }
        if (j.contains("reference_input_stats")) {
            InputStats stats;
            stats.mean = vec_from_json(j.at("reference_input_stats").at("mean"));
            stats.var = vec_from_json(j.at("reference_input_stats").at("var"));
            model.reference_input_stats = std::move(stats);
        }
        if (j.contains("component_reference_stats")) {
            for (const auto& js : j.at("component_reference_stats")) {
                model.component_reference_stats.push_back(
                    InputStats{vec_from_json(js.at("mean")), vec_from_json(js.at("var"))});
            }
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model JSON is malformed: ") + e.what());
    }
}

} // namespace actlearn::mog
