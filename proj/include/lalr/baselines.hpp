#pragma once

// Linear reference models: least squares for convergence thresholds, linear
// quantile regression, and AIC under the asymmetric Laplace likelihood.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lalr/data.hpp"
#include "lalr/error.hpp"
#include "lalr/lipschitz.hpp"
#include "lalr/losses.hpp"
#include "lalr/trainer.hpp"

namespace lalr {

enum class FitKind { ols, quantile_subgradient };

struct LinearModel
{
    // (features + 1) x labels; row 0 holds the intercepts.
    Eigen::MatrixXd weights;
    FitKind kind = FitKind::ols;
    double tau = 0.5;
    // Subgradient fits only.
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
    bool converged = true;

    Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const
    {
        if (x.cols() + 1 != weights.rows())
            throw ShapeError("linear model expects " + std::to_string(weights.rows() - 1) + " features, got " +
                             std::to_string(x.cols()));
        Eigen::MatrixXd out = x * weights.bottomRows(weights.rows() - 1);
        out.rowwise() += weights.row(0);
        return out;
    }
};

namespace detail {

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x)
{
    Eigen::MatrixXd a(x.rows(), x.cols() + 1);
    a.col(0).setOnes();
    a.rightCols(x.cols()) = x;
    return a;
}

}  // namespace detail

// Normal equations (A^T A + 1e-8 I) w = A^T y with A = [1 X], followed by two
// rounds of iterative refinement against the unjittered system so the jitter
// only affects conditioning, not the solution.
inline LinearModel ols_fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y)
{
    if (x.rows() != y.rows()) throw ShapeError("OLS: X and y row counts differ");
    if (x.rows() < x.cols() + 1)
        throw DataError("OLS: need at least " + std::to_string(x.cols() + 1) + " rows, got " + std::to_string(x.rows()));
    if (!x.allFinite() || !y.allFinite()) throw DataError("OLS: non-finite input");

    const Eigen::MatrixXd a = detail::with_intercept(x);
    const Eigen::MatrixXd gram = a.transpose() * a;
    const Eigen::MatrixXd rhs = a.transpose() * y;
    Eigen::MatrixXd jittered = gram;
    jittered.diagonal().array() += 1e-8;
    const Eigen::LLT<Eigen::MatrixXd> chol(jittered);
    if (chol.info() != Eigen::Success) throw DataError("OLS: normal equations are rank-deficient");

    Eigen::MatrixXd w = chol.solve(rhs);
    for (int round = 0; round < 2; ++round) w += chol.solve(rhs - gram * w);
    if (!w.allFinite()) throw DataError("OLS: normal equations are rank-deficient");

    LinearModel model;
    model.weights = std::move(w);
    model.kind = FitKind::ols;
    return model;
}

// Mean absolute error of the least-squares fit on (standardized) training
// data: the epochs-to-threshold target.
inline double ols_threshold(const Dataset& train)
{
    const auto model = ols_fit(train.x, train.y);
    return mae(model.predict(train.x), train.y);
}

// Lowest training loss reached by a (constant learning rate) run.
inline double min_loss_threshold(const RunRecord& record)
{
    if (record.rows.empty()) throw DataError("min-loss threshold of an empty run");
    double best = record.rows.front().train_loss;
    for (const auto& r : record.rows) best = std::min(best, r.train_loss);
    return best;
}

struct QuantileFitOptions
{
    std::size_t max_iterations = 100000;
    double gradient_tolerance = 1e-7;
    LrPolicy policy = LrPolicy::lalr();
};

// Linear quantile regression by full-batch subgradient descent on the mean
// check loss. This is the zero-hidden-layer network trained with LALR, where
// the batch is the whole dataset and the intercept column counts towards K_z.
// The check loss is non-smooth, so the LALR step is divided by sqrt(t + 1)
// and the best iterate seen is returned.
inline LinearModel linear_qr_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double tau,
                                 const QuantileFitOptions& opt = {})
{
    if (x.rows() != y.rows()) throw ShapeError("quantile fit: X and y row counts differ");
    if (x.rows() < x.cols() + 1) throw DataError("quantile fit: too few rows");
    const LossSpec loss = LossSpec::check(tau);
    loss.validate();
    opt.policy.validate();

    const Eigen::MatrixXd a = detail::with_intercept(x);
    const Eigen::MatrixXd target = y;
    const double kz = a.cwiseAbs().maxCoeff();
    const auto lr = learning_rate(
        opt.policy, lipschitz_constant({kz, static_cast<std::size_t>(a.rows()), 1, loss}));

    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(a.cols(), 1);
    w(0, 0) = y.mean();
    Eigen::MatrixXd best_w = w;
    double best = std::numeric_limits<double>::infinity();
    double grad_norm = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    for (; it < opt.max_iterations; ++it) {
        const Eigen::MatrixXd pred = a * w;
        const double value = check_loss(pred, target, tau);
        const Eigen::MatrixXd grad = a.transpose() * check_grad(pred, target, tau);
        grad_norm = grad.norm();
        if (value < best) {
            best = value;
            best_w = w;
        }
        if (grad_norm <= opt.gradient_tolerance) break;
        w -= (lr.eta / std::sqrt(static_cast<double>(it + 1))) * grad;
    }
    if (!best_w.allFinite()) throw DivergenceError("quantile fit produced non-finite weights", it, lr.eta);

    LinearModel model;
    model.weights = std::move(best_w);
    model.kind = FitKind::quantile_subgradient;
    model.tau = tau;
    model.iterations = it;
    model.gradient_norm = grad_norm;
    model.converged = grad_norm <= opt.gradient_tolerance;
    return model;
}

struct AicReport
{
    double aic = 0.0;
    double log_likelihood = 0.0;
    double tau = 0.5;
    std::size_t k = 1;
    std::size_t n_obs = 0;
    double mean_check_loss = 0.0;
    // Perfect fit (mean check loss 0): the likelihood is unbounded and aic is
    // reported as -infinity.
    bool degenerate = false;

    friend bool operator==(const AicReport&, const AicReport&) = default;
};

// AIC under the asymmetric Laplace likelihood with the scale profiled out:
//   sigma = mean check loss,
//   log L = n log(tau (1 - tau)) - n log(sigma) - n,
//   AIC   = -2 log L + 2 k.
// Residuals are target - prediction.
inline AicReport aic_ald(std::span<const double> residuals, double tau, std::size_t k)
{
    if (residuals.empty()) throw DataError("AIC of an empty residual vector");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("AIC: tau must lie in (0, 1)");
    if (k == 0) throw ConfigError("AIC: parameter count must be at least 1");
    if (residuals.size() < k) throw ConfigError("AIC: fewer observations than parameters");
    AicReport r;
    r.tau = tau;
    r.k = k;
    r.n_obs = residuals.size();
    double sum = 0.0;
    for (double e : residuals) sum += check_rho(e, tau);
    const double n = static_cast<double>(residuals.size());
    r.mean_check_loss = sum / n;
    if (!(r.mean_check_loss > 0.0)) {
        r.degenerate = true;
        r.log_likelihood = std::numeric_limits<double>::infinity();
        r.aic = -std::numeric_limits<double>::infinity();
        return r;
    }
    r.log_likelihood = n * std::log(tau * (1.0 - tau)) - n * std::log(r.mean_check_loss) - n;
    r.aic = -2.0 * r.log_likelihood + 2.0 * static_cast<double>(k);
    return r;
}

inline AicReport aic_ald(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double tau, std::size_t k)
{
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("AIC: shape mismatch");
    const Eigen::MatrixXd e = target - pred;
    return aic_ald(std::span<const double>(e.data(), static_cast<std::size_t>(e.size())), tau, k);
}

}  // namespace lalr
