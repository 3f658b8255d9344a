#pragma once

// Regression losses and their output-layer (sub)gradients.
//
// Every loss is normalized by m*n (batch rows times label count). Residuals
// are oriented as e = target - prediction, which is the convention the check
// loss is written in; MAE and MSE are symmetric so the orientation only shows
// up in gradient signs.

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "lalr/error.hpp"
#include "lalr/format.hpp"

namespace lalr {

enum class LossKind { mae, mse, check };

struct LossSpec
{
    LossKind kind = LossKind::mae;
    double tau = 0.5;  // Check only
    std::size_t label_count = 1;

    static LossSpec mae(std::size_t n = 1) { return {LossKind::mae, 0.5, n}; }
    static LossSpec mse(std::size_t n = 1) { return {LossKind::mse, 0.5, n}; }
    static LossSpec check(double tau, std::size_t n = 1) { return {LossKind::check, tau, n}; }

    void validate() const
    {
        if (label_count == 0) throw ConfigError("loss label_count must be positive");
        if (kind == LossKind::check && !(tau > 0.0 && tau < 1.0))
            throw ConfigError("check loss tau must lie in (0, 1), got " + format_double(tau));
    }

    friend bool operator==(const LossSpec& a, const LossSpec& b)
    {
        if (a.kind != b.kind || a.label_count != b.label_count) return false;
        return a.kind != LossKind::check || a.tau == b.tau;
    }
};

inline std::string to_string(const LossSpec& loss)
{
    switch (loss.kind) {
    case LossKind::mae: return "mae";
    case LossKind::mse: return "mse";
    case LossKind::check: return "check:" + format_double(loss.tau);
    }
    return "mae";
}

namespace detail {

inline void check_same_shape(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target)
{
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw ShapeError("prediction is " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                         ", target is " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
    if (pred.size() == 0) throw ShapeError("loss of an empty batch");
}

inline double normalizer(const Eigen::MatrixXd& pred) { return static_cast<double>(pred.rows() * pred.cols()); }

inline void check_tau(double tau)
{
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("check loss tau must lie in (0, 1), got " + format_double(tau));
}

}  // namespace detail

inline double mae(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target)
{
    detail::check_same_shape(pred, target);
    // Same scalar reduction order as check_loss, so check(0.5) is exactly half of this.
    return (pred - target).unaryExpr([](double d) { return std::abs(d); }).sum() / detail::normalizer(pred);
}

// sign(pred - target) / (m n), with sign(0) = 0.
inline Eigen::MatrixXd mae_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target)
{
    detail::check_same_shape(pred, target);
    const double scale = 1.0 / detail::normalizer(pred);
    return (pred - target).unaryExpr([scale](double d) { return d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0); });
}

// rho_tau(e) = tau * e for e >= 0, -(1 - tau) * e otherwise.
inline double check_rho(double e, double tau) { return e >= 0.0 ? tau * e : -(1.0 - tau) * e; }

inline double check_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double tau)
{
    detail::check_same_shape(pred, target);
    detail::check_tau(tau);
    return (target - pred).unaryExpr([tau](double e) { return check_rho(e, tau); }).sum() /
           detail::normalizer(pred);
}

// d/dpred of the mean check loss. At e == 0 the tau-side branch (-tau) is used.
inline Eigen::MatrixXd check_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double tau)
{
    detail::check_same_shape(pred, target);
    detail::check_tau(tau);
    const double scale = 1.0 / detail::normalizer(pred);
    const double below = -tau * scale;
    const double above = (1.0 - tau) * scale;
    return (target - pred).unaryExpr([=](double e) { return e >= 0.0 ? below : above; });
}

inline double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target)
{
    detail::check_same_shape(pred, target);
    return (pred - target).squaredNorm() / detail::normalizer(pred);
}

inline Eigen::MatrixXd mse_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target)
{
    detail::check_same_shape(pred, target);
    return (2.0 / detail::normalizer(pred)) * (pred - target);
}

inline double loss_value(const LossSpec& loss, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target)
{
    switch (loss.kind) {
    case LossKind::mae: return mae(pred, target);
    case LossKind::mse: return mse(pred, target);
    case LossKind::check: return check_loss(pred, target, loss.tau);
    }
    return mae(pred, target);
}

inline Eigen::MatrixXd loss_grad(const LossSpec& loss, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target)
{
    switch (loss.kind) {
    case LossKind::mae: return mae_grad(pred, target);
    case LossKind::mse: return mse_grad(pred, target);
    case LossKind::check: return check_grad(pred, target, loss.tau);
    }
    return mae_grad(pred, target);
}

}  // namespace lalr
