#pragma once

// Lipschitz constants of the MAE and check losses w.r.t. last-layer weights,
// and the learning rate eta = 1 / L derived from them.
//
//   MAE, one label      L = K_z / m
//   MAE, n labels       L = K_z / (m n)
//   check loss (tau)    L = K_z * max(tau, 1 - tau) / (m n)
//
// K_z is the largest |activation| entering the output layer over the
// training data, m the configured batch size and n the label count. The
// bound assumes |da/dz| <= 1 for the output activation, which holds for
// every ActivationKind with slope <= 1.

#include <algorithm>
#include <cmath>
#include <string>

#include "lalr/error.hpp"
#include "lalr/losses.hpp"
#include "lalr/network.hpp"
#include "lalr/rng.hpp"

namespace lalr {

// max |a^{[L-1]}_j| over all rows of `x`, computed in eval mode (dropout off).
// For a network without hidden layers this is max |x|.
//
// `max_rows` > 0 evaluates only a deterministic subsample of that many rows;
// this is an approximation intended for very large training sets.
inline double penultimate_max(const Network& net, const Matrix& x, std::size_t max_rows = 0,
                              std::uint64_t sample_seed = 0)
{
    if (x.rows() == 0) throw DataError("cannot compute K_z on an empty training set");
    check_input(net, x);
    const std::size_t stop = net.layer_count() - 1;
    if (stop == 0 && max_rows == 0) return x.cwiseAbs().maxCoeff();

    auto chunk_max = [&](const Matrix& rows) {
        return stop == 0 ? rows.cwiseAbs().maxCoeff() : forward_until(net, rows, stop).cwiseAbs().maxCoeff();
    };

    if (max_rows > 0 && static_cast<Eigen::Index>(max_rows) < x.rows()) {
        auto perm = permutation(static_cast<std::size_t>(x.rows()), sample_seed);
        perm.resize(max_rows);
        std::sort(perm.begin(), perm.end());
        return chunk_max(x(perm, Eigen::all));
    }

    // Chunked so the working set stays small on large datasets.
    constexpr Eigen::Index chunk = 4096;
    double kz = 0.0;
    for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
        const Eigen::Index len = std::min(chunk, x.rows() - start);
        kz = std::max(kz, chunk_max(x.middleRows(start, len)));
    }
    return kz;
}

struct LipschitzInputs
{
    double kz = 0.0;
    std::size_t batch_size = 1;
    std::size_t label_count = 1;
    LossSpec loss = LossSpec::mae();
};

inline double lipschitz_constant(const LipschitzInputs& in)
{
    if (!(in.kz >= 0.0) || !std::isfinite(in.kz)) throw ConfigError("K_z must be finite and non-negative");
    if (in.batch_size == 0 || in.label_count == 0) throw ConfigError("batch size and label count must be positive");
    const double mn = static_cast<double>(in.batch_size) * static_cast<double>(in.label_count);
    switch (in.loss.kind) {
    case LossKind::mae:
        return in.kz / mn;
    case LossKind::check:
        in.loss.validate();
        return in.kz * std::max(in.loss.tau, 1.0 - in.loss.tau) / mn;
    case LossKind::mse:
        break;
    }
    throw UnsupportedLoss("no closed-form Lipschitz constant for " + to_string(in.loss));
}

enum class LrKind { constant, lalr };

struct LrPolicy
{
    LrKind kind = LrKind::lalr;
    double eta = 0.1;  // constant policy
    double eta_max = 10.0;
    double eta_min = 1e-4;

    static LrPolicy constant(double eta) { return {LrKind::constant, eta, 10.0, 1e-4}; }
    static LrPolicy lalr(double eta_max = 10.0, double eta_min = 1e-4) { return {LrKind::lalr, 0.1, eta_max, eta_min}; }

    // A constant rate of 0 is accepted: it freezes the network, which is how
    // the evaluation-consistency checks run an epoch without training.
    void validate() const
    {
        if (kind == LrKind::constant) {
            if (!std::isfinite(eta) || eta < 0.0) throw ConfigError("constant learning rate must be finite and >= 0");
            return;
        }
        if (!(eta_min > 0.0) || !(eta_min <= eta_max) || !std::isfinite(eta_max))
            throw ConfigError("LALR bounds must satisfy 0 < eta_min <= eta_max < inf");
    }

    friend bool operator==(const LrPolicy&, const LrPolicy&) = default;
};

inline std::string to_string(const LrPolicy& p)
{
    return p.kind == LrKind::constant ? "constant" : "lalr";
}

struct LearningRate
{
    double eta = 0.0;
    bool clamped = false;
};

inline LearningRate learning_rate(const LrPolicy& policy, double lipschitz)
{
    if (policy.kind == LrKind::constant) return {policy.eta, false};
    if (!(lipschitz > 0.0)) return {policy.eta_max, true};  // L == 0 (or NaN)
    const double raw = 1.0 / lipschitz;
    if (raw > policy.eta_max) return {policy.eta_max, true};
    if (raw < policy.eta_min) return {policy.eta_min, true};
    return {raw, false};
}

}  // namespace lalr
