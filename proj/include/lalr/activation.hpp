#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "lalr/error.hpp"
#include "lalr/format.hpp"

namespace lalr {

enum class Activation { relu, leaky_relu, softsign, softplus, linear };

struct ActivationKind
{
    Activation type = Activation::linear;
    double slope = 0.3;  // negative-side slope, LeakyReLU only

    static ActivationKind relu() { return {Activation::relu, 0.0}; }
    static ActivationKind leaky_relu(double slope = 0.3) { return {Activation::leaky_relu, slope}; }
    static ActivationKind softsign() { return {Activation::softsign, 0.0}; }
    static ActivationKind softplus() { return {Activation::softplus, 0.0}; }
    static ActivationKind linear() { return {Activation::linear, 0.0}; }

    friend bool operator==(const ActivationKind& a, const ActivationKind& b)
    {
        if (a.type != b.type) return false;
        return a.type != Activation::leaky_relu || a.slope == b.slope;
    }
};

struct ActivationValue
{
    double value;
    double derivative;
};

namespace detail {

inline double softplus_value(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// The logistic function, evaluated without overflow.
inline double softplus_derivative(double z)
{
    const double e = std::exp(-std::abs(z));
    return z >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
}

}  // namespace detail

// Value and exact derivative. ReLU and LeakyReLU take the left derivative at
// z == 0 (0 and slope respectively).
inline ActivationValue activation_eval(const ActivationKind& kind, double z)
{
    switch (kind.type) {
    case Activation::relu:
        return z > 0.0 ? ActivationValue{z, 1.0} : ActivationValue{0.0, 0.0};
    case Activation::leaky_relu:
        return z > 0.0 ? ActivationValue{z, 1.0} : ActivationValue{kind.slope * z, kind.slope};
    case Activation::softsign: {
        const double d = 1.0 + std::abs(z);
        return {z / d, 1.0 / (d * d)};
    }
    case Activation::softplus:
        return {detail::softplus_value(z), detail::softplus_derivative(z)};
    case Activation::linear:
        return {z, 1.0};
    }
    return {z, 1.0};
}

// The matrix forms dispatch once per call, not once per element.
inline Eigen::MatrixXd activate(const ActivationKind& kind, const Eigen::MatrixXd& z)
{
    switch (kind.type) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::leaky_relu: {
        const double slope = kind.slope;
        return z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    }
    case Activation::softsign: return z.unaryExpr([](double v) { return v / (1.0 + std::abs(v)); });
    case Activation::softplus: return z.unaryExpr([](double v) { return detail::softplus_value(v); });
    case Activation::linear: break;
    }
    return z;
}

inline Eigen::MatrixXd activation_derivative(const ActivationKind& kind, const Eigen::MatrixXd& z)
{
    switch (kind.type) {
    case Activation::relu: return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::leaky_relu: {
        const double slope = kind.slope;
        return z.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    }
    case Activation::softsign:
        return z.unaryExpr([](double v) {
            const double d = 1.0 + std::abs(v);
            return 1.0 / (d * d);
        });
    case Activation::softplus: return z.unaryExpr([](double v) { return detail::softplus_derivative(v); });
    case Activation::linear: break;
    }
    return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

inline std::string to_string(const ActivationKind& kind)
{
    switch (kind.type) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu:" + format_double(kind.slope);
    case Activation::softsign: return "softsign";
    case Activation::softplus: return "softplus";
    case Activation::linear: return "linear";
    }
    return "linear";
}

// Accepts "relu", "leaky_relu", "leaky_relu:0.1", "softsign", "softplus",
// "linear".
inline ActivationKind parse_activation(std::string_view name)
{
    if (name == "relu") return ActivationKind::relu();
    if (name == "softsign") return ActivationKind::softsign();
    if (name == "softplus") return ActivationKind::softplus();
    if (name == "linear") return ActivationKind::linear();
    if (name.starts_with("leaky_relu")) {
        auto rest = name.substr(std::string_view("leaky_relu").size());
        if (rest.empty()) return ActivationKind::leaky_relu();
        if (rest.front() == ':') {
            try {
                return ActivationKind::leaky_relu(std::stod(std::string(rest.substr(1))));
            } catch (const std::exception&) {
            }
        }
    }
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

}  // namespace lalr
