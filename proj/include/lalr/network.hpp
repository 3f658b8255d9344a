#pragma once

// Dense feed-forward regressor: initialization, traced forward pass,
// backpropagation and plain gradient steps. All arithmetic is double.
//
// Layout conventions: a batch is an m x d matrix (one row per example);
// layer l maps a^{l} (m x fan_in) to z^{l} = a^{l} W^{l} + b^{l} with W^{l}
// of shape fan_in x fan_out and b^{l} a row vector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lalr/activation.hpp"
#include "lalr/error.hpp"
#include "lalr/format.hpp"
#include "lalr/rng.hpp"

namespace lalr {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct LayerSpec
{
    std::size_t width = 1;
    ActivationKind activation = ActivationKind::relu();
    double dropout_rate = 0.0;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec
{
    std::size_t input_dim = 1;
    std::vector<LayerSpec> hidden;
    std::size_t output_dim = 1;
    ActivationKind output_activation = ActivationKind::linear();

    std::size_t layer_count() const { return hidden.size() + 1; }

    std::size_t fan_in(std::size_t layer) const { return layer == 0 ? input_dim : hidden[layer - 1].width; }

    std::size_t fan_out(std::size_t layer) const
    {
        return layer < hidden.size() ? hidden[layer].width : output_dim;
    }

    const ActivationKind& activation(std::size_t layer) const
    {
        return layer < hidden.size() ? hidden[layer].activation : output_activation;
    }

    // The output layer never drops units.
    double dropout(std::size_t layer) const { return layer < hidden.size() ? hidden[layer].dropout_rate : 0.0; }

    void validate() const
    {
        if (input_dim == 0) throw ConfigError("network input_dim must be positive");
        if (output_dim == 0) throw ConfigError("network output_dim must be positive");
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            if (hidden[i].width == 0) throw ConfigError("hidden layer " + std::to_string(i) + " has zero width");
            const double p = hidden[i].dropout_rate;
            if (!(p >= 0.0 && p < 1.0))
                throw ConfigError("hidden layer " + std::to_string(i) + " dropout rate must be in [0, 1)");
        }
    }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct Network
{
    NetworkSpec spec;
    std::vector<Matrix> weights;
    std::vector<RowVector> biases;

    std::size_t layer_count() const { return weights.size(); }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
        return n;
    }
};

inline bool operator==(const Network& a, const Network& b)
{
    if (!(a.spec == b.spec) || a.weights.size() != b.weights.size()) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        if (a.weights[l].rows() != b.weights[l].rows() || a.weights[l].cols() != b.weights[l].cols()) return false;
        if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    }
    return true;
}

// Glorot-uniform weights, zero biases.
inline Network init_network(const NetworkSpec& spec, std::uint64_t seed)
{
    spec.validate();
    Network net;
    net.spec = spec;
    Rng rng(derive_seed(seed, streams::init));
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const auto fan_in = spec.fan_in(l);
        const auto fan_out = spec.fan_out(l);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_in, fan_out);
        // Fill row-major so the draw order does not depend on Eigen's storage.
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-limit, limit);
        net.weights.push_back(std::move(w));
        net.biases.push_back(RowVector::Zero(static_cast<Eigen::Index>(fan_out)));
    }
    return net;
}

// Digest over shapes and raw weight bytes; equal digests for bit-identical nets.
inline std::string network_digest(const Network& net)
{
    std::uint64_t h = fnv1a(std::string_view("lalr-net"));
    auto mix = [&h](const double* data, Eigen::Index n) {
        h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(data),
                                                 static_cast<std::size_t>(n) * sizeof(double)),
                  h);
    };
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const double shape[2] = {static_cast<double>(net.weights[l].rows()), static_cast<double>(net.weights[l].cols())};
        mix(shape, 2);
        mix(net.weights[l].data(), net.weights[l].size());
        mix(net.biases[l].data(), net.biases[l].size());
    }
    return hex64(h);
}

enum class Mode { train, eval };

struct ForwardTrace
{
    // pre[l] = z^{l+1} for layer l; act[0] is the input, act[l+1] the output
    // of layer l (after dropout in train mode).
    std::vector<Matrix> pre;
    std::vector<Matrix> act;
    // Inverted-dropout multipliers (0 or 1/(1-p)) per layer; empty when the
    // layer had no dropout applied.
    std::vector<Matrix> masks;

    const Matrix& output() const { return act.back(); }

    // Input to the last layer, i.e. a^{[L-1]}; the input batch itself for a
    // network without hidden layers.
    const Matrix& penultimate() const { return act[act.size() - 2]; }
};

inline void check_input(const Network& net, const Matrix& x)
{
    if (static_cast<std::size_t>(x.cols()) != net.spec.input_dim)
        throw ShapeError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(net.spec.input_dim));
}

// Runs layers [0, stop) and returns the activation entering layer `stop`.
// Eval mode only; used for K_z without materialising a full trace.
inline Matrix forward_until(const Network& net, const Matrix& x, std::size_t stop)
{
    check_input(net, x);
    Matrix a = x;
    for (std::size_t l = 0; l < stop && l < net.layer_count(); ++l) {
        Matrix z = a * net.weights[l];
        z.rowwise() += net.biases[l];
        a = activate(net.spec.activation(l), z);
    }
    return a;
}

inline ForwardTrace forward(const Network& net, const Matrix& x, Mode mode, std::uint64_t seed)
{
    check_input(net, x);
    ForwardTrace trace;
    const std::size_t layers = net.layer_count();
    trace.pre.reserve(layers);
    trace.act.reserve(layers + 1);
    trace.masks.resize(layers);
    trace.act.push_back(x);
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix z = trace.act.back() * net.weights[l];
        z.rowwise() += net.biases[l];
        Matrix a = activate(net.spec.activation(l), z);
        const double p = net.spec.dropout(l);
        if (mode == Mode::train && p > 0.0) {
            Rng rng(derive_seed(seed, streams::dropout, l));
            const double keep_scale = 1.0 / (1.0 - p);
            Matrix mask(a.rows(), a.cols());
            for (Eigen::Index i = 0; i < mask.rows(); ++i)
                for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = rng.bernoulli(p) ? 0.0 : keep_scale;
            a.array() *= mask.array();
            trace.masks[l] = std::move(mask);
        }
        trace.pre.push_back(std::move(z));
        trace.act.push_back(std::move(a));
    }
    return trace;
}

inline Matrix predict(const Network& net, const Matrix& x)
{
    return forward_until(net, x, net.layer_count());
}

struct Gradients
{
    std::vector<Matrix> weights;
    std::vector<RowVector> biases;
};

// Gradients of the scalar loss whose derivative w.r.t. the network output is
// dE_dA.
inline Gradients backward(const Network& net, const ForwardTrace& trace, const Matrix& dE_dA)
{
    const Matrix& out = trace.output();
    if (dE_dA.rows() != out.rows() || dE_dA.cols() != out.cols())
        throw ShapeError("output gradient is " + std::to_string(dE_dA.rows()) + "x" + std::to_string(dE_dA.cols()) +
                         ", network output is " + std::to_string(out.rows()) + "x" + std::to_string(out.cols()));
    const std::size_t layers = net.layer_count();
    Gradients g;
    g.weights.resize(layers);
    g.biases.resize(layers);
    Matrix upstream = dE_dA;
    for (std::size_t l = layers; l-- > 0;) {
        if (trace.masks[l].size() != 0) upstream.array() *= trace.masks[l].array();
        const auto& kind = net.spec.activation(l);
        Matrix dz = kind.type == Activation::linear
                        ? std::move(upstream)
                        : Matrix(upstream.array() * activation_derivative(kind, trace.pre[l]).array());
        g.weights[l].noalias() = trace.act[l].transpose() * dz;
        g.biases[l] = dz.colwise().sum();
        if (l > 0) upstream.noalias() = dz * net.weights[l].transpose();
    }
    return g;
}

inline void check_learning_rate(double lr)
{
    if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("learning rate must be finite and non-negative");
}

inline void apply_update_in_place(Network& net, const Gradients& g, double lr)
{
    check_learning_rate(lr);
    if (g.weights.size() != net.weights.size()) throw ShapeError("gradient layer count does not match network");
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        if (g.weights[l].rows() != net.weights[l].rows() || g.weights[l].cols() != net.weights[l].cols() ||
            g.biases[l].size() != net.biases[l].size())
            throw ShapeError("gradient shape mismatch in layer " + std::to_string(l));
        net.weights[l] -= lr * g.weights[l];
        net.biases[l] -= lr * g.biases[l];
    }
}

inline Network apply_update(Network net, const Gradients& g, double lr)
{
    apply_update_in_place(net, g, lr);
    return net;
}

}  // namespace lalr
