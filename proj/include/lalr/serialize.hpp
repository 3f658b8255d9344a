#pragma once

// JSON forms of the configuration types. These are the canonical encodings used for
// config hashing and inside report documents.

#include <set>
#include <string>
#include <type_traits>
#include <utility>

#include <nlohmann/json.hpp>

#include "lalr/activation.hpp"
#include "lalr/lipschitz.hpp"
#include "lalr/losses.hpp"
#include "lalr/network.hpp"

namespace lalr {

inline nlohmann::json to_json(const NetworkSpec& spec)
{
    nlohmann::json hidden = nlohmann::json::array();
    for (const auto& h : spec.hidden)
        hidden.push_back({{"width", h.width}, {"activation", to_string(h.activation)}, {"dropout", h.dropout_rate}});
    return {{"input_dim", spec.input_dim},
            {"hidden", hidden},
            {"output_dim", spec.output_dim},
            {"output_activation", to_string(spec.output_activation)}};
}

inline nlohmann::json to_json(const LossSpec& loss)
{
    nlohmann::json j = {{"kind", loss.kind == LossKind::mae ? "mae" : loss.kind == LossKind::mse ? "mse" : "check"},
                        {"labels", loss.label_count}};
    if (loss.kind == LossKind::check) j["tau"] = loss.tau;
    return j;
}

inline nlohmann::json to_json(const LrPolicy& p)
{
    if (p.kind == LrKind::constant) return {{"policy", "constant"}, {"eta", p.eta}};
    return {{"policy", "lalr"}, {"eta_max", p.eta_max}, {"eta_min", p.eta_min}};
}

inline LossKind parse_loss_kind(const std::string& s)
{
    if (s == "mae") return LossKind::mae;
    if (s == "mse") return LossKind::mse;
    if (s == "check" || s == "quantile") return LossKind::check;
    throw ConfigError("unknown loss kind '" + s + "'");
}

// Strict reader over one JSON object. Every key that is read is marked as
// consumed; finish() rejects whatever is left, naming the full key path.
class JsonObject
{
public:
    JsonObject(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const nlohmann::json& raw(const std::string& key)
    {
        used_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) throw ConfigError("missing key '" + path(key) + "'");
        return *it;
    }

    template <typename T>
    T get(const std::string& key)
    {
        const auto& v = raw(key);
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            if (!v.is_number_unsigned())
                throw ConfigError("key '" + path(key) + "' must be a non-negative integer");
        }
        try {
            return v.get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("key '" + path(key) + "' has the wrong type (" + std::string(v.type_name()) + ")");
        }
    }

    template <typename T>
    T get(const std::string& key, T fallback)
    {
        if (!has(key)) {
            used_.insert(key);
            return fallback;
        }
        return get<T>(key);
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.contains(it.key())) throw ConfigError("unknown key '" + path(it.key()) + "'");
    }

private:
    std::string where() const { return path_.empty() ? "document root" : "'" + path_ + "'"; }

    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> used_;
};

// input_dim / output_dim may be omitted (read as 0) and filled in later from
// the dataset.
inline NetworkSpec network_spec_from_json(const nlohmann::json& j, const std::string& path = "network")
{
    JsonObject o(j, path);
    NetworkSpec spec;
    spec.input_dim = o.get<std::size_t>("input_dim", 0);
    spec.output_dim = o.get<std::size_t>("output_dim", 0);
    spec.output_activation = parse_activation(o.get<std::string>("output_activation", "linear"));
    spec.hidden.clear();
    if (o.has("hidden")) {
        const auto& hidden = o.raw("hidden");
        if (!hidden.is_array()) throw ConfigError("key '" + o.path("hidden") + "' must be an array");
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            JsonObject h(hidden[i], o.path("hidden") + "[" + std::to_string(i) + "]");
            LayerSpec layer;
            layer.width = h.get<std::size_t>("width");
            layer.activation = parse_activation(h.get<std::string>("activation", "relu"));
            layer.dropout_rate = h.get<double>("dropout", 0.0);
            h.finish();
            spec.hidden.push_back(layer);
        }
    }
    o.finish();
    return spec;
}

inline LossSpec loss_from_json(const nlohmann::json& j, const std::string& path = "loss")
{
    if (j.is_string()) {
        LossSpec loss;
        loss.kind = parse_loss_kind(j.get<std::string>());
        return loss;
    }
    JsonObject o(j, path);
    LossSpec loss;
    loss.kind = parse_loss_kind(o.get<std::string>("kind"));
    loss.label_count = o.get<std::size_t>("labels", 1);
    if (loss.kind == LossKind::check) loss.tau = o.get<double>("tau", 0.5);
    o.finish();
    loss.validate();
    return loss;
}

inline LrPolicy lr_policy_from_json(const nlohmann::json& j, const std::string& path = "lr")
{
    JsonObject o(j, path);
    const auto name = o.get<std::string>("policy");
    LrPolicy p;
    if (name == "constant") {
        p = LrPolicy::constant(o.get<double>("eta"));
    } else if (name == "lalr") {
        p = LrPolicy::lalr(o.get<double>("eta_max", 10.0), o.get<double>("eta_min", 1e-4));
    } else {
        throw ConfigError("key '" + o.path("policy") + "': unknown policy '" + name + "'");
    }
    o.finish();
    p.validate();
    return p;
}

}  // namespace lalr
