#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ennopt/common.hpp"

namespace ennopt {

/// Dense affine layer: rows are neurons of this layer, columns neurons of the previous one.
struct LayerWeights {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;

    int outputs() const { return static_cast<int>(W.rows()); }
    int inputs() const { return static_cast<int>(W.cols()); }
};

/// ReLU layers followed by a single affine output neuron.
struct Network {
    std::vector<LayerWeights> layers;

    int input_dim() const { return layers.empty() ? 0 : layers.front().inputs(); }
    int hidden_layers() const { return static_cast<int>(layers.size()) - 1; }
    bool is_output_layer(int k) const { return k + 1 == static_cast<int>(layers.size()); }

    void validate(int net_index = 0) const
    {
        const std::string who = "network " + std::to_string(net_index);
        if (layers.empty())
            throw ShapeError(who + ": no layers");
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const auto& L = layers[k];
            const std::string where = who + " layer " + std::to_string(k);
            if (L.W.rows() != L.b.size())
                throw ShapeError(where + ": W has " + std::to_string(L.W.rows()) + " rows but b has " +
                                 std::to_string(L.b.size()) + " entries");
            if (L.W.rows() == 0 || L.W.cols() == 0)
                throw ShapeError(where + ": empty weight matrix");
            if (k > 0 && L.W.cols() != layers[k - 1].W.rows())
                throw ShapeError(where + ": expects " + std::to_string(L.W.cols()) + " inputs but previous layer has " +
                                 std::to_string(layers[k - 1].W.rows()) + " neurons");
            if (!L.W.allFinite() || !L.b.allFinite())
                throw ShapeError(where + ": non-finite weight or bias");
        }
        if (layers.back().W.rows() != 1)
            throw ShapeError(who + ": output layer must have exactly one neuron");
    }
};

struct InputBox {
    std::vector<double> lo;
    std::vector<double> hi;

    int dim() const { return static_cast<int>(lo.size()); }

    static InputBox unit(int n) { return InputBox{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)}; }

    void validate() const
    {
        if (lo.size() != hi.size())
            throw ShapeError("InputBox: lo/hi length mismatch");
        for (std::size_t j = 0; j < lo.size(); ++j)
            if (!(lo[j] <= hi[j]) || !std::isfinite(lo[j]) || !std::isfinite(hi[j]))
                throw ShapeError("InputBox: invalid interval at coordinate " + std::to_string(j));
    }

    bool contains(std::span<const double> x, double tol = 1e-9) const
    {
        if (static_cast<int>(x.size()) != dim())
            return false;
        for (std::size_t j = 0; j < x.size(); ++j)
            if (x[j] < lo[j] - tol || x[j] > hi[j] + tol)
                return false;
        return true;
    }

    bool subset_of(const InputBox& other, double tol = 0.0) const
    {
        for (int j = 0; j < dim(); ++j)
            if (lo[j] < other.lo[j] - tol || hi[j] > other.hi[j] + tol)
                return false;
        return true;
    }

    std::vector<double> center() const
    {
        std::vector<double> c(lo.size());
        for (std::size_t j = 0; j < lo.size(); ++j)
            c[j] = 0.5 * (lo[j] + hi[j]);
        return c;
    }

    bool operator==(const InputBox&) const = default;
};

/// Min-max scaling between original units and the [0,1] training range.
struct Scaler {
    std::vector<double> input_min;
    std::vector<double> input_max;
    double output_min = 0.0;
    double output_max = 1.0;

    static Scaler identity(int n)
    {
        return Scaler{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0), 0.0, 1.0};
    }

    void validate(int n) const
    {
        if (static_cast<int>(input_min.size()) != n || static_cast<int>(input_max.size()) != n)
            throw ShapeError("Scaler: input range length does not match input_dim");
        for (int j = 0; j < n; ++j)
            if (!(input_max[j] > input_min[j]))
                throw ScalingError("Scaler: input_max must exceed input_min for feature " + std::to_string(j));
        if (!(output_max > output_min))
            throw ScalingError("Scaler: output_max must exceed output_min");
    }

    std::vector<double> unscale_input(std::span<const double> x) const
    {
        std::vector<double> u(x.size());
        for (std::size_t j = 0; j < x.size(); ++j)
            u[j] = x[j] * (input_max[j] - input_min[j]) + input_min[j];
        return u;
    }

    std::vector<double> scale_input(std::span<const double> u) const
    {
        std::vector<double> x(u.size());
        for (std::size_t j = 0; j < u.size(); ++j)
            x[j] = (u[j] - input_min[j]) / (input_max[j] - input_min[j]);
        return x;
    }

    double unscale_output(double v) const { return v * (output_max - output_min) + output_min; }
    double scale_output(double u) const { return (u - output_min) / (output_max - output_min); }
};

enum class ObjectiveSense { maximize, minimize };

struct EnsembleModel {
    std::vector<Network> networks;
    int input_dim = 0;
    InputBox box;
    Scaler scaler;
    ObjectiveSense sense = ObjectiveSense::maximize;

    int size() const { return static_cast<int>(networks.size()); }

    void validate() const
    {
        if (networks.empty())
            throw ShapeError("EnsembleModel: needs at least one network");
        if (input_dim <= 0)
            throw ShapeError("EnsembleModel: input_dim must be positive");
        for (std::size_t i = 0; i < networks.size(); ++i) {
            networks[i].validate(static_cast<int>(i));
            if (networks[i].input_dim() != input_dim)
                throw ShapeError("network " + std::to_string(i) + ": first layer expects " +
                                 std::to_string(networks[i].input_dim()) + " inputs, ensemble input_dim is " +
                                 std::to_string(input_dim));
        }
        box.validate();
        if (box.dim() != input_dim)
            throw ShapeError("EnsembleModel: box dimension does not match input_dim");
        scaler.validate(input_dim);
    }
};

/// Identifies an intermediate or output neuron: `layer` indexes Network::layers.
struct NeuronId {
    int net = 0;
    int layer = 0;
    int index = 0;
    auto operator<=>(const NeuronId&) const = default;
};

/// Exact network output. Hidden layers apply max(0, Wy + b); the last layer is affine.
inline double forward_network(const Network& net, std::span<const double> x)
{
    if (static_cast<int>(x.size()) != net.input_dim())
        throw ShapeError("forward_network: input has " + std::to_string(x.size()) + " entries, network expects " +
                         std::to_string(net.input_dim()));
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        Eigen::VectorXd h = net.layers[k].W * y + net.layers[k].b;
        if (k + 1 < net.layers.size())
            y = h.cwiseMax(0.0);
        else
            y = std::move(h);
    }
    return y[0];
}

/// Pre-activation values of every layer (hidden and output) at x.
inline std::vector<Eigen::VectorXd> forward_preactivations(const Network& net, std::span<const double> x)
{
    if (static_cast<int>(x.size()) != net.input_dim())
        throw ShapeError("forward_preactivations: input dimension mismatch");
    std::vector<Eigen::VectorXd> out;
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    for (const auto& L : net.layers) {
        Eigen::VectorXd h = L.W * y + L.b;
        y = h.cwiseMax(0.0);
        out.push_back(std::move(h));
    }
    return out;
}

/// Mean network output at x, in scaled units, regardless of the model's sense.
inline double forward_ensemble(const EnsembleModel& model, std::span<const double> x)
{
    if (static_cast<int>(x.size()) != model.input_dim)
        throw ShapeError("forward_ensemble: input has " + std::to_string(x.size()) + " entries, model expects " +
                         std::to_string(model.input_dim));
    if (!model.box.contains(x, 1e-9))
        throw DomainError("forward_ensemble: point lies outside the model box");
    double s = 0.0;
    for (const auto& net : model.networks)
        s += forward_network(net, x);
    return s / static_cast<double>(model.networks.size());
}

inline double unscale_objective(const EnsembleModel& model, double v_scaled)
{
    return model.scaler.unscale_output(v_scaled);
}

/// Copy whose ensemble mean is to be maximized: minimization models get their
/// output layers negated.
inline EnsembleModel as_maximization(const EnsembleModel& model)
{
    EnsembleModel m = model;
    if (m.sense == ObjectiveSense::minimize) {
        for (auto& net : m.networks) {
            net.layers.back().W = -net.layers.back().W;
            net.layers.back().b = -net.layers.back().b;
        }
        m.sense = ObjectiveSense::maximize;
    }
    return m;
}

/// +1 for maximization models, -1 for minimization ones.
inline double sense_sign(const EnsembleModel& model) { return model.sense == ObjectiveSense::maximize ? 1.0 : -1.0; }

inline int total_hidden_neurons(const EnsembleModel& model)
{
    int n = 0;
    for (const auto& net : model.networks)
        for (int k = 0; k + 1 < static_cast<int>(net.layers.size()); ++k)
            n += net.layers[k].outputs();
    return n;
}

// ---------------------------------------------------------------------------
// JSON model file

namespace detail {

using nlohmann::json;

inline double finite_number(const json& v, const std::string& where)
{
    if (!v.is_number())
        throw ParseError(where + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d))
        throw ParseError(where + ": non-finite value");
    return d;
}

inline std::vector<double> number_array(const json& v, const std::string& where)
{
    if (!v.is_array())
        throw ParseError(where + ": expected an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t k = 0; k < v.size(); ++k)
        out.push_back(finite_number(v[k], where + "[" + std::to_string(k) + "]"));
    return out;
}

inline const json& require(const json& obj, const char* key, const std::string& where)
{
    if (!obj.is_object() || !obj.contains(key))
        throw ParseError(where + ": missing key '" + key + "'");
    return obj.at(key);
}

inline json vector_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

} // namespace detail

inline nlohmann::json model_to_json(const EnsembleModel& model)
{
    using nlohmann::json;
    json j;
    j["input_dim"] = model.input_dim;
    j["sense"] = model.sense == ObjectiveSense::maximize ? "max" : "min";
    j["box"] = {{"lo", model.box.lo}, {"hi", model.box.hi}};
    j["scaler"] = {{"input_min", model.scaler.input_min},
                   {"input_max", model.scaler.input_max},
                   {"output_min", model.scaler.output_min},
                   {"output_max", model.scaler.output_max}};
    json nets = json::array();
    for (const auto& net : model.networks) {
        json layers = json::array();
        for (const auto& L : net.layers) {
            json W = json::array();
            for (Eigen::Index r = 0; r < L.W.rows(); ++r) {
                std::vector<double> row(static_cast<std::size_t>(L.W.cols()));
                for (Eigen::Index c = 0; c < L.W.cols(); ++c)
                    row[static_cast<std::size_t>(c)] = L.W(r, c);
                W.push_back(row);
            }
            layers.push_back({{"W", W}, {"b", detail::vector_json({L.b.data(), static_cast<std::size_t>(L.b.size())})}});
        }
        nets.push_back({{"layers", layers}});
    }
    j["networks"] = nets;
    return j;
}

inline EnsembleModel model_from_json(const nlohmann::json& j)
{
    using detail::require;
    EnsembleModel m;
    const auto& dim = require(j, "input_dim", "model");
    if (!dim.is_number_integer())
        throw ParseError("model: input_dim must be an integer");
    m.input_dim = dim.get<int>();
    const auto& sense = require(j, "sense", "model");
    if (sense == "max")
        m.sense = ObjectiveSense::maximize;
    else if (sense == "min")
        m.sense = ObjectiveSense::minimize;
    else
        throw ParseError("model: sense must be \"max\" or \"min\"");
    const auto& box = require(j, "box", "model");
    m.box.lo = detail::number_array(require(box, "lo", "box"), "box.lo");
    m.box.hi = detail::number_array(require(box, "hi", "box"), "box.hi");
    const auto& sc = require(j, "scaler", "model");
    m.scaler.input_min = detail::number_array(require(sc, "input_min", "scaler"), "scaler.input_min");
    m.scaler.input_max = detail::number_array(require(sc, "input_max", "scaler"), "scaler.input_max");
    m.scaler.output_min = detail::finite_number(require(sc, "output_min", "scaler"), "scaler.output_min");
    m.scaler.output_max = detail::finite_number(require(sc, "output_max", "scaler"), "scaler.output_max");
    const auto& nets = require(j, "networks", "model");
    if (!nets.is_array())
        throw ParseError("model: networks must be an array");
    for (std::size_t i = 0; i < nets.size(); ++i) {
        const std::string who = "network " + std::to_string(i);
        const auto& layers = require(nets[i], "layers", who);
        if (!layers.is_array() || layers.empty())
            throw ParseError(who + ": layers must be a non-empty array");
        Network net;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const std::string where = who + " layer " + std::to_string(k);
            const auto& Wj = require(layers[k], "W", where);
            if (!Wj.is_array() || Wj.empty())
                throw ParseError(where + ": W must be a non-empty array of rows");
            const auto b = detail::number_array(require(layers[k], "b", where), where + " b");
            std::vector<std::vector<double>> rows;
            for (std::size_t r = 0; r < Wj.size(); ++r)
                rows.push_back(detail::number_array(Wj[r], where + " W row " + std::to_string(r)));
            const std::size_t cols = rows.front().size();
            for (const auto& row : rows)
                if (row.size() != cols)
                    throw ParseError(where + ": ragged W rows");
            if (b.size() != rows.size())
                throw ParseError(where + ": b has " + std::to_string(b.size()) + " entries but W has " +
                                 std::to_string(rows.size()) + " rows");
            LayerWeights L;
            L.W.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    L.W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
            L.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
            net.layers.push_back(std::move(L));
        }
        m.networks.push_back(std::move(net));
    }
    try {
        m.validate();
    } catch (const ShapeError& e) {
        throw ParseError(std::string("model: ") + e.what());
    } catch (const ScalingError& e) {
        throw ParseError(std::string("model: ") + e.what());
    }
    return m;
}

inline void save_model(const EnsembleModel& model, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    out << model_to_json(model).dump(1) << '\n';
}

inline EnsembleModel load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model file '" + path + "': " + e.what());
    }
    return model_from_json(j);
}

} // namespace ennopt
