#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "ennopt/model.hpp"

using namespace ennopt;

namespace {

// Scalar re-implementation of the forward pass using plain loops.
double interpret(const Network& net, const std::vector<double>& x)
{
    std::vector<double> y = x;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const auto& L = net.layers[k];
        std::vector<double> h(L.outputs());
        for (int r = 0; r < L.outputs(); ++r) {
            double s = L.b[r];
            for (int c = 0; c < L.inputs(); ++c)
                s += L.W(r, c) * y[c];
            h[r] = (k + 1 < net.layers.size()) ? (s > 0 ? s : 0.0) : s;
        }
        y = h;
    }
    return y[0];
}

Network random_network(std::mt19937_64& rng, int n, std::vector<int> widths)
{
    std::normal_distribution<double> g(0.0, 1.0);
    Network net;
    int prev = n;
    widths.push_back(1);
    for (int w : widths) {
        LayerWeights L;
        L.W = Eigen::MatrixXd(w, prev);
        L.b = Eigen::VectorXd(w);
        for (int r = 0; r < w; ++r) {
            for (int c = 0; c < prev; ++c)
                L.W(r, c) = g(rng);
            L.b[r] = g(rng);
        }
        net.layers.push_back(L);
        prev = w;
    }
    return net;
}

EnsembleModel random_model(std::mt19937_64& rng, int n, int e)
{
    EnsembleModel m;
    m.input_dim = n;
    m.box = InputBox::unit(n);
    m.scaler = Scaler::identity(n);
    for (int i = 0; i < e; ++i)
        m.networks.push_back(random_network(rng, n, {5, 4}));
    return m;
}

} // namespace

TEST(Model, HandComputedSingleNeuron)
{
    // h = x1 - x2, output = 2 relu(h) + 1
    Network net;
    LayerWeights a, b;
    a.W = Eigen::MatrixXd{{1.0, -1.0}};
    a.b = Eigen::VectorXd::Zero(1);
    b.W = Eigen::MatrixXd{{2.0}};
    b.b = Eigen::VectorXd::Constant(1, 1.0);
    net.layers = {a, b};
    const std::vector<double> x1{0.75, 0.25}, x2{0.25, 0.75};
    EXPECT_DOUBLE_EQ(forward_network(net, x1), 2.0);
    EXPECT_DOUBLE_EQ(forward_network(net, x2), 1.0);
}

TEST(Model, ForwardMatchesInterpreterOnRandomNetworks)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        const auto m = random_model(rng, 3, 3);
        for (int s = 0; s < 50; ++s) {
            std::vector<double> x{u(rng), u(rng), u(rng)};
            double mean = 0.0;
            for (const auto& net : m.networks)
                mean += interpret(net, x);
            mean /= 3.0;
            EXPECT_NEAR(forward_ensemble(m, x), mean, 1e-12);
        }
    }
}

TEST(Model, ForwardRejectsBadInput)
{
    std::mt19937_64 rng(3);
    const auto m = random_model(rng, 2, 1);
    EXPECT_THROW(forward_ensemble(m, std::vector<double>{0.5}), ShapeError);
    EXPECT_THROW(forward_ensemble(m, std::vector<double>{0.5, 1.5}), DomainError);
    EXPECT_NO_THROW(forward_ensemble(m, std::vector<double>{0.5, 1.0 + 1e-10}));
}

TEST(Model, JsonRoundTripIsExact)
{
    std::mt19937_64 rng(5);
    auto m = random_model(rng, 3, 2);
    m.sense = ObjectiveSense::minimize;
    m.scaler.output_min = -2.0;
    m.scaler.output_max = 7.5;
    const auto path = (std::filesystem::temp_directory_path() / "ennopt_model_rt.json").string();
    save_model(m, path);
    const auto back = load_model(path);
    std::remove(path.c_str());
    ASSERT_EQ(back.size(), m.size());
    EXPECT_EQ(back.sense, ObjectiveSense::minimize);
    EXPECT_EQ(back.box, m.box);
    for (int i = 0; i < m.size(); ++i)
        for (std::size_t k = 0; k < m.networks[i].layers.size(); ++k) {
            EXPECT_EQ(back.networks[i].layers[k].W, m.networks[i].layers[k].W);
            EXPECT_EQ(back.networks[i].layers[k].b, m.networks[i].layers[k].b);
        }
    EXPECT_DOUBLE_EQ(unscale_objective(back, 0.5), 0.5 * 9.5 - 2.0);
}

TEST(Model, ParseErrorsNameTheOffendingLayer)
{
    std::mt19937_64 rng(5);
    auto j = model_to_json(random_model(rng, 2, 2));
    j["networks"][1]["layers"][1]["b"].push_back(0.0);
    try {
        model_from_json(j);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("network 1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("layer 1"), std::string::npos) << msg;
    }
    auto k = model_to_json(random_model(rng, 2, 1));
    k["sense"] = "sideways";
    EXPECT_THROW(model_from_json(k), ParseError);
    auto z = model_to_json(random_model(rng, 2, 1));
    z["scaler"]["output_max"] = z["scaler"]["output_min"];
    EXPECT_THROW(model_from_json(z), ParseError);
}

TEST(Model, MaximizationCopyNegatesOutput)
{
    std::mt19937_64 rng(9);
    auto m = random_model(rng, 2, 2);
    m.sense = ObjectiveSense::minimize;
    const auto mx = as_maximization(m);
    EXPECT_EQ(mx.sense, ObjectiveSense::maximize);
    const std::vector<double> x{0.3, 0.6};
    EXPECT_NEAR(forward_ensemble(mx, x), -forward_ensemble(m, x), 1e-12);
}
