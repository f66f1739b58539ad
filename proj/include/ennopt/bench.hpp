#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ennopt/common.hpp"
#include "ennopt/model.hpp"

namespace ennopt {

// Benchmark functions

enum class BenchmarkId { peaks, beale, perm3, spring5 };

struct BenchmarkFn {
    BenchmarkId id;
    std::string name;
    InputBox domain;
    double known_opt_value;
    std::vector<double> known_opt_point;
};

inline double peaks(double x1, double x2)
{
    return 3.0 * (1 - x1) * (1 - x1) * std::exp(-x1 * x1 - (x2 + 1) * (x2 + 1)) -
           10.0 * (x1 / 5 - std::pow(x1, 3) - std::pow(x2, 5)) * std::exp(-x1 * x1 - x2 * x2) -
           std::exp(-(x1 + 1) * (x1 + 1) - x2 * x2) / 3.0;
}

inline double beale(double x1, double x2)
{
    const double a = 1.5 - x1 + x1 * x2;
    const double b = 2.25 - x1 + x1 * x2 * x2;
    const double c = 2.625 - x1 + x1 * x2 * x2 * x2;
    return a * a + b * b + c * c;
}

inline double perm3(std::span<const double> x)
{
    double total = 0.0;
    for (int k = 1; k <= 3; ++k) {
        double inner = 0.0;
        for (int j = 1; j <= 3; ++j)
            inner += (std::pow(j, k) + 0.5) * (std::pow(x[j - 1] / j, k) - 1.0);
        total += inner * inner;
    }
    return total;
}

inline double spring5(std::span<const double> x)
{
    double r2 = 0.0;
    for (int i = 0; i < 5; ++i)
        r2 += (x[i] - 4.0) * (x[i] - 4.0);
    return 0.1 * r2 - std::cos(4.0 * std::sqrt(r2));
}

inline BenchmarkFn benchmark(BenchmarkId id)
{
    switch (id) {
    case BenchmarkId::peaks: return {id, "peaks", {{-3, -3}, {3, 3}}, -6.551, {0.228, -1.626}};
    case BenchmarkId::beale: return {id, "beale", {{-4.5, -4.5}, {4.5, 4.5}}, 0.0, {3.0, 0.5}};
    case BenchmarkId::perm3: return {id, "perm3", {{-3, -3, -3}, {4, 4, 4}}, 0.0, {1, 2, 3}};
    case BenchmarkId::spring5:
        return {id, "spring5", {std::vector<double>(5, 0.0), std::vector<double>(5, 8.0)}, -1.0,
                std::vector<double>(5, 4.0)};
    }
    throw PreconditionError("unknown benchmark");
}

inline BenchmarkFn benchmark(const std::string& name)
{
    for (auto id : {BenchmarkId::peaks, BenchmarkId::beale, BenchmarkId::perm3, BenchmarkId::spring5})
        if (benchmark(id).name == name)
            return benchmark(id);
    throw PreconditionError("unknown benchmark function '" + name + "' (expected peaks, beale, perm3 or spring5)");
}

inline double eval_benchmark(const BenchmarkFn& f, std::span<const double> x)
{
    if (static_cast<int>(x.size()) != f.domain.dim())
        throw ShapeError(f.name + ": expected " + std::to_string(f.domain.dim()) + " coordinates");
    if (!f.domain.contains(x))
        throw DomainError(f.name + ": point outside the domain");
    switch (f.id) {
    case BenchmarkId::peaks: return peaks(x[0], x[1]);
    case BenchmarkId::beale: return beale(x[0], x[1]);
    case BenchmarkId::perm3: return perm3(x);
    case BenchmarkId::spring5: return spring5(x);
    }
    return 0.0;
}

// Datasets

enum class Provenance { lhs, mvn, csv };

struct Dataset {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    Provenance provenance = Provenance::csv;

    int rows() const { return static_cast<int>(X.rows()); }
    int dim() const { return static_cast<int>(X.cols()); }
};

namespace detail {

inline Eigen::VectorXd evaluate_rows(const BenchmarkFn& f, const Eigen::MatrixXd& X)
{
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        const Eigen::VectorXd row = X.row(r).transpose();
        y[r] = eval_benchmark(f, std::span<const double>(row.data(), row.size()));
    }
    return y;
}

} // namespace detail

/// Latin hypercube design: coordinate j of sample r lies in stratum perm_j(r).
inline Dataset sample_lhs(const BenchmarkFn& f, int n_samples, std::uint64_t seed)
{
    if (n_samples < 1)
        throw PreconditionError("sample_lhs: n_samples must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = f.domain.dim();
    Dataset d;
    d.provenance = Provenance::lhs;
    d.X.resize(n_samples, n);
    std::vector<int> perm(n_samples);
    for (int j = 0; j < n; ++j) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const double lo = f.domain.lo[j], w = f.domain.hi[j] - lo;
        for (int r = 0; r < n_samples; ++r) {
            const double t = (perm[r] + u(rng)) / n_samples;
            d.X(r, j) = std::min(lo + w * t, f.domain.hi[j]);
        }
    }
    d.y = detail::evaluate_rows(f, d.X);
    return d;
}

/// Covariance used by sample_mvn: S Q^T D Q S with S = diag(width_j / 6).
inline Eigen::MatrixXd mvn_covariance(const BenchmarkFn& f, std::mt19937_64& rng)
{
    const int n = f.domain.dim();
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    Eigen::MatrixXd G(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            G(r, c) = g(rng);
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ();
    Eigen::VectorXd D(n);
    for (int k = 0; k < n; ++k)
        D[k] = u(rng);
    Eigen::VectorXd S(n);
    for (int j = 0; j < n; ++j)
        S[j] = (f.domain.hi[j] - f.domain.lo[j]) / 6.0;
    const Eigen::MatrixXd core = Q.transpose() * D.asDiagonal() * Q;
    return S.asDiagonal() * core * S.asDiagonal();
}

/// Normal draws around the known optimum, rejected until they fall in the domain.
inline Dataset sample_mvn(const BenchmarkFn& f, int n_samples, std::uint64_t seed, Eigen::MatrixXd* sigma_out = nullptr)
{
    if (n_samples < 1)
        throw PreconditionError("sample_mvn: n_samples must be >= 1");
    std::mt19937_64 rng(seed);
    const int n = f.domain.dim();
    const Eigen::MatrixXd sigma = mvn_covariance(f, rng);
    const Eigen::MatrixXd Lc = sigma.llt().matrixL();
    const Eigen::Map<const Eigen::VectorXd> mu(f.known_opt_point.data(), n);
    std::normal_distribution<double> g(0.0, 1.0);
    Dataset d;
    d.provenance = Provenance::mvn;
    d.X.resize(n_samples, n);
    Eigen::VectorXd z(n);
    for (int r = 0; r < n_samples;) {
        for (int k = 0; k < n; ++k)
            z[k] = g(rng);
        const Eigen::VectorXd x = mu + Lc * z;
        if (!f.domain.contains(std::span<const double>(x.data(), n), 0.0))
            continue;
        d.X.row(r++) = x.transpose();
    }
    d.y = detail::evaluate_rows(f, d.X);
    if (sigma_out)
        *sigma_out = sigma;
    return d;
}

/// Header x1,...,xn,y.
inline void write_dataset_csv(const Dataset& d, const std::string& path)
{
    std::ofstream os(path);
    if (!os)
        throw ParseError("cannot write dataset '" + path + "'");
    for (int j = 0; j < d.dim(); ++j)
        os << 'x' << j + 1 << ',';
    os << "y\n";
    os.precision(17);
    for (int r = 0; r < d.rows(); ++r) {
        for (int j = 0; j < d.dim(); ++j)
            os << d.X(r, j) << ',';
        os << d.y[r] << '\n';
    }
}

/// Any header is accepted; the last column is the target.
inline Dataset read_dataset_csv(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw ParseError("cannot open dataset '" + path + "'");
    std::string line;
    if (!std::getline(is, line))
        throw ParseError(path + ": empty file");
    const auto cols = std::count(line.begin(), line.end(), ',') + 1;
    if (cols < 2)
        throw ParseError(path + ": need at least one feature column and a target");
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r")
            continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t\r", used) != std::string::npos)
                    throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
            }
            if (!std::isfinite(row.back()))
                throw ParseError(path + ":" + std::to_string(lineno) + ": non-finite value");
        }
        if (static_cast<long>(row.size()) != cols)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) + " columns");
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw ParseError(path + ": no data rows");
    Dataset d;
    d.provenance = Provenance::csv;
    d.X.resize(static_cast<Eigen::Index>(rows.size()), cols - 1);
    d.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (long j = 0; j + 1 < cols; ++j)
            d.X(r, j) = rows[r][j];
        d.y[r] = rows[r][cols - 1];
    }
    return d;
}

// Training

struct TrainConfig {
    int e = 1;
    std::vector<int> layers{20};
    double learning_rate = 5e-3;
    int batch_size = 32;
    int max_epochs = 1000;
    int patience = 50;
    std::uint64_t seed = 0;
    ObjectiveSense sense = ObjectiveSense::maximize;
    int threads = 1;

    void validate() const
    {
        if (e < 1 || layers.empty() || !(learning_rate > 0.0) || batch_size < 1 || max_epochs < 1 || patience < 1 ||
            patience >= max_epochs || threads < 1)
            throw PreconditionError("TrainConfig: all values must be positive and patience < max_epochs");
        for (int w : layers)
            if (w < 1)
                throw PreconditionError("TrainConfig: layer widths must be positive");
    }
};

/// Min-max scaler fitted on the data.
inline Scaler fit_scaler(const Dataset& d)
{
    Scaler s;
    for (int j = 0; j < d.dim(); ++j) {
        const double lo = d.X.col(j).minCoeff(), hi = d.X.col(j).maxCoeff();
        if (!(hi > lo))
            throw ScalingError("feature x" + std::to_string(j + 1) + " is constant; cannot scale");
        s.input_min.push_back(lo);
        s.input_max.push_back(hi);
    }
    s.output_min = d.y.minCoeff();
    s.output_max = d.y.maxCoeff();
    if (!(s.output_max > s.output_min))
        throw ScalingError("target y is constant; cannot scale");
    return s;
}

namespace detail {

struct Mlp {
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;

    /// Rows of X are samples. Returns predictions and keeps activations for backprop.
    Eigen::VectorXd forward(const Eigen::MatrixXd& X, std::vector<Eigen::MatrixXd>* acts = nullptr) const
    {
        Eigen::MatrixXd a = X.transpose(); // features x batch
        if (acts) {
            acts->clear();
            acts->push_back(a);
        }
        for (std::size_t k = 0; k < W.size(); ++k) {
            Eigen::MatrixXd z = (W[k] * a).colwise() + b[k];
            if (k + 1 < W.size())
                z = z.cwiseMax(0.0);
            a = std::move(z);
            if (acts)
                acts->push_back(a);
        }
        return a.row(0).transpose();
    }

    double mse(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) const
    {
        return (forward(X) - y).squaredNorm() / static_cast<double>(y.size());
    }
};

struct Adam {
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    long t = 0;
    std::vector<Eigen::MatrixXd> mW, vW;
    std::vector<Eigen::VectorXd> mb, vb;

    Adam(const Mlp& net, double lr_) : lr(lr_)
    {
        for (std::size_t k = 0; k < net.W.size(); ++k) {
            mW.push_back(Eigen::MatrixXd::Zero(net.W[k].rows(), net.W[k].cols()));
            vW.push_back(mW.back());
            mb.push_back(Eigen::VectorXd::Zero(net.b[k].size()));
            vb.push_back(mb.back());
        }
    }

    void step(Mlp& net, const std::vector<Eigen::MatrixXd>& gW, const std::vector<Eigen::VectorXd>& gb)
    {
        ++t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t k = 0; k < net.W.size(); ++k) {
            mW[k] = b1 * mW[k] + (1 - b1) * gW[k];
            vW[k] = b2 * vW[k] + (1 - b2) * gW[k].cwiseProduct(gW[k]);
            mb[k] = b1 * mb[k] + (1 - b1) * gb[k];
            vb[k] = b2 * vb[k] + (1 - b2) * gb[k].cwiseProduct(gb[k]);
            net.W[k].array() -= lr * (mW[k].array() / c1) / ((vW[k].array() / c2).sqrt() + eps);
            net.b[k].array() -= lr * (mb[k].array() / c1) / ((vb[k].array() / c2).sqrt() + eps);
        }
    }
};

inline Mlp init_mlp(int n, const std::vector<int>& widths, std::mt19937_64& rng)
{
    Mlp net;
    int fan_in = n;
    auto add = [&](int out) {
        std::normal_distribution<double> g(0.0, std::sqrt(2.0 / fan_in));
        Eigen::MatrixXd W(out, fan_in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < fan_in; ++c)
                W(r, c) = g(rng);
        net.W.push_back(W);
        net.b.push_back(Eigen::VectorXd::Zero(out));
        fan_in = out;
    };
    for (int w : widths)
        add(w);
    add(1);
    return net;
}

/// One network on a bootstrap resample of (X, y), already scaled.
inline Network train_one(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TrainConfig& cfg,
                         std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const int N = static_cast<int>(X.rows());
    std::uniform_int_distribution<int> pick(0, N - 1);
    std::vector<int> boot(N);
    for (auto& r : boot)
        r = pick(rng);
    const int n_hold = N >= 5 ? N / 5 : 0;
    const int n_fit = N - n_hold;
    auto gather = [&](int from, int count) {
        Eigen::MatrixXd Xs(count, X.cols());
        Eigen::VectorXd ys(count);
        for (int r = 0; r < count; ++r) {
            Xs.row(r) = X.row(boot[from + r]);
            ys[r] = y[boot[from + r]];
        }
        return std::pair{Xs, ys};
    };
    const auto [Xf, yf] = gather(0, n_fit);
    const auto [Xh, yh] = n_hold > 0 ? gather(n_fit, n_hold) : gather(0, n_fit);

    Mlp net = init_mlp(static_cast<int>(X.cols()), cfg.layers, rng);
    Adam opt(net, cfg.learning_rate);
    Mlp best = net;
    double best_loss = net.mse(Xh, yh);
    int stale = 0;

    std::vector<int> order(n_fit);
    std::iota(order.begin(), order.end(), 0);
    std::vector<Eigen::MatrixXd> acts, gW(net.W.size());
    std::vector<Eigen::VectorXd> gb(net.W.size());
    for (int epoch = 0; epoch < cfg.max_epochs && stale < cfg.patience; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int s = 0; s < n_fit; s += cfg.batch_size) {
            const int m = std::min(cfg.batch_size, n_fit - s);
            Eigen::MatrixXd Xb(m, X.cols());
            Eigen::VectorXd yb(m);
            for (int r = 0; r < m; ++r) {
                Xb.row(r) = Xf.row(order[s + r]);
                yb[r] = yf[order[s + r]];
            }
            const Eigen::VectorXd pred = net.forward(Xb, &acts);
            Eigen::MatrixXd delta = (2.0 / m) * (pred - yb).transpose(); // 1 x m
            for (int k = static_cast<int>(net.W.size()) - 1; k >= 0; --k) {
                gW[k] = delta * acts[k].transpose();
                gb[k] = delta.rowwise().sum();
                if (k > 0)
                    delta = (net.W[k].transpose() * delta).cwiseProduct(
                        (acts[k].array() > 0.0).cast<double>().matrix());
            }
            opt.step(net, gW, gb);
        }
        const double loss = net.mse(Xh, yh);
        if (loss < best_loss) {
            best_loss = loss;
            best = net;
            stale = 0;
        } else {
            ++stale;
        }
    }

    Network out;
    for (std::size_t k = 0; k < best.W.size(); ++k)
        out.layers.push_back(LayerWeights{best.W[k], best.b[k]});
    return out;
}

} // namespace detail

/// Bagged ensemble of ReLU networks trained with Adam on min-max scaled data.
/// The returned model lives on [0,1]^n and carries the fitted scaler.
inline EnsembleModel train_ensemble(const Dataset& data, const TrainConfig& cfg)
{
    cfg.validate();
    if (data.rows() < 1 || data.dim() < 1)
        throw PreconditionError("train_ensemble: empty dataset");
    if (data.y.size() != data.X.rows())
        throw ShapeError("train_ensemble: X and y row counts differ");
    const Scaler scaler = fit_scaler(data);

    Eigen::MatrixXd X(data.rows(), data.dim());
    Eigen::VectorXd y(data.rows());
    for (int r = 0; r < data.rows(); ++r) {
        for (int j = 0; j < data.dim(); ++j)
            X(r, j) = (data.X(r, j) - scaler.input_min[j]) / (scaler.input_max[j] - scaler.input_min[j]);
        y[r] = scaler.scale_output(data.y[r]);
    }

    EnsembleModel model;
    model.input_dim = data.dim();
    model.box = InputBox::unit(data.dim());
    model.scaler = scaler;
    model.sense = cfg.sense;
    model.networks.resize(cfg.e);
    std::seed_seq base{cfg.seed};
    std::vector<std::uint32_t> seeds(2 * cfg.e);
    base.generate(seeds.begin(), seeds.end());
    parallel_for(cfg.e, cfg.threads, [&](int i) {
        const std::uint64_t s = (std::uint64_t{seeds[2 * i]} << 32) | seeds[2 * i + 1];
        model.networks[i] = detail::train_one(X, y, cfg, s);
    });
    model.validate();
    return model;
}

// Solution quality

struct MahalanobisResult {
    double distance = 0.0;
    bool regularized = false; // a 1e-8 ridge was added to a singular covariance
};

inline MahalanobisResult mahalanobis(std::span<const double> x, const Dataset& data)
{
    const int n = data.dim();
    if (static_cast<int>(x.size()) != n)
        throw ShapeError("mahalanobis: point dimension does not match the data");
    if (data.rows() < n + 1)
        throw PreconditionError("mahalanobis: need at least dim+1 rows");
    const Eigen::RowVectorXd mu = data.X.colwise().mean();
    const Eigen::MatrixXd C = data.X.rowwise() - mu;
    Eigen::MatrixXd sigma = (C.transpose() * C) / static_cast<double>(data.rows() - 1);
    const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(x.data(), n) - mu.transpose();

    MahalanobisResult r;
    Eigen::LDLT<Eigen::MatrixXd> f(sigma);
    const double scale = std::max(1.0, sigma.diagonal().cwiseAbs().maxCoeff());
    const bool singular = f.info() != Eigen::Success || !f.isPositive() ||
                          f.vectorD().minCoeff() <= 1e-12 * scale;
    if (singular) {
        sigma += 1e-8 * Eigen::MatrixXd::Identity(n, n);
        f.compute(sigma);
        r.regularized = true;
        log().info("mahalanobis: singular covariance, added 1e-8 ridge");
        if (f.info() != Eigen::Success)
            throw NumericError("mahalanobis: covariance still singular after ridge");
    }
    r.distance = std::sqrt(std::max(0.0, d.dot(f.solve(d))));
    return r;
}

} // namespace ennopt
