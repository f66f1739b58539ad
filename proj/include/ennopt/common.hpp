#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace ennopt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Feasibility and optimality tolerance shared by the LP kernel and its callers.
inline constexpr double kTol = 1e-7;

/// Integrality tolerance for binary columns.
inline constexpr double kIntTol = 1e-6;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ModelBuildError : public Error {
public:
    using Error::Error;
};

class ScalingError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Library logger. Verbosity is read once from ENNOPT_LOG (off | info | trace); default off.
inline spdlog::logger& log()
{
    static std::shared_ptr<spdlog::logger> logger = [] {
        auto l = spdlog::stderr_color_mt("ennopt");
        l->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
        const char* env = std::getenv("ENNOPT_LOG");
        const std::string level = env ? env : "off";
        if (level == "trace")
            l->set_level(spdlog::level::trace);
        else if (level == "info")
            l->set_level(spdlog::level::info);
        else
            l->set_level(spdlog::level::off);
        return l;
    }();
    return *logger;
}

class Stopwatch {
public:
    Stopwatch() : start_(clock::now()) {}
    double seconds() const { return std::chrono::duration<double>(clock::now() - start_).count(); }
    void reset() { start_ = clock::now(); }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_;
};

/// Wall-clock budget anchored at construction. An infinite limit never expires.
class Deadline {
public:
    explicit Deadline(double limit_seconds = kInf) : limit_(limit_seconds) {}
    double remaining() const { return limit_ - watch_.seconds(); }
    bool expired() const { return watch_.seconds() >= limit_; }
    double elapsed() const { return watch_.seconds(); }

private:
    Stopwatch watch_;
    double limit_;
};

/// Runs job(k) for k in [0, n) on up to `threads` workers. Each worker takes a
/// contiguous block, so results written to per-k slots do not depend on scheduling.
template <class F>
void parallel_for(int n, int threads, F&& job)
{
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int k = 0; k < n; ++k)
            job(k);
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (int k = t * n / threads; k < (t + 1) * n / threads; ++k)
                job(k);
        });
    for (auto& th : pool)
        th.join();
}

} // namespace ennopt
