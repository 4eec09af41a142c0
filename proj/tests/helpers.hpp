#pragma once

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "melbridge/core/rng.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(1e-10, std::abs(a) + std::abs(b));
}

/// Central finite differences of `loss` w.r.t. entries of `buf`, compared
/// against `analytic` at up to `max_checks` deterministic sample positions.
/// `buf` is any random-access container of double (vector, aligned vector).
template <typename Buf>
void fd_against(Buf& buf, const double* analytic, const std::function<double()>& loss,
                std::size_t max_checks = 64, double tol = 1e-5, double h = 1e-5) {
    melbridge::Rng pick(12345);
    const std::size_t n = buf.size();
    const std::size_t checks = std::min<std::size_t>(n, max_checks);
    for (std::size_t c = 0; c < checks; ++c) {
        const std::size_t i = (n <= max_checks) ? c : pick.uniform_int(n);
        const double keep = buf[i];
        buf[i] = keep + h;
        const double up = loss();
        buf[i] = keep - h;
        const double dn = loss();
        buf[i] = keep;
        const double fd = (up - dn) / (2.0 * h);
        // below the FD noise floor both sides count as zero (e.g. key biases,
        // whose gradient vanishes because softmax ignores per-row shifts)
        if (std::abs(fd) < 1e-8 && std::abs(analytic[i]) < 1e-8) continue;
        INFO("index ", i, " fd=", fd, " analytic=", analytic[i]);
        REQUIRE(rel_err(fd, analytic[i]) < tol);
    }
}

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        for (int attempt = 0; attempt < 64; ++attempt) {
            auto p = base / ("melbridge_test_" + std::to_string(rd()));
            if (std::filesystem::create_directory(p)) {
                path = p;
                return;
            }
        }
        throw std::runtime_error("could not create temp dir");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
