// This file is part of rmdpkit, a C++ library for data-driven robust
// Markov decision processes.
//
// MIT License
//
// Permission is hereby granted, free of charge, to any person obtaining a copy
// of this software and associated documentation files (the "Software"), to deal
// in the Software without restriction, including without limitation the rights
// to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
// copies of the Software, and to permit persons to whom the Software is
// furnished to do so, subject to the following conditions:
//
// The above copyright notice and this permission notice shall be included in
// all copies or substantial portions of the Software.
//
// THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
// IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
// FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
// AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
// LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
// OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
// SOFTWARE.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rmdp {

using numvec = std::vector<double>;
using indvec = std::vector<long>;
using sizvec = std::vector<std::size_t>;

/// A distribution must sum to one within this tolerance to be accepted as-is.
constexpr double SIMPLEX_TOL = 1e-9;
/// Distributions off by at most this much are renormalized; anything worse is
/// rejected. Monte Carlo constructors routinely produce drift of this size.
constexpr double SIMPLEX_REPAIR_TOL = 1e-7;

/// Raised when an argument violates a documented precondition.
class invalid_input : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative method fails to reach its tolerance.
class numerical_failure : public std::runtime_error {
public:
    numerical_failure(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
          residual_(residual) {}

    double residual() const { return residual_; }

private:
    double residual_;
};

/// Raised when a hyperplane target cannot intersect the simplex.
class infeasible_target : public invalid_input {
public:
    infeasible_target(const std::string& what, std::size_t index)
        : invalid_input(what + " (target " + std::to_string(index) + ")"), index_(index) {}

    std::size_t target_index() const { return index_; }

private:
    std::size_t index_;
};

/// Dot product. All value computations go through this helper so that two
/// algorithms evaluating the same distribution produce bitwise-equal results.
inline double dot(const numvec& a, const numvec& b) {
    return std::inner_product(a.cbegin(), a.cend(), b.cbegin(), 0.0);
}

inline bool is_on_simplex(const numvec& row, double tol = SIMPLEX_TOL) {
    double sum = 0.0;
    for (double x : row) {
        if (!std::isfinite(x) || x < -tol) return false;
        sum += x;
    }
    return std::abs(sum - 1.0) <= tol;
}

/// Validates a probability vector in place. Entries slightly negative or a sum
/// slightly off one (within SIMPLEX_REPAIR_TOL) are repaired by clamping and
/// renormalizing; larger violations throw invalid_input.
inline void validate_simplex_row(numvec& row, const std::string& context) {
    if (row.empty()) throw invalid_input(context + ": empty distribution");
    double sum = 0.0;
    bool needs_repair = false;
    for (double x : row) {
        if (!std::isfinite(x)) throw invalid_input(context + ": non-finite entry");
        if (x < -SIMPLEX_REPAIR_TOL) throw invalid_input(context + ": negative entry");
        if (x < 0.0) needs_repair = true;
        sum += x;
    }
    if (std::abs(sum - 1.0) > SIMPLEX_REPAIR_TOL)
        throw invalid_input(context + ": sums to " + std::to_string(sum));
    if (needs_repair || std::abs(sum - 1.0) > SIMPLEX_TOL) {
        double repaired = 0.0;
        for (double& x : row) {
            x = std::max(x, 0.0);
            repaired += x;
        }
        if (repaired <= 0.0) throw invalid_input(context + ": zero mass");
        for (double& x : row)
            x /= repaired;
    }
}

/// Indices that sort `values` ascending; ties are broken by index so the
/// order, and every algorithm built on it, is reproducible bit-for-bit.
inline sizvec sorted_indices(const numvec& values) {
    sizvec idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
        if (values[i] != values[j]) return values[i] < values[j];
        return i < j;
    });
    return idx;
}

inline double linf_distance(const numvec& a, const numvec& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); i++)
        d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

} // namespace rmdp
