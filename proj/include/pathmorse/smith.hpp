#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace pathmorse {

using BigInt = boost::multiprecision::cpp_int;

/// Dense integer matrix, row major.
struct IntMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::int64_t> data;

    IntMatrix() = default;
    IntMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0) {}
    IntMatrix(std::initializer_list<std::initializer_list<std::int64_t>> init) {
        rows = static_cast<int>(init.size());
        cols = rows ? static_cast<int>(init.begin()->size()) : 0;
        for (const auto& row : init) data.insert(data.end(), row.begin(), row.end());
    }

    std::int64_t& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    std::int64_t operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
    [[nodiscard]] bool empty() const { return rows == 0 || cols == 0; }
    [[nodiscard]] bool is_zero() const {
        return std::all_of(data.begin(), data.end(), [](std::int64_t v) { return v == 0; });
    }
    bool operator==(const IntMatrix&) const = default;
};

struct SmithForm {
    std::vector<BigInt> factors;  // d_1 | d_2 | ... , all positive
    int rank = 0;
};

namespace detail {

struct Overflow {};

inline std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_mul_overflow(a, b, &r)) throw Overflow{};
    return r;
}
inline std::int64_t checked_sub(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_sub_overflow(a, b, &r)) throw Overflow{};
    return r;
}
inline std::int64_t checked_add(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw Overflow{};
    return r;
}
inline std::int64_t checked_neg(std::int64_t a) { return checked_sub(0, a); }

inline BigInt checked_mul(const BigInt& a, const BigInt& b) { return a * b; }
inline BigInt checked_sub(const BigInt& a, const BigInt& b) { return a - b; }
inline BigInt checked_add(const BigInt& a, const BigInt& b) { return a + b; }
inline BigInt checked_neg(const BigInt& a) { return -a; }

template <class T>
T abs_value(const T& v) {
    return v < 0 ? T(-v) : v;
}

/// Diagonalizes m in place by unimodular row and column operations and returns the
/// nonzero diagonal with each entry dividing the next.
template <class T>
std::vector<T> smith_diagonal(std::vector<std::vector<T>> m) {
    const int rows = static_cast<int>(m.size());
    const int cols = rows ? static_cast<int>(m[0].size()) : 0;
    std::vector<T> diag;
    for (int t = 0; t < std::min(rows, cols); ++t) {
        for (;;) {
            // smallest nonzero entry of the trailing block becomes the pivot
            int pi = -1, pj = -1;
            for (int i = t; i < rows; ++i)
                for (int j = t; j < cols; ++j)
                    if (m[i][j] != 0 && (pi < 0 || abs_value(m[i][j]) < abs_value(m[pi][pj]))) pi = i, pj = j;
            if (pi < 0) return diag;
            std::swap(m[t], m[pi]);
            for (auto& row : m) std::swap(row[t], row[pj]);

            bool clean = true;
            for (int i = t + 1; i < rows; ++i) {
                if (m[i][t] == 0) continue;
                const T q = m[i][t] / m[t][t];
                for (int j = t; j < cols; ++j) m[i][j] = checked_sub(m[i][j], checked_mul(q, m[t][j]));
                if (m[i][t] != 0) clean = false;
            }
            for (int j = t + 1; j < cols; ++j) {
                if (m[t][j] == 0) continue;
                const T q = m[t][j] / m[t][t];
                for (int i = t; i < rows; ++i) m[i][j] = checked_sub(m[i][j], checked_mul(q, m[i][t]));
                if (m[t][j] != 0) clean = false;
            }
            if (!clean) continue;

            // the pivot must divide the whole trailing block; otherwise fold the offending row in
            int bad = -1;
            for (int i = t + 1; i < rows && bad < 0; ++i)
                for (int j = t + 1; j < cols; ++j)
                    if (m[i][j] % m[t][t] != 0) {
                        bad = i;
                        break;
                    }
            if (bad < 0) break;
            for (int j = t; j < cols; ++j) m[t][j] = checked_add(m[t][j], m[bad][j]);
        }
        diag.push_back(m[t][t] < 0 ? checked_neg(m[t][t]) : m[t][t]);
    }
    return diag;
}

}  // namespace detail

/// Invariant factors and rank of an integer matrix. Works in 64-bit arithmetic and repeats
/// the reduction with arbitrary precision when an intermediate value would overflow.
inline SmithForm smith_normal_form(const IntMatrix& a) {
    SmithForm out;
    if (a.empty()) return out;
    std::vector<std::vector<std::int64_t>> m(a.rows, std::vector<std::int64_t>(a.cols));
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) m[i][j] = a(i, j);
    try {
        for (const auto d : detail::smith_diagonal(m)) out.factors.emplace_back(d);
    } catch (const detail::Overflow&) {
        std::vector<std::vector<BigInt>> big(a.rows, std::vector<BigInt>(a.cols));
        for (int i = 0; i < a.rows; ++i)
            for (int j = 0; j < a.cols; ++j) big[i][j] = a(i, j);
        out.factors = detail::smith_diagonal(std::move(big));
    }
    out.rank = static_cast<int>(out.factors.size());
    return out;
}

/// Rank over Z/2.
inline int rank_mod2(const IntMatrix& a) {
    std::vector<std::vector<int>> m(a.rows, std::vector<int>(a.cols));
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) m[i][j] = static_cast<int>(a(i, j) & 1);
    int rank = 0;
    for (int j = 0; j < a.cols && rank < a.rows; ++j) {
        int piv = -1;
        for (int i = rank; i < a.rows; ++i)
            if (m[i][j]) {
                piv = i;
                break;
            }
        if (piv < 0) continue;
        std::swap(m[rank], m[piv]);
        for (int i = 0; i < a.rows; ++i)
            if (i != rank && m[i][j])
                for (int c = j; c < a.cols; ++c) m[i][c] ^= m[rank][c];
        ++rank;
    }
    return rank;
}

}  // namespace pathmorse
