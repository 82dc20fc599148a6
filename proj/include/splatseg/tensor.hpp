// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_TENSOR_HPP
#define SPLATSEG_TENSOR_HPP

#include "splatseg/error.hpp"

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace splatseg::ad {

/// Dense row-major tensor of doubles. Rank 0 (scalar) through rank N.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, double fill = 0.0, bool rg = false)
        : shape(std::move(s))
        , requires_grad(rg)
    {
        data.assign(size_t(numelOf(shape)), fill);
    }

    static Tensor scalar(double v, bool rg = false)
    {
        Tensor t;
        t.data.assign(1, v);
        t.requires_grad = rg;
        return t;
    }

    static Tensor from(std::vector<int> s, std::vector<double> d, bool rg = false)
    {
        Tensor t;
        t.shape = std::move(s);
        if (int64_t(d.size()) != numelOf(t.shape))
            raise(ErrorKind::ShapeMismatch, "data length does not match shape");
        t.data = std::move(d);
        t.requires_grad = rg;
        return t;
    }

    static int64_t numelOf(const std::vector<int>& s)
    {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) raise(ErrorKind::ShapeMismatch, "negative dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return int64_t(data.size()); }
    int rank() const { return int(shape.size()); }
    bool isScalar() const { return shape.empty(); }

    int rows() const
    {
        if (rank() != 2) raise(ErrorKind::ShapeMismatch, "rows() requires rank 2, got rank " + std::to_string(rank()));
        return shape[0];
    }
    int cols() const
    {
        if (rank() != 2) raise(ErrorKind::ShapeMismatch, "cols() requires rank 2, got rank " + std::to_string(rank()));
        return shape[1];
    }

    double& at(int r, int c) { return data[size_t(r) * size_t(shape[1]) + size_t(c)]; }
    double at(int r, int c) const { return data[size_t(r) * size_t(shape[1]) + size_t(c)]; }

    double value() const
    {
        if (numel() != 1) raise(ErrorKind::ShapeMismatch, "value() requires a single element");
        return data[0];
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline std::string shape_str(const Tensor& t)
{
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < t.shape.size(); ++i) {
        if (i) os << ",";
        os << t.shape[i];
    }
    os << ")";
    return os.str();
}

} // namespace splatseg::ad

#endif // SPLATSEG_TENSOR_HPP
