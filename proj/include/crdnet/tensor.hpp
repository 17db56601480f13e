#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace crdnet {

// Double precision throughout: gradient checks against finite differences
// need the headroom, and desk-scale training is cheap enough not to care.
using Scalar = double;

struct Shape {
    int n = 0;  // batch
    int c = 0;  // channels
    int h = 0;  // height
    int w = 0;  // width

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Dense row-major NCHW tensor. Channels may be zero (the empty tensor used
// as a concat identity); batch and spatial dims must be >= 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s) : shape_(s) {
        validate(s);
        data_.assign(s.numel(), Scalar(0));
    }
    Tensor(Shape s, std::vector<Scalar> data) : shape_(s), data_(std::move(data)) {
        validate(s);
        if (data_.size() != s.numel())
            throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                        " does not match shape " + s.str());
    }

    static Tensor full(Shape s, Scalar v) {
        Tensor t(s);
        for (auto& x : t.data_) x = v;
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    std::vector<Scalar>& vec() { return data_; }
    const std::vector<Scalar>& vec() const { return data_; }

    Scalar& at(int n, int c, int y, int x) {
        return data_[offset(n, c, y, x)];
    }
    Scalar at(int n, int c, int y, int x) const {
        return data_[offset(n, c, y, x)];
    }

    std::size_t offset(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

private:
    static void validate(const Shape& s) {
        if (s.n < 1 || s.h < 1 || s.w < 1 || s.c < 0)
            throw std::invalid_argument("invalid tensor shape " + s.str());
    }

    Shape shape_{0, 0, 0, 0};
    std::vector<Scalar> data_;
};

// A learnable tensor with its gradient accumulator and a stable name used
// for checkpoints and optimizer state.
class Parameter {
public:
    Parameter() = default;
    Parameter(std::string name, Shape s) : name_(std::move(name)), value_(s), grad_(s) {}
    Parameter(std::string name, Tensor value)
        : name_(std::move(name)), value_(std::move(value)), grad_(value_.shape()) {}

    const std::string& name() const { return name_; }
    Tensor& value() { return value_; }
    const Tensor& value() const { return value_; }
    Tensor& grad() { return grad_; }
    const Tensor& grad() const { return grad_; }
    std::size_t numel() const { return value_.numel(); }

    void zero_grad() {
        for (auto& g : grad_.vec()) g = Scalar(0);
    }

private:
    std::string name_;
    Tensor value_;
    Tensor grad_;
};

}  // namespace crdnet
