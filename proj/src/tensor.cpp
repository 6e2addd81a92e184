#include "hardneg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hardneg/errors.hpp"

namespace hardneg {

namespace {

std::size_t extent_product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(extent_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != extent_product(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    const std::size_t d = n ? rows.front().size() : 0;
    Tensor t({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        if (rows[r].size() != d) throw ShapeError("ragged rows in Tensor::from_rows");
        std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
    }
    return t;
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape_));
    }
    return shape_[axis];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (!same_shape(other)) {
        throw ShapeError("cannot add " + shape_string(other.shape_) + " to " +
                         shape_string(shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

void ParamSet::add(std::string name, Tensor value) {
    if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamSet::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const Entry& e) { return e.first == name; });
}

Tensor& ParamSet::at(const std::string& name) {
    for (auto& [key, value] : entries_) {
        if (key == name) return value;
    }
    throw ShapeError("missing parameter '" + name + "'");
}

const Tensor& ParamSet::at(const std::string& name) const {
    for (const auto& [key, value] : entries_) {
        if (key == name) return value;
    }
    throw ShapeError("missing parameter '" + name + "'");
}

std::size_t ParamSet::num_scalars() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
}

std::vector<std::string> ParamSet::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.first);
    return out;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (const auto& [name, value] : entries_) out.add(name, Tensor(value.shape()));
    return out;
}

bool ParamSet::same_layout(const ParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first != other.entries_[i].first) return false;
        if (!entries_[i].second.same_shape(other.entries_[i].second)) return false;
    }
    return true;
}

ParamSet& ParamSet::operator+=(const ParamSet& other) {
    if (!same_layout(other)) throw ShapeError("parameter sets have different layouts");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        entries_[i].second += other.entries_[i].second;
    }
    return *this;
}

ParamSet& ParamSet::operator*=(double s) {
    for (auto& e : entries_) e.second *= s;
    return *this;
}

std::vector<double> ParamSet::flatten() const {
    std::vector<double> out;
    out.reserve(num_scalars());
    for (const auto& e : entries_) {
        out.insert(out.end(), e.second.data().begin(), e.second.data().end());
    }
    return out;
}

}  // namespace hardneg
