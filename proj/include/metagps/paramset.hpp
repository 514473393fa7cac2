#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "metagps/tensor.hpp"

namespace metagps {

// Ordered name -> Tensor collection. Iteration order is insertion order;
// flatten/unflatten round-trips bit-exactly.
class ParamSet {
public:
    ParamSet() = default;

    void add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
        index_[name] = entries_.size();
        entries_.emplace_back(name, std::move(t));
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    Tensor& operator[](const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("ParamSet: no entry " + name);
        return entries_[it->second].second;
    }
    const Tensor& operator[](const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("ParamSet: no entry " + name);
        return entries_[it->second].second;
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    const std::pair<std::string, Tensor>& entry(std::size_t i) const { return entries_[i]; }

    std::int64_t total_len() const {
        std::int64_t n = 0;
        for (const auto& [_, t] : entries_) n += t.numel();
        return n;
    }

    std::vector<double> flatten() const {
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(total_len()));
        for (const auto& [_, t] : entries_) flat.insert(flat.end(), t.values.begin(), t.values.end());
        return flat;
    }

    // writes flat back into the entries; shapes are kept
    void unflatten(const std::vector<double>& flat) {
        if (static_cast<std::int64_t>(flat.size()) != total_len())
            throw std::invalid_argument("ParamSet::unflatten: length mismatch");
        std::size_t off = 0;
        for (auto& [_, t] : entries_) {
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                      flat.begin() + static_cast<std::ptrdiff_t>(off + t.values.size()), t.values.begin());
            off += t.values.size();
        }
    }

    ParamSet zeros_like() const {
        ParamSet z;
        for (const auto& [name, t] : entries_) z.add(name, Tensor::zeros(t.shape));
        return z;
    }

    // this += c * other, entrywise over matching names
    void axpy(double c, const ParamSet& other) {
        if (other.size() != size()) throw std::invalid_argument("ParamSet::axpy: size mismatch");
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            auto& t = entries_[i].second;
            const auto& o = other.entries_[i].second;
            require_same_shape(t.shape, o.shape, "ParamSet::axpy");
            for (std::size_t k = 0; k < t.values.size(); ++k) t.values[k] += c * o.values[k];
        }
    }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t> index_;
};

} // namespace metagps
