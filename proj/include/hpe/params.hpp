#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hpe/tensor.hpp"

namespace hpe {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view name) {
    std::uint64_t z = seed ^ fnv1a64(name);
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;     // grad buffer allocated iff trainable
    bool trainable = true;
};

// Named parameters and buffers with stable registration order. Names are
// unique; each trainable entry carries a same-shape gradient accumulator.
template <typename T>
class ParamStore {
public:
    i64 add(std::string name, Tensor<T> value, bool trainable = true) {
        if (index_.count(name)) {
            throw ConfigError("duplicate parameter name: " + name);
        }
        if (trainable) {
            value.alloc_grad();
        }
        const i64 id = static_cast<i64>(entries_.size());
        index_.emplace(name, id);
        entries_.push_back(Param<T>{std::move(name), std::move(value), trainable});
        return id;
    }

    Param<T>& at(i64 id) { return entries_[static_cast<std::size_t>(id)]; }
    const Param<T>& at(i64 id) const { return entries_[static_cast<std::size_t>(id)]; }

    const Param<T>* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &entries_[static_cast<std::size_t>(it->second)];
    }
    Param<T>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &entries_[static_cast<std::size_t>(it->second)];
    }

    std::size_t count() const { return entries_.size(); }
    std::vector<Param<T>>& entries() { return entries_; }
    const std::vector<Param<T>>& entries() const { return entries_; }

    void zero_grads() {
        for (auto& p : entries_) {
            p.value.zero_grad();
        }
    }

    i64 total_scalar_count(bool trainable_only) const {
        i64 n = 0;
        for (const auto& p : entries_) {
            if (!trainable_only || p.trainable) {
                n += p.value.size();
            }
        }
        return n;
    }

    // Elementwise grad accumulation into a registered parameter.
    void accumulate_grad(i64 id, const Tensor<T>& g) {
        Param<T>& p = at(id);
        check_same_shape(p.value, g, "accumulate_grad");
        for (i64 i = 0; i < g.size(); ++i) {
            p.value.grad[static_cast<std::size_t>(i)] += g.values[i];
        }
    }

    void accumulate_grad(i64 id, const std::vector<T>& g) {
        Param<T>& p = at(id);
        if (static_cast<i64>(g.size()) != p.value.size()) {
            throw DimensionError("accumulate_grad: size mismatch for " + p.name);
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            p.value.grad[i] += g[i];
        }
    }

private:
    std::vector<Param<T>> entries_;
    std::unordered_map<std::string, i64> index_;
};

// He fan-in normal init. The RNG is seeded from (seed, name), so a given
// parameter's init does not depend on what else the model registers.
template <typename T>
Tensor<T> he_normal_init(Shape shape, i64 fan_in, std::uint64_t seed, const std::string& name) {
    Tensor<T> t(std::move(shape));
    std::mt19937_64 rng(mix_seed(seed, name));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (T& v : t.values) {
        v = static_cast<T>(dist(rng));
    }
    return t;
}

}  // namespace hpe
