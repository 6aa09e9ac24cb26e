#pragma once

#include <cstring>
#include <map>
#include <string>

#include "in2/ops.hpp"
#include "in2/rng.hpp"

namespace in2 {

enum class Init { zeros, ones, kaiming, gaussian };

// Named parameter collection. Values live inside leaf graph Vars so a graph
// rebuilt each step picks up optimizer updates; gradient slots mirror each
// value tensor. Initialization is keyed by (store seed, parameter name), so
// creation order never changes the draw.
template <typename T>
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    // Create-or-fetch. Shape must match on refetch.
    ag::Var<T> param(const std::string& name, const Shape& shape, Init init,
                     double scale = 1.0) {
        auto it = entries_.find(name);
        if (it != entries_.end()) {
            check(it->second.var.shape() == shape,
                  "param " + name + " refetched with different shape");
            return it->second.var;
        }
        Tensor<T> t(shape);
        Rng rng(Rng::mix(seed_ ^ fnv1a(name)));
        switch (init) {
            case Init::zeros:
                break;
            case Init::ones:
                std::fill(t.vec().begin(), t.vec().end(), T(1));
                break;
            case Init::kaiming: {
                // fan_in = elements per output row for matrix-shaped params.
                double fan_in = shape.size() >= 2 ? static_cast<double>(numel_of(shape) / shape[0])
                                                  : static_cast<double>(shape[0]);
                double std_dev = std::sqrt(2.0 / fan_in) * scale;
                for (auto& v : t.vec()) v = static_cast<T>(rng.next_gaussian() * std_dev);
                break;
            }
            case Init::gaussian:
                for (auto& v : t.vec()) v = static_cast<T>(rng.next_gaussian() * scale);
                break;
        }
        Entry e;
        e.var = ag::leaf(std::move(t));
        e.grad = Tensor<T>::zeros(shape);
        entries_[name] = e;
        return entries_[name].var;
    }

    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    ag::Var<T> get(const std::string& name) const {
        auto it = entries_.find(name);
        check(it != entries_.end(), "unknown parameter: " + name);
        return it->second.var;
    }

    Tensor<T>& value(const std::string& name) {
        auto it = entries_.find(name);
        check(it != entries_.end(), "unknown parameter: " + name);
        return it->second.var.node()->value;
    }

    Tensor<T>& grad(const std::string& name) {
        auto it = entries_.find(name);
        check(it != entries_.end(), "unknown parameter: " + name);
        return it->second.grad;
    }

    void zero_grads() {
        for (auto& [name, e] : entries_)
            std::fill(e.grad.vec().begin(), e.grad.vec().end(), T(0));
    }

    // Copy gradients of this store's leaves out of a backward sweep.
    void accumulate_grads(const ag::GradMap<T>& gm) {
        for (auto& [name, e] : entries_) {
            ag::Var<T> g = gm.grad(e.var);
            if (!g.defined()) continue;
            const Tensor<T>& gv = g.val();
            for (std::int64_t i = 0; i < gv.numel(); ++i) e.grad[i] += gv[i];
        }
    }

    std::size_t size() const { return entries_.size(); }
    std::int64_t total_elements() const {
        std::int64_t n = 0;
        for (const auto& [name, e] : entries_) n += e.var.val().numel();
        return n;
    }
    std::uint64_t seed() const { return seed_; }

    // Deterministic name order (std::map) — serialization relies on it.
    template <typename F>
    void for_each(F f) const {
        for (const auto& [name, e] : entries_) f(name, e.var.val());
    }
    template <typename F>
    void for_each_mut(F f) {
        for (auto& [name, e] : entries_) f(name, e.var.node()->value, e.grad);
    }

    template <typename U>
    ParamStore<U> cast(std::uint64_t seed) const {
        ParamStore<U> out(seed);
        for (const auto& [name, e] : entries_)
            out.set_raw(name, e.var.val().template cast<U>());
        return out;
    }

    void set_raw(const std::string& name, Tensor<T> t) {
        auto it = entries_.find(name);
        if (it != entries_.end()) {
            check(it->second.var.shape() == t.shape(), "set_raw shape mismatch for " + name);
            it->second.var.node()->value = std::move(t);
        } else {
            Entry e;
            Shape shape = t.shape();
            e.var = ag::leaf(std::move(t));
            e.grad = Tensor<T>::zeros(shape);
            entries_[name] = e;
        }
    }

private:
    struct Entry {
        ag::Var<T> var;
        Tensor<T> grad;
    };
    std::uint64_t seed_ = 0;
    std::map<std::string, Entry> entries_;
};

}  // namespace in2
