#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "in2/tensor.hpp"

namespace in2::ag {

template <typename T>
struct Node;

// Handle to a node in the computation graph. Cheap to copy; the graph is
// kept alive by these handles and freed when the last one goes away.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false)
        : n_(std::make_shared<Node<T>>()) {
        n_->value = std::move(value);
        n_->requires_grad = requires_grad;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor<T>& val() const { return n_->value; }
    const Shape& shape() const { return n_->value.shape(); }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    Node<T>* node() const { return n_.get(); }
    std::shared_ptr<Node<T>> handle() const { return n_; }

private:
    std::shared_ptr<Node<T>> n_;
};

// Backward functions receive the upstream gradient as a Var and return one
// gradient Var per parent (undefined for parents that do not need one). The
// returned gradients are themselves graph nodes, so differentiating through
// a backward pass (R1 penalty, grad checks of gradients) works unchanged.
template <typename T>
struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    std::vector<Var<T>> parents;
    std::function<std::vector<Var<T>>(const Var<T>&)> backward;
};

template <typename T>
Var<T> constant(Tensor<T> t) {
    return Var<T>(std::move(t), false);
}

template <typename T>
Var<T> leaf(Tensor<T> t) {
    return Var<T>(std::move(t), true);
}

// Value copy cut off from the graph.
template <typename T>
Var<T> detach(const Var<T>& v) {
    return constant(v.val());
}

namespace detail {

template <typename T>
void topo_collect(Node<T>* root, std::vector<Node<T>*>& order) {
    // Iterative post-order DFS over grad-requiring nodes.
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        bool descended = false;
        while (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].node();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && next >= node->parents.size()) {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace detail

// Gradients of one backward sweep, queryable per Var.
template <typename T>
class GradMap {
public:
    void set(const Node<T>* n, Var<T> g) { m_[n] = std::move(g); }
    bool has(const Var<T>& v) const { return m_.count(v.node()) > 0; }
    // Undefined Var when no gradient reached v.
    Var<T> grad(const Var<T>& v) const {
        auto it = m_.find(v.node());
        return it == m_.end() ? Var<T>{} : it->second;
    }

private:
    std::unordered_map<const Node<T>*, Var<T>> m_;
};

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);  // defined in ops.hpp

// Reverse-mode sweep from `root`, seeded with `seed` (ones by default).
// Returns gradients for every reached grad-requiring node; the gradients are
// Vars connected to the graph, so a second backward differentiates through.
template <typename T>
GradMap<T> backward(const Var<T>& root, Var<T> seed = {}) {
    check(root.defined() && root.requires_grad(), "backward: root does not require grad");
    if (!seed.defined()) seed = constant(Tensor<T>::ones(root.shape()));
    check(seed.shape() == root.shape(), "backward: seed shape mismatch");

    std::vector<Node<T>*> order;
    detail::topo_collect(root.node(), order);

    std::unordered_map<Node<T>*, Var<T>> acc;
    acc[root.node()] = seed;
    GradMap<T> out;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        auto git = acc.find(n);
        if (git == acc.end()) continue;  // unreachable from root
        Var<T> g = git->second;
        out.set(n, g);
        if (!n->backward) continue;
        std::vector<Var<T>> contribs = n->backward(g);
        for (std::size_t i = 0; i < contribs.size(); ++i) {
            if (!contribs[i].defined()) continue;
            Node<T>* p = n->parents[i].node();
            if (!p || !p->requires_grad) continue;
            auto pit = acc.find(p);
            if (pit == acc.end())
                acc[p] = contribs[i];
            else
                pit->second = add(pit->second, contribs[i]);
        }
    }
    return out;
}

}  // namespace in2::ag
