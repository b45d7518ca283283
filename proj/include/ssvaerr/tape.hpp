#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "ssvaerr/array.hpp"

namespace ssvaerr::diff {

using NodeId = int;

// Reverse-mode tape. Nodes are appended in evaluation order, which is a topological
// order by construction; backward() walks them once in reverse. A Tape is confined
// to one thread for its lifetime; the Arrays it hands out are plain values.
class Tape {
public:
    NodeId leaf(Array value, bool requires_grad = false) {
        return push(std::move(value), {}, nullptr, requires_grad);
    }

    NodeId constant(Array value) { return leaf(std::move(value), false); }

    // Reference remains valid as nodes are appended (deque storage).
    const Array& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    bool requires_grad(NodeId id) const {
        return nodes_[static_cast<std::size_t>(id)].requires_grad;
    }

    // Gradient of the last backward()'s loss w.r.t. node id. Zero array if the node
    // was not reached (or did not require a gradient).
    Array grad(NodeId id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) return Array(n.value.shape());
        return n.grad;
    }

    // Accumulates dloss/dx into every gradient-requiring node. Deterministic:
    // fixed reverse-topological visit order, fixed accumulation order.
    void backward(NodeId loss) {
        check(loss >= 0 && loss < static_cast<NodeId>(nodes_.size()), "backward: bad node id");
        check(value(loss).size() == 1, "backward: loss node must be scalar");
        for (Node& n : nodes_) n.grad = Array();
        Node& ln = nodes_[static_cast<std::size_t>(loss)];
        if (!ln.requires_grad) return;
        ln.grad = Array::scalar(1.0);
        for (NodeId id = loss; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad.empty() || !n.backprop) continue;
            n.backprop(*this, id);
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

    // --- builder interface used by the op library ---

    using Backprop = std::function<void(Tape&, NodeId)>;

    NodeId push(Array value, std::vector<NodeId> inputs, Backprop backprop, bool requires_grad) {
        Node n;
        n.value = std::move(value);
        n.inputs = std::move(inputs);
        n.backprop = std::move(backprop);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    bool any_requires_grad(const std::vector<NodeId>& ids) const {
        for (NodeId id : ids)
            if (requires_grad(id)) return true;
        return false;
    }

    // Gradient accumulator for node id; allocates zeros on first touch.
    // Returns nullptr when the node does not participate in differentiation,
    // letting ops skip the corresponding adjoint entirely.
    Array* grad_sink(NodeId id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad) return nullptr;
        if (n.grad.empty()) n.grad = Array(n.value.shape());
        return &n.grad;
    }

    const Array& out_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

private:
    struct Node {
        Array value;
        std::vector<NodeId> inputs;
        Backprop backprop;
        bool requires_grad = false;
        Array grad;
    };

    std::deque<Node> nodes_;
};

} // namespace ssvaerr::diff
