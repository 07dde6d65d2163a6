#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "ntp/embed.hpp"
#include "ntp/kb.hpp"

namespace ntp {

using NodeId = std::int32_t;

constexpr double kLossEpsilon = 1e-8;

// Per-symbol gradient accumulator.
struct Gradients {
    std::unordered_map<SymbolId, std::vector<double>> by_symbol;
    int dim = 0;

    std::vector<double>& row(SymbolId id) {
        auto it = by_symbol.find(id);
        if (it == by_symbol.end())
            it = by_symbol.emplace(id, std::vector<double>(dim, 0.0)).first;
        return it->second;
    }

    void add(const Gradients& other) {
        for (const auto& [id, g] : other.by_symbol) {
            auto& r = row(id);
            for (int i = 0; i < dim; ++i) r[i] += g[i];
        }
    }
};

// Record of the scalar ops behind one query's proof score. Nodes are appended
// in topological order; min/max remember their selected child at creation so
// the reverse pass just routes adjoints.
class Tape {
   public:
    enum class Op : std::uint8_t { constant, kernel, min, max, loss };

    struct Node {
        Op op = Op::constant;
        double value = 0.0;
        SymbolId sym_a = -1, sym_b = -1;  // kernel operands
        std::vector<NodeId> children;
        int selected = -1;  // argmin/argmax child position (lowest index on ties)
        int label = 0;      // loss target
    };

    explicit Tape(const EmbeddingStore& store) : store_(&store) {}

    NodeId constant(double v) {
        Node n;
        n.value = v;
        nodes_.push_back(std::move(n));
        return last();
    }

    NodeId kernel(SymbolId a, SymbolId b) {
        Node n;
        n.op = Op::kernel;
        n.value = store_->kernel(a, b);
        n.sym_a = a;
        n.sym_b = b;
        nodes_.push_back(std::move(n));
        return last();
    }

    NodeId min_of(std::vector<NodeId> children) { return reduce(Op::min, std::move(children)); }
    NodeId max_of(std::vector<NodeId> children) { return reduce(Op::max, std::move(children)); }

    // -label*log(s) - (1-label)*log(1 - s + eps)
    NodeId loss(NodeId score, int label) {
        double s = value(score);
        double v = label == 1 ? -std::log(s) : -std::log(1.0 - s + kLossEpsilon);
        Node n;
        n.op = Op::loss;
        n.value = v;
        n.children = {score};
        n.label = label;
        nodes_.push_back(std::move(n));
        return last();
    }

    double value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }

    // Reverse accumulation from `root`. Min/max route the whole adjoint to the
    // selected child; kernels emit dk/dtheta for both operands; contributions
    // for a symbol touched by several nodes sum.
    Gradients backward(NodeId root) const {
        std::vector<double> adjoint(nodes_.size(), 0.0);
        adjoint[static_cast<std::size_t>(root)] = 1.0;

        Gradients grads;
        grads.dim = store_->dim();
        const double inv_mu2 = 1.0 / (store_->mu() * store_->mu());

        for (NodeId id = root; id >= 0; --id) {
            double adj = adjoint[static_cast<std::size_t>(id)];
            if (adj == 0.0) continue;
            const Node& n = nodes_[static_cast<std::size_t>(id)];
            switch (n.op) {
                case Op::constant:
                    break;
                case Op::kernel: {
                    auto xa = store_->vec(n.sym_a);
                    auto xb = store_->vec(n.sym_b);
                    auto& ga = grads.row(n.sym_a);
                    auto& gb = grads.row(n.sym_b);
                    double scale = adj * n.value * inv_mu2;
                    for (int i = 0; i < store_->dim(); ++i) {
                        double d = (xb[i] - xa[i]) * scale;
                        ga[i] += d;
                        gb[i] -= d;
                    }
                    break;
                }
                case Op::min:
                case Op::max:
                    adjoint[static_cast<std::size_t>(n.children[n.selected])] += adj;
                    break;
                case Op::loss: {
                    double s = value(n.children[0]);
                    double ds = n.label == 1 ? -1.0 / s : 1.0 / (1.0 - s + kLossEpsilon);
                    adjoint[static_cast<std::size_t>(n.children[0])] += adj * ds;
                    break;
                }
            }
        }
        return grads;
    }

   private:
    NodeId last() const { return static_cast<NodeId>(nodes_.size() - 1); }

    NodeId reduce(Op op, std::vector<NodeId> children) {
        if (children.empty()) throw std::invalid_argument("min/max over empty children");
        int sel = 0;
        double best = value(children[0]);
        for (std::size_t i = 1; i < children.size(); ++i) {
            double v = value(children[i]);
            bool better = op == Op::min ? v < best : v > best;
            if (better) {
                best = v;
                sel = static_cast<int>(i);
            }
        }
        Node n;
        n.op = op;
        n.value = best;
        n.children = std::move(children);
        n.selected = sel;
        nodes_.push_back(std::move(n));
        return last();
    }

    const EmbeddingStore* store_;
    std::vector<Node> nodes_;
};

}  // namespace ntp
