#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "errors.hpp"

namespace twisted {

// Primal network simplex for the dense transportation problem
//   min Σ c_ij π_ij  s.t.  Σ_j π_ij = a_i,  Σ_i π_ij = b_j,  π >= 0,
// with an artificial root, a strongly feasible spanning tree (Cunningham's
// leaving-arc rule) and block-search pricing. The tree is stored by parent
// pointers and re-threaded after each pivot.
class TransportSimplex {
public:
    struct Result {
        std::vector<double> flow;  // m × k, row-major
        double cost = 0.0;
        long pivots = 0;
    };

    // cost is m × k row-major.
    Result solve(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& cost) {
        m_ = static_cast<int>(a.size());
        k_ = static_cast<int>(b.size());
        if (static_cast<long>(cost.size()) != long(m_) * k_) throw InputDomainError("cost matrix has the wrong size");
        nodes_ = m_ + k_;
        root_ = nodes_;
        arcs_ = m_ * k_;
        total_ = arcs_ + nodes_;

        source_.assign(total_, 0);
        target_.assign(total_, 0);
        cost_.assign(total_, 0.0);
        flow_.assign(total_, 0.0);
        state_.assign(total_, kLower);

        double cmax = 0;
        for (int i = 0; i < m_; ++i)
            for (int j = 0; j < k_; ++j) {
                int e = i * k_ + j;
                source_[e] = i;
                target_[e] = m_ + j;
                cost_[e] = cost[e];
                cmax = std::max(cmax, std::abs(cost[e]));
            }
        const double art = (cmax + 1.0) * (nodes_ + 1);
        eps_ = 1e-13 * (cmax + 1.0);

        parent_.assign(nodes_ + 1, -1);
        pred_.assign(nodes_ + 1, -1);
        up_.assign(nodes_ + 1, true);
        pi_.assign(nodes_ + 1, 0.0);
        for (int u = 0; u < nodes_; ++u) {
            int e = arcs_ + u;
            double s = u < m_ ? a[u] : -b[u - m_];
            parent_[u] = root_;
            pred_[u] = e;
            state_[e] = kTree;
            if (s >= 0) {
                up_[u] = true;
                source_[e] = u;
                target_[e] = root_;
                flow_[e] = s;
                cost_[e] = 0.0;
                pi_[u] = 0.0;
            } else {
                up_[u] = false;
                source_[e] = root_;
                target_[e] = u;
                flow_[e] = -s;
                cost_[e] = art;
                pi_[u] = art;
            }
        }
        children_.assign(nodes_ + 1, {});
        for (int u = 0; u < nodes_; ++u) children_[root_].push_back(u);
        rethread();

        block_ = std::max(10, static_cast<int>(std::sqrt(double(arcs_))));
        next_ = 0;
        Result res;
        int in;
        while ((in = price()) >= 0) {
            pivot(in);
            ++res.pivots;
            if (res.pivots > 50L * total_ + 100000) throw Error("network simplex exceeded its pivot budget");
        }
        for (int e = arcs_; e < total_; ++e)
            if (flow_[e] > 1e-9) throw Error("transportation problem is infeasible (unbalanced marginals)");
        res.flow.assign(flow_.begin(), flow_.begin() + arcs_);
        for (int e = 0; e < arcs_; ++e) res.cost += flow_[e] * cost_[e];
        return res;
    }

private:
    static constexpr int kUpper = -1, kTree = 0, kLower = 1;

    int m_ = 0, k_ = 0, nodes_ = 0, root_ = 0, arcs_ = 0, total_ = 0;
    std::vector<int> source_, target_, state_;
    std::vector<double> cost_, flow_;
    std::vector<int> parent_, pred_, depth_, order_;
    std::vector<bool> up_;  // pred arc points from the node to its parent
    std::vector<double> pi_;
    std::vector<std::vector<int>> children_;
    double eps_ = 0;
    int block_ = 0, next_ = 0;

    double reduced(int e) const { return cost_[e] + pi_[source_[e]] - pi_[target_[e]]; }

    // Block search: the most negative reduced cost within the first block
    // that contains any eligible arc.
    int price() {
        int best = -1;
        double best_c = -eps_;
        int cnt = 0;
        for (int it = 0; it < arcs_; ++it) {
            int e = next_;
            next_ = next_ + 1 == arcs_ ? 0 : next_ + 1;
            if (state_[e] == kLower) {
                double c = reduced(e);
                if (c < best_c) {
                    best_c = c;
                    best = e;
                }
            }
            if (++cnt == block_) {
                if (best >= 0) return best;
                cnt = 0;
            }
        }
        return best;
    }

    // Recompute depth and potentials from the root by a preorder walk.
    void rethread() {
        depth_.assign(nodes_ + 1, 0);
        order_.clear();
        std::vector<int> stack{root_};
        pi_[root_] = 0.0;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            order_.push_back(u);
            for (int c : children_[u]) {
                depth_[c] = depth_[u] + 1;
                int e = pred_[c];
                // Tree arcs have zero reduced cost.
                pi_[c] = up_[c] ? pi_[u] - cost_[e] : pi_[u] + cost_[e];
                stack.push_back(c);
            }
        }
    }

    void detach(int child) {
        auto& ch = children_[parent_[child]];
        ch.erase(std::find(ch.begin(), ch.end(), child));
    }

    void pivot(int in) {
        const int u = source_[in], v = target_[in];
        // Join node.
        int a = u, b = v;
        while (a != b) {
            if (depth_[a] >= depth_[b]) a = parent_[a];
            else b = parent_[b];
        }
        const int join = a;

        // Flow is pushed u -> v along `in`, then v -> join, then join -> u.
        // Leaving arc: the last blocking arc in the order join..u, v..join.
        double delta = std::numeric_limits<double>::infinity();
        int u_out = -1;
        bool on_first = false;
        for (int w = u; w != join; w = parent_[w]) {
            // Traversed parent -> w; blocking when the arc points w -> parent.
            if (up_[w] && flow_[pred_[w]] < delta) {
                delta = flow_[pred_[w]];
                u_out = w;
                on_first = true;
            }
        }
        for (int w = v; w != join; w = parent_[w]) {
            // Traversed w -> parent; blocking when the arc points parent -> w.
            if (!up_[w] && flow_[pred_[w]] <= delta) {
                delta = flow_[pred_[w]];
                u_out = w;
                on_first = false;
            }
        }
        if (u_out < 0) throw Error("transportation problem is unbounded");

        if (delta > 0) {
            flow_[in] += delta;
            for (int w = u; w != join; w = parent_[w]) flow_[pred_[w]] += up_[w] ? -delta : delta;
            for (int w = v; w != join; w = parent_[w]) flow_[pred_[w]] += up_[w] ? delta : -delta;
        }
        const int out = pred_[u_out];
        flow_[out] = 0.0;
        state_[out] = kLower;
        state_[in] = kTree;

        // Re-hang the path from the entering endpoint on u_out's side up to u_out.
        int u_in = on_first ? u : v;
        int v_in = on_first ? v : u;
        int w = u_in, new_parent = v_in, new_pred = in;
        bool new_up = (source_[in] == u_in);
        while (true) {
            int old_parent = parent_[w];
            int old_pred = pred_[w];
            bool old_up = up_[w];
            detach(w);
            parent_[w] = new_parent;
            pred_[w] = new_pred;
            up_[w] = new_up;
            children_[new_parent].push_back(w);
            if (w == u_out) break;
            new_parent = w;
            new_pred = old_pred;
            new_up = !old_up;
            w = old_parent;
        }
        rethread();
    }
};

} // namespace twisted
