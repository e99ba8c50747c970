#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dadiff/tensor.hpp"

namespace dadiff::nn {
struct Parameter;
}

namespace dadiff::ag {

class Graph;

struct Node {
    Tensor value;
    Tensor grad; // allocated on first contribution
    bool needs_grad = false;
    std::function<void()> backward; // pushes this->grad into parents
};

/// Lightweight handle into a Graph.
struct Var {
    Node* node = nullptr;
    Graph* graph = nullptr;

    const Tensor& val() const { return node->value; }
    const std::vector<std::size_t>& shape() const { return node->value.shape(); }
    bool defined() const { return node != nullptr; }
};

/// Reverse-mode tape. Nodes are created in topological order; backward()
/// walks the tape once in reverse. Gradients of parameter leaves are
/// accumulated into the owning Parameter when backward() completes.
///
/// A graph built with grads disabled records values only (inference mode).
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var leaf(Tensor v, bool needs_grad = false);

    /// Leaf tied to a Parameter; cached, so repeated calls share one node and
    /// gradient contributions from every use accumulate together.
    Var param(nn::Parameter& p);

    /// Mark parameters as frozen *before* their leaves are created: they
    /// participate in the forward pass but receive no gradient.
    void freeze(const std::vector<nn::Parameter*>& ps);

    /// Backpropagate from a scalar root and flush parameter gradients.
    void backward(Var root);

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t node_count() const { return nodes_.size(); }

    Node* make_node(Tensor value, const std::vector<Var>& parents);

private:
    std::deque<Node> nodes_;
    std::vector<std::pair<nn::Parameter*, Node*>> param_leaves_;
    std::unordered_map<const nn::Parameter*, Node*> param_cache_;
    std::unordered_set<const nn::Parameter*> frozen_;
    bool grad_enabled_ = true;
    bool backward_done_ = false;
};

void ensure_grad(Node* n);

// ---- elementwise / arithmetic ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var affine(Var a, double k, double c); // k*a + c
Var mul_scalar(Var x, Var s);          // s is a rank-1 [1] tensor

// ---- reductions ----
Var mean_all(Var x); // -> [1]
Var sum_all(Var x);  // -> [1]

// ---- activations ----
Var relu(Var x);
Var leaky_relu(Var x, double alpha);
Var sigmoid(Var x);
Var silu(Var x);

// ---- linear algebra ----
Var matmul(Var a, Var b);             // (M,K)x(K,N)
Var bmm(Var a, Var b);                // (B,M,K)x(B,K,N)
Var bmm_nt(Var a, Var b);             // (B,M,K)x(B,N,K) -> (B,M,N)
Var linear(Var x, Var w, Var b);      // x (T,Cin) or (Cin); w (Cout,Cin)
Var softmax_lastdim(Var x);           // rank 2 or 3

// ---- convolution / spatial ----
Var conv2d(Var x, Var w, Var b, int stride, int pad); // x (Cin,H,W), w (Cout,Cin,k,k)
Var upsample_nearest2(Var x);
Var concat_c(Var a, Var b);                       // channel concat, rank 3
Var xcorr_depthwise(Var fs, Var ft);              // per-channel valid correlation

// ---- normalization ----
Var group_norm(Var x, int groups, Var gamma, Var beta, double eps = 1e-5);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5); // rank 2, over last dim

// ---- shape / token plumbing ----
Var reshape(Var x, std::vector<std::size_t> shape);
Var chw_to_tokens(Var x);                    // (C,H,W) -> (H*W, C)
Var tokens_to_chw(Var x, std::size_t h, std::size_t w); // (H*W, C) -> (C,H,W)
Var split_heads(Var x, std::size_t heads);   // (T,C) -> (h, T, C/h)
Var merge_heads(Var x);                      // (h,T,d) -> (T, h*d)
Var rows_mean(Var x); // (T,C) -> (C)
Var rows_max(Var x);  // (T,C) -> (C)
Var concat_vec(Var a, Var b);
Var mul_rowvec(Var x, Var v); // (T,C) * (C), broadcast over rows
Var add_cvec(Var x, Var v);   // (C,H,W) + (C), broadcast over pixels

// ---- losses ----
Var bce_logits_mean(Var z, const Tensor& target); // mean of stable BCE-with-logits
Var mse(Var a, Var b);                            // mean squared difference -> [1]

/// Copy a value into a fresh constant leaf (blocks gradient flow).
Var detach(Var x);

} // namespace dadiff::ag
