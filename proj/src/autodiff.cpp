#include "dadiff/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cassert>
#include <cmath>

#include "dadiff/nn.hpp"

namespace dadiff::ag {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

void ensure_grad(Node* n) {
    if (n->grad.empty()) n->grad = Tensor(n->value.shape());
}

Var Graph::leaf(Tensor v, bool needs_grad) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(v);
    n.needs_grad = grad_enabled_ && needs_grad;
    return Var{&n, this};
}

Var Graph::param(nn::Parameter& p) {
    auto it = param_cache_.find(&p);
    if (it != param_cache_.end()) return Var{it->second, this};
    bool trainable = grad_enabled_ && frozen_.find(&p) == frozen_.end();
    Var v = leaf(p.value, trainable);
    param_cache_[&p] = v.node;
    if (trainable) param_leaves_.emplace_back(&p, v.node);
    return v;
}

void Graph::freeze(const std::vector<nn::Parameter*>& ps) {
    for (auto* p : ps) {
        if (param_cache_.count(p))
            throw std::logic_error("Graph::freeze: parameter already used in this graph");
        frozen_.insert(p);
    }
}

Node* Graph::make_node(Tensor value, const std::vector<Var>& parents) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(value);
    if (grad_enabled_) {
        for (const Var& p : parents) {
            if (p.graph != this)
                throw std::logic_error("autodiff: mixing nodes from different graphs");
            if (p.node->needs_grad) {
                n.needs_grad = true;
                break;
            }
        }
    }
    return &n;
}

void Graph::backward(Var root) {
    if (backward_done_) throw std::logic_error("Graph::backward called twice");
    backward_done_ = true;
    if (!grad_enabled_) throw std::logic_error("Graph::backward on a no-grad graph");
    if (root.node->value.size() != 1)
        throw std::invalid_argument("Graph::backward: root must be scalar");
    ensure_grad(root.node);
    root.node->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = *it;
        if (n.backward && n.needs_grad && !n.grad.empty()) n.backward();
    }
    for (auto& [p, node] : param_leaves_) {
        if (node->grad.empty()) continue;
        if (p->grad.empty()) p->grad = Tensor(p->value.shape());
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += node->grad[i];
    }
}

namespace {

// Convenience: wire up a new op node. The backward lambda receives the node
// and its parent nodes and must *add* into parents' grads.
Var op(Graph* g, Tensor value, std::vector<Var> parents,
       std::function<void(Node*, std::vector<Node*>&)> back) {
    Node* n = g->make_node(std::move(value), parents);
    if (n->needs_grad && back) {
        std::vector<Node*> ps;
        ps.reserve(parents.size());
        for (auto& p : parents) ps.push_back(p.node);
        n->backward = [n, ps = std::move(ps), back = std::move(back)]() mutable {
            back(n, ps);
        };
    }
    return Var{n, g};
}

void require_same_shape(const Var& a, const Var& b, const char* who) {
    if (!a.val().same_shape(b.val()))
        throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                    a.val().shape_str() + " vs " + b.val().shape_str());
}

} // namespace

// ---------------------------------------------------------------- arithmetic

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.val()[i];
    return op(a.graph, std::move(out), {a, b}, [](Node* n, std::vector<Node*>& ps) {
        for (Node* p : ps) {
            if (!p->needs_grad) continue;
            ensure_grad(p);
            for (std::size_t i = 0; i < n->grad.size(); ++i) p->grad[i] += n->grad[i];
        }
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.val()[i];
    return op(a.graph, std::move(out), {a, b}, [](Node* n, std::vector<Node*>& ps) {
        if (ps[0]->needs_grad) {
            ensure_grad(ps[0]);
            for (std::size_t i = 0; i < n->grad.size(); ++i) ps[0]->grad[i] += n->grad[i];
        }
        if (ps[1]->needs_grad) {
            ensure_grad(ps[1]);
            for (std::size_t i = 0; i < n->grad.size(); ++i) ps[1]->grad[i] -= n->grad[i];
        }
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.val()[i];
    return op(a.graph, std::move(out), {a, b}, [](Node* n, std::vector<Node*>& ps) {
        if (ps[0]->needs_grad) {
            ensure_grad(ps[0]);
            for (std::size_t i = 0; i < n->grad.size(); ++i)
                ps[0]->grad[i] += n->grad[i] * ps[1]->value[i];
        }
        if (ps[1]->needs_grad) {
            ensure_grad(ps[1]);
            for (std::size_t i = 0; i < n->grad.size(); ++i)
                ps[1]->grad[i] += n->grad[i] * ps[0]->value[i];
        }
    });
}

Var affine(Var a, double k, double c) {
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * out[i] + c;
    return op(a.graph, std::move(out), {a}, [k](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t i = 0; i < n->grad.size(); ++i) ps[0]->grad[i] += k * n->grad[i];
    });
}

Var mul_scalar(Var x, Var s) {
    if (s.val().size() != 1) throw std::invalid_argument("mul_scalar: s must have size 1");
    double sv = s.val()[0];
    Tensor out = x.val();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= sv;
    return op(x.graph, std::move(out), {x, s}, [sv](Node* n, std::vector<Node*>& ps) {
        if (ps[0]->needs_grad) {
            ensure_grad(ps[0]);
            for (std::size_t i = 0; i < n->grad.size(); ++i) ps[0]->grad[i] += sv * n->grad[i];
        }
        if (ps[1]->needs_grad) {
            ensure_grad(ps[1]);
            double acc = 0.0;
            for (std::size_t i = 0; i < n->grad.size(); ++i)
                acc += n->grad[i] * ps[0]->value[i];
            ps[1]->grad[0] += acc;
        }
    });
}

// ---------------------------------------------------------------- reductions

Var mean_all(Var x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.val().size(); ++i) acc += x.val()[i];
    double inv = 1.0 / static_cast<double>(x.val().size());
    return op(x.graph, Tensor::scalar(acc * inv), {x},
              [inv](Node* n, std::vector<Node*>& ps) {
                  if (!ps[0]->needs_grad) return;
                  ensure_grad(ps[0]);
                  double g = n->grad[0] * inv;
                  for (std::size_t i = 0; i < ps[0]->grad.size(); ++i) ps[0]->grad[i] += g;
              });
}

Var sum_all(Var x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.val().size(); ++i) acc += x.val()[i];
    return op(x.graph, Tensor::scalar(acc), {x}, [](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        double g = n->grad[0];
        for (std::size_t i = 0; i < ps[0]->grad.size(); ++i) ps[0]->grad[i] += g;
    });
}

// ---------------------------------------------------------------- activations

Var relu(Var x) {
    Tensor out = x.val();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return op(x.graph, std::move(out), {x}, [](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t i = 0; i < n->grad.size(); ++i)
            if (ps[0]->value[i] > 0.0) ps[0]->grad[i] += n->grad[i];
    });
}

Var leaky_relu(Var x, double alpha) {
    Tensor out = x.val();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = out[i] > 0.0 ? out[i] : alpha * out[i];
    return op(x.graph, std::move(out), {x}, [alpha](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t i = 0; i < n->grad.size(); ++i)
            ps[0]->grad[i] += (ps[0]->value[i] > 0.0 ? 1.0 : alpha) * n->grad[i];
    });
}

Var sigmoid(Var x) {
    Tensor out = x.val();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    return op(x.graph, std::move(out), {x}, [](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            double y = n->value[i];
            ps[0]->grad[i] += y * (1.0 - y) * n->grad[i];
        }
    });
}

Var silu(Var x) {
    Tensor out = x.val();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-out[i]));
        out[i] = out[i] * s;
    }
    return op(x.graph, std::move(out), {x}, [](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            double v = ps[0]->value[i];
            double s = 1.0 / (1.0 + std::exp(-v));
            ps[0]->grad[i] += (s + v * s * (1.0 - s)) * n->grad[i];
        }
    });
}

// ------------------------------------------------------------- linear algebra

Var matmul(Var a, Var b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + A.shape_str() + " x " +
                                    B.shape_str());
    std::size_t m = A.dim(0), k = A.dim(1), n2 = B.dim(1);
    Tensor out({m, n2});
    EMap(out.data(), m, n2).noalias() =
        ECMap(A.data(), m, k) * ECMap(B.data(), k, n2);
    return op(a.graph, std::move(out), {a, b},
              [m, k, n2](Node* n, std::vector<Node*>& ps) {
                  ECMap g(n->grad.data(), m, n2);
                  if (ps[0]->needs_grad) {
                      ensure_grad(ps[0]);
                      EMap(ps[0]->grad.data(), m, k).noalias() +=
                          g * ECMap(ps[1]->value.data(), k, n2).transpose();
                  }
                  if (ps[1]->needs_grad) {
                      ensure_grad(ps[1]);
                      EMap(ps[1]->grad.data(), k, n2).noalias() +=
                          ECMap(ps[0]->value.data(), m, k).transpose() * g;
                  }
              });
}

Var bmm(Var a, Var b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0) || A.dim(2) != B.dim(1))
        throw std::invalid_argument("bmm: incompatible shapes " + A.shape_str() + " x " +
                                    B.shape_str());
    std::size_t bs = A.dim(0), m = A.dim(1), k = A.dim(2), n2 = B.dim(2);
    Tensor out({bs, m, n2});
    for (std::size_t i = 0; i < bs; ++i)
        EMap(out.data() + i * m * n2, m, n2).noalias() =
            ECMap(A.data() + i * m * k, m, k) * ECMap(B.data() + i * k * n2, k, n2);
    return op(a.graph, std::move(out), {a, b},
              [bs, m, k, n2](Node* n, std::vector<Node*>& ps) {
                  for (std::size_t i = 0; i < bs; ++i) {
                      ECMap g(n->grad.data() + i * m * n2, m, n2);
                      if (ps[0]->needs_grad) {
                          ensure_grad(ps[0]);
                          EMap(ps[0]->grad.data() + i * m * k, m, k).noalias() +=
                              g * ECMap(ps[1]->value.data() + i * k * n2, k, n2).transpose();
                      }
                      if (ps[1]->needs_grad) {
                          ensure_grad(ps[1]);
                          EMap(ps[1]->grad.data() + i * k * n2, k, n2).noalias() +=
                              ECMap(ps[0]->value.data() + i * m * k, m, k).transpose() * g;
                      }
                  }
              });
}

Var bmm_nt(Var a, Var b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0) || A.dim(2) != B.dim(2))
        throw std::invalid_argument("bmm_nt: incompatible shapes " + A.shape_str() + " x " +
                                    B.shape_str());
    std::size_t bs = A.dim(0), m = A.dim(1), k = A.dim(2), n2 = B.dim(1);
    Tensor out({bs, m, n2});
    for (std::size_t i = 0; i < bs; ++i)
        EMap(out.data() + i * m * n2, m, n2).noalias() =
            ECMap(A.data() + i * m * k, m, k) *
            ECMap(B.data() + i * n2 * k, n2, k).transpose();
    return op(a.graph, std::move(out), {a, b},
              [bs, m, k, n2](Node* n, std::vector<Node*>& ps) {
                  for (std::size_t i = 0; i < bs; ++i) {
                      ECMap g(n->grad.data() + i * m * n2, m, n2);
                      if (ps[0]->needs_grad) {
                          ensure_grad(ps[0]);
                          EMap(ps[0]->grad.data() + i * m * k, m, k).noalias() +=
                              g * ECMap(ps[1]->value.data() + i * n2 * k, n2, k);
                      }
                      if (ps[1]->needs_grad) {
                          ensure_grad(ps[1]);
                          EMap(ps[1]->grad.data() + i * n2 * k, n2, k).noalias() +=
                              g.transpose() * ECMap(ps[0]->value.data() + i * m * k, m, k);
                      }
                  }
              });
}

Var linear(Var x, Var w, Var b) {
    const Tensor& X = x.val();
    const Tensor& W = w.val();
    bool vec = X.rank() == 1;
    std::size_t t = vec ? 1 : X.dim(0);
    std::size_t cin = vec ? X.dim(0) : X.dim(1);
    if (W.rank() != 2 || W.dim(1) != cin)
        throw std::invalid_argument("linear: weight shape " + W.shape_str() +
                                    " incompatible with input " + X.shape_str());
    std::size_t cout = W.dim(0);
    if (b.val().size() != cout) throw std::invalid_argument("linear: bias size mismatch");
    Tensor out(vec ? std::vector<std::size_t>{cout} : std::vector<std::size_t>{t, cout});
    EMap om(out.data(), t, cout);
    om.noalias() = ECMap(X.data(), t, cin) * ECMap(W.data(), cout, cin).transpose();
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t c = 0; c < cout; ++c) om(r, c) += b.val()[c];
    return op(x.graph, std::move(out), {x, w, b},
              [t, cin, cout](Node* n, std::vector<Node*>& ps) {
                  ECMap g(n->grad.data(), t, cout);
                  if (ps[0]->needs_grad) {
                      ensure_grad(ps[0]);
                      EMap(ps[0]->grad.data(), t, cin).noalias() +=
                          g * ECMap(ps[1]->value.data(), cout, cin);
                  }
                  if (ps[1]->needs_grad) {
                      ensure_grad(ps[1]);
                      EMap(ps[1]->grad.data(), cout, cin).noalias() +=
                          g.transpose() * ECMap(ps[0]->value.data(), t, cin);
                  }
                  if (ps[2]->needs_grad) {
                      ensure_grad(ps[2]);
                      for (std::size_t r = 0; r < t; ++r)
                          for (std::size_t c = 0; c < cout; ++c) ps[2]->grad[c] += g(r, c);
                  }
              });
}

Var softmax_lastdim(Var x) {
    const Tensor& X = x.val();
    if (X.rank() < 2) throw std::invalid_argument("softmax_lastdim: rank must be >= 2");
    std::size_t cols = X.shape().back();
    std::size_t rows = X.size() / cols;
    Tensor out(X.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = X.data() + r * cols;
        double* o = out.data() + r * cols;
        double mx = in[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            o[c] = std::exp(in[c] - mx);
            z += o[c];
        }
        for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
    }
    return op(x.graph, std::move(out), {x},
              [rows, cols](Node* n, std::vector<Node*>& ps) {
                  if (!ps[0]->needs_grad) return;
                  ensure_grad(ps[0]);
                  for (std::size_t r = 0; r < rows; ++r) {
                      const double* y = n->value.data() + r * cols;
                      const double* g = n->grad.data() + r * cols;
                      double dot = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) dot += y[c] * g[c];
                      double* dx = ps[0]->grad.data() + r * cols;
                      for (std::size_t c = 0; c < cols; ++c) dx[c] += y[c] * (g[c] - dot);
                  }
              });
}

// ---------------------------------------------------------------- convolution

namespace {

struct ConvDims {
    std::size_t cin, h, w, cout, k;
    int stride, pad;
    std::size_t ho, wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.rank() != 3 || w.rank() != 4)
        throw std::invalid_argument("conv2d: x must be (C,H,W), w must be (Cout,Cin,k,k)");
    if (w.dim(1) != x.dim(0))
        throw std::invalid_argument("conv2d: input channels " + std::to_string(x.dim(0)) +
                                    " do not match weight " + w.shape_str());
    if (w.dim(2) != w.dim(3)) throw std::invalid_argument("conv2d: kernel must be square");
    ConvDims d;
    d.cin = x.dim(0);
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.cout = w.dim(0);
    d.k = w.dim(2);
    d.stride = stride;
    d.pad = pad;
    long ho = (static_cast<long>(d.h) + 2 * pad - static_cast<long>(d.k)) / stride + 1;
    long wo = (static_cast<long>(d.w) + 2 * pad - static_cast<long>(d.k)) / stride + 1;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: output size would be empty");
    d.ho = static_cast<std::size_t>(ho);
    d.wo = static_cast<std::size_t>(wo);
    return d;
}

// cols is (Cin*k*k) x (Ho*Wo)
void im2col(const Tensor& x, const ConvDims& d, std::vector<double>& cols) {
    cols.assign(d.cin * d.k * d.k * d.ho * d.wo, 0.0);
    std::size_t ow = d.ho * d.wo;
    for (std::size_t c = 0; c < d.cin; ++c) {
        for (std::size_t ky = 0; ky < d.k; ++ky) {
            for (std::size_t kx = 0; kx < d.k; ++kx) {
                double* row = cols.data() + ((c * d.k + ky) * d.k + kx) * ow;
                for (std::size_t oy = 0; oy < d.ho; ++oy) {
                    long iy = static_cast<long>(oy) * d.stride + static_cast<long>(ky) - d.pad;
                    if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
                    const double* src = x.data() + (c * d.h + iy) * d.w;
                    for (std::size_t ox = 0; ox < d.wo; ++ox) {
                        long ix =
                            static_cast<long>(ox) * d.stride + static_cast<long>(kx) - d.pad;
                        if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
                        row[oy * d.wo + ox] = src[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(const std::vector<double>& cols, const ConvDims& d, Tensor& dx) {
    std::size_t ow = d.ho * d.wo;
    for (std::size_t c = 0; c < d.cin; ++c) {
        for (std::size_t ky = 0; ky < d.k; ++ky) {
            for (std::size_t kx = 0; kx < d.k; ++kx) {
                const double* row = cols.data() + ((c * d.k + ky) * d.k + kx) * ow;
                for (std::size_t oy = 0; oy < d.ho; ++oy) {
                    long iy = static_cast<long>(oy) * d.stride + static_cast<long>(ky) - d.pad;
                    if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
                    double* dst = dx.data() + (c * d.h + iy) * d.w;
                    for (std::size_t ox = 0; ox < d.wo; ++ox) {
                        long ix =
                            static_cast<long>(ox) * d.stride + static_cast<long>(kx) - d.pad;
                        if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
                        dst[ix] += row[oy * d.wo + ox];
                    }
                }
            }
        }
    }
}

} // namespace

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    ConvDims d = conv_dims(x.val(), w.val(), stride, pad);
    if (b.val().size() != d.cout) throw std::invalid_argument("conv2d: bias size mismatch");
    std::vector<double> cols;
    im2col(x.val(), d, cols);
    std::size_t kk = d.cin * d.k * d.k, ow = d.ho * d.wo;
    Tensor out({d.cout, d.ho, d.wo});
    EMap om(out.data(), d.cout, ow);
    om.noalias() = ECMap(w.val().data(), d.cout, kk) * ECMap(cols.data(), kk, ow);
    for (std::size_t c = 0; c < d.cout; ++c) om.row(c).array() += b.val()[c];
    // im2col is recomputed in backward: trades a little time for a lot of memory
    return op(x.graph, std::move(out), {x, w, b}, [d, kk, ow](Node* n, std::vector<Node*>& ps) {
        ECMap g(n->grad.data(), d.cout, ow);
        if (ps[1]->needs_grad) {
            ensure_grad(ps[1]);
            std::vector<double> cols;
            im2col(ps[0]->value, d, cols);
            EMap(ps[1]->grad.data(), d.cout, kk).noalias() +=
                g * ECMap(cols.data(), kk, ow).transpose();
        }
        if (ps[2]->needs_grad) {
            ensure_grad(ps[2]);
            for (std::size_t c = 0; c < d.cout; ++c) ps[2]->grad[c] += g.row(c).sum();
        }
        if (ps[0]->needs_grad) {
            ensure_grad(ps[0]);
            std::vector<double> dcols(kk * ow);
            EMap(dcols.data(), kk, ow).noalias() =
                ECMap(ps[1]->value.data(), d.cout, kk).transpose() * g;
            col2im_add(dcols, d, ps[0]->grad);
        }
    });
}

Var upsample_nearest2(Var x) {
    check_feature_map(x.val(), "upsample_nearest2");
    std::size_t c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    Tensor out({c, 2 * h, 2 * w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t xx = 0; xx < 2 * w; ++xx)
                out.at3(ch, y, xx) = x.val().at3(ch, y / 2, xx / 2);
    return op(x.graph, std::move(out), {x}, [c, h, w](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < 2 * h; ++y)
                for (std::size_t xx = 0; xx < 2 * w; ++xx)
                    ps[0]->grad.at3(ch, y / 2, xx / 2) += n->grad.at3(ch, y, xx);
    });
}

Var concat_c(Var a, Var b) {
    check_feature_map(a.val(), "concat_c");
    check_feature_map(b.val(), "concat_c");
    if (a.val().dim(1) != b.val().dim(1) || a.val().dim(2) != b.val().dim(2))
        throw std::invalid_argument("concat_c: spatial dims mismatch");
    std::size_t ca = a.val().dim(0), cb = b.val().dim(0);
    std::size_t hw = a.val().dim(1) * a.val().dim(2);
    Tensor out({ca + cb, a.val().dim(1), a.val().dim(2)});
    std::copy(a.val().data(), a.val().data() + ca * hw, out.data());
    std::copy(b.val().data(), b.val().data() + cb * hw, out.data() + ca * hw);
    return op(a.graph, std::move(out), {a, b}, [ca, cb, hw](Node* n, std::vector<Node*>& ps) {
        if (ps[0]->needs_grad) {
            ensure_grad(ps[0]);
            for (std::size_t i = 0; i < ca * hw; ++i) ps[0]->grad[i] += n->grad[i];
        }
        if (ps[1]->needs_grad) {
            ensure_grad(ps[1]);
            for (std::size_t i = 0; i < cb * hw; ++i) ps[1]->grad[i] += n->grad[ca * hw + i];
        }
    });
}

Var xcorr_depthwise(Var fs, Var ft) {
    check_feature_map(fs.val(), "xcorr_depthwise");
    check_feature_map(ft.val(), "xcorr_depthwise");
    if (fs.val().dim(0) != ft.val().dim(0))
        throw std::invalid_argument("xcorr_depthwise: channel mismatch");
    if (fs.val().dim(1) < ft.val().dim(1) || fs.val().dim(2) < ft.val().dim(2))
        throw std::invalid_argument("xcorr_depthwise: search smaller than template");
    std::size_t c = fs.val().dim(0);
    std::size_t hs = fs.val().dim(1), ws = fs.val().dim(2);
    std::size_t ht = ft.val().dim(1), wt = ft.val().dim(2);
    std::size_t ho = hs - ht + 1, wo = ws - wt + 1;
    Tensor out({c, ho, wo});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                double acc = 0.0;
                for (std::size_t ky = 0; ky < ht; ++ky)
                    for (std::size_t kx = 0; kx < wt; ++kx)
                        acc += fs.val().at3(ch, oy + ky, ox + kx) * ft.val().at3(ch, ky, kx);
                out.at3(ch, oy, ox) = acc;
            }
    return op(fs.graph, std::move(out), {fs, ft},
              [c, ho, wo, ht, wt](Node* n, std::vector<Node*>& ps) {
                  for (std::size_t ch = 0; ch < c; ++ch)
                      for (std::size_t oy = 0; oy < ho; ++oy)
                          for (std::size_t ox = 0; ox < wo; ++ox) {
                              double g = n->grad.at3(ch, oy, ox);
                              if (g == 0.0) continue;
                              for (std::size_t ky = 0; ky < ht; ++ky)
                                  for (std::size_t kx = 0; kx < wt; ++kx) {
                                      if (ps[0]->needs_grad) {
                                          ensure_grad(ps[0]);
                                          ps[0]->grad.at3(ch, oy + ky, ox + kx) +=
                                              g * ps[1]->value.at3(ch, ky, kx);
                                      }
                                      if (ps[1]->needs_grad) {
                                          ensure_grad(ps[1]);
                                          ps[1]->grad.at3(ch, ky, kx) +=
                                              g * ps[0]->value.at3(ch, oy + ky, ox + kx);
                                      }
                                  }
                          }
              });
}

// -------------------------------------------------------------- normalization

Var group_norm(Var x, int groups, Var gamma, Var beta, double eps) {
    check_feature_map(x.val(), "group_norm");
    std::size_t c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    if (groups <= 0 || c % static_cast<std::size_t>(groups) != 0)
        throw std::invalid_argument("group_norm: channels not divisible by groups");
    if (gamma.val().size() != c || beta.val().size() != c)
        throw std::invalid_argument("group_norm: gamma/beta size mismatch");
    std::size_t gsz = c / groups;             // channels per group
    std::size_t m = gsz * h * w;              // elements per group
    std::size_t hw = h * w;
    Tensor out({c, h, w});
    Tensor xhat({c, h, w});
    std::vector<double> inv_std(groups);
    for (int g = 0; g < groups; ++g) {
        const double* base = x.val().data() + g * gsz * hw;
        double mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) mean += base[i];
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double d = base[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(m);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[g] = is;
        double* xh = xhat.data() + g * gsz * hw;
        double* o = out.data() + g * gsz * hw;
        for (std::size_t i = 0; i < m; ++i) {
            xh[i] = (base[i] - mean) * is;
            std::size_t ch = g * gsz + i / hw;
            o[i] = gamma.val()[ch] * xh[i] + beta.val()[ch];
        }
    }
    return op(x.graph, std::move(out), {x, gamma, beta},
              [groups, gsz, m, hw, xhat = std::move(xhat),
               inv_std = std::move(inv_std)](Node* n, std::vector<Node*>& ps) {
                  std::size_t c = gsz * groups;
                  if (ps[1]->needs_grad || ps[2]->needs_grad) {
                      if (ps[1]->needs_grad) ensure_grad(ps[1]);
                      if (ps[2]->needs_grad) ensure_grad(ps[2]);
                      for (std::size_t ch = 0; ch < c; ++ch) {
                          double dg = 0.0, db = 0.0;
                          for (std::size_t i = 0; i < hw; ++i) {
                              double g = n->grad[ch * hw + i];
                              dg += g * xhat[ch * hw + i];
                              db += g;
                          }
                          if (ps[1]->needs_grad) ps[1]->grad[ch] += dg;
                          if (ps[2]->needs_grad) ps[2]->grad[ch] += db;
                      }
                  }
                  if (!ps[0]->needs_grad) return;
                  ensure_grad(ps[0]);
                  for (int g = 0; g < groups; ++g) {
                      const double* xh = xhat.data() + g * gsz * hw;
                      double s1 = 0.0, s2 = 0.0; // mean(dxhat), mean(dxhat*xhat)
                      for (std::size_t i = 0; i < m; ++i) {
                          std::size_t ch = g * gsz + i / hw;
                          double dxh = n->grad[g * gsz * hw + i] * ps[1]->value[ch];
                          s1 += dxh;
                          s2 += dxh * xh[i];
                      }
                      s1 /= static_cast<double>(m);
                      s2 /= static_cast<double>(m);
                      double* dx = ps[0]->grad.data() + g * gsz * hw;
                      for (std::size_t i = 0; i < m; ++i) {
                          std::size_t ch = g * gsz + i / hw;
                          double dxh = n->grad[g * gsz * hw + i] * ps[1]->value[ch];
                          dx[i] += inv_std[g] * (dxh - s1 - xh[i] * s2);
                      }
                  }
              });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& X = x.val();
    if (X.rank() != 2) throw std::invalid_argument("layer_norm: expected rank-2 (tokens, C)");
    std::size_t t = X.dim(0), c = X.dim(1);
    if (gamma.val().size() != c || beta.val().size() != c)
        throw std::invalid_argument("layer_norm: gamma/beta size mismatch");
    Tensor out({t, c});
    Tensor xhat({t, c});
    std::vector<double> inv_std(t);
    for (std::size_t r = 0; r < t; ++r) {
        const double* in = X.data() + r * c;
        double mean = 0.0;
        for (std::size_t i = 0; i < c; ++i) mean += in[i];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            double d = in[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t i = 0; i < c; ++i) {
            xhat.at2(r, i) = (in[i] - mean) * is;
            out.at2(r, i) = gamma.val()[i] * xhat.at2(r, i) + beta.val()[i];
        }
    }
    return op(x.graph, std::move(out), {x, gamma, beta},
              [t, c, xhat = std::move(xhat),
               inv_std = std::move(inv_std)](Node* n, std::vector<Node*>& ps) {
                  if (ps[1]->needs_grad || ps[2]->needs_grad) {
                      if (ps[1]->needs_grad) ensure_grad(ps[1]);
                      if (ps[2]->needs_grad) ensure_grad(ps[2]);
                      for (std::size_t i = 0; i < c; ++i) {
                          double dg = 0.0, db = 0.0;
                          for (std::size_t r = 0; r < t; ++r) {
                              double g = n->grad.at2(r, i);
                              dg += g * xhat.at2(r, i);
                              db += g;
                          }
                          if (ps[1]->needs_grad) ps[1]->grad[i] += dg;
                          if (ps[2]->needs_grad) ps[2]->grad[i] += db;
                      }
                  }
                  if (!ps[0]->needs_grad) return;
                  ensure_grad(ps[0]);
                  for (std::size_t r = 0; r < t; ++r) {
                      double s1 = 0.0, s2 = 0.0;
                      for (std::size_t i = 0; i < c; ++i) {
                          double dxh = n->grad.at2(r, i) * ps[1]->value[i];
                          s1 += dxh;
                          s2 += dxh * xhat.at2(r, i);
                      }
                      s1 /= static_cast<double>(c);
                      s2 /= static_cast<double>(c);
                      for (std::size_t i = 0; i < c; ++i) {
                          double dxh = n->grad.at2(r, i) * ps[1]->value[i];
                          ps[0]->grad.at2(r, i) +=
                              inv_std[r] * (dxh - s1 - xhat.at2(r, i) * s2);
                      }
                  }
              });
}

// -------------------------------------------------------------- shape / tokens

Var reshape(Var x, std::vector<std::size_t> shape) {
    Tensor out = x.val().reshaped(shape);
    return op(x.graph, std::move(out), {x}, [](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t i = 0; i < n->grad.size(); ++i) ps[0]->grad[i] += n->grad[i];
    });
}

Var chw_to_tokens(Var x) {
    check_feature_map(x.val(), "chw_to_tokens");
    std::size_t c = x.val().dim(0), hw = x.val().dim(1) * x.val().dim(2);
    Tensor out({hw, c});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out.at2(i, ch) = x.val()[ch * hw + i];
    return op(x.graph, std::move(out), {x}, [c, hw](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < hw; ++i) ps[0]->grad[ch * hw + i] += n->grad.at2(i, ch);
    });
}

Var tokens_to_chw(Var x, std::size_t h, std::size_t w) {
    const Tensor& X = x.val();
    if (X.rank() != 2 || X.dim(0) != h * w)
        throw std::invalid_argument("tokens_to_chw: token count does not match h*w");
    std::size_t c = X.dim(1), hw = h * w;
    Tensor out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = X.at2(i, ch);
    return op(x.graph, std::move(out), {x}, [c, hw](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < hw; ++i) ps[0]->grad.at2(i, ch) += n->grad[ch * hw + i];
    });
}

Var split_heads(Var x, std::size_t heads) {
    const Tensor& X = x.val();
    if (X.rank() != 2 || X.dim(1) % heads != 0)
        throw std::invalid_argument("split_heads: width not divisible by head count");
    std::size_t t = X.dim(0), c = X.dim(1), d = c / heads;
    Tensor out({heads, t, d});
    for (std::size_t hh = 0; hh < heads; ++hh)
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t i = 0; i < d; ++i)
                out[(hh * t + r) * d + i] = X.at2(r, hh * d + i);
    return op(x.graph, std::move(out), {x}, [heads, t, d](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t hh = 0; hh < heads; ++hh)
            for (std::size_t r = 0; r < t; ++r)
                for (std::size_t i = 0; i < d; ++i)
                    ps[0]->grad.at2(r, hh * d + i) += n->grad[(hh * t + r) * d + i];
    });
}

Var merge_heads(Var x) {
    const Tensor& X = x.val();
    if (X.rank() != 3) throw std::invalid_argument("merge_heads: expected (h,T,d)");
    std::size_t heads = X.dim(0), t = X.dim(1), d = X.dim(2);
    Tensor out({t, heads * d});
    for (std::size_t hh = 0; hh < heads; ++hh)
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t i = 0; i < d; ++i)
                out.at2(r, hh * d + i) = X[(hh * t + r) * d + i];
    return op(x.graph, std::move(out), {x}, [heads, t, d](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t hh = 0; hh < heads; ++hh)
            for (std::size_t r = 0; r < t; ++r)
                for (std::size_t i = 0; i < d; ++i)
                    ps[0]->grad[(hh * t + r) * d + i] += n->grad.at2(r, hh * d + i);
    });
}

Var rows_mean(Var x) {
    const Tensor& X = x.val();
    if (X.rank() != 2) throw std::invalid_argument("rows_mean: expected rank-2");
    std::size_t t = X.dim(0), c = X.dim(1);
    Tensor out({c});
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t i = 0; i < c; ++i) out[i] += X.at2(r, i);
    double inv = 1.0 / static_cast<double>(t);
    for (std::size_t i = 0; i < c; ++i) out[i] *= inv;
    return op(x.graph, std::move(out), {x}, [t, c, inv](Node* n, std::vector<Node*>& ps) {
        if (!ps[0]->needs_grad) return;
        ensure_grad(ps[0]);
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t i = 0; i < c; ++i) ps[0]->grad.at2(r, i) += n->grad[i] * inv;
    });
}

Var rows_max(Var x) {
    const Tensor& X = x.val();
    if (X.rank() != 2) throw std::invalid_argument("rows_max: expected rank-2");
    std::size_t t = X.dim(0), c = X.dim(1);
    Tensor out({c});
    std::vector<std::size_t> arg(c, 0);
    for (std::size_t i = 0; i < c; ++i) {
        double best = X.at2(0, i);
        for (std::size_t r = 1; r < t; ++r)
            if (X.at2(r, i) > best) {
                best = X.at2(r, i);
                arg[i] = r;
            }
        out[i] = best;
    }
    return op(x.graph, std::move(out), {x},
              [c, arg = std::move(arg)](Node* n, std::vector<Node*>& ps) {
                  if (!ps[0]->needs_grad) return;
                  ensure_grad(ps[0]);
                  for (std::size_t i = 0; i < c; ++i)
                      ps[0]->grad.at2(arg[i], i) += n->grad[i];
              });
}

Var concat_vec(Var a, Var b) {
    if (a.val().rank() != 1 || b.val().rank() != 1)
        throw std::invalid_argument("concat_vec: expected rank-1 inputs");
    std::size_t na = a.val().size(), nb = b.val().size();
    Tensor out({na + nb});
    std::copy(a.val().data(), a.val().data() + na, out.data());
    std::copy(b.val().data(), b.val().data() + nb, out.data() + na);
    return op(a.graph, std::move(out), {a, b}, [na, nb](Node* n, std::vector<Node*>& ps) {
        if (ps[0]->needs_grad) {
            ensure_grad(ps[0]);
            for (std::size_t i = 0; i < na; ++i) ps[0]->grad[i] += n->grad[i];
        }
        if (ps[1]->needs_grad) {
            ensure_grad(ps[1]);
            for (std::size_t i = 0; i < nb; ++i) ps[1]->grad[i] += n->grad[na + i];
        }
    });
}

Var mul_rowvec(Var x, Var v) {
    const Tensor& X = x.val();
    if (X.rank() != 2 || v.val().size() != X.dim(1))
        throw std::invalid_argument("mul_rowvec: shape mismatch");
    std::size_t t = X.dim(0), c = X.dim(1);
    Tensor out({t, c});
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t i = 0; i < c; ++i) out.at2(r, i) = X.at2(r, i) * v.val()[i];
    return op(x.graph, std::move(out), {x, v}, [t, c](Node* n, std::vector<Node*>& ps) {
        if (ps[0]->needs_grad) {
            ensure_grad(ps[0]);
            for (std::size_t r = 0; r < t; ++r)
                for (std::size_t i = 0; i < c; ++i)
                    ps[0]->grad.at2(r, i) += n->grad.at2(r, i) * ps[1]->value[i];
        }
        if (ps[1]->needs_grad) {
            ensure_grad(ps[1]);
            for (std::size_t r = 0; r < t; ++r)
                for (std::size_t i = 0; i < c; ++i)
                    ps[1]->grad[i] += n->grad.at2(r, i) * ps[0]->value.at2(r, i);
        }
    });
}

Var add_cvec(Var x, Var v) {
    check_feature_map(x.val(), "add_cvec");
    std::size_t c = x.val().dim(0), hw = x.val().dim(1) * x.val().dim(2);
    if (v.val().size() != c) throw std::invalid_argument("add_cvec: vector size mismatch");
    Tensor out = x.val();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] += v.val()[ch];
    return op(x.graph, std::move(out), {x, v}, [c, hw](Node* n, std::vector<Node*>& ps) {
        if (ps[0]->needs_grad) {
            ensure_grad(ps[0]);
            for (std::size_t i = 0; i < n->grad.size(); ++i) ps[0]->grad[i] += n->grad[i];
        }
        if (ps[1]->needs_grad) {
            ensure_grad(ps[1]);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i) acc += n->grad[ch * hw + i];
                ps[1]->grad[ch] += acc;
            }
        }
    });
}

// --------------------------------------------------------------------- losses

Var bce_logits_mean(Var z, const Tensor& target) {
    const Tensor& Z = z.val();
    if (!Z.same_shape(target))
        throw std::invalid_argument("bce_logits_mean: target shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < Z.size(); ++i) {
        double zi = Z[i];
        acc += std::max(zi, 0.0) - zi * target[i] + std::log1p(std::exp(-std::abs(zi)));
    }
    double inv = 1.0 / static_cast<double>(Z.size());
    Tensor y = target; // captured for backward
    return op(z.graph, Tensor::scalar(acc * inv), {z},
              [inv, y = std::move(y)](Node* n, std::vector<Node*>& ps) {
                  if (!ps[0]->needs_grad) return;
                  ensure_grad(ps[0]);
                  double g = n->grad[0] * inv;
                  for (std::size_t i = 0; i < ps[0]->grad.size(); ++i) {
                      double s = 1.0 / (1.0 + std::exp(-ps[0]->value[i]));
                      ps[0]->grad[i] += g * (s - y[i]);
                  }
              });
}

Var mse(Var a, Var b) {
    Var d = sub(a, b);
    return mean_all(mul(d, d));
}

Var detach(Var x) { return x.graph->leaf(x.val(), false); }

} // namespace dadiff::ag
