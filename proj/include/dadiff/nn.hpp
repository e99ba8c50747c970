#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dadiff/autodiff.hpp"
#include "dadiff/rng.hpp"
#include "dadiff/tensor.hpp"

namespace dadiff::nn {

struct Parameter {
    Tensor value;
    Tensor grad;

    explicit Parameter(Tensor v = {}) : value(std::move(v)) {}

    void zero_grad() {
        if (!grad.empty()) grad.fill(0.0);
    }
};

/// Named views over a module's parameters, keyed by module path
/// ("backbone.conv1.w", ...). Used for checkpoints and optimizers.
using NamedParams = std::vector<std::pair<std::string, Parameter*>>;

inline std::vector<Parameter*> values(const NamedParams& np) {
    std::vector<Parameter*> out;
    out.reserve(np.size());
    for (auto& [n, p] : np) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------- layers

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::size_t cin, std::size_t cout, std::size_t k, int stride, int pad, Rng& rng,
           bool zero_init = false);

    ag::Var forward(ag::Graph& g, ag::Var x) const;
    void named(const std::string& prefix, NamedParams& out);

    Parameter w, b;
    int stride = 1, pad = 0;
};

class Linear {
public:
    Linear() = default;
    Linear(std::size_t cin, std::size_t cout, Rng& rng, bool zero_init = false);

    ag::Var forward(ag::Graph& g, ag::Var x) const;
    void named(const std::string& prefix, NamedParams& out);

    Parameter w, b;
};

class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(std::size_t channels, int groups);

    ag::Var forward(ag::Graph& g, ag::Var x) const;
    void named(const std::string& prefix, NamedParams& out);

    Parameter gamma, beta;
    int groups = 1;
};

class LayerNorm {
public:
    LayerNorm() = default;
    explicit LayerNorm(std::size_t width);

    ag::Var forward(ag::Graph& g, ag::Var x) const;
    void named(const std::string& prefix, NamedParams& out);

    Parameter gamma, beta;
};

/// Multi-head self-attention over (tokens, C).
class Mhsa {
public:
    Mhsa() = default;
    Mhsa(std::size_t width, std::size_t heads, Rng& rng);

    ag::Var forward(ag::Graph& g, ag::Var x) const;
    void named(const std::string& prefix, NamedParams& out);

    Linear q, k, v, o;
    std::size_t heads = 1;
};

// ---------------------------------------------------------------- optimizer

/// Adam with decoupled per-step learning rate (the poly schedule is applied
/// by the caller). One instance per parameter partition.
class Adam {
public:
    explicit Adam(NamedParams params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void zero_grad();
    void step(double lr, double grad_clip = 0.0);

    const NamedParams& params() const { return params_; }

private:
    NamedParams params_;
    std::vector<Tensor> m_, v_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

// ---------------------------------------------------------------- helpers

/// Sinusoidal timestep embedding of the given width (sin half, cos half).
Tensor timestep_embedding(int t, std::size_t width);

} // namespace dadiff::nn
