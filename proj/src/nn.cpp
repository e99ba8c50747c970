#include "dadiff/nn.hpp"

#include <cmath>

namespace dadiff::nn {

namespace {

Tensor he_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
    return rng.normal_tensor(std::move(shape), sigma);
}

} // namespace

Conv2d::Conv2d(std::size_t cin, std::size_t cout, std::size_t k, int stride_, int pad_,
               Rng& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
    if (zero_init)
        w.value = Tensor({cout, cin, k, k});
    else
        w.value = he_init({cout, cin, k, k}, cin * k * k, rng);
    b.value = Tensor({cout});
}

ag::Var Conv2d::forward(ag::Graph& g, ag::Var x) const {
    return ag::conv2d(x, g.param(const_cast<Parameter&>(w)),
                      g.param(const_cast<Parameter&>(b)), stride, pad);
}

void Conv2d::named(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
}

Linear::Linear(std::size_t cin, std::size_t cout, Rng& rng, bool zero_init) {
    if (zero_init)
        w.value = Tensor({cout, cin});
    else
        w.value = he_init({cout, cin}, cin, rng);
    b.value = Tensor({cout});
}

ag::Var Linear::forward(ag::Graph& g, ag::Var x) const {
    return ag::linear(x, g.param(const_cast<Parameter&>(w)),
                      g.param(const_cast<Parameter&>(b)));
}

void Linear::named(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
}

GroupNorm::GroupNorm(std::size_t channels, int groups_) : groups(groups_) {
    gamma.value = Tensor::full({channels}, 1.0);
    beta.value = Tensor({channels});
}

ag::Var GroupNorm::forward(ag::Graph& g, ag::Var x) const {
    return ag::group_norm(x, groups, g.param(const_cast<Parameter&>(gamma)),
                          g.param(const_cast<Parameter&>(beta)));
}

void GroupNorm::named(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".gamma", &gamma);
    out.emplace_back(prefix + ".beta", &beta);
}

LayerNorm::LayerNorm(std::size_t width) {
    gamma.value = Tensor::full({width}, 1.0);
    beta.value = Tensor({width});
}

ag::Var LayerNorm::forward(ag::Graph& g, ag::Var x) const {
    return ag::layer_norm(x, g.param(const_cast<Parameter&>(gamma)),
                          g.param(const_cast<Parameter&>(beta)));
}

void LayerNorm::named(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".gamma", &gamma);
    out.emplace_back(prefix + ".beta", &beta);
}

Mhsa::Mhsa(std::size_t width, std::size_t heads_, Rng& rng)
    : q(width, width, rng), k(width, width, rng), v(width, width, rng),
      o(width, width, rng), heads(heads_) {
    if (width % heads_ != 0)
        throw std::invalid_argument("Mhsa: width must be divisible by head count");
}

ag::Var Mhsa::forward(ag::Graph& g, ag::Var x) const {
    std::size_t d = x.val().dim(1) / heads;
    ag::Var qh = ag::split_heads(q.forward(g, x), heads);
    ag::Var kh = ag::split_heads(k.forward(g, x), heads);
    ag::Var vh = ag::split_heads(v.forward(g, x), heads);
    ag::Var scores = ag::affine(ag::bmm_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(d)), 0.0);
    ag::Var att = ag::softmax_lastdim(scores);
    ag::Var ctx = ag::merge_heads(ag::bmm(att, vh));
    return o.forward(g, ctx);
}

void Mhsa::named(const std::string& prefix, NamedParams& out) {
    q.named(prefix + ".q", out);
    k.named(prefix + ".k", out);
    v.named(prefix + ".v", out);
    o.named(prefix + ".o", out);
}

Adam::Adam(NamedParams params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& [n, p] : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::zero_grad() {
    for (auto& [n, p] : params_) p->zero_grad();
}

void Adam::step(double lr, double grad_clip) {
    ++t_;
    double scale = 1.0;
    if (grad_clip > 0.0) {
        double sq = 0.0;
        for (auto& [n, p] : params_) {
            if (p->grad.empty()) continue;
            for (std::size_t i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
        }
        double norm = std::sqrt(sq);
        if (norm > grad_clip) scale = grad_clip / norm;
    }
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t j = 0; j < params_.size(); ++j) {
        Parameter* p = params_[j].second;
        if (p->grad.empty()) continue;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double g = p->grad[i] * scale;
            m_[j][i] = beta1_ * m_[j][i] + (1.0 - beta1_) * g;
            v_[j][i] = beta2_ * v_[j][i] + (1.0 - beta2_) * g * g;
            double mhat = m_[j][i] / bc1;
            double vhat = v_[j][i] / bc2;
            p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

Tensor timestep_embedding(int t, std::size_t width) {
    Tensor e({width});
    std::size_t half = width / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                               static_cast<double>(half > 1 ? half - 1 : 1));
        e[i] = std::sin(t * freq);
        e[half + i] = std::cos(t * freq);
    }
    return e;
}

} // namespace dadiff::nn
