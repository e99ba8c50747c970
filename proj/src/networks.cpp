#include "dadiff/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace dadiff {

namespace {

int norm_groups(std::size_t channels) {
    return channels % 8 == 0 ? 8 : static_cast<int>(channels);
}

} // namespace

// ----------------------------------------------------------- AlignmentEncoder

AlignmentEncoder::ResBlock::ResBlock(std::size_t width, Rng& rng)
    : gn(width, norm_groups(width)), conv(width, width, 3, 1, 1, rng),
      temb(kTembWidth, width, rng) {}

ag::Var AlignmentEncoder::ResBlock::forward(ag::Graph& g, ag::Var x,
                                            const Tensor& temb_vec) const {
    ag::Var h = conv.forward(g, ag::silu(gn.forward(g, x)));
    h = ag::add_cvec(h, temb.forward(g, g.leaf(temb_vec)));
    return ag::add(x, h);
}

void AlignmentEncoder::ResBlock::named(const std::string& prefix, nn::NamedParams& out) {
    gn.named(prefix + ".gn", out);
    conv.named(prefix + ".conv", out);
    temb.named(prefix + ".temb", out);
}

AlignmentEncoder::AlignmentEncoder(std::size_t channels, Rng& rng)
    : c_(channels), stem_(2 * channels, channels, 3, 1, 1, rng), enc0_(channels, rng),
      down0_(channels, 2 * channels, 3, 2, 1, rng), enc1_(2 * channels, rng),
      down1_(2 * channels, 4 * channels, 3, 2, 1, rng), mid_(4 * channels, rng),
      up1_(4 * channels, 2 * channels, 3, 1, 1, rng), dec1_(2 * channels, rng),
      up0_(2 * channels, channels, 3, 1, 1, rng), dec0_(channels, rng),
      out_gn_(channels, norm_groups(channels)),
      out_conv_(channels, channels, 3, 1, 1, rng, /*zero_init=*/true) {}

ag::Var AlignmentEncoder::forward(ag::Graph& g, ag::Var xt, ag::Var nf, int t) const {
    if (t < 1) throw std::out_of_range("AlignmentEncoder: timestep must be >= 1");
    check_feature_map(xt.val(), "AlignmentEncoder");
    if (!xt.val().same_shape(nf.val()))
        throw std::invalid_argument("AlignmentEncoder: state/condition shape mismatch " +
                                    xt.val().shape_str() + " vs " + nf.val().shape_str());
    if (xt.val().dim(0) != c_)
        throw std::invalid_argument("AlignmentEncoder: expected " + std::to_string(c_) +
                                    " channels, got " + std::to_string(xt.val().dim(0)));
    if (xt.val().dim(1) % 4 != 0 || xt.val().dim(2) % 4 != 0)
        throw std::invalid_argument("AlignmentEncoder: H and W must be divisible by 4");

    Tensor te = nn::timestep_embedding(t, kTembWidth);
    ag::Var h0 = stem_.forward(g, ag::concat_c(xt, nf));
    h0 = enc0_.forward(g, h0, te);
    ag::Var h1 = enc1_.forward(g, down0_.forward(g, h0), te);
    ag::Var hm = mid_.forward(g, down1_.forward(g, h1), te);
    ag::Var u1 = up1_.forward(g, ag::upsample_nearest2(hm));
    u1 = dec1_.forward(g, ag::add(u1, h1), te);
    ag::Var u0 = up0_.forward(g, ag::upsample_nearest2(u1));
    u0 = dec0_.forward(g, ag::add(u0, h0), te);
    return out_conv_.forward(g, ag::silu(out_gn_.forward(g, u0)));
}

FeatureMap AlignmentEncoder::eps_predict(const FeatureMap& xt, const FeatureMap& nf,
                                         int t) const {
    ag::Graph g(/*grad_enabled=*/false);
    return forward(g, g.leaf(xt), g.leaf(nf), t).val();
}

void AlignmentEncoder::zero_condition_weights() {
    // stem weight is (C, 2C, 3, 3); channels >= C read the condition
    Tensor& w = stem_.w.value;
    std::size_t k2 = w.dim(2) * w.dim(3);
    for (std::size_t o = 0; o < w.dim(0); ++o)
        for (std::size_t i = c_; i < 2 * c_; ++i)
            for (std::size_t j = 0; j < k2; ++j) w[(o * w.dim(1) + i) * k2 + j] = 0.0;
}

nn::NamedParams AlignmentEncoder::named_params(const std::string& prefix) {
    nn::NamedParams out;
    stem_.named(prefix + ".stem", out);
    enc0_.named(prefix + ".enc0", out);
    down0_.named(prefix + ".down0", out);
    enc1_.named(prefix + ".enc1", out);
    down1_.named(prefix + ".down1", out);
    mid_.named(prefix + ".mid", out);
    up1_.named(prefix + ".up1", out);
    dec1_.named(prefix + ".dec1", out);
    up0_.named(prefix + ".up0", out);
    dec0_.named(prefix + ".dec0", out);
    out_gn_.named(prefix + ".out_gn", out);
    out_conv_.named(prefix + ".out_conv", out);
    return out;
}

// ------------------------------------------------------ TrackingOrientedLayer

TrackingOrientedLayer::TrackingOrientedLayer(std::size_t channels, std::size_t heads,
                                             std::size_t h, std::size_t w, Rng& rng)
    : c_(channels), h_(h), w_(w), att_(channels, heads, rng), ln1_(channels),
      ln2_(channels), gate_(2 * channels, channels, rng),
      ffn1_(channels, 4 * channels, rng), ffn2_(4 * channels, channels, rng) {
    pos_.value = rng.normal_tensor({h * w, channels}, 0.02);
    gamma1.value = Tensor({1}); // starts as a plain Transformer block
}

TrackingOrientedLayer::Parts TrackingOrientedLayer::forward_parts(ag::Graph& g,
                                                                  ag::Var x0) const {
    check_feature_map(x0.val(), "TrackingOrientedLayer");
    if (x0.val().dim(0) != c_ || x0.val().dim(1) != h_ || x0.val().dim(2) != w_)
        throw std::invalid_argument("TrackingOrientedLayer: expected (" + std::to_string(c_) +
                                    "," + std::to_string(h_) + "," + std::to_string(w_) +
                                    "), got " + x0.val().shape_str());
    ag::Var xa = ag::chw_to_tokens(x0);
    ag::Var xb = ag::add(xa, g.param(const_cast<nn::Parameter&>(pos_)));
    ag::Var xc = ln1_.forward(g, ag::add(att_.forward(g, xb), xb));
    ag::Var pooled = ag::concat_vec(ag::rows_mean(xc), ag::rows_max(xc));
    ag::Var gates = ag::sigmoid(gate_.forward(g, pooled));
    ag::Var gated = ag::mul_scalar(ag::mul_rowvec(xc, gates),
                                   g.param(const_cast<nn::Parameter&>(gamma1)));
    ag::Var xd = ag::add(xc, gated);
    ag::Var ff = ffn2_.forward(g, ag::relu(ffn1_.forward(g, xd)));
    ag::Var out = ln2_.forward(g, ag::add(ff, xd));
    return {xc, xd, ag::tokens_to_chw(out, h_, w_)};
}

ag::Var TrackingOrientedLayer::forward(ag::Graph& g, ag::Var x0) const {
    return forward_parts(g, x0).out;
}

FeatureMap TrackingOrientedLayer::forward_nograd(const FeatureMap& x0) const {
    ag::Graph g(/*grad_enabled=*/false);
    return forward(g, g.leaf(x0)).val();
}

std::pair<Tensor, Tensor>
TrackingOrientedLayer::attention_and_gate_tokens(const FeatureMap& x0) const {
    ag::Graph g(/*grad_enabled=*/false);
    Parts parts = forward_parts(g, g.leaf(x0));
    return {parts.xc.val(), parts.xd.val()};
}

nn::NamedParams TrackingOrientedLayer::named_params(const std::string& prefix) {
    nn::NamedParams out;
    out.emplace_back(prefix + ".pos", &pos_);
    att_.named(prefix + ".att", out);
    ln1_.named(prefix + ".ln1", out);
    ln2_.named(prefix + ".ln2", out);
    gate_.named(prefix + ".gate", out);
    out.emplace_back(prefix + ".gamma1", &gamma1);
    ffn1_.named(prefix + ".ffn1", out);
    ffn2_.named(prefix + ".ffn2", out);
    return out;
}

// --------------------------------------------------------------- Discriminator

Discriminator::Discriminator(std::size_t channels, Rng& rng, bool t_embed)
    : c1_(channels, 2 * channels, 3, 2, 1, rng), c2_(2 * channels, 4 * channels, 3, 2, 1, rng),
      c3_(4 * channels, 4 * channels, 3, 2, 1, rng),
      c4_(4 * channels, 4 * channels, 3, 2, 1, rng), out_(4 * channels, 1, 1, 1, 0, rng),
      t_embed_(t_embed) {
    if (t_embed_) temb_ = nn::Linear(kTembWidth, channels, rng);
}

ag::Var Discriminator::forward(ag::Graph& g, ag::Var x, int t) const {
    check_feature_map(x.val(), "Discriminator");
    ag::Var h = x;
    if (t_embed_)
        h = ag::add_cvec(h, temb_.forward(g, g.leaf(nn::timestep_embedding(t, kTembWidth))));
    h = ag::leaky_relu(c1_.forward(g, h), kLeak);
    h = ag::leaky_relu(c2_.forward(g, h), kLeak);
    h = ag::leaky_relu(c3_.forward(g, h), kLeak);
    h = ag::leaky_relu(c4_.forward(g, h), kLeak);
    return out_.forward(g, h);
}

Tensor Discriminator::score(const FeatureMap& x, int t) const {
    ag::Graph g(/*grad_enabled=*/false);
    return forward(g, g.leaf(x), t).val();
}

nn::NamedParams Discriminator::named_params(const std::string& prefix) {
    nn::NamedParams out;
    c1_.named(prefix + ".c1", out);
    c2_.named(prefix + ".c2", out);
    c3_.named(prefix + ".c3", out);
    c4_.named(prefix + ".c4", out);
    out_.named(prefix + ".out", out);
    if (t_embed_) temb_.named(prefix + ".temb", out);
    return out;
}

} // namespace dadiff
