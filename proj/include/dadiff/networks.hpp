#pragma once

#include "dadiff/nn.hpp"
#include "dadiff/tensor.hpp"

namespace dadiff {

/// Conditional noise predictor eps(xt, condition, t): a compact two-level
/// encoder-decoder over feature maps. The noisy state is concatenated with
/// the condition at the input (2C channels in, C out); a sinusoidal timestep
/// embedding is projected and added per block; the final conv is
/// zero-initialized so the predictor starts at exactly zero.
class AlignmentEncoder {
public:
    AlignmentEncoder() = default;
    AlignmentEncoder(std::size_t channels, Rng& rng);

    /// Requires xt and nf of shape (C,H,W) with H, W divisible by 4, t >= 1.
    ag::Var forward(ag::Graph& g, ag::Var xt, ag::Var nf, int t) const;

    /// Inference wrapper over forward() (no gradients recorded).
    FeatureMap eps_predict(const FeatureMap& xt, const FeatureMap& nf, int t) const;

    /// Ablation hook: zero the input weights that read the condition
    /// channels, making the output invariant to nf.
    void zero_condition_weights();

    nn::NamedParams named_params(const std::string& prefix = "encoder");
    std::size_t channels() const { return c_; }

private:
    struct ResBlock {
        nn::GroupNorm gn;
        nn::Conv2d conv;
        nn::Linear temb;

        ResBlock() = default;
        ResBlock(std::size_t width, Rng& rng);
        ag::Var forward(ag::Graph& g, ag::Var x, const Tensor& temb_vec) const;
        void named(const std::string& prefix, nn::NamedParams& out);
    };

    std::size_t c_ = 0;
    nn::Conv2d stem_;            // 2C -> C
    ResBlock enc0_;              // C
    nn::Conv2d down0_;           // C -> 2C, stride 2
    ResBlock enc1_;              // 2C
    nn::Conv2d down1_;           // 2C -> 4C, stride 2
    ResBlock mid_;               // 4C
    nn::Conv2d up1_;             // 4C -> 2C (after x2 upsample)
    ResBlock dec1_;              // 2C
    nn::Conv2d up0_;             // 2C -> C (after x2 upsample)
    ResBlock dec0_;              // C
    nn::GroupNorm out_gn_;
    nn::Conv2d out_conv_;        // C -> C, zero-initialized

    static constexpr std::size_t kTembWidth = 64;
};

/// Transformer block with a pooled-statistics channel gate. Token width C,
/// fixed token count H*W (the positional encoding is learned per position).
/// With gamma1 = 0 the gate branch is an exact no-op.
class TrackingOrientedLayer {
public:
    TrackingOrientedLayer() = default;
    TrackingOrientedLayer(std::size_t channels, std::size_t heads, std::size_t h,
                          std::size_t w, Rng& rng);

    ag::Var forward(ag::Graph& g, ag::Var x0) const; // (C,H,W) -> (C,H,W)
    FeatureMap forward_nograd(const FeatureMap& x0) const;

    /// Post-attention tokens X^c and gated tokens X^d (testing hook for the
    /// gamma1 = 0 no-op invariant).
    std::pair<Tensor, Tensor> attention_and_gate_tokens(const FeatureMap& x0) const;

    nn::NamedParams named_params(const std::string& prefix = "tol");
    std::size_t height() const { return h_; }
    std::size_t width() const { return w_; }

    nn::Parameter gamma1; // scalar gate weight, initialized to 0

private:
    struct Parts {
        ag::Var xc, xd, out;
    };
    Parts forward_parts(ag::Graph& g, ag::Var x0) const;

    std::size_t c_ = 0, h_ = 0, w_ = 0;
    nn::Parameter pos_; // (H*W, C) learnable positional encoding
    nn::Mhsa att_;
    nn::LayerNorm ln1_, ln2_;
    nn::Linear gate_; // 2C pooled stats -> C gates (logistic-squashed)
    nn::Linear ffn1_, ffn2_;
};

/// Domain classifier applied to every trajectory state: four strided conv
/// blocks with leaky rectifier activations, then a 1x1 conv to a
/// single-channel score map.
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(std::size_t channels, Rng& rng, bool t_embed = false);

    ag::Var forward(ag::Graph& g, ag::Var x, int t = 0) const;
    Tensor score(const FeatureMap& x, int t = 0) const;

    nn::NamedParams named_params(const std::string& prefix = "disc");

private:
    nn::Conv2d c1_, c2_, c3_, c4_, out_;
    nn::Linear temb_;
    bool t_embed_ = false;
    static constexpr double kLeak = 0.2;
    static constexpr std::size_t kTembWidth = 64;
};

} // namespace dadiff
