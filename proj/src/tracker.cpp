#include "dadiff/tracker.hpp"

#include <cmath>
#include <stdexcept>

namespace dadiff {

SiameseBackbone::SiameseBackbone(std::size_t channels, Rng& rng)
    : c_(channels), b1_(3, 16, 3, 2, 1, rng), b2_(16, 32, 3, 2, 1, rng),
      b3_(32, channels, 3, 2, 1, rng), b4_(channels, channels, 3, 1, 1, rng) {}

ag::Var SiameseBackbone::forward(ag::Graph& g, ag::Var img) const {
    check_feature_map(img.val(), "SiameseBackbone");
    if (img.val().dim(0) != 3)
        throw std::invalid_argument("SiameseBackbone: expected 3-channel image, got " +
                                    img.val().shape_str());
    ag::Var h = ag::relu(b1_.forward(g, img));
    h = ag::relu(b2_.forward(g, h));
    h = ag::relu(b3_.forward(g, h));
    return b4_.forward(g, h);
}

FeatureMap SiameseBackbone::extract(const Tensor& img) const {
    ag::Graph g(/*grad_enabled=*/false);
    return forward(g, g.leaf(img)).val();
}

std::pair<FeatureMap, FeatureMap>
SiameseBackbone::extract_pair(const Tensor& template_img, const Tensor& search_img) const {
    if (template_img.rank() != 3 || template_img.dim(1) != 64 || template_img.dim(2) != 64)
        throw std::invalid_argument("extract_pair: template must be 3x64x64, got " +
                                    template_img.shape_str());
    if (search_img.rank() != 3 || search_img.dim(1) != 128 || search_img.dim(2) != 128)
        throw std::invalid_argument("extract_pair: search must be 3x128x128, got " +
                                    search_img.shape_str());
    return {extract(template_img), extract(search_img)};
}

nn::NamedParams SiameseBackbone::named_params(const std::string& prefix) {
    nn::NamedParams out;
    b1_.named(prefix + ".b1", out);
    b2_.named(prefix + ".b2", out);
    b3_.named(prefix + ".b3", out);
    b4_.named(prefix + ".b4", out);
    return out;
}

CorrelationHead::CorrelationHead(std::size_t channels, Rng& rng)
    : mix_(channels, 1, 1, 1, 0, rng) {
    // start as the channel average so an untrained head already peaks where
    // the per-channel correlations agree
    mix_.w.value.fill(1.0 / static_cast<double>(channels));
    mix_.b.value.fill(0.0);
}

ag::Var CorrelationHead::forward(ag::Graph& g, ag::Var ft, ag::Var fs) const {
    ag::Var corr = ag::xcorr_depthwise(fs, ft);
    ag::Var mixed = mix_.forward(g, corr); // (1,Ho,Wo)
    return ag::reshape(mixed, {mixed.val().dim(1), mixed.val().dim(2)});
}

Tensor CorrelationHead::response(const FeatureMap& ft, const FeatureMap& fs) const {
    ag::Graph g(/*grad_enabled=*/false);
    return forward(g, g.leaf(ft), g.leaf(fs)).val();
}

nn::NamedParams CorrelationHead::named_params(const std::string& prefix) {
    nn::NamedParams out;
    mix_.named(prefix + ".mix", out);
    return out;
}

Tensor gaussian_label(std::size_t h, std::size_t w, double cy, double cx, double sigma) {
    Tensor label({h, w});
    double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double dy = static_cast<double>(y) - cy;
            double dx = static_cast<double>(x) - cx;
            label.at2(y, x) = std::exp(-(dy * dy + dx * dx) * inv);
        }
    return label;
}

ag::Var trc_loss(ag::Graph& g, ag::Var response, double gt_cy, double gt_cx) {
    const Tensor& r = response.val();
    if (r.rank() != 2) throw std::invalid_argument("trc_loss: response must be rank-2");
    if (gt_cy < 0 || gt_cx < 0 || gt_cy > static_cast<double>(r.dim(0) - 1) ||
        gt_cx > static_cast<double>(r.dim(1) - 1))
        throw std::invalid_argument("trc_loss: gt center (" + std::to_string(gt_cy) + "," +
                                    std::to_string(gt_cx) + ") outside response frame");
    return ag::bce_logits_mean(response, gaussian_label(r.dim(0), r.dim(1), gt_cy, gt_cx));
}

double trc_loss_value(const Tensor& response, double gt_cy, double gt_cx) {
    ag::Graph g(/*grad_enabled=*/false);
    return trc_loss(g, g.leaf(response), gt_cy, gt_cx).val()[0];
}

std::pair<std::size_t, std::size_t> argmax_2d(const Tensor& response) {
    if (response.rank() != 2) throw std::invalid_argument("argmax_2d: rank-2 expected");
    std::size_t best = 0;
    for (std::size_t i = 1; i < response.size(); ++i)
        if (response[i] > response[best]) best = i;
    return {best / response.dim(1), best % response.dim(1)};
}

} // namespace dadiff
