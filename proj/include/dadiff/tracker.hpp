#pragma once

#include "dadiff/nn.hpp"
#include "dadiff/tensor.hpp"
#include "dadiff/types.hpp"

namespace dadiff {

/// Weight-shared feature extractor: four conv blocks, total stride 8.
/// 3x64x64 template -> Cx8x8; 3x128x128 search -> Cx16x16. Both branches
/// are literally the same parameters applied twice.
class SiameseBackbone {
public:
    SiameseBackbone() = default;
    SiameseBackbone(std::size_t channels, Rng& rng);

    ag::Var forward(ag::Graph& g, ag::Var img) const; // (3,H,W) -> (C,H/8,W/8)
    FeatureMap extract(const Tensor& img) const;

    /// Template and search features in one call (shared weights).
    std::pair<FeatureMap, FeatureMap> extract_pair(const Tensor& template_img,
                                                   const Tensor& search_img) const;

    nn::NamedParams named_params(const std::string& prefix = "backbone");
    std::size_t channels() const { return c_; }

private:
    std::size_t c_ = 0;
    nn::Conv2d b1_, b2_, b3_, b4_;
};

/// Depth-wise cross-correlation of search features against template
/// features, mixed to a single-channel response map by a 1x1 conv.
/// For Cx8x8 against Cx16x16 the response is 9x9.
class CorrelationHead {
public:
    CorrelationHead() = default;
    CorrelationHead(std::size_t channels, Rng& rng);

    ag::Var forward(ag::Graph& g, ag::Var ft, ag::Var fs) const; // -> (Ho,Wo) logits
    Tensor response(const FeatureMap& ft, const FeatureMap& fs) const;

    nn::NamedParams named_params(const std::string& prefix = "head");

private:
    nn::Conv2d mix_;
};

/// Gaussian label map (sigma = 1 cell) centered on (cy, cx), in response
/// cell coordinates.
Tensor gaussian_label(std::size_t h, std::size_t w, double cy, double cx,
                      double sigma = 1.0);

/// Classification tracking loss: BCE between the logistic-squashed response
/// and a Gaussian label centered on gt_center (cy, cx in cell coordinates).
ag::Var trc_loss(ag::Graph& g, ag::Var response, double gt_cy, double gt_cx);
double trc_loss_value(const Tensor& response, double gt_cy, double gt_cx);

/// Argmax of a rank-2 response map, returned as (row, col).
std::pair<std::size_t, std::size_t> argmax_2d(const Tensor& response);

} // namespace dadiff
