#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dadiff/nn.hpp"
#include "dadiff/rng.hpp"
#include "dadiff/tensor.hpp"

namespace testutil {

using dadiff::Rng;
using dadiff::Tensor;

/// Central finite differences against an analytic gradient on a sampled
/// subset of each parameter tensor. `loss` must rebuild the graph and run
/// backward, leaving gradients in the parameters, and return the loss value.
/// The per-group error is the relative L2 distance between the sampled
/// analytic and numeric gradient vectors of that group.
struct GradCheckResult {
    double max_rel_err = 0.0; // worst per-group relative error
    std::string worst;
};

inline GradCheckResult grad_check(const dadiff::nn::NamedParams& params,
                                  const std::function<double()>& loss_with_backward,
                                  const std::function<double()>& loss_only,
                                  int samples_per_group = 6, double step = 1e-4,
                                  std::uint64_t seed = 99) {
    for (auto& [name, p] : params) p->zero_grad();
    loss_with_backward();
    GradCheckResult res;
    Rng rng(seed);
    for (auto& [name, p] : params) {
        std::size_t n = p->value.size();
        if (n == 0) continue;
        int k = std::min<std::size_t>(static_cast<std::size_t>(samples_per_group), n);
        double d2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (int j = 0; j < k; ++j) {
            std::size_t idx = rng.next_u64() % n;
            double orig = p->value[idx];
            p->value[idx] = orig + step;
            double up = loss_only();
            p->value[idx] = orig - step;
            double down = loss_only();
            p->value[idx] = orig;
            double numeric = (up - down) / (2.0 * step);
            double analytic = p->grad.empty() ? 0.0 : p->grad[idx];
            d2 += (analytic - numeric) * (analytic - numeric);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
        }
        double denom = std::max(std::sqrt(a2), std::sqrt(n2));
        double e = denom < 1e-10 ? std::sqrt(d2) : std::sqrt(d2) / denom;
        if (e > res.max_rel_err) {
            res.max_rel_err = e;
            res.worst = name;
        }
    }
    return res;
}

} // namespace testutil
