#pragma once

#include <cstdint>
#include <string>

namespace dadiff {

/// Every tunable of training, sampling, data generation, and evaluation.
/// Serialized as one JSON document; flags override file values.
struct RunConfig {
    // diffusion
    int T = 100;
    int S = 5;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    // networks
    int C = 32;
    int heads = 4;
    int H = 16; // search feature map height (search_size / 8)
    int W = 16;

    // loss weights
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double lambda3 = 1.0;

    // optimization
    double lr_model = 0.0015;
    double lr_disc = 0.005;
    double poly_power = 0.8;
    int epochs = 50;
    int steps_per_epoch = 40;
    int batch_size = 2;
    double grad_clip = 0.0; // 0 disables
    std::string mode = "paired"; // paired | unpaired
    std::uint64_t seed = 0;

    // alignment wiring
    bool use_alignment = true;           // feed the aligned day branch to the head
    std::string disc_input = "reverse";  // reverse | forward | both
    bool disc_t_embed = false;

    // data
    std::string data_day;
    std::string data_night;
    int sequences = 8;
    int frames = 24;
    int image_size = 144;
    int template_size = 64;
    int search_size = 128;
    double night_ambient = 0.30;
    double night_gamma = 2.0;
    double night_noise = 0.03;

    // bookkeeping
    int checkpoint_every = 10; // epochs
    std::string out_dir;

    void validate() const;

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;
};

} // namespace dadiff
