#include "dadiff/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace dadiff {

using nlohmann::json;

void RunConfig::validate() const {
    if (T < 1) throw std::invalid_argument("config: T must be >= 1");
    if (S < 1 || S > T) throw std::invalid_argument("config: need 1 <= S <= T");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("config: need 0 < beta_start <= beta_end < 1");
    if (C < 1 || heads < 1 || C % heads != 0)
        throw std::invalid_argument("config: C must be positive and divisible by heads");
    if (!(lr_model > 0.0) || !(lr_disc > 0.0))
        throw std::invalid_argument("config: learning rates must be > 0");
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
        throw std::invalid_argument("config: lambdas must be >= 0");
    if (mode != "paired" && mode != "unpaired")
        throw std::invalid_argument("config: mode must be 'paired' or 'unpaired'");
    if (disc_input != "reverse" && disc_input != "forward" && disc_input != "both")
        throw std::invalid_argument("config: disc_input must be reverse|forward|both");
    if (frames < 2) throw std::invalid_argument("config: frames must be >= 2");
    if (image_size < 128) throw std::invalid_argument("config: image_size must be >= 128");
    // night-transform ranges (or the exact identity) are checked by gen_pair
    if (search_size != 8 * H || search_size != 8 * W)
        throw std::invalid_argument("config: H and W must equal search_size / 8");
}

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

std::string RunConfig::to_json() const {
    json j;
    j["T"] = T;
    j["S"] = S;
    j["beta_start"] = beta_start;
    j["beta_end"] = beta_end;
    j["C"] = C;
    j["heads"] = heads;
    j["H"] = H;
    j["W"] = W;
    j["lambda1"] = lambda1;
    j["lambda2"] = lambda2;
    j["lambda3"] = lambda3;
    j["lr_model"] = lr_model;
    j["lr_disc"] = lr_disc;
    j["poly_power"] = poly_power;
    j["epochs"] = epochs;
    j["steps_per_epoch"] = steps_per_epoch;
    j["batch_size"] = batch_size;
    j["grad_clip"] = grad_clip;
    j["mode"] = mode;
    j["seed"] = seed;
    j["use_alignment"] = use_alignment;
    j["disc_input"] = disc_input;
    j["disc_t_embed"] = disc_t_embed;
    j["data_day"] = data_day;
    j["data_night"] = data_night;
    j["sequences"] = sequences;
    j["frames"] = frames;
    j["image_size"] = image_size;
    j["template_size"] = template_size;
    j["search_size"] = search_size;
    j["night_ambient"] = night_ambient;
    j["night_gamma"] = night_gamma;
    j["night_noise"] = night_noise;
    j["checkpoint_every"] = checkpoint_every;
    j["out_dir"] = out_dir;
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig c;
    get_if(j, "T", c.T);
    get_if(j, "S", c.S);
    get_if(j, "beta_start", c.beta_start);
    get_if(j, "beta_end", c.beta_end);
    get_if(j, "C", c.C);
    get_if(j, "heads", c.heads);
    get_if(j, "H", c.H);
    get_if(j, "W", c.W);
    get_if(j, "lambda1", c.lambda1);
    get_if(j, "lambda2", c.lambda2);
    get_if(j, "lambda3", c.lambda3);
    get_if(j, "lr_model", c.lr_model);
    get_if(j, "lr_disc", c.lr_disc);
    get_if(j, "poly_power", c.poly_power);
    get_if(j, "epochs", c.epochs);
    get_if(j, "steps_per_epoch", c.steps_per_epoch);
    get_if(j, "batch_size", c.batch_size);
    get_if(j, "grad_clip", c.grad_clip);
    get_if(j, "mode", c.mode);
    get_if(j, "seed", c.seed);
    get_if(j, "use_alignment", c.use_alignment);
    get_if(j, "disc_input", c.disc_input);
    get_if(j, "disc_t_embed", c.disc_t_embed);
    get_if(j, "data_day", c.data_day);
    get_if(j, "data_night", c.data_night);
    get_if(j, "sequences", c.sequences);
    get_if(j, "frames", c.frames);
    get_if(j, "image_size", c.image_size);
    get_if(j, "template_size", c.template_size);
    get_if(j, "search_size", c.search_size);
    get_if(j, "night_ambient", c.night_ambient);
    get_if(j, "night_gamma", c.night_gamma);
    get_if(j, "night_noise", c.night_noise);
    get_if(j, "checkpoint_every", c.checkpoint_every);
    get_if(j, "out_dir", c.out_dir);
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("config: cannot write " + path);
    out << to_json() << "\n";
}

} // namespace dadiff
