#include "dadiff/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace dadiff {

namespace {

constexpr char kMagic[] = "DADIFF_CKPT v1\n";

void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, DadiffModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
    out << kMagic;
    std::string cfg = model.cfg.to_json();
    write_u64(out, cfg.size());
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    nn::NamedParams params = model.all_params();
    write_u64(out, params.size());
    for (auto& [name, p] : params) {
        write_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(out, p->value.rank());
        for (std::size_t d : p->value.shape()) write_u64(out, d);
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

DadiffModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string magic(sizeof(kMagic) - 1, '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (magic != kMagic)
        throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint");
    std::string cfg_text(read_u64(in), '\0');
    in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
    DadiffModel model = DadiffModel::init(RunConfig::from_json(cfg_text));

    nn::NamedParams params = model.all_params();
    std::uint64_t count = read_u64(in);
    if (count != params.size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name(read_u64(in), '\0');
        in.read(name.data(), static_cast<std::streamsize>(name.size()));
        std::vector<std::size_t> shape(read_u64(in));
        for (auto& d : shape) d = read_u64(in);
        if (name != params[i].first)
            throw std::runtime_error("load_checkpoint: unexpected parameter '" + name +
                                     "', wanted '" + params[i].first + "'");
        Tensor& dst = params[i].second->value;
        if (shape != dst.shape())
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(dst.size() * sizeof(double)));
        if (!in) throw std::runtime_error("load_checkpoint: truncated archive " + path);
    }
    return model;
}

} // namespace dadiff
