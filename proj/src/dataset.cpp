#include "dadiff/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace dadiff {

namespace {

BoundingBox parse_box_line(const std::string& line, const std::string& file, int lineno) {
    std::array<double, 4> v{};
    std::stringstream ss(line);
    std::string tok;
    for (int i = 0; i < 4; ++i) {
        if (!std::getline(ss, tok, ','))
            throw std::runtime_error(file + ":" + std::to_string(lineno) +
                                     ": malformed box line '" + line + "'");
        try {
            std::size_t pos = 0;
            v[static_cast<std::size_t>(i)] = std::stod(tok, &pos);
            while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos])))
                ++pos;
            if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw std::runtime_error(file + ":" + std::to_string(lineno) +
                                     ": malformed box value '" + tok + "'");
        }
    }
    BoundingBox b{v[0], v[1], v[2], v[3]};
    b.validate();
    return b;
}

} // namespace

TrackSequence load_sequence(const std::string& dir_path) {
    fs::path dir(dir_path);
    if (!fs::is_directory(dir))
        throw std::runtime_error("load_sequence: missing directory " + dir_path);
    fs::path imgdir = dir / "img";
    if (!fs::is_directory(imgdir))
        throw std::runtime_error("load_sequence: missing img/ folder in " + dir_path);
    fs::path gtfile = dir / "groundtruth.txt";
    if (!fs::is_regular_file(gtfile))
        throw std::runtime_error("load_sequence: missing groundtruth.txt in " + dir_path);

    TrackSequence seq;
    seq.name = dir.filename().string();
    seq.domain = seq.name.find("night") != std::string::npos ? Domain::Night : Domain::Day;

    for (const auto& e : fs::directory_iterator(imgdir))
        if (e.is_regular_file()) seq.frame_paths.push_back(e.path().string());
    std::sort(seq.frame_paths.begin(), seq.frame_paths.end());

    std::ifstream gt(gtfile);
    std::string line;
    int lineno = 0;
    while (std::getline(gt, line)) {
        ++lineno;
        if (line.empty()) continue;
        seq.boxes.push_back(parse_box_line(line, gtfile.string(), lineno));
    }
    if (seq.boxes.size() != seq.frame_paths.size())
        throw std::runtime_error("load_sequence: " + dir_path + " has " +
                                 std::to_string(seq.frame_paths.size()) + " frames but " +
                                 std::to_string(seq.boxes.size()) + " ground-truth lines");

    fs::path attrfile = dir / "attributes.txt";
    if (fs::is_regular_file(attrfile)) {
        std::ifstream at(attrfile);
        std::string all((std::istreambuf_iterator<char>(at)),
                        std::istreambuf_iterator<char>());
        std::stringstream ss(all);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            while (!tok.empty() && (tok.back() == '\n' || tok.back() == '\r' ||
                                    tok.back() == ' '))
                tok.pop_back();
            while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
            if (!tok.empty()) seq.attributes.insert(tok);
        }
    }
    return seq;
}

std::vector<std::string> list_sequence_dirs(const std::string& root) {
    if (!fs::is_directory(root))
        throw std::runtime_error("list_sequence_dirs: missing directory " + root);
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Image> load_frames(const TrackSequence& seq) {
    std::vector<Image> frames;
    frames.reserve(seq.frame_paths.size());
    for (const std::string& p : seq.frame_paths) frames.push_back(read_png(p));
    return frames;
}

void save_boxes(const std::string& path, const std::vector<BoundingBox>& boxes) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_boxes: cannot write " + path);
    for (const BoundingBox& b : boxes)
        out << static_cast<long>(std::lround(b.x)) << ","
            << static_cast<long>(std::lround(b.y)) << ","
            << static_cast<long>(std::lround(b.w)) << ","
            << static_cast<long>(std::lround(b.h)) << "\n";
}

std::vector<BoundingBox> load_boxes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_boxes: cannot open " + path);
    std::vector<BoundingBox> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        out.push_back(parse_box_line(line, path, lineno));
    }
    return out;
}

void dump_features(const std::vector<FeatureMap>& maps,
                   const std::vector<std::string>& labels, const std::string& path) {
    if (maps.size() != labels.size())
        throw std::invalid_argument("dump_features: map/label count mismatch");
    std::size_t c = 0, h = 0, w = 0;
    if (!maps.empty()) {
        check_feature_map(maps[0], "dump_features");
        c = maps[0].dim(0);
        h = maps[0].dim(1);
        w = maps[0].dim(2);
        for (const FeatureMap& m : maps)
            if (m.rank() != 3 || m.dim(0) != c || m.dim(1) != h || m.dim(2) != w)
                throw std::invalid_argument("dump_features: inconsistent map shapes");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("dump_features: cannot write " + path);
    out << "DADIFF_FEATURES v1 count=" << maps.size() << " channels=" << c
        << " height=" << h << " width=" << w << " labels=";
    for (std::size_t i = 0; i < labels.size(); ++i) out << (i ? "," : "") << labels[i];
    out << "\n";
    std::vector<float> buf(c * h * w);
    for (const FeatureMap& m : maps) {
        for (std::size_t i = 0; i < m.size(); ++i) buf[i] = static_cast<float>(m[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("dump_features: write failed for " + path);
}

FeatureDump load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_features: cannot open " + path);
    std::string header;
    if (!std::getline(in, header))
        throw std::runtime_error("load_features: missing header in " + path);
    std::size_t count = 0, c = 0, h = 0, w = 0;
    std::string labels_csv;
    {
        std::stringstream ss(header);
        std::string magic, version, tok;
        ss >> magic >> version;
        if (magic != "DADIFF_FEATURES" || version != "v1")
            throw std::runtime_error("load_features: bad header in " + path);
        while (ss >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
            if (key == "count") count = std::stoul(val);
            else if (key == "channels") c = std::stoul(val);
            else if (key == "height") h = std::stoul(val);
            else if (key == "width") w = std::stoul(val);
            else if (key == "labels") labels_csv = val;
        }
    }
    FeatureDump dump;
    {
        std::stringstream ss(labels_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) dump.labels.push_back(tok);
    }
    if (dump.labels.size() != count)
        throw std::runtime_error("load_features: label count mismatch in " + path);
    std::vector<float> buf(c * h * w);
    for (std::size_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!in) throw std::runtime_error("load_features: truncated payload in " + path);
        FeatureMap m({c, h, w});
        for (std::size_t j = 0; j < m.size(); ++j) m[j] = static_cast<double>(buf[j]);
        dump.maps.push_back(std::move(m));
    }
    return dump;
}

} // namespace dadiff
