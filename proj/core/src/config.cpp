#include "cfstereo/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cfstereo {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("config: " + msg); }

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const int64_t r = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        fail("key '" + key + "': expected integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const uint64_t r = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        fail("key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        fail("key '" + key + "': expected number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("key '" + key + "': expected true/false, got '" + v + "'");
}

template <size_t N>
std::array<int64_t, N> parse_int_list(const std::string& key, const std::string& v) {
    std::array<int64_t, N> out{};
    std::stringstream ss(v);
    std::string item;
    size_t i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= N) fail("key '" + key + "': expected " + std::to_string(N) + " values, got more");
        out[i++] = parse_int(key, trim(item));
    }
    if (i != N)
        fail("key '" + key + "': expected " + std::to_string(N) + " values, got " + std::to_string(i));
    return out;
}

template <size_t N>
std::string join(const std::array<int64_t, N>& a) {
    std::string s;
    for (size_t i = 0; i < N; ++i) {
        if (i) s += ",";
        s += std::to_string(a[i]);
    }
    return s;
}

std::string format_real(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

PyramidVariant parse_variant(const std::string& v) {
    if (v == "cfspp") return PyramidVariant::CFSPP;
    if (v == "spp") return PyramidVariant::SPP;
    if (v == "aspp") return PyramidVariant::ASPP;
    if (v == "plain_lfe") return PyramidVariant::PlainLFE;
    if (v == "plain_3d") return PyramidVariant::Plain3D;
    fail("key 'pyramid_variant': unknown value '" + v +
         "' (want cfspp|spp|aspp|plain_lfe|plain_3d)");
}

}  // namespace

const char* to_string(PyramidVariant v) {
    switch (v) {
        case PyramidVariant::CFSPP: return "cfspp";
        case PyramidVariant::SPP: return "spp";
        case PyramidVariant::ASPP: return "aspp";
        case PyramidVariant::PlainLFE: return "plain_lfe";
        case PyramidVariant::Plain3D: return "plain_3d";
    }
    return "?";
}
const char* to_string(OptimizerKind v) { return v == OptimizerKind::SGD ? "sgd" : "adam"; }
const char* to_string(TextureKind v) {
    return v == TextureKind::RandomNoise ? "random_noise" : "smoothed_noise";
}
const char* to_string(DisparityFieldKind v) {
    switch (v) {
        case DisparityFieldKind::Constant: return "constant";
        case DisparityFieldKind::PlanarRamp: return "planar_ramp";
        case DisparityFieldKind::Blocks: return "blocks";
    }
    return "?";
}
const char* to_string(DataMode v) { return v == DataMode::Overfit ? "overfit" : "stream"; }

void NetworkConfig::validate() const {
    if (d_max <= 0 || d_max % 8 != 0)
        fail("d_max must be positive and divisible by 8, got " + std::to_string(d_max));
    if (base_channels < 1) fail("base_channels must be >= 1");
    if (fusion_channels < 1) fail("fusion_channels must be >= 1");
    for (int64_t b : block_counts)
        if (b < 0) fail("block_counts entries must be >= 0");
    for (int64_t c : stage_channels)
        if (c < 1) fail("stage_channels entries must be >= 1");
    for (size_t i = 0; i < pyramid_pool_sizes.size(); ++i) {
        if (pyramid_pool_sizes[i] < 1) fail("pyramid_pool_sizes entries must be >= 1");
        if (i && pyramid_pool_sizes[i] >= pyramid_pool_sizes[i - 1])
            fail("pyramid_pool_sizes must be strictly decreasing, got " + join(pyramid_pool_sizes));
        if (pyramid_dilations[i] < 1) fail("pyramid_dilations entries must be >= 1");
    }
    for (int64_t k : kernel_pair)
        if (k < 1 || k % 2 == 0)
            fail("kernel_pair entries must be odd and >= 1, got " + join(kernel_pair));
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) fail("learning_rate must be > 0");
    if (steps < 1) fail("steps must be >= 1");
    if (crop_h < 16 || crop_w < 16 || crop_h % 8 != 0 || crop_w % 8 != 0)
        fail("crop_h/crop_w must be >= 16 and divisible by 8, got " + std::to_string(crop_h) + "x" +
             std::to_string(crop_w));
    if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
    if (log_every < 1) fail("log_every must be >= 1");
}

void FullConfig::validate() const {
    net.validate();
    train.validate();
    if (net.d_max > train.crop_w)
        fail("d_max " + std::to_string(net.d_max) + " must not exceed crop_w " +
             std::to_string(train.crop_w));
}

FullConfig parse_config(const std::string& text) {
    FullConfig cfg;
    using Setter = std::function<void(FullConfig&, const std::string&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"d_max", [](FullConfig& c, const std::string& k, const std::string& v) { c.net.d_max = parse_int(k, v); }},
        {"base_channels", [](FullConfig& c, const std::string& k, const std::string& v) { c.net.base_channels = parse_int(k, v); }},
        {"block_counts", [](FullConfig& c, const std::string& k, const std::string& v) { c.net.block_counts = parse_int_list<3>(k, v); }},
        {"stage_channels", [](FullConfig& c, const std::string& k, const std::string& v) { c.net.stage_channels = parse_int_list<3>(k, v); }},
        {"pyramid_pool_sizes", [](FullConfig& c, const std::string& k, const std::string& v) { c.net.pyramid_pool_sizes = parse_int_list<4>(k, v); }},
        {"pyramid_dilations", [](FullConfig& c, const std::string& k, const std::string& v) { c.net.pyramid_dilations = parse_int_list<4>(k, v); }},
        {"pyramid_variant", [](FullConfig& c, const std::string&, const std::string& v) { c.net.pyramid_variant = parse_variant(v); }},
        {"fusion_channels", [](FullConfig& c, const std::string& k, const std::string& v) { c.net.fusion_channels = parse_int(k, v); }},
        {"use_batchnorm", [](FullConfig& c, const std::string& k, const std::string& v) { c.net.use_batchnorm = parse_bool(k, v); }},
        {"kernel_pair", [](FullConfig& c, const std::string& k, const std::string& v) { c.net.kernel_pair = parse_int_list<2>(k, v); }},
        {"learning_rate", [](FullConfig& c, const std::string& k, const std::string& v) { c.train.learning_rate = parse_real(k, v); }},
        {"optimizer", [](FullConfig& c, const std::string& k, const std::string& v) {
             if (v == "sgd") c.train.optimizer = OptimizerKind::SGD;
             else if (v == "adam") c.train.optimizer = OptimizerKind::Adam;
             else fail("key '" + k + "': unknown value '" + v + "' (want sgd|adam)");
         }},
        {"steps", [](FullConfig& c, const std::string& k, const std::string& v) { c.train.steps = parse_int(k, v); }},
        {"crop_h", [](FullConfig& c, const std::string& k, const std::string& v) { c.train.crop_h = parse_int(k, v); }},
        {"crop_w", [](FullConfig& c, const std::string& k, const std::string& v) { c.train.crop_w = parse_int(k, v); }},
        {"seed", [](FullConfig& c, const std::string& k, const std::string& v) { c.train.seed = parse_u64(k, v); }},
        {"checkpoint_every", [](FullConfig& c, const std::string& k, const std::string& v) { c.train.checkpoint_every = parse_int(k, v); }},
        {"log_every", [](FullConfig& c, const std::string& k, const std::string& v) { c.train.log_every = parse_int(k, v); }},
        {"data_mode", [](FullConfig& c, const std::string& k, const std::string& v) {
             if (v == "overfit") c.data.mode = DataMode::Overfit;
             else if (v == "stream") c.data.mode = DataMode::Stream;
             else fail("key '" + k + "': unknown value '" + v + "' (want overfit|stream)");
         }},
        {"texture", [](FullConfig& c, const std::string& k, const std::string& v) {
             if (v == "random_noise") c.data.texture = TextureKind::RandomNoise;
             else if (v == "smoothed_noise") c.data.texture = TextureKind::SmoothedNoise;
             else fail("key '" + k + "': unknown value '" + v + "' (want random_noise|smoothed_noise)");
         }},
        {"disparity_field", [](FullConfig& c, const std::string& k, const std::string& v) {
             if (v == "constant") c.data.field = DisparityFieldKind::Constant;
             else if (v == "planar_ramp") c.data.field = DisparityFieldKind::PlanarRamp;
             else if (v == "blocks") c.data.field = DisparityFieldKind::Blocks;
             else fail("key '" + k + "': unknown value '" + v + "' (want constant|planar_ramp|blocks)");
         }},
    };

    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) fail("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

FullConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const FullConfig& c) {
    std::ostringstream o;
    o << "d_max = " << c.net.d_max << "\n";
    o << "base_channels = " << c.net.base_channels << "\n";
    o << "block_counts = " << join(c.net.block_counts) << "\n";
    o << "stage_channels = " << join(c.net.stage_channels) << "\n";
    o << "pyramid_pool_sizes = " << join(c.net.pyramid_pool_sizes) << "\n";
    o << "pyramid_dilations = " << join(c.net.pyramid_dilations) << "\n";
    o << "pyramid_variant = " << to_string(c.net.pyramid_variant) << "\n";
    o << "fusion_channels = " << c.net.fusion_channels << "\n";
    o << "use_batchnorm = " << (c.net.use_batchnorm ? "true" : "false") << "\n";
    o << "kernel_pair = " << join(c.net.kernel_pair) << "\n";
    o << "learning_rate = " << format_real(c.train.learning_rate) << "\n";
    o << "optimizer = " << to_string(c.train.optimizer) << "\n";
    o << "steps = " << c.train.steps << "\n";
    o << "crop_h = " << c.train.crop_h << "\n";
    o << "crop_w = " << c.train.crop_w << "\n";
    o << "seed = " << c.train.seed << "\n";
    o << "checkpoint_every = " << c.train.checkpoint_every << "\n";
    o << "log_every = " << c.train.log_every << "\n";
    o << "data_mode = " << to_string(c.data.mode) << "\n";
    o << "texture = " << to_string(c.data.texture) << "\n";
    o << "disparity_field = " << to_string(c.data.field) << "\n";
    return o.str();
}

}  // namespace cfstereo
