#include "adaug/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <json.hpp>

#include "bytes.hpp"

namespace adaug {

namespace {

constexpr char kMagic[5] = {'A', 'D', 'C', 'K', '1'};

using bytes::get_le;
using bytes::put_le;
using nlohmann::json;

json net_to_json(const NetworkConfig& c) {
    return {{"num_classes", c.num_classes},
            {"width_factor", c.width_factor},
            {"dropout_rate", c.dropout_rate},
            {"input_height", c.input_height},
            {"input_width", c.input_width},
            {"bn_momentum", c.bn_momentum},
            {"bn_epsilon", c.bn_epsilon},
            {"upsample", upsample_mode_name(c.upsample)},
            {"init_seed", c.init_seed}};
}

NetworkConfig net_from_json(const json& j) {
    NetworkConfig c;
    c.num_classes = j.at("num_classes").get<int>();
    c.width_factor = j.at("width_factor").get<double>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.input_height = j.at("input_height").get<int>();
    c.input_width = j.at("input_width").get<int>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.bn_epsilon = j.at("bn_epsilon").get<double>();
    c.upsample = parse_upsample_mode(j.at("upsample").get<std::string>());
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& what) {
    throw std::runtime_error("checkpoint '" + path.string() + "': " + what);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SegmentationNet& net, const CheckpointMeta& meta) {
    if (!(meta.net == net.config())) throw std::invalid_argument("checkpoint metadata does not describe the net");
    const json j = {{"net", net_to_json(meta.net)},
                    {"role", meta.role},
                    {"mode", meta.mode},
                    {"seed", meta.seed},
                    {"epochs_trained", meta.epochs_trained},
                    {"has_optimizer_state", meta.has_optimizer_state},
                    {"class_weights", meta.class_weights},
                    {"gamma", meta.gamma},
                    {"init", meta.init},
                    {"config_digest", meta.config_digest}};
    const std::string text = j.dump(1);

    std::vector<char> out(kMagic, kMagic + 5);
    put_le<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.parameters().size()));
    for (const auto& p : net.parameters()) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.insert(out.end(), p.name.begin(), p.name.end());
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
        for (int d : p.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        put_le<std::uint8_t>(out, p.trainable ? 1 : 0);
        for (float v : p.value) put_le(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
    const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const unsigned char* p = buf.data();
    const unsigned char* end = buf.data() + buf.size();
    auto need = [&](std::size_t n) {
        if (static_cast<std::size_t>(end - p) < n) corrupt(path, "truncated");
    };
    need(5 + 8);
    if (std::memcmp(p, kMagic, 5) != 0) corrupt(path, "bad magic");
    p += 5;
    const auto meta_len = get_le<std::uint64_t>(p);
    need(meta_len);
    json j;
    try {
        j = json::parse(std::string(reinterpret_cast<const char*>(p), meta_len));
    } catch (const std::exception& e) {
        corrupt(path, std::string("bad metadata: ") + e.what());
    }
    p += meta_len;

    CheckpointMeta meta;
    try {
        meta.net = net_from_json(j.at("net"));
        meta.role = j.at("role").get<std::string>();
        meta.mode = j.at("mode").get<std::string>();
        meta.seed = j.at("seed").get<std::uint64_t>();
        meta.epochs_trained = j.at("epochs_trained").get<int>();
        meta.has_optimizer_state = j.at("has_optimizer_state").get<bool>();
        meta.class_weights = j.at("class_weights").get<std::vector<double>>();
        meta.gamma = j.at("gamma").get<double>();
        meta.init = j.at("init").get<std::string>();
        meta.config_digest = j.at("config_digest").get<std::string>();
    } catch (const std::exception& e) {
        corrupt(path, std::string("bad metadata: ") + e.what());
    }

    Checkpoint ck{meta, SegmentationNet(meta.net)};
    need(4);
    const auto count = get_le<std::uint32_t>(p);
    auto& params = ck.net.parameters();
    if (count != params.size()) corrupt(path, "parameter count does not match the network config");
    for (auto& par : params) {
        need(4);
        const auto name_len = get_le<std::uint32_t>(p);
        need(name_len + 4);
        const std::string name(reinterpret_cast<const char*>(p), name_len);
        p += name_len;
        if (name != par.name) corrupt(path, "expected parameter " + par.name + ", found " + name);
        const auto rank = get_le<std::uint32_t>(p);
        need(4ull * rank + 1);
        std::vector<int> shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<int>(get_le<std::uint32_t>(p)));
        if (shape != par.shape) corrupt(path, "shape mismatch for " + name);
        par.trainable = get_le<std::uint8_t>(p) != 0;
        need(4 * par.value.size());
        for (auto& v : par.value) v = get_le<float>(p);
    }
    if (p != end) corrupt(path, "trailing bytes");
    return ck;
}

}  // namespace adaug
