#include "adaug/config.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace adaug {

namespace {

// Shortest text that parses back to the same double.
std::string fmt_real(double v) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

template <typename I>
I parse_integer(const std::string& key, const std::string& v) {
    I out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty()) out.push_back(t);
    return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + f(xs[i]);
    return out;
}

struct Key {
    const char* name;
    const char* section;  // printed as a comment before the first key of a section
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
};

#define REAL(field) \
    [](const RunConfig& c) { return fmt_real(c.field); }, \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_real(k, v); }
#define INT(field) \
    [](const RunConfig& c) { return std::to_string(c.field); }, \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_integer<decltype(c.field)>(k, v); }
#define BOOL(field) \
    [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        {"phantom.nx", "synthetic CT volumes", INT(phantom.nx)},
        {"phantom.ny", nullptr, INT(phantom.ny)},
        {"phantom.nz", nullptr, INT(phantom.nz)},
        {"phantom.spacing_min", nullptr, REAL(phantom.spacing_min)},
        {"phantom.spacing_max", nullptr, REAL(phantom.spacing_max)},
        {"phantom.thickness_min", nullptr, REAL(phantom.thickness_min)},
        {"phantom.thickness_max", nullptr, REAL(phantom.thickness_max)},
        {"phantom.lesions_min", nullptr, INT(phantom.lesions_min)},
        {"phantom.lesions_max", nullptr, INT(phantom.lesions_max)},
        {"phantom.lesion_type_mix", nullptr,
         [](const RunConfig& c) {
             return fmt_real(c.phantom.lesion_type_mix[0]) + ", " + fmt_real(c.phantom.lesion_type_mix[1]) + ", " +
                    fmt_real(c.phantom.lesion_type_mix[2]);
         },
         [](RunConfig& c, const std::string& k, const std::string& v) {
             const auto parts = split_list(v);
             if (parts.size() != 3) throw ConfigError(k + ": expected three probabilities");
             for (int i = 0; i < 3; ++i) c.phantom.lesion_type_mix[i] = parse_real(k, parts[i]);
         }},
        {"phantom.healthy_fraction", nullptr, REAL(phantom.healthy_fraction)},
        {"phantom.noise_sigma", nullptr, REAL(phantom.noise_sigma)},
        {"phantom.boundary_width", nullptr, INT(phantom.boundary_width)},
        {"phantom.seed", nullptr, INT(phantom.seed)},

        {"data.train_volumes", "dataset split", INT(dataset.train_volumes)},
        {"data.test_volumes", nullptr, INT(dataset.test_volumes)},
        {"data.centers_per_volume", nullptr, INT(dataset.centers_per_volume)},
        {"data.neighbors_per_side", nullptr, INT(dataset.neighbors_per_side)},

        {"net.width_factor", "network", REAL(pipeline.net.width_factor)},
        {"net.dropout_rate", nullptr, REAL(pipeline.net.dropout_rate)},
        {"net.input_height", nullptr, INT(pipeline.net.input_height)},
        {"net.input_width", nullptr, INT(pipeline.net.input_width)},
        {"net.bn_momentum", nullptr, REAL(pipeline.net.bn_momentum)},
        {"net.bn_epsilon", nullptr, REAL(pipeline.net.bn_epsilon)},
        {"net.upsample", nullptr,
         [](const RunConfig& c) { return std::string(upsample_mode_name(c.pipeline.net.upsample)); },
         [](RunConfig& c, const std::string& k, const std::string& v) {
             try {
                 c.pipeline.net.upsample = parse_upsample_mode(v);
             } catch (const std::exception& e) {
                 throw ConfigError(k + ": " + e.what());
             }
         }},

        {"optim.learning_rate", "optimizer: SGD with momentum", REAL(pipeline.optim.learning_rate)},
        {"optim.momentum", nullptr, REAL(pipeline.optim.momentum)},
        {"optim.batch_size", nullptr, INT(pipeline.optim.batch_size)},
        {"optim.epochs", nullptr, INT(pipeline.optim.epochs)},
        {"optim.recalibrate_bn", nullptr, BOOL(pipeline.optim.recalibrate_bn)},

        {"augment.scale_min", "online augmentation", REAL(pipeline.augment.scale_min)},
        {"augment.scale_max", nullptr, REAL(pipeline.augment.scale_max)},
        {"augment.translate_min", nullptr, REAL(pipeline.augment.translate_min)},
        {"augment.translate_max", nullptr, REAL(pipeline.augment.translate_max)},
        {"augment.per_item_baseline", nullptr, INT(pipeline.augs_baseline)},
        {"augment.per_item_extended", nullptr, INT(pipeline.augs_extended)},

        {"ssl.gamma", "pseudo-labels", REAL(pipeline.gamma)},
        {"ssl.fill_mode", nullptr,
         [](const RunConfig& c) { return std::string(fill_mode_name(c.pipeline.fill_mode)); },
         [](RunConfig& c, const std::string& k, const std::string& v) {
             try {
                 c.pipeline.fill_mode = parse_fill_mode(v);
             } catch (const std::exception& e) {
                 throw ConfigError(k + ": " + e.what());
             }
         }},
        {"ssl.resume_from_step1", nullptr, BOOL(pipeline.resume_from_step1)},

        {"post.area_filter_predictions", "post-processing", BOOL(pipeline.area_filter_predictions)},
        {"post.area_filter_pseudo", nullptr, BOOL(pipeline.area_filter_pseudo)},
        {"post.liver_refine_predictions", nullptr, BOOL(pipeline.liver_refine_predictions)},

        {"eval.all_images_denominator", "evaluation", BOOL(pipeline.eval.all_images_denominator)},
        {"eval.acc_include_healthy", nullptr, BOOL(pipeline.eval.acc_include_healthy)},

        {"run.modes", "experiment grid",
         [](const RunConfig& c) { return join(c.modes, [](TrainingMode m) { return std::string(mode_name(m)); }); },
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.modes.clear();
             for (const auto& name : split_list(v)) {
                 try {
                     c.modes.push_back(parse_mode(name));
                 } catch (const std::exception& e) {
                     throw ConfigError(k + ": " + e.what());
                 }
             }
         }},
        {"run.seeds", nullptr,
         [](const RunConfig& c) { return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }); },
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.seeds.clear();
             for (const auto& s : split_list(v)) c.seeds.push_back(parse_integer<std::uint64_t>(k, s));
         }},
        {"run.output_dir", nullptr, [](const RunConfig& c) { return c.output_dir; },
         [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
        {"run.workers", nullptr, INT(workers)},
    };
    return table;
}

#undef REAL
#undef INT
#undef BOOL

std::string format_keys(const RunConfig& config, bool for_digest) {
    std::string out;
    for (const auto& k : keys()) {
        const std::string name = k.name;
        if (for_digest && (name == "run.output_dir" || name == "run.workers")) continue;
        if (k.section && !for_digest) out += (out.empty() ? "# " : "\n# ") + std::string(k.section) + "\n";
        out += name + " = " + k.get(config) + "\n";
    }
    return out;
}

}  // namespace

RunConfig::RunConfig() {
    dataset.train_volumes = 15;
    dataset.test_volumes = 15;
    pipeline.net.dropout_rate = 0.1;
    pipeline.optim.learning_rate = 0.05;
    pipeline.optim.batch_size = 2;
    pipeline.optim.epochs = 35;
    pipeline.augment.translate_min = -3.0;
    pipeline.augment.translate_max = 3.0;
    modes.assign(std::begin(kAllModes), std::end(kAllModes));
    seeds = {1, 2, 3, 4, 5};
}

void RunConfig::validate() const {
    try {
        phantom.validate();
        pipeline.net.validate();
        pipeline.augment.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (dataset.train_volumes < 1 || dataset.test_volumes < 1) throw ConfigError("need train and test volumes");
    if (dataset.centers_per_volume < 1 || dataset.neighbors_per_side < 1)
        throw ConfigError("need at least one center and one neighbour per side");
    if (pipeline.net.input_height != phantom.ny || pipeline.net.input_width != phantom.nx)
        throw ConfigError("network input dims must equal the phantom slice dims");
    if (pipeline.optim.batch_size < 1 || pipeline.optim.epochs < 0) throw ConfigError("bad batch size or epochs");
    if (!(pipeline.optim.learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (pipeline.augs_baseline < 1 || pipeline.augs_extended < 1) throw ConfigError("augmentation counts must be >= 1");
    if (!(pipeline.gamma > 0.5 && pipeline.gamma <= 1.0)) throw ConfigError("ssl.gamma must lie in (0.5, 1]");
    if (modes.empty()) throw ConfigError("run.modes is empty");
    if (seeds.empty()) throw ConfigError("run.seeds is empty");
    if (workers < 1) throw ConfigError("run.workers must be >= 1");
}

std::string format_config(const RunConfig& config) { return format_keys(config, false); }

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (const auto& k : keys())
        if (key == k.name) {
            k.set(config, key, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(std::string_view text) {
    RunConfig config;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        set_config_value(config, trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    }
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write config " + path.string());
    out << format_config(config);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("SHA-256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::string config_digest(const RunConfig& config) { return sha256_hex(format_keys(config, true)); }

int effective_workers(const RunConfig& config) {
    if (const char* env = std::getenv("ADAUG_WORKERS")) {
        const std::string v = env;
        const int n = parse_integer<int>("ADAUG_WORKERS", v);
        if (n < 1) throw ConfigError("ADAUG_WORKERS must be >= 1");
        return n;
    }
    return config.workers;
}

}  // namespace adaug
