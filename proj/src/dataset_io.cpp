#include "adaug/dataset_io.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "adaug/container.hpp"

namespace adaug {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slice_stem(const std::string& volume_id, int z) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_z%02d", volume_id.c_str(), z);
    return buf;
}

std::string center_id(const CTSlice& s) { return s.volume_id() + ":z" + std::to_string(s.z_index()); }

json write_slice(const fs::path& dir, const std::string& role, const CTSlice& slice, const LabelMap& labels,
                 const std::string& center) {
    const std::string stem = slice_stem(slice.volume_id(), slice.z_index());
    const std::string image = "slices/" + stem + "_hu.adsl", lab = "slices/" + stem + "_labels.adsl";
    save_slice(dir / image, slice);
    save_labels(dir / lab, labels, slice.spacing());
    json j = {{"role", role},
              {"volume_id", slice.volume_id()},
              {"z", slice.z_index()},
              {"image", image},
              {"labels", lab},
              {"image_class", image_class_name(image_level_class(labels))},
              {"spacing", {slice.spacing().sx, slice.spacing().sy, slice.spacing().slice_thickness}}};
    if (!center.empty()) j["center"] = center;
    return j;
}

}  // namespace

GeneratedDataset generate_for_config(const RunConfig& config) {
    return generate_dataset(config.phantom, config.dataset, config.phantom.seed);
}

void write_dataset(const fs::path& dir, const GeneratedDataset& data, const RunConfig& config) {
    fs::create_directories(dir / "slices");
    fs::create_directories(dir / "volumes");
    std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary | std::ios::trunc);
    if (!manifest) throw std::runtime_error("cannot write manifest in '" + dir.string() + "'");

    for (const auto& pack : data.split.train) {
        const auto& c = pack.labeled;
        manifest << write_slice(dir, "labeled", c.slice, c.labels, "").dump() << "\n";
        for (std::size_t a = 0; a < pack.adjacent.size(); ++a)
            manifest << write_slice(dir, "adjacent", pack.adjacent[a], pack.adjacent_truth[a], center_id(c.slice)).dump()
                     << "\n";
    }
    for (const auto& t : data.split.test) manifest << write_slice(dir, "test", t.slice, t.labels, "").dump() << "\n";

    for (const auto& v : data.volumes) {
        ContainerHeader h{ElementType::hu_int16, static_cast<std::uint32_t>(v.nz), static_cast<std::uint32_t>(v.ny),
                          static_cast<std::uint32_t>(v.nx), v.spacing};
        std::vector<std::int16_t> hu(v.hu.begin(), v.hu.end());
        write_container(dir / "volumes" / (v.volume_id + "_hu.adsl"), h, hu);
        h.type = ElementType::label_uint8;
        write_container(dir / "volumes" / (v.volume_id + "_labels.adsl"), h, std::span<const std::uint8_t>(v.labels));
    }
    save_config(dir / "config.cfg", config);
    if (!manifest) throw std::runtime_error("failed writing manifest in '" + dir.string() + "'");
}

DatasetSplit load_dataset(const fs::path& dir) {
    std::ifstream in(dir / "manifest.jsonl");
    if (!in) throw std::runtime_error("no manifest.jsonl in '" + dir.string() + "'");
    DatasetSplit split;
    std::map<std::string, std::size_t> pack_of;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            const std::string role = j.at("role");
            CTSlice slice = load_slice(dir / j.at("image").get<std::string>(), j.at("volume_id"), j.at("z"));
            LabelMap labels = load_labels(dir / j.at("labels").get<std::string>());
            if (!labels.grid().same_shape(slice.pixels())) throw ShapeError("image and labels differ in shape");
            const ImageClass cls = image_level_class(labels);
            if (parse_image_class(j.at("image_class")) != cls) throw std::runtime_error("image_class disagrees with labels");
            if (role == "labeled") {
                pack_of[center_id(slice)] = split.train.size();
                split.train.push_back({{std::move(slice), std::move(labels), cls}, {}, {}});
            } else if (role == "adjacent") {
                const auto it = pack_of.find(j.at("center").get<std::string>());
                if (it == pack_of.end()) throw std::runtime_error("adjacent slice before its center");
                split.train[it->second].adjacent.push_back(std::move(slice));
                split.train[it->second].adjacent_truth.push_back(std::move(labels));
            } else if (role == "test") {
                split.test.push_back({std::move(slice), std::move(labels), cls});
            } else {
                throw std::runtime_error("unknown role '" + role + "'");
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (split.train.empty() || split.test.empty()) throw std::runtime_error("dataset has no train or no test slices");
    split.validate_disjoint();
    return split;
}

}  // namespace adaug
