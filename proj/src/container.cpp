#include "adaug/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "bytes.hpp"

namespace adaug {
namespace {

constexpr char kMagic[5] = {'A', 'D', 'S', 'L', '1'};

using bytes::get_le;
using bytes::put_le;

std::vector<char> encode_header(const ContainerHeader& h) {
    std::vector<char> out(kMagic, kMagic + 5);
    out.push_back(static_cast<char>(h.type));
    put_le(out, h.depth);
    put_le(out, h.height);
    put_le(out, h.width);
    put_le(out, h.spacing.sx);
    put_le(out, h.spacing.sy);
    put_le(out, h.spacing.slice_thickness);
    return out;
}

constexpr std::size_t kHeaderBytes = 5 + 1 + 3 * 4 + 3 * 8;

void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

void write_container(const std::filesystem::path& path, const ContainerHeader& header,
                     std::span<const std::int16_t> hu) {
    if (header.type != ElementType::hu_int16 || hu.size() != header.element_count())
        throw ShapeError("HU payload does not match container header");
    auto bytes = encode_header(header);
    bytes.reserve(bytes.size() + hu.size() * 2);
    for (auto v : hu) put_le(bytes, v);
    write_bytes(path, bytes);
}

void write_container(const std::filesystem::path& path, const ContainerHeader& header,
                     std::span<const std::uint8_t> labels) {
    if (header.type != ElementType::label_uint8 || labels.size() != header.element_count())
        throw ShapeError("label payload does not match container header");
    auto bytes = encode_header(header);
    bytes.insert(bytes.end(), labels.begin(), labels.end());
    write_bytes(path, bytes);
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 5) != 0)
        throw std::runtime_error("'" + path.string() + "' is not an ADSL1 container");
    const unsigned char* p = bytes.data() + 5;
    Container c;
    const auto type = *p++;
    if (type != 1 && type != 2) throw std::runtime_error("unknown element type in '" + path.string() + "'");
    c.header.type = static_cast<ElementType>(type);
    c.header.depth = get_le<std::uint32_t>(p);
    c.header.height = get_le<std::uint32_t>(p);
    c.header.width = get_le<std::uint32_t>(p);
    c.header.spacing.sx = get_le<double>(p);
    c.header.spacing.sy = get_le<double>(p);
    c.header.spacing.slice_thickness = get_le<double>(p);
    const std::size_t n = c.header.element_count();
    const std::size_t elem = c.header.type == ElementType::hu_int16 ? 2 : 1;
    if (bytes.size() != kHeaderBytes + n * elem)
        throw std::runtime_error("truncated or oversized payload in '" + path.string() + "'");
    if (c.header.type == ElementType::hu_int16) {
        c.hu.resize(n);
        for (std::size_t i = 0; i < n; ++i) c.hu[i] = get_le<std::int16_t>(p);
    } else {
        c.labels.assign(p, p + n);
    }
    return c;
}

void save_slice(const std::filesystem::path& path, const CTSlice& slice) {
    ContainerHeader h{ElementType::hu_int16, 1, static_cast<std::uint32_t>(slice.height()),
                      static_cast<std::uint32_t>(slice.width()), slice.spacing()};
    std::vector<std::int16_t> data(slice.pixels().size());
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<std::int16_t>(std::lround(slice.pixels()[i]));
    write_container(path, h, data);
}

CTSlice load_slice(const std::filesystem::path& path, std::string volume_id, int z_index) {
    auto c = read_container(path);
    if (c.header.type != ElementType::hu_int16 || c.header.depth != 1)
        throw std::runtime_error("'" + path.string() + "' is not a 2D HU container");
    Grid2D<float> px(static_cast<int>(c.header.height), static_cast<int>(c.header.width));
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = c.hu[i];
    return CTSlice(std::move(px), c.header.spacing, std::move(volume_id), z_index);
}

void save_labels(const std::filesystem::path& path, const LabelMap& labels, const PixelSpacing& spacing) {
    ContainerHeader h{ElementType::label_uint8, 1, static_cast<std::uint32_t>(labels.height()),
                      static_cast<std::uint32_t>(labels.width()), spacing};
    write_container(path, h, std::span<const std::uint8_t>(labels.grid().data()));
}

LabelMap load_labels(const std::filesystem::path& path) {
    auto c = read_container(path);
    if (c.header.type != ElementType::label_uint8 || c.header.depth != 1)
        throw std::runtime_error("'" + path.string() + "' is not a 2D label container");
    return LabelMap(Grid2D<std::uint8_t>(static_cast<int>(c.header.height), static_cast<int>(c.header.width),
                                         std::move(c.labels)));
}

}  // namespace adaug
