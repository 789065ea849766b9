#include "adaug/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "adaug/rng.hpp"

namespace adaug {
namespace {

constexpr double kPi = std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Low-order harmonic radial deformation whose amplitude and phase drift slowly with z.
struct RadialDeformation {
    struct Harmonic {
        int order;
        double amplitude, amp_wobble, omega, psi, phase, drift;
    };
    std::vector<Harmonic> harmonics;

    static RadialDeformation random(Rng& rng, int first_order, int last_order, double max_amp) {
        RadialDeformation d;
        for (int k = first_order; k <= last_order; ++k)
            d.harmonics.push_back({k, uniform(rng, 0.0, max_amp), uniform(rng, 0.0, 0.4), uniform(rng, 0.1, 0.3),
                                   uniform(rng, 0.0, 2 * kPi), uniform(rng, 0.0, 2 * kPi), uniform(rng, -0.04, 0.04)});
        return d;
    }

    double operator()(double theta, double z) const {
        double r = 1.0;
        for (const auto& h : harmonics) {
            double a = h.amplitude * (1.0 + h.amp_wobble * std::sin(h.omega * z + h.psi));
            r += a * std::cos(h.order * theta + h.phase + h.drift * z);
        }
        return r;
    }
};

struct LiverShape {
    double cx, cy, ax, ay, zc, rz, drift_x, drift_y;
    RadialDeformation deform;

    // Normalized radius <= 1 inside the liver. Returns a large value for slices past the ends.
    double rho(double x, double y, double z) const {
        double t = (z - zc) / rz;
        double s2 = 1.0 - t * t;
        if (s2 <= 0) return 1e9;
        double dx = (x - (cx + drift_x * (z - zc))) / ax;
        double dy = (y - (cy + drift_y * (z - zc))) / ay;
        double r = std::sqrt(dx * dx + dy * dy);
        double theta = std::atan2(dy, dx);
        return r / (std::sqrt(s2) * deform(theta, z));
    }
};

struct LesionShape {
    LesionInfo info;
    double ax, ay, angle;
    RadialDeformation deform;

    // Normalized radius <= 1 inside the lesion.
    double rho(double x, double y, double z) const {
        double t = (z - info.cz) / info.radius_z;
        double s2 = 1.0 - t * t;
        if (s2 <= 0) return 1e9;
        double dx = x - info.cx, dy = y - info.cy;
        double u = (std::cos(angle) * dx + std::sin(angle) * dy) / ax;
        double v = (-std::sin(angle) * dx + std::cos(angle) * dy) / ay;
        double r = std::sqrt(u * u + v * v);
        return r / (std::sqrt(s2) * deform(std::atan2(v, u), z));
    }
};

// Smooth field in [0,1] built from a few random plane waves.
struct SmoothField {
    struct Wave {
        double kx, ky, kz, phase, weight;
    };
    std::vector<Wave> waves;

    static SmoothField random(Rng& rng, int n, double min_freq, double max_freq) {
        SmoothField f;
        for (int i = 0; i < n; ++i) {
            double freq = uniform(rng, min_freq, max_freq);
            double dir = uniform(rng, 0.0, 2 * kPi);
            f.waves.push_back({freq * std::cos(dir), freq * std::sin(dir), uniform(rng, -0.1, 0.1),
                               uniform(rng, 0.0, 2 * kPi), uniform(rng, 0.5, 1.0)});
        }
        return f;
    }

    double operator()(double x, double y, double z) const {
        double s = 0, wsum = 0;
        for (const auto& w : waves) {
            s += w.weight * std::sin(w.kx * x + w.ky * y + w.kz * z + w.phase);
            wsum += w.weight;
        }
        return 0.5 + 0.5 * s / wsum;
    }
};

ClassId lesion_class(VolumeKind k) {
    switch (k) {
        case VolumeKind::metastasis: return ClassId::metastasis;
        case VolumeKind::hemangioma: return ClassId::hemangioma;
        default: return ClassId::cyst;
    }
}

VolumeKind sample_kind(const PhantomSpec& spec, Rng& rng) {
    if (uniform(rng, 0.0, 1.0) < spec.healthy_fraction) return VolumeKind::healthy;
    std::discrete_distribution<int> mix(spec.lesion_type_mix.begin(), spec.lesion_type_mix.end());
    return static_cast<VolumeKind>(mix(rng));
}

}  // namespace

void PhantomSpec::validate() const {
    if (nx <= 0 || ny <= 0 || nx % 16 != 0 || ny % 16 != 0)
        throw ShapeError("phantom in-plane dimensions must be positive multiples of 16");
    if (nz < 5) throw RangeError("phantom needs at least 5 slices");
    if (!(spacing_min > 0 && spacing_min <= spacing_max)) throw RangeError("invalid in-plane spacing range");
    if (!(thickness_min > 0 && thickness_min <= thickness_max)) throw RangeError("invalid slice thickness range");
    if (lesions_min < 1 || lesions_max < lesions_min) throw RangeError("invalid lesions-per-volume range");
    double sum = 0;
    for (double p : lesion_type_mix) {
        if (p < 0) throw RangeError("lesion type probabilities must be non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw RangeError("lesion type mix must sum to 1");
    if (!(healthy_fraction >= 0 && healthy_fraction <= 1)) throw RangeError("healthy fraction must lie in [0,1]");
    if (noise_sigma < 0) throw RangeError("noise sigma must be non-negative");
    if (boundary_width < 1) throw RangeError("boundary width must be at least 1");
}

CTSlice PhantomVolume::slice(int z) const {
    if (z < 0 || z >= nz) throw RangeError("slice index outside volume");
    Grid2D<float> px(ny, nx);
    std::copy_n(hu.begin() + static_cast<std::ptrdiff_t>(index(z, 0, 0)), px.size(), px.data().begin());
    return CTSlice(std::move(px), spacing, volume_id, z);
}

LabelMap PhantomVolume::label_slice(int z) const {
    if (z < 0 || z >= nz) throw RangeError("slice index outside volume");
    Grid2D<std::uint8_t> lab(ny, nx);
    std::copy_n(labels.begin() + static_cast<std::ptrdiff_t>(index(z, 0, 0)), lab.size(), lab.data().begin());
    return LabelMap(std::move(lab));
}

PhantomVolume generate_volume(const PhantomSpec& spec, std::uint64_t seed, const std::string& volume_id,
                              std::optional<VolumeKind> forced_kind) {
    spec.validate();
    Rng rng(derive_seed(seed, "volume", volume_id));
    const VolumeKind kind = forced_kind ? *forced_kind : sample_kind(spec, rng);

    PhantomVolume vol;
    vol.nx = spec.nx;
    vol.ny = spec.ny;
    vol.nz = spec.nz;
    vol.volume_id = volume_id;
    const double s = uniform(rng, spec.spacing_min, spec.spacing_max);
    vol.spacing = {s, s, uniform(rng, spec.thickness_min, spec.thickness_max)};

    LiverShape liver{spec.nx / 2.0 + uniform(rng, -3, 3),
                     spec.ny / 2.0 + uniform(rng, -3, 3),
                     0.30 * spec.nx * uniform(rng, 0.92, 1.08),
                     0.25 * spec.ny * uniform(rng, 0.92, 1.08),
                     (spec.nz - 1) / 2.0 + uniform(rng, -0.5, 0.5),
                     spec.nz * uniform(rng, 0.85, 1.0),
                     uniform(rng, -0.3, 0.3),
                     uniform(rng, -0.3, 0.3),
                     RadialDeformation::random(rng, 2, 4, 0.05)};

    const std::size_t n = static_cast<std::size_t>(spec.nx) * spec.ny * spec.nz;
    vol.labels.assign(n, 0);
    std::vector<double> liver_rho(n);
    for (int z = 0; z < spec.nz; ++z)
        for (int y = 0; y < spec.ny; ++y)
            for (int x = 0; x < spec.nx; ++x) {
                const auto i = vol.index(z, y, x);
                liver_rho[i] = liver.rho(x, y, z);
                if (liver_rho[i] <= 1.0) vol.labels[i] = static_cast<std::uint8_t>(ClassId::liver);
            }

    // Lesions must keep clear of the boundary band on every slice they touch.
    const double margin_rho = 1.0 - (spec.boundary_width + 2.5) / std::min(liver.ax, liver.ay);
    std::vector<LesionShape> lesions;
    if (kind != VolumeKind::healthy) {
        const int count = std::uniform_int_distribution<int>(spec.lesions_min, spec.lesions_max)(rng);
        const ClassId type = lesion_class(kind);
        for (int l = 0; l < count; ++l) {
            for (int attempt = 0; attempt < 200; ++attempt) {
                const double shrink = attempt < 100 ? 1.0 : 0.8;
                const double r_mm = uniform(rng, 6.0, 10.0) * shrink;
                LesionShape ls;
                ls.info.type = type;
                ls.info.radius_px = r_mm / s;
                ls.info.radius_z = std::max(1.6, r_mm * uniform(rng, 1.3, 2.0) / vol.spacing.slice_thickness);
                const double ecc = uniform(rng, 0.85, 1.15);
                ls.ax = ls.info.radius_px * ecc;
                ls.ay = ls.info.radius_px / ecc;
                ls.angle = uniform(rng, 0.0, kPi);
                ls.deform = RadialDeformation::random(rng, 2, 3, 0.06);
                ls.info.cz = uniform(rng, 2.0, spec.nz - 3.0);
                ls.info.cx = liver.cx + uniform(rng, -0.6, 0.6) * liver.ax;
                ls.info.cy = liver.cy + uniform(rng, -0.6, 0.6) * liver.ay;

                bool ok = true;
                const int z0 = std::max(0, static_cast<int>(std::floor(ls.info.cz - ls.info.radius_z)));
                const int z1 = std::min(spec.nz - 1, static_cast<int>(std::ceil(ls.info.cz + ls.info.radius_z)));
                const double reach = ls.info.radius_px * 1.4 + 3.0;
                for (int z = z0; z <= z1 && ok; ++z)
                    for (int y = std::max(0, int(ls.info.cy - reach)); y <= std::min(spec.ny - 1, int(ls.info.cy + reach)) && ok; ++y)
                        for (int x = std::max(0, int(ls.info.cx - reach)); x <= std::min(spec.nx - 1, int(ls.info.cx + reach)) && ok; ++x) {
                            if (ls.rho(x, y, z) > 1.0) continue;
                            if (liver_rho[vol.index(z, y, x)] > margin_rho) ok = false;
                            for (const auto& other : lesions)
                                if (other.rho(x, y, z) <= 1.3) ok = false;
                        }
                if (ok) {
                    lesions.push_back(ls);
                    break;
                }
            }
        }
    }

    const auto lesion_px = [&](int z, int y, int x) -> const LesionShape* {
        for (const auto& ls : lesions)
            if (ls.rho(x, y, z) <= 1.0) return &ls;
        return nullptr;
    };

    // Intensities.
    SmoothField tissue = SmoothField::random(rng, 4, 0.08, 0.25);
    SmoothField parenchyma = SmoothField::random(rng, 3, 0.1, 0.3);
    SmoothField mottle = SmoothField::random(rng, 5, 0.5, 1.0);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    vol.hu.assign(n, 0.0f);
    for (int z = 0; z < spec.nz; ++z)
        for (int y = 0; y < spec.ny; ++y)
            for (int x = 0; x < spec.nx; ++x) {
                const auto i = vol.index(z, y, x);
                double v;
                if (const LesionShape* ls = lesion_px(z, y, x)) {
                    vol.labels[i] = static_cast<std::uint8_t>(ls->info.type);
                    switch (ls->info.type) {
                        case ClassId::cyst: v = 10.0; break;
                        case ClassId::metastasis: v = 40.0 + 12.0 * mottle(x, y, z); break;
                        default: v = ls->rho(x, y, z) > 0.7 ? 150.0 : 68.0 + 14.0 * mottle(x, y, z); break;
                    }
                } else if (vol.labels[i] == static_cast<std::uint8_t>(ClassId::liver)) {
                    v = 95.0 + 10.0 * parenchyma(x, y, z);
                } else {
                    double t = tissue(x, y, z);
                    t = t * t * (3 - 2 * t);
                    v = -100.0 + 160.0 * t;
                }
                v += noise(rng);
                vol.hu[i] = static_cast<float>(std::clamp(std::round(v), double(kMinHu), double(kMaxHu)));
            }

    // Boundary band from the per-slice liver mask.
    for (int z = 0; z < spec.nz; ++z) {
        Mask m(spec.ny, spec.nx);
        for (int y = 0; y < spec.ny; ++y)
            for (int x = 0; x < spec.nx; ++x) m(y, x) = vol.labels[vol.index(z, y, x)] != 0;
        const Mask band = boundary_band(m, spec.boundary_width);
        for (int y = 0; y < spec.ny; ++y)
            for (int x = 0; x < spec.nx; ++x)
                if (band(y, x)) vol.labels[vol.index(z, y, x)] = static_cast<std::uint8_t>(ClassId::liver_boundary);
    }

    for (const auto& ls : lesions) vol.lesions.push_back(ls.info);
    return vol;
}

SlicePack make_slice_pack(const PhantomVolume& volume, int z, int neighbors_per_side) {
    if (neighbors_per_side < 1) throw RangeError("need at least one neighbour per side");
    if (z - neighbors_per_side < 0 || z + neighbors_per_side > volume.nz - 1)
        throw RangeError("center slice " + std::to_string(z) + " has no room for its neighbours");
    SlicePack pack;
    pack.labeled.slice = volume.slice(z);
    pack.labeled.labels = volume.label_slice(z);
    pack.labeled.image_class = image_level_class(pack.labeled.labels);
    for (int d = -neighbors_per_side; d <= neighbors_per_side; ++d) {
        if (d == 0) continue;
        pack.adjacent.push_back(volume.slice(z + d));
        pack.adjacent_truth.push_back(volume.label_slice(z + d));
    }
    return pack;
}

std::vector<int> choose_centers(const PhantomVolume& volume, int centers_per_volume, int neighbors_per_side,
                                std::uint64_t seed) {
    const int lo = neighbors_per_side;
    const int hi = volume.nz - 1 - neighbors_per_side;
    std::vector<int> liver_slices;
    for (int z = lo; z <= hi; ++z) {
        const auto counts = volume.label_slice(z).class_counts();
        if (counts[0] != static_cast<std::size_t>(volume.nx) * volume.ny) liver_slices.push_back(z);
    }
    if (liver_slices.empty()) return {};

    const int separation = 2 * neighbors_per_side + 1;
    std::vector<int> centers;
    auto try_add = [&](int z) {
        if (static_cast<int>(centers.size()) >= centers_per_volume) return;
        if (std::find(liver_slices.begin(), liver_slices.end(), z) == liver_slices.end()) return;
        for (int c : centers)
            if (std::abs(c - z) < separation) return;
        centers.push_back(z);
    };
    for (const auto& l : volume.lesions) try_add(std::clamp(static_cast<int>(std::lround(l.cz)), lo, hi));
    Rng rng(derive_seed(seed, volume.volume_id, "centers"));
    std::vector<int> rest = liver_slices;
    std::shuffle(rest.begin(), rest.end(), rng);
    for (int z : rest) try_add(z);
    std::sort(centers.begin(), centers.end());
    return centers;
}

std::vector<SlicePack> extract_slice_packs(const PhantomVolume& volume, int centers_per_volume,
                                           int neighbors_per_side, std::uint64_t seed) {
    std::vector<SlicePack> packs;
    for (int z : choose_centers(volume, centers_per_volume, neighbors_per_side, seed))
        packs.push_back(make_slice_pack(volume, z, neighbors_per_side));
    return packs;
}

std::string train_volume_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "tr%03d", i);
    return buf;
}

std::string test_volume_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "te%03d", i);
    return buf;
}

std::vector<VolumeKind> volume_kind_schedule(const PhantomSpec& spec, int n, std::uint64_t seed) {
    const std::array<double, 4> p = {(1 - spec.healthy_fraction) * spec.lesion_type_mix[0],
                                     (1 - spec.healthy_fraction) * spec.lesion_type_mix[1],
                                     (1 - spec.healthy_fraction) * spec.lesion_type_mix[2], spec.healthy_fraction};
    // Largest-remainder apportionment, ties to the earlier kind.
    std::array<int, 4> count{};
    std::array<double, 4> rem{};
    int assigned = 0;
    for (int k = 0; k < 4; ++k) {
        double exact = p[k] * n;
        count[k] = static_cast<int>(std::floor(exact));
        rem[k] = exact - count[k];
        assigned += count[k];
    }
    while (assigned < n) {
        int best = 0;
        for (int k = 1; k < 4; ++k)
            if (rem[k] > rem[best]) best = k;
        ++count[best];
        rem[best] = -1;
        ++assigned;
    }
    std::vector<VolumeKind> kinds;
    for (int k = 0; k < 4; ++k) kinds.insert(kinds.end(), count[k], static_cast<VolumeKind>(k));
    Rng rng(derive_seed(seed, "kinds"));
    std::shuffle(kinds.begin(), kinds.end(), rng);
    return kinds;
}

GeneratedDataset generate_dataset(const PhantomSpec& spec, const DatasetOptions& options, std::uint64_t seed) {
    spec.validate();
    if (options.train_volumes < 1 || options.test_volumes < 1)
        throw RangeError("need at least one train and one test volume");
    if (options.centers_per_volume < 1) throw RangeError("need at least one center per volume");
    GeneratedDataset out;
    const auto train_kinds = volume_kind_schedule(spec, options.train_volumes, derive_seed(seed, "train"));
    const auto test_kinds = volume_kind_schedule(spec, options.test_volumes, derive_seed(seed, "test"));
    for (int i = 0; i < options.train_volumes; ++i) {
        const auto id = train_volume_id(i);
        out.volumes.push_back(generate_volume(spec, seed, id, train_kinds[i]));
    }
    for (int i = 0; i < options.test_volumes; ++i) {
        const auto id = test_volume_id(i);
        out.volumes.push_back(generate_volume(spec, seed, id, test_kinds[i]));
    }
    for (int v = 0; v < static_cast<int>(out.volumes.size()); ++v) {
        const auto& vol = out.volumes[v];
        const bool is_train = v < options.train_volumes;
        for (int z : choose_centers(vol, options.centers_per_volume, options.neighbors_per_side, seed)) {
            if (is_train) {
                out.train_centers.emplace_back(v, z);
                out.split.train.push_back(make_slice_pack(vol, z, options.neighbors_per_side));
            } else {
                out.test_centers.emplace_back(v, z);
                out.split.test.push_back(make_slice_pack(vol, z, options.neighbors_per_side).labeled);
            }
        }
    }
    out.split.validate_disjoint();
    return out;
}

DatasetSplit build_dataset(const PhantomSpec& spec, int n_train_volumes, int n_test_volumes, std::uint64_t seed,
                           int centers_per_volume, int neighbors_per_side) {
    return generate_dataset(spec, {n_train_volumes, n_test_volumes, centers_per_volume, neighbors_per_side}, seed)
        .split;
}

}  // namespace adaug
