#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>

#include "adaug/metrics.hpp"
#include "adaug/phantom.hpp"

using namespace adaug;

namespace {

Mask liver_of(const LabelMap& l) { return liver_mask_of(l); }

/// Number of 6-connected components of liver voxels.
int liver_components_3d(const PhantomVolume& v) {
    std::vector<int> seen(v.labels.size(), 0);
    int comps = 0;
    for (std::size_t s = 0; s < v.labels.size(); ++s) {
        if (v.labels[s] == 0 || seen[s]) continue;
        ++comps;
        std::queue<std::size_t> q;
        q.push(s);
        seen[s] = 1;
        while (!q.empty()) {
            const std::size_t i = q.front();
            q.pop();
            const int x = static_cast<int>(i % v.nx), y = static_cast<int>((i / v.nx) % v.ny),
                      z = static_cast<int>(i / (static_cast<std::size_t>(v.nx) * v.ny));
            const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
            for (const auto& o : d) {
                const int xx = x + o[0], yy = y + o[1], zz = z + o[2];
                if (xx < 0 || yy < 0 || zz < 0 || xx >= v.nx || yy >= v.ny || zz >= v.nz) continue;
                const std::size_t j = v.index(zz, yy, xx);
                if (v.labels[j] != 0 && !seen[j]) {
                    seen[j] = 1;
                    q.push(j);
                }
            }
        }
    }
    return comps;
}

}  // namespace

TEST(PhantomSpec, Validation) {
    PhantomSpec s;
    s.nx = 50;
    EXPECT_THROW(generate_volume(s, 1), ShapeError);
    s = PhantomSpec{};
    s.nz = 4;
    EXPECT_THROW(s.validate(), RangeError);
    s = PhantomSpec{};
    s.lesion_type_mix = {0.5, 0.5, 0.5};
    EXPECT_THROW(s.validate(), RangeError);
}

TEST(GenerateVolume, Deterministic) {
    const PhantomSpec s;
    EXPECT_EQ(generate_volume(s, 11, "tr001"), generate_volume(s, 11, "tr001"));
    EXPECT_NE(generate_volume(s, 11, "tr001").hu, generate_volume(s, 11, "tr002").hu);
}

TEST(GenerateVolume, AllHealthyHasNoLesions) {
    PhantomSpec s;
    s.healthy_fraction = 1.0;
    for (int i = 0; i < 5; ++i) {
        const auto v = generate_volume(s, 3, train_volume_id(i));
        for (auto c : v.labels) ASSERT_FALSE(is_lesion(c));
    }
}

TEST(GenerateVolume, StructuralInvariants) {
    const PhantomSpec s;
    for (int i = 0; i < 12; ++i) {
        const auto kind = static_cast<VolumeKind>(i % 4);
        const auto v = generate_volume(s, 5, train_volume_id(i), kind);
        EXPECT_EQ(liver_components_3d(v), 1);
        EXPECT_GE(v.spacing.sx, 0.71);
        EXPECT_LE(v.spacing.sx, 1.17);
        EXPECT_GE(v.spacing.slice_thickness, 1.25);
        EXPECT_LE(v.spacing.slice_thickness, 5.0);
        bool any_lesion = false;
        for (int z = 0; z < v.nz; ++z) {
            const LabelMap l = v.label_slice(z);
            // Boundary class is exactly the band of the slice's liver mask.
            const Mask band = boundary_band(liver_of(l), s.boundary_width);
            for (std::size_t p = 0; p < l.size(); ++p) {
                ASSERT_EQ(l[p] == 2, band[p] == 1) << v.volume_id << " z=" << z;
                any_lesion = any_lesion || is_lesion(l[p]);
            }
            const CTSlice slice = v.slice(z);
            for (float hu : slice.pixels().data()) {
                ASSERT_GE(hu, kMinHu);
                ASSERT_LE(hu, kMaxHu);
                ASSERT_EQ(hu, std::round(hu));
            }
        }
        EXPECT_EQ(any_lesion, kind != VolumeKind::healthy);
        for (const auto& les : v.lesions)
            EXPECT_EQ(les.type, kind == VolumeKind::cyst ? ClassId::cyst
                                : kind == VolumeKind::hemangioma ? ClassId::hemangioma
                                                                 : ClassId::metastasis);
    }
}

TEST(GenerateVolume, ClassIntensitiesAreDistinct) {
    PhantomSpec s;
    s.noise_sigma = 0.0;
    std::vector<double> hu[6];
    for (int i = 0; i < 9; ++i) {
        const auto v = generate_volume(s, 9, train_volume_id(i), static_cast<VolumeKind>(i % 3));
        for (std::size_t p = 0; p < v.hu.size(); ++p) hu[v.labels[p]].push_back(v.hu[p]);
    }
    auto quantile = [&](int c, double q) {
        auto& v = hu[c];
        std::sort(v.begin(), v.end());
        return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
    };
    auto mean = [&](int c) { return std::accumulate(hu[c].begin(), hu[c].end(), 0.0) / static_cast<double>(hu[c].size()); };
    EXPECT_NEAR(mean(5), 10.0, 10.0);   // cyst, homogeneous
    EXPECT_EQ(quantile(5, 0.0), quantile(5, 1.0));
    EXPECT_GT(mean(3), 40.0);           // metastasis, heterogeneous
    EXPECT_LT(mean(3), 70.0);
    EXPECT_GT(quantile(3, 0.9) - quantile(3, 0.1), 2.0);
    EXPECT_GT(quantile(4, 0.25), 50.0);  // hemangioma core
    EXPECT_LT(quantile(4, 0.25), 90.0);
    EXPECT_GT(quantile(4, 0.95), 110.0);  // bright rim
    EXPECT_GT(mean(1), 90.0);           // parenchyma
    EXPECT_LT(mean(1), 110.0);
    EXPECT_GT(mean(0), -100.0);         // background mixture
    EXPECT_LT(mean(0), 60.0);
}

TEST(GenerateVolume, AdjacentLiverMasksAgree) {
    const PhantomSpec s;
    double worst = 1.0;
    for (int i = 0; i < 20; ++i) {
        const auto v = generate_volume(s, 7, train_volume_id(i));
        for (int z = 0; z + 1 < v.nz; ++z)
            worst = std::min(worst, dice(liver_of(v.label_slice(z)), liver_of(v.label_slice(z + 1))));
    }
    EXPECT_GE(worst, 0.90);
}

TEST(GenerateVolume, AdjacentLesionMasksAgree) {
    // Mean center/neighbour lesion Dice over packs whose lesion spans at least three slices.
    const auto data = generate_dataset(PhantomSpec{}, {20, 1, 2, 1}, 7);
    double sum = 0;
    int n = 0;
    for (const auto& pack : data.split.train) {
        const Mask c = binary_lesion_mask(pack.labeled.labels);
        if (std::count(c.data().begin(), c.data().end(), 1) == 0) continue;
        bool spans = true;
        for (const auto& t : pack.adjacent_truth) {
            const Mask a = binary_lesion_mask(t);
            spans = spans && std::count(a.data().begin(), a.data().end(), 1) > 0;
        }
        if (!spans) continue;
        for (const auto& t : pack.adjacent_truth) {
            sum += dice(c, binary_lesion_mask(t));
            ++n;
        }
    }
    ASSERT_GT(n, 10);
    EXPECT_GE(sum / n, 0.6);
}

TEST(SlicePack, NeighboursOfCenter) {
    PhantomSpec s;
    s.nz = 5;
    const auto v = generate_volume(s, 1, "tr000");
    const auto p = make_slice_pack(v, 2);
    ASSERT_EQ(p.adjacent.size(), 2u);
    EXPECT_EQ(p.adjacent[0].z_index(), 1);
    EXPECT_EQ(p.adjacent[1].z_index(), 3);
    EXPECT_EQ(p.labeled.slice.z_index(), 2);
    for (const auto& a : p.adjacent) {
        EXPECT_EQ(a.volume_id(), "tr000");
        EXPECT_EQ(a.spacing(), p.labeled.slice.spacing());
    }
    EXPECT_EQ(p.labeled.image_class, image_level_class(p.labeled.labels));
    EXPECT_THROW(make_slice_pack(v, 0), RangeError);
    EXPECT_THROW(make_slice_pack(v, 4), RangeError);
}

TEST(SlicePack, NoLiverGivesNoPacks) {
    PhantomVolume v;
    v.nx = v.ny = 16;
    v.nz = 5;
    v.hu.assign(16 * 16 * 5, 0.0f);
    v.labels.assign(16 * 16 * 5, 0);
    v.volume_id = "empty";
    EXPECT_TRUE(extract_slice_packs(v, 2).empty());
}

TEST(BuildDataset, PackArithmetic) {
    PhantomSpec s;
    const auto d = build_dataset(s, 20, 2, 3);
    EXPECT_EQ(d.train.size(), 40u);
    std::size_t adjacent = 0;
    for (const auto& p : d.train) adjacent += p.adjacent.size();
    EXPECT_EQ(adjacent, 80u);
}

TEST(BuildDataset, DeterministicAndDisjoint) {
    PhantomSpec s;
    const auto a = build_dataset(s, 6, 3, 5), b = build_dataset(s, 6, 3, 5);
    ASSERT_EQ(a.train.size(), b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ(a.train[i].labeled.slice, b.train[i].labeled.slice);
        EXPECT_EQ(a.train[i].labeled.labels, b.train[i].labeled.labels);
    }
    std::set<std::string> tr, te;
    for (const auto& p : a.train) tr.insert(p.labeled.slice.volume_id());
    for (const auto& t : a.test) te.insert(t.slice.volume_id());
    for (const auto& id : te) EXPECT_EQ(tr.count(id), 0u);
    EXPECT_NO_THROW(a.validate_disjoint());
    EXPECT_THROW(build_dataset(s, 3, 0, 5), RangeError);
    EXPECT_THROW(build_dataset(s, 0, 3, 5), RangeError);
}

TEST(BuildDataset, VolumeKindsFollowTableRatios) {
    // 64/48/51/62 of 225 apportioned over 225 volumes reproduces the counts exactly.
    PhantomSpec s;
    const auto kinds = volume_kind_schedule(s, 225, 1);
    int counts[4] = {};
    for (auto k : kinds) counts[static_cast<int>(k)]++;
    EXPECT_EQ(counts[0], 64);
    EXPECT_EQ(counts[1], 48);
    EXPECT_EQ(counts[2], 51);
    EXPECT_EQ(counts[3], 62);
}

TEST(BuildDataset, ImageClassProportionsRoughlyMatch) {
    PhantomSpec s;
    const auto d = build_dataset(s, 60, 1, 2);
    int counts[4] = {};
    for (const auto& p : d.train) counts[static_cast<int>(p.labeled.image_class)]++;
    const double n = static_cast<double>(d.train.size());
    const double target[4] = {64 / 225.0, 48 / 225.0, 51 / 225.0, 62 / 225.0};
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(counts[c] / n, target[c], 0.12) << c;
}
