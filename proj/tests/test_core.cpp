#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "adaug/container.hpp"
#include "adaug/core.hpp"
#include "oracles.hpp"

using namespace adaug;

namespace {

LabelMap random_labels(std::mt19937_64& rng, int h, int w) {
    Grid2D<std::uint8_t> g(h, w);
    std::uniform_int_distribution<int> d(0, kNumClasses - 1);
    for (auto& v : g.data()) v = static_cast<std::uint8_t>(d(rng));
    return LabelMap(std::move(g));
}

}  // namespace

TEST(HardToSoft, OneHotAtGammaOne) {
    LabelMap l(1, 1, ClassId::metastasis);
    for (auto mode : {FillMode::zero, FillMode::uniform}) {
        auto s = hard_to_soft(l, 1.0, mode);
        std::vector<float> v(s.pixel(0), s.pixel(0) + 6);
        EXPECT_EQ(v, (std::vector<float>{0, 0, 0, 1, 0, 0}));
    }
}

TEST(HardToSoft, ZeroFillGamma07) {
    LabelMap l(1, 1, ClassId::metastasis);
    auto s = hard_to_soft(l, 0.7, FillMode::zero);
    std::vector<float> v(s.pixel(0), s.pixel(0) + 6);
    EXPECT_EQ(v, (std::vector<float>{0, 0, 0, 0.7f, 0, 0}));
    EXPECT_DOUBLE_EQ(s.gamma, 0.7);
}

TEST(HardToSoft, UniformFillGamma07) {
    LabelMap l(1, 1, ClassId::metastasis);
    auto s = hard_to_soft(l, 0.7, FillMode::uniform);
    for (int c = 0; c < 6; ++c) EXPECT_NEAR(s.pixel(0)[c], c == 3 ? 0.7 : 0.06, 1e-7);
    double sum = 0;
    for (int c = 0; c < 6; ++c) sum += s.pixel(0)[c];
    EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(HardToSoft, RejectsGammaOutsideRange) {
    LabelMap l(2, 2);
    EXPECT_THROW(hard_to_soft(l, 0.5), RangeError);
    EXPECT_THROW(hard_to_soft(l, 1.01), RangeError);
    EXPECT_THROW(hard_to_soft(l, -1.0), RangeError);
    EXPECT_NO_THROW(hard_to_soft(l, 0.5001));
}

TEST(HardToSoft, ArgmaxRecoversLabelsProperty) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> g(0.5001, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        auto labels = random_labels(rng, 1 + trial % 7, 1 + trial % 5);
        const double gamma = g(rng);
        for (auto mode : {FillMode::zero, FillMode::uniform}) EXPECT_EQ(soft_to_hard(hard_to_soft(labels, gamma, mode)), labels);
    }
}

TEST(ImageLevelClass, Majority) {
    LabelMap l(4, 5, ClassId::liver);
    for (int i = 0; i < 10; ++i) l.set(static_cast<std::size_t>(i), ClassId::metastasis);
    for (int i = 10; i < 15; ++i) l.set(static_cast<std::size_t>(i), ClassId::cyst);
    EXPECT_EQ(image_level_class(l), ImageClass::metastasis);
}

TEST(ImageLevelClass, HealthyWhenNoLesion) {
    LabelMap l(3, 3, ClassId::liver_boundary);
    EXPECT_EQ(image_level_class(l), ImageClass::healthy);
}

TEST(ImageLevelClass, TieBreaksToLowestCodeInEitherOrder) {
    // Enumerate both placements of the 7+7 tie.
    for (int order = 0; order < 2; ++order) {
        LabelMap l(2, 7);
        for (int x = 0; x < 7; ++x) {
            l.set(0, x, order == 0 ? ClassId::hemangioma : ClassId::cyst);
            l.set(1, x, order == 0 ? ClassId::cyst : ClassId::hemangioma);
        }
        EXPECT_EQ(image_level_class(l), ImageClass::hemangioma);
        EXPECT_EQ(oracle::majority_class(l), ImageClass::hemangioma);
    }
}

TEST(ImageLevelClass, PermutationInvariantProperty) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        auto labels = random_labels(rng, 6, 6);
        auto data = labels.grid().data();
        std::shuffle(data.begin(), data.end(), rng);
        LabelMap shuffled(Grid2D<std::uint8_t>(6, 6, data));
        EXPECT_EQ(image_level_class(labels), image_level_class(shuffled));
        EXPECT_EQ(image_level_class(labels), oracle::majority_class(labels));
    }
}

TEST(BoundaryBand, DiscShellMatchesErosionOracle) {
    Mask disc(32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) disc(y, x) = (y - 16) * (y - 16) + (x - 16) * (x - 16) <= 100;
    const Mask band = boundary_band(disc, 2);
    EXPECT_EQ(band, oracle::band_by_erosion(disc, 2));
    // Center pixel is deep inside; a rim pixel is in the band.
    EXPECT_EQ(band(16, 16), 0);
    EXPECT_EQ(band(16, 26), 1);
}

TEST(BoundaryBand, EmptyMaskGivesEmptyBand) {
    Mask m(8, 8);
    EXPECT_EQ(boundary_band(m, 2), m);
}

TEST(BoundaryBand, SinglePixelIsBoundary) {
    Mask m(5, 5);
    m(2, 2) = 1;
    EXPECT_EQ(boundary_band(m, 1)(2, 2), 1);
}

TEST(BoundaryBand, RejectsZeroWidth) { EXPECT_THROW(boundary_band(Mask(3, 3), 0), RangeError); }

TEST(BoundaryBand, SubsetOfMaskAndDisjointFromErosionProperty) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        Mask m(20, 24);
        // Union of random rectangles.
        std::uniform_int_distribution<int> py(0, 19), px(0, 23);
        for (int r = 0; r < 3; ++r) {
            int y0 = py(rng), y1 = py(rng), x0 = px(rng), x1 = px(rng);
            for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
                for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) m(y, x) = 1;
        }
        const int width = 1 + trial % 3;
        const Mask band = boundary_band(m, width);
        const Mask eroded = oracle::erode(m, width);
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (band[i]) {
                EXPECT_TRUE(m[i]);
            }
            EXPECT_FALSE(band[i] && eroded[i]);
            EXPECT_EQ(band[i], m[i] && !eroded[i]);
        }
    }
}

TEST(CTSlice, RejectsNonMultipleOf16) {
    EXPECT_THROW(CTSlice(Grid2D<float>(50, 64), {}, "v", 0), ShapeError);
    EXPECT_THROW(CTSlice(Grid2D<float>(16, 16, -2000.0f), {}, "v", 0), RangeError);
    EXPECT_NO_THROW(CTSlice(Grid2D<float>(16, 32), {}, "v", 0));
}

TEST(LabelMap, RejectsInvalidClassCodes) {
    EXPECT_THROW(LabelMap(Grid2D<std::uint8_t>(2, 2, 6)), RangeError);
}

TEST(DatasetSplit, DetectsVolumeOverlap) {
    DatasetSplit s;
    SlicePack p;
    p.labeled.slice = CTSlice(Grid2D<float>(16, 16), {}, "a", 3);
    s.train.push_back(p);
    AnnotatedSlice t;
    t.slice = CTSlice(Grid2D<float>(16, 16), {}, "a", 5);
    s.test.push_back(t);
    EXPECT_THROW(s.validate_disjoint(), std::invalid_argument);
}

TEST(Container, SliceAndLabelRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "adaug_container_test";
    std::filesystem::create_directories(dir);
    Grid2D<float> px(16, 32);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(static_cast<int>(i * 37 % 4096) - 1024);
    CTSlice s(px, {0.71, 0.71, 2.5}, "tr001", 4);
    save_slice(dir / "s.adsl", s);
    EXPECT_EQ(load_slice(dir / "s.adsl", "tr001", 4), s);

    std::mt19937_64 rng(1);
    auto labels = random_labels(rng, 16, 32);
    save_labels(dir / "l.adsl", labels, s.spacing());
    EXPECT_EQ(load_labels(dir / "l.adsl"), labels);
    EXPECT_EQ(read_container(dir / "l.adsl").header.spacing, s.spacing());
}

TEST(Container, HeaderLayoutIsLittleEndian) {
    const auto path = std::filesystem::temp_directory_path() / "adaug_header.adsl";
    LabelMap l(1, 2, ClassId::cyst);
    save_labels(path, l, {1.0, 2.0, 3.0});
    std::ifstream f(path, std::ios::binary);
    std::vector<unsigned char> b((std::istreambuf_iterator<char>(f)), {});
    ASSERT_EQ(b.size(), 5u + 1 + 12 + 24 + 2);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 5), "ADSL1");
    EXPECT_EQ(b[5], 2);
    EXPECT_EQ(b[6], 1);   // depth
    EXPECT_EQ(b[10], 1);  // height
    EXPECT_EQ(b[14], 2);  // width
    // 1.0 as little-endian IEEE-754: 00 .. 00 f0 3f
    EXPECT_EQ(b[18 + 6], 0xf0);
    EXPECT_EQ(b[18 + 7], 0x3f);
    EXPECT_EQ(b[42], 5);
}

TEST(Container, RejectsGarbage) {
    const auto path = std::filesystem::temp_directory_path() / "adaug_garbage.adsl";
    std::ofstream(path) << "not a container";
    EXPECT_THROW(read_container(path), std::runtime_error);
}
