#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "adaug/loss.hpp"
#include "adaug/net.hpp"

using namespace adaug;

namespace {

NetworkConfig small_config(int h = 16, int w = 16) {
    NetworkConfig c;
    c.width_factor = 16;
    c.input_height = h;
    c.input_width = w;
    c.init_seed = 3;
    return c;
}

template <typename T>
Tensor<T> random_input(int n, int h, int w, std::uint64_t seed) {
    Tensor<T> t(1, n, h, w);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : t.data) v = static_cast<T>(u(rng));
    return t;
}

/// Trainable parameter count from the layer listing: 3x3 convs, 2x2 transposed convs,
/// batch-norm scale and shift, and the 1x1 head.
std::size_t listed_parameter_count(const std::vector<int>& ch, int k) {
    auto conv = [](std::size_t cin, std::size_t cout, std::size_t ks) { return cin * cout * ks * ks + cout; };
    std::size_t n = 0;
    std::size_t cin = 1;
    for (int l = 0; l < 5; ++l) {
        n += conv(cin, ch[l], 3) + conv(ch[l], ch[l], 3) + 2 * ch[l];
        cin = ch[l];
    }
    for (int l = 3; l >= 0; --l) {
        n += conv(cin, ch[l], 2) + conv(2 * ch[l], ch[l], 3) + conv(ch[l], ch[l], 3);
        if (l >= 1) n += 2 * ch[l];
        cin = ch[l];
    }
    return n + conv(ch[0], k, 1);
}

}  // namespace

TEST(NetworkConfig, EncoderChannels) {
    NetworkConfig c;
    c.width_factor = 8;
    EXPECT_EQ(c.encoder_channels(), (std::vector<int>{8, 16, 32, 64, 128}));
    c.width_factor = 1;
    EXPECT_EQ(c.encoder_channels(), (std::vector<int>{64, 128, 256, 512, 1024}));
    c.width_factor = 32;
    EXPECT_THROW(c.encoder_channels(), RangeError);
    c.width_factor = 3;
    EXPECT_THROW(c.encoder_channels(), RangeError);
}

TEST(NetworkConfig, RejectsBadDropoutAndDims) {
    NetworkConfig c;
    c.dropout_rate = 1.0;
    EXPECT_THROW(SegmentationNet{c}, RangeError);
    c = NetworkConfig{};
    c.input_height = 50;
    EXPECT_THROW(SegmentationNet{c}, ShapeError);
}

TEST(SegmentationNet, HeadParameterCount) {
    NetworkConfig c;
    c.width_factor = 1;
    const SegmentationNet net(c);
    EXPECT_EQ(net.parameter("head.conv.kernel").size() + net.parameter("head.conv.bias").size(), 390u);
    EXPECT_EQ(net.count_parameters(), listed_parameter_count(c.encoder_channels(), 6));
}

TEST(SegmentationNet, ParameterCountMatchesLayerListing) {
    for (double wf : {8.0, 16.0}) {
        NetworkConfig c;
        c.width_factor = wf;
        EXPECT_EQ(SegmentationNet(c).count_parameters(), listed_parameter_count(c.encoder_channels(), 6));
    }
    std::vector<Parameter<float>> none;
    EXPECT_EQ(count_parameters(none), 0u);
}

TEST(SegmentationNet, HalvingWidthQuartersInteriorConvs) {
    NetworkConfig a, b;
    a.width_factor = 8;
    b.width_factor = 16;
    const SegmentationNet na(a), nb(b);
    const double ratio = static_cast<double>(na.parameter("enc3b.conv.kernel").size()) /
                         static_cast<double>(nb.parameter("enc3b.conv.kernel").size());
    EXPECT_EQ(ratio, 4.0);
    const double total = static_cast<double>(na.count_parameters()) / static_cast<double>(nb.count_parameters());
    EXPECT_NEAR(total, 4.0, 0.1);
}

TEST(SegmentationNet, InitIsDeterministic) {
    const SegmentationNet a(small_config()), b(small_config());
    ASSERT_EQ(a.parameters().size(), b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
    EXPECT_EQ(a.parameter("enc2b.bn.scale").value, std::vector<float>(8, 1.0f));
    EXPECT_EQ(a.parameter("enc2b.bn.shift").value, std::vector<float>(8, 0.0f));
    auto c = small_config();
    c.init_seed = 4;
    EXPECT_NE(SegmentationNet(c).parameter("enc1a.conv.kernel").value, a.parameter("enc1a.conv.kernel").value);
}

TEST(SegmentationNet, OutputShapeAndSoftmaxProperty) {
    const int sizes[][2] = {{16, 16}, {32, 16}, {48, 64}, {64, 64}};
    for (const auto& s : sizes) {
        const SegmentationNet net(small_config(s[0], s[1]));
        const auto logits = net.forward_eval(random_input<float>(2, s[0], s[1], 5));
        EXPECT_EQ(logits.c, 6);
        EXPECT_EQ(logits.n, 2);
        EXPECT_EQ(logits.h, s[0]);
        EXPECT_EQ(logits.w, s[1]);
        const auto pred = to_prediction(softmax(logits), 1);
        EXPECT_EQ(pred.height, s[0]);
        EXPECT_EQ(pred.width, s[1]);
        for (std::size_t i = 0; i < pred.num_pixels(); ++i) {
            double sum = 0;
            for (int c = 0; c < 6; ++c) {
                EXPECT_GE(pred.pixel(i)[c], 0.0f);
                sum += pred.pixel(i)[c];
            }
            ASSERT_NEAR(sum, 1.0, 1e-6);
        }
    }
}

TEST(SegmentationNet, RejectsNonMultipleOf16) {
    const SegmentationNet net(small_config());
    EXPECT_THROW(net.forward_eval(Tensor<float>(1, 1, 50, 50)), ShapeError);
    EXPECT_THROW(net.forward_eval(Tensor<float>(2, 1, 16, 16)), ShapeError);
}

TEST(SegmentationNet, ZeroInputIsFinite) {
    const SegmentationNet net(small_config(64, 64));
    const auto p = softmax(net.forward_eval(Tensor<float>(1, 1, 64, 64)));
    for (float v : p.data) ASSERT_TRUE(std::isfinite(v));
}

TEST(SegmentationNet, EvalIsBitIdentical) {
    const SegmentationNet net(small_config(32, 32));
    const auto x = random_input<float>(3, 32, 32, 8);
    EXPECT_EQ(net.forward_eval(x).data, net.forward_eval(x).data);
}

TEST(SegmentationNet, TrainForwardDependsOnDropoutSeedOnly) {
    SegmentationNet a(small_config(32, 32)), b(small_config(32, 32));
    const auto x = random_input<float>(2, 32, 32, 8);
    EXPECT_EQ(a.forward_train(x, 5).data, b.forward_train(x, 5).data);
    EXPECT_NE(a.forward_train(x, 5).data, a.forward_train(x, 6).data);
}

TEST(SegmentationNet, EverySkipConnectionIsLive) {
    const auto x = random_input<float>(1, 32, 32, 9);
    SegmentationNet net(small_config(32, 32));
    const auto base = net.forward_eval(x).data;
    for (int level = 1; level <= 4; ++level) {
        net.set_skip_enabled(level, false);
        EXPECT_NE(net.forward_eval(x).data, base) << "level " << level;
        net.set_skip_enabled(level, true);
    }
    EXPECT_EQ(net.forward_eval(x).data, base);
    EXPECT_THROW(net.set_skip_enabled(5, false), RangeError);
}

TEST(SegmentationNet, TrainModeUpdatesRunningStats) {
    SegmentationNet net(small_config());
    const auto before = net.parameter("enc1b.bn.running_mean").value;
    net.forward_train(random_input<float>(2, 16, 16, 1), 1);
    EXPECT_NE(net.parameter("enc1b.bn.running_mean").value, before);
    EXPECT_FALSE(net.parameter("enc1b.bn.running_mean").trainable);
}

TEST(SegmentationNet, NearestUpsampleVariant) {
    auto c = small_config();
    c.upsample = UpsampleMode::nearest_conv;
    const SegmentationNet net(c);
    EXPECT_EQ(net.parameter("up4.conv.kernel").shape, (std::vector<int>{32, 64, 3, 3}));
    EXPECT_EQ(net.forward_eval(random_input<float>(1, 16, 16, 2)).h, 16);
}

TEST(SegmentationNet, GradientSpotCheckDouble) {
    // A few entries per parameter group against central differences; the full check lives in the acceptance suite.
    auto cfg = small_config();
    SegmentationNetT<double> net(cfg);
    // Zero-initialized biases put whole windows of dead inputs exactly on the ReLU kink.
    std::mt19937_64 brng(12);
    std::uniform_real_distribution<double> bu(-0.05, 0.05);
    for (auto& p : net.parameters())
        if (p.name.ends_with("conv.bias"))
            for (auto& v : p.value) v = bu(brng);
    const auto x = random_input<double>(2, 16, 16, 10);
    Tensor<double> targets(6, 2, 16, 16);
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> cls(0, 5);
    for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 256; ++i) targets.data[cls(rng) * 512 + n * 256 + i] = 1.0;
    const ClassWeights w{{0.5, 1.0, 1.5, 0.8, 1.2, 1.0}};
    auto loss = [&](SegmentationNetT<double>& m, Tensor<double>* d) {
        return softmax_cross_entropy(m.forward_train(x, 42), targets, w, d);
    };
    const auto snapshot = net.parameters();
    Tensor<double> dl;
    loss(net, &dl);
    net.zero_grad();
    net.backward(dl);
    const auto analytic = net.parameters();
    for (std::size_t pi = 0; pi < analytic.size(); ++pi) {
        if (!analytic[pi].trainable) continue;
        const std::size_t k = analytic[pi].size() / 2;
        auto probe = [&](double delta) {
            auto& params = net.parameters();
            for (std::size_t q = 0; q < params.size(); ++q) params[q].value = snapshot[q].value;
            params[pi].value[k] += delta;
            return loss(net, nullptr);
        };
        const double h = 1e-6;
        const double fd = (probe(h) - probe(-h)) / (2 * h);
        const double g = analytic[pi].grad[k];
        EXPECT_LE(std::abs(g - fd), 1e-6 + 1e-4 * std::max(std::abs(g), std::abs(fd))) << analytic[pi].name;
    }
}

TEST(NormalizeHu, LiverWindow) {
    EXPECT_EQ(normalize_hu(-1024), 0.0f);
    EXPECT_EQ(normalize_hu(-160), 0.0f);
    EXPECT_EQ(normalize_hu(240), 1.0f);
    EXPECT_EQ(normalize_hu(3000), 1.0f);
    EXPECT_NEAR(normalize_hu(40), 0.5f, 1e-7);
}

TEST(ArgmaxLabels, TiesToLowestCode) {
    Prediction p{1, 2, 6, {0.1f, 0.1f, 0.2f, 0.2f, 0.2f, 0.2f, 0.0f, 0.5f, 0.0f, 0.0f, 0.0f, 0.5f}};
    const auto l = argmax_labels(p);
    EXPECT_EQ(l(0, 0), 2);
    EXPECT_EQ(l(0, 1), 1);
}
