#include "grrhdr/scenes.hpp"

#include <cmath>

#include "grrhdr/rng.hpp"

namespace grrhdr {

SceneKind scene_kind_from_name(const std::string& name) {
    if (name == "blobs") return SceneKind::Blobs;
    if (name == "blocks") return SceneKind::Blocks;
    if (name == "wedge") return SceneKind::Wedge;
    if (name == "ramp") return SceneKind::Ramp;
    if (name == "dots") return SceneKind::Dots;
    throw param_error("unknown scene kind: " + name);
}

std::string scene_kind_name(SceneKind kind) {
    switch (kind) {
        case SceneKind::Blobs: return "blobs";
        case SceneKind::Blocks: return "blocks";
        case SceneKind::Wedge: return "wedge";
        case SceneKind::Ramp: return "ramp";
        case SceneKind::Dots: return "dots";
    }
    throw param_error("unknown scene kind");
}

namespace {

// log-uniform draw in [lo, hi]
double log_uniform(Rng& rng, double lo, double hi) {
    return lo * std::exp(rng.uniform() * std::log(hi / lo));
}

void add_blobs(RadianceImage& img, Rng& rng) {
    const int W = img.width, H = img.height;
    for (double& v : img.data) v = 0.02;
    const int count = 6 + static_cast<int>(rng.below(5));
    for (int b = 0; b < count; ++b) {
        const double cx = rng.uniform() * W;
        const double cy = rng.uniform() * H;
        const double sigma = W / 20.0 + rng.uniform() * W / 8.0;
        const double amp = log_uniform(rng, 0.1, 40.0);
        double weight[3];
        for (int ch = 0; ch < img.channels; ++ch)
            weight[ch] = 0.25 + 0.75 * rng.uniform();
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                const double d2 = (c - cx) * (c - cx) + (r - cy) * (r - cy);
                const double g = amp * std::exp(-d2 / (2.0 * sigma * sigma));
                for (int ch = 0; ch < img.channels; ++ch)
                    img.at(r, c, ch) += weight[ch] * g;
            }
        }
    }
}

void add_blocks(RadianceImage& img, Rng& rng) {
    const int W = img.width, H = img.height;
    for (double& v : img.data) v = 0.05;
    const int count = 10 + static_cast<int>(rng.below(6));
    for (int b = 0; b < count; ++b) {
        const int w = 2 + static_cast<int>(rng.below(std::max(2, W / 2)));
        const int h = 2 + static_cast<int>(rng.below(std::max(2, H / 2)));
        const int c0 = static_cast<int>(rng.below(std::max(1, W - w)));
        const int r0 = static_cast<int>(rng.below(std::max(1, H - h)));
        const double value = log_uniform(rng, 0.05, 25.0);
        double weight[3];
        for (int ch = 0; ch < img.channels; ++ch)
            weight[ch] = 0.25 + 0.75 * rng.uniform();
        for (int r = r0; r < r0 + h && r < H; ++r)
            for (int c = c0; c < c0 + w && c < W; ++c)
                for (int ch = 0; ch < img.channels; ++ch)
                    img.at(r, c, ch) = weight[ch] * value;
    }
}

void add_wedge(RadianceImage& img) {
    const double ratio = 5000.0;
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            const double f = img.width > 1 ? static_cast<double>(c) / (img.width - 1) : 0.0;
            const double v = std::pow(ratio, -f);
            for (int ch = 0; ch < img.channels; ++ch) img.at(r, c, ch) = v;
        }
}

void add_ramp(RadianceImage& img) {
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            const double f = img.width > 1 ? static_cast<double>(c) / (img.width - 1) : 0.0;
            const double v = 0.01 + 0.99 * f;
            for (int ch = 0; ch < img.channels; ++ch) img.at(r, c, ch) = v;
        }
}

void add_dots(RadianceImage& img, Rng& rng) {
    for (double& v : img.data) v = 0.01;
    const int count = 8 + static_cast<int>(rng.below(5));
    for (int d = 0; d < count; ++d) {
        const int r = static_cast<int>(rng.below(img.height));
        const int c = static_cast<int>(rng.below(img.width));
        const double amp = log_uniform(rng, 5.0, 50.0);
        for (int ch = 0; ch < img.channels; ++ch) img.at(r, c, ch) = amp;
    }
}

}  // namespace

RadianceImage make_test_scene(SceneKind kind, int width, int height,
                              uint64_t seed, int channels) {
    if (width < 1 || height < 1)
        throw param_error("scene dimensions must be positive");
    if (channels != 1 && channels != 3)
        throw param_error("scenes have 1 or 3 channels");
    RadianceImage img(width, height, channels, 0.0);
    Rng rng(seed);
    switch (kind) {
        case SceneKind::Blobs: add_blobs(img, rng); break;
        case SceneKind::Blocks: add_blocks(img, rng); break;
        case SceneKind::Wedge: add_wedge(img); break;
        case SceneKind::Ramp: add_ramp(img); break;
        case SceneKind::Dots: add_dots(img, rng); break;
    }
    return img;
}

}  // namespace grrhdr
