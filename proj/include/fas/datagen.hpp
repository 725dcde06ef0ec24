#pragma once

// Synthetic edge images, anti-correlated pixel noise and patch extraction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fas/error.hpp"
#include "fas/numerics.hpp"

namespace fas {

/// A set of n-dimensional cases stored one per row (count x n).
/// width/height describe the image geometry when the cases are flattened
/// images (row-major); both are 0 otherwise.
struct DataBatch {
    Matrix values;
    std::size_t width = 0;
    std::size_t height = 0;

    DataBatch() = default;
    explicit DataBatch(Matrix v, std::size_t w = 0, std::size_t h = 0)
        : values(std::move(v)), width(w), height(h) {}

    std::size_t n() const { return static_cast<std::size_t>(values.cols()); }
    std::size_t count() const { return static_cast<std::size_t>(values.rows()); }
    auto row(std::size_t c) const { return values.row(static_cast<Eigen::Index>(c)).transpose(); }
};

/// Grayscale image with values nominally in [0, 1], row-major.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> pixels;

    GrayImage() = default;
    GrayImage(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

    double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
    double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct NoiseParams {
    double self_amp = 0.4;
    double neighbor_amp = 0.1;
};

struct EdgeImageParams {
    std::size_t width = 16;
    std::size_t height = 16;
    Interval low{0.0, 0.3};
    Interval high{0.7, 1.0};
    double blend_slope = 2.0;
    NoiseParams noise{};
    bool circular_mask = false;
};

inline void validate(const EdgeImageParams& p) {
    if (p.width < 2 || p.height < 2) {
        throw InvalidInput("edge image must be at least 2x2");
    }
    const bool ordered = 0.0 <= p.low.lo && p.low.lo <= p.low.hi && p.low.hi <= p.high.lo &&
                         p.high.lo <= p.high.hi && p.high.hi <= 1.0;
    if (!ordered) {
        throw InvalidInput("intensity ranges must satisfy 0 <= low <= high <= 1");
    }
    if (!std::isfinite(p.blend_slope) || p.noise.self_amp < 0.0 || p.noise.neighbor_amp < 0.0) {
        throw InvalidInput("blend slope must be finite and noise amplitudes nonnegative");
    }
}

/// Edge line: points p (pixel-centre coordinates relative to the image
/// centre) with cos(angle) p.x + sin(angle) p.y = offset. The high side is
/// the positive-normal side.
struct EdgeMetadata {
    double angle = 0.0;
    double offset = 0.0;
    double low = 0.0;
    double high = 0.0;
};

struct EdgeImage {
    GrayImage image;
    EdgeMetadata edge;
};

/// Signed distance in pixels from the centre of pixel (x, y) to the edge.
inline double edge_distance(std::size_t width, std::size_t height, const EdgeMetadata& e, std::size_t x,
                            std::size_t y) {
    const double px = static_cast<double>(x) + 0.5 - 0.5 * static_cast<double>(width);
    const double py = static_cast<double>(y) + 0.5 - 0.5 * static_cast<double>(height);
    return std::cos(e.angle) * px + std::sin(e.angle) * py - e.offset;
}

inline double blend(double low, double high, double slope, double distance) {
    return low + (high - low) / (1.0 + std::exp(-slope * distance));
}

inline bool outside_inscribed_circle(std::size_t width, std::size_t height, std::size_t x, std::size_t y) {
    const double px = static_cast<double>(x) + 0.5 - 0.5 * static_cast<double>(width);
    const double py = static_cast<double>(y) + 0.5 - 0.5 * static_cast<double>(height);
    const double r = 0.5 * static_cast<double>(std::min(width, height));
    return px * px + py * py > r * r;
}

/// Noise-free rendering of an edge. Masked pixels take (low + high) / 2.
inline GrayImage render_edge(const EdgeImageParams& p, const EdgeMetadata& e) {
    GrayImage img(p.width, p.height);
    const double mid = 0.5 * (e.low + e.high);
    for (std::size_t y = 0; y < p.height; ++y) {
        for (std::size_t x = 0; x < p.width; ++x) {
            if (p.circular_mask && outside_inscribed_circle(p.width, p.height, x, y)) {
                img.at(x, y) = mid;
            } else {
                img.at(x, y) = blend(e.low, e.high, p.blend_slope, edge_distance(p.width, p.height, e, x, y));
            }
        }
    }
    return img;
}

/// High-frequency anti-correlated noise: each pixel draws x ~ N(0,1),
/// receives self_amp*x and each in-image 4-neighbour receives -neighbor_amp*x.
/// Neighbours outside the image are skipped. Output is not clipped.
inline GrayImage add_anticorrelated_noise(GrayImage img, const NoiseParams& noise, RngStream& rng) {
    if (noise.self_amp < 0.0 || noise.neighbor_amp < 0.0) {
        throw InvalidInput("noise amplitudes must be nonnegative");
    }
    if (img.pixels.size() != img.width * img.height) {
        throw InvalidInput("image buffer does not match its dimensions");
    }
    if (noise.self_amp == 0.0 && noise.neighbor_amp == 0.0) {
        return img;
    }
    const std::size_t w = img.width;
    const std::size_t h = img.height;
    std::vector<double> delta(img.pixels.size(), 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double z = rng.normal();
            delta[y * w + x] += noise.self_amp * z;
            const double out = noise.neighbor_amp * z;
            if (x > 0) delta[y * w + x - 1] -= out;
            if (x + 1 < w) delta[y * w + x + 1] -= out;
            if (y > 0) delta[(y - 1) * w + x] -= out;
            if (y + 1 < h) delta[(y + 1) * w + x] -= out;
        }
    }
    for (std::size_t i = 0; i < delta.size(); ++i) {
        img.pixels[i] += delta[i];
    }
    return img;
}

inline EdgeMetadata sample_edge(const EdgeImageParams& p, RngStream& rng) {
    EdgeMetadata e;
    e.angle = rng.uniform(0.0, std::numbers::pi);
    // Half-extent of the image box projected on the edge normal.
    const double reach = 0.5 * static_cast<double>(p.width) * std::abs(std::cos(e.angle)) +
                         0.5 * static_cast<double>(p.height) * std::abs(std::sin(e.angle));
    e.offset = rng.uniform(-reach, reach);
    e.low = rng.uniform(p.low.lo, p.low.hi);
    e.high = rng.uniform(p.high.lo, p.high.hi);
    return e;
}

inline EdgeImage generate_edge_image(const EdgeImageParams& p, RngStream& rng) {
    validate(p);
    EdgeImage out;
    out.edge = sample_edge(p, rng);
    out.image = add_anticorrelated_noise(render_edge(p, out.edge), p.noise, rng);
    return out;
}

inline void set_row(DataBatch& batch, std::size_t c, const std::vector<double>& pixels) {
    batch.values.row(static_cast<Eigen::Index>(c)) =
        Eigen::Map<const Eigen::RowVectorXd>(pixels.data(), static_cast<Eigen::Index>(pixels.size()));
}

/// count edge images, image c drawn from rng.split(c).
inline DataBatch generate_edge_batch(const EdgeImageParams& p, std::size_t count, const RngStream& rng) {
    validate(p);
    DataBatch batch(Matrix(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(p.width * p.height)),
                    p.width, p.height);
    for (std::size_t c = 0; c < count; ++c) {
        RngStream child = rng.split(c);
        set_row(batch, c, generate_edge_image(p, child).image.pixels);
    }
    return batch;
}

/// patch_side x patch_side patches at uniform positions of uniformly chosen
/// source images, flattened row-major, optionally noised.
inline DataBatch extract_patches(const std::vector<GrayImage>& images, std::size_t patch_side, std::size_t count,
                                 RngStream& rng, const std::optional<NoiseParams>& noise = std::nullopt) {
    if (images.empty()) {
        throw InvalidInput("extract_patches: no source images");
    }
    if (patch_side == 0) {
        throw InvalidInput("extract_patches: patch side must be positive");
    }
    for (std::size_t k = 0; k < images.size(); ++k) {
        if (images[k].width < patch_side || images[k].height < patch_side) {
            throw InvalidInput("extract_patches: image " + std::to_string(k) + " is smaller than the patch");
        }
    }
    const std::size_t n = patch_side * patch_side;
    DataBatch batch(Matrix(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(n)), patch_side, patch_side);
    for (std::size_t c = 0; c < count; ++c) {
        const GrayImage& src = images[rng.index(images.size())];
        const std::size_t x0 = rng.index(src.width - patch_side + 1);
        const std::size_t y0 = rng.index(src.height - patch_side + 1);
        GrayImage patch(patch_side, patch_side);
        for (std::size_t y = 0; y < patch_side; ++y) {
            for (std::size_t x = 0; x < patch_side; ++x) {
                patch.at(x, y) = src.at(x0 + x, y0 + y);
            }
        }
        if (noise) {
            patch = add_anticorrelated_noise(std::move(patch), *noise, rng);
        }
        set_row(batch, c, patch.pixels);
    }
    return batch;
}

/// Supplies the training batch for a given update index.
using DataSource = std::function<DataBatch(std::size_t update, std::size_t batch_size)>;

/// Fresh edge images every update.
inline DataSource edge_image_source(EdgeImageParams p, std::uint64_t seed) {
    validate(p);
    return [p, seed](std::size_t update, std::size_t batch_size) {
        return generate_edge_batch(p, batch_size, RngStream(seed, 1).split(update));
    };
}

/// Minibatches drawn with replacement from a fixed pool of cases.
inline DataSource resampling_source(DataBatch pool, std::uint64_t seed) {
    if (pool.count() == 0) {
        throw InvalidInput("resampling_source: empty pool");
    }
    return [pool = std::move(pool), seed](std::size_t update, std::size_t batch_size) {
        RngStream rng = RngStream(seed, 2).split(update);
        DataBatch out(Matrix(static_cast<Eigen::Index>(batch_size), pool.values.cols()), pool.width, pool.height);
        for (std::size_t c = 0; c < batch_size; ++c) {
            out.values.row(static_cast<Eigen::Index>(c)) =
                pool.values.row(static_cast<Eigen::Index>(rng.index(pool.count())));
        }
        return out;
    };
}

}  // namespace fas
