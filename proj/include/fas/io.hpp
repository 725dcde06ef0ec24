#pragma once

// File formats and evaluation outputs: PGM images, JSON model/data archives,
// filter mosaics, violation histograms and CSV traces.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fas/datagen.hpp"
#include "fas/error.hpp"
#include "fas/fas_cd.hpp"
#include "fas/fas_pl.hpp"
#include "fas/fas_simple.hpp"
#include "fas/numerics.hpp"

namespace fas::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// PGM

namespace detail {

class PgmHeaderReader {
public:
    explicit PgmHeaderReader(const std::string& bytes) : bytes_(bytes) {}

    std::size_t pos() const { return pos_; }

    /// Skips whitespace and '#' comments, then reads one token.
    std::string token() {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !is_space(bytes_[pos_]) && bytes_[pos_] != '#') {
            ++pos_;
        }
        if (start == pos_) {
            throw ParseError("unexpected end of PGM header", start);
        }
        return bytes_.substr(start, pos_ - start);
    }

    unsigned long number(const char* what) {
        skip_space();
        const std::size_t at = pos_;
        const std::string t = token();
        unsigned long value = 0;
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
        if (ec != std::errc() || ptr != t.data() + t.size()) {
            throw ParseError(std::string("invalid PGM ") + what + " '" + t + "'", at);
        }
        return value;
    }

    void skip_space() {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') {
                    ++pos_;
                }
            } else {
                break;
            }
        }
    }

    /// Exactly one whitespace byte separates maxval from a P5 raster.
    void single_space() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
            throw ParseError("expected whitespace before PGM raster", pos_);
        }
        ++pos_;
    }

private:
    static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path + "' for reading");
    }
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("write to '" + path + "' failed");
    }
}

}  // namespace detail

/// Parses a P2 or P5 PGM held in memory; values are scaled to [0, 1].
inline GrayImage parse_pgm(const std::string& bytes) {
    detail::PgmHeaderReader rd(bytes);
    const std::string magic = rd.token();
    if (magic != "P2" && magic != "P5") {
        throw ParseError("unsupported PGM magic '" + magic + "'", 0);
    }
    const auto width = rd.number("width");
    const auto height = rd.number("height");
    const std::size_t maxval_at = rd.pos();
    const auto maxval = rd.number("maxval");
    if (width == 0 || height == 0) {
        throw ParseError("PGM dimensions must be positive", maxval_at);
    }
    if (maxval == 0 || maxval > 65535) {
        throw ParseError("PGM maxval must be in [1, 65535]", maxval_at);
    }

    GrayImage img(width, height);
    const double scale = 1.0 / static_cast<double>(maxval);
    const std::size_t count = static_cast<std::size_t>(width) * height;
    if (magic == "P5") {
        rd.single_space();
        const std::size_t bpp = maxval > 255 ? 2 : 1;
        const std::size_t start = rd.pos();
        if (bytes.size() - start < count * bpp) {
            throw ParseError("truncated PGM raster: need " + std::to_string(count * bpp) + " bytes", bytes.size());
        }
        for (std::size_t i = 0; i < count; ++i) {
            unsigned value;
            if (bpp == 1) {
                value = static_cast<unsigned char>(bytes[start + i]);
            } else {
                value = (static_cast<unsigned>(static_cast<unsigned char>(bytes[start + 2 * i])) << 8) |
                        static_cast<unsigned char>(bytes[start + 2 * i + 1]);
            }
            if (value > maxval) {
                throw ParseError("PGM sample exceeds maxval", start + i * bpp);
            }
            img.pixels[i] = value * scale;
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            rd.skip_space();
            if (rd.pos() >= bytes.size()) {
                throw ParseError("truncated PGM raster: " + std::to_string(i) + " of " + std::to_string(count) +
                                     " samples",
                                 rd.pos());
            }
            const std::size_t at = rd.pos();
            const auto value = rd.number("sample");
            if (value > maxval) {
                throw ParseError("PGM sample exceeds maxval", at);
            }
            img.pixels[i] = static_cast<double>(value) * scale;
        }
    }
    return img;
}

inline GrayImage read_pgm(const std::string& path) { return parse_pgm(detail::read_file(path)); }

struct PgmEncoding {
    std::string bytes;
    double clipped_fraction = 0.0;
};

/// P5 encoding. Values are clipped to [0, 1] and rounded half up:
/// sample = floor(value * maxval + 0.5).
inline PgmEncoding encode_pgm(const GrayImage& img, unsigned maxval = 255) {
    if (maxval == 0 || maxval > 65535) {
        throw InvalidInput("PGM maxval must be in [1, 65535]");
    }
    if (img.pixels.size() != img.width * img.height || img.width == 0 || img.height == 0) {
        throw InvalidInput("image buffer does not match its dimensions");
    }
    PgmEncoding out;
    out.bytes = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                std::to_string(maxval) + "\n";
    std::size_t clipped = 0;
    for (double v : img.pixels) {
        if (!std::isfinite(v)) {
            throw InvalidInput("cannot encode non-finite pixel");
        }
        if (v < 0.0 || v > 1.0) {
            ++clipped;
            v = std::clamp(v, 0.0, 1.0);
        }
        const auto q = static_cast<unsigned>(std::floor(v * maxval + 0.5));
        if (maxval > 255) {
            out.bytes.push_back(static_cast<char>(q >> 8));
        }
        out.bytes.push_back(static_cast<char>(q & 0xFF));
    }
    out.clipped_fraction = img.pixels.empty() ? 0.0 : static_cast<double>(clipped) / img.pixels.size();
    return out;
}

/// Writes a P5 file, reporting the clipped fraction on stderr when nonzero.
inline double write_pgm(const GrayImage& img, const std::string& path, unsigned maxval = 255) {
    const PgmEncoding enc = encode_pgm(img, maxval);
    detail::write_file(path, enc.bytes);
    if (enc.clipped_fraction > 0.0) {
        std::cerr << path << ": clipped " << enc.clipped_fraction * 100.0 << "% of pixels to [0, 1]\n";
    }
    return enc.clipped_fraction;
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

/// Header row plus data rows, comma separated, LF line endings.
class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) { row(header); }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    void row(const std::vector<double>& cells) {
        std::vector<std::string> s;
        s.reserve(cells.size());
        for (double v : cells) s.push_back(format_double(v));
        row(s);
    }

    const std::string& str() const { return text_; }
    void save(const std::string& path) const { detail::write_file(path, text_); }

private:
    std::string text_;
};

// ---------------------------------------------------------------------------
// Histograms

struct Histogram {
    std::vector<double> edges;
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }

    std::string to_csv() const {
        CsvWriter csv({"bin_low", "bin_high", "count"});
        for (std::size_t b = 0; b < counts.size(); ++b) {
            csv.row({format_double(edges[b]), format_double(edges[b + 1]), std::to_string(counts[b])});
        }
        return csv.str();
    }
};

/// Uniform bins on [-R, R] with R = max |x| (R = 1 when every x is 0).
/// Bins are half-open except the last, which includes R.
inline Histogram symmetric_histogram(const std::vector<double>& values, std::size_t bins = 64) {
    if (bins == 0) {
        throw InvalidInput("histogram needs at least one bin");
    }
    double reach = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw InvalidInput("histogram of non-finite value");
        }
        reach = std::max(reach, std::abs(v));
    }
    if (reach == 0.0) {
        reach = 1.0;
    }
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) {
        h.edges[b] = -reach + 2.0 * reach * static_cast<double>(b) / static_cast<double>(bins);
    }
    h.counts.assign(bins, 0);
    for (double v : values) {
        auto b = static_cast<std::size_t>(std::floor((v + reach) / (2.0 * reach) * static_cast<double>(bins)));
        b = std::min(b, bins - 1);
        ++h.counts[b];
    }
    return h;
}

/// Filter outputs of every expert on every case, pooled (cases x experts).
/// filters is m x n.
inline std::vector<double> pooled_outputs(const Matrix& filters, const DataBatch& batch) {
    if (static_cast<std::size_t>(filters.cols()) != batch.n()) {
        throw InvalidInput("filter length " + std::to_string(filters.cols()) + " != data dimension " +
                           std::to_string(batch.n()));
    }
    const Matrix out = batch.values * filters.transpose();
    return std::vector<double>(out.data(), out.data() + out.size());
}

inline Histogram violation_histogram(const Matrix& filters, const DataBatch& batch, std::size_t bins = 64) {
    return symmetric_histogram(pooled_outputs(filters, batch), bins);
}

/// Sample excess kurtosis m4 / m2^2 - 3.
inline double excess_kurtosis(const std::vector<double>& x) {
    if (x.size() < 2) {
        throw InvalidInput("kurtosis needs at least two values");
    }
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double m2 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d2 = (v - mean) * (v - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= static_cast<double>(x.size());
    m4 /= static_cast<double>(x.size());
    if (m2 == 0.0) {
        throw InvalidInput("kurtosis of a constant sample");
    }
    return m4 / (m2 * m2) - 3.0;
}

// ---------------------------------------------------------------------------
// Filter mosaics

/// Tiles filters (rows of an m x n matrix, each patch_width x patch_height)
/// into a grid with 1-pixel mid-gray separators. Each filter is scaled by
/// its own max |w|: 0 -> 0.5, +max -> 1 (white), -max -> 0 (black).
inline GrayImage render_filter_mosaic(const Matrix& filters, std::size_t patch_width, std::size_t patch_height,
                                      std::size_t columns) {
    if (patch_width == 0 || patch_height == 0 || columns == 0) {
        throw InvalidInput("mosaic geometry must be positive");
    }
    if (static_cast<std::size_t>(filters.cols()) != patch_width * patch_height) {
        throw InvalidInput("filter length " + std::to_string(filters.cols()) + " != " +
                           std::to_string(patch_width) + "x" + std::to_string(patch_height));
    }
    const std::size_t count = static_cast<std::size_t>(filters.rows());
    const std::size_t cols = std::min(columns, std::max<std::size_t>(count, 1));
    const std::size_t rows = count ? (count + cols - 1) / cols : 1;
    GrayImage img(cols * patch_width + (cols - 1), rows * patch_height + (rows - 1), 0.5);
    for (std::size_t f = 0; f < count; ++f) {
        const auto w = filters.row(static_cast<Eigen::Index>(f));
        const double peak = w.cwiseAbs().maxCoeff();
        const std::size_t x0 = (f % cols) * (patch_width + 1);
        const std::size_t y0 = (f / cols) * (patch_height + 1);
        for (std::size_t y = 0; y < patch_height; ++y) {
            for (std::size_t x = 0; x < patch_width; ++x) {
                const double value = w(static_cast<Eigen::Index>(y * patch_width + x));
                img.at(x0 + x, y0 + y) = peak > 0.0 ? 0.5 + 0.5 * value / peak : 0.5;
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Archives

inline constexpr int kFormatVersion = 1;

namespace detail {

inline json matrix_rows(const Matrix& a) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        rows.push_back(std::vector<double>(a.row(r).begin(), a.row(r).end()));
    }
    return rows;
}

inline Matrix rows_matrix(const json& j, std::size_t rows, std::size_t cols, const char* what) {
    if (!j.is_array() || j.size() != rows) {
        throw InvalidInput(std::string(what) + ": expected " + std::to_string(rows) + " rows");
    }
    Matrix a(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        const auto& row = j[r];
        if (!row.is_array() || row.size() != cols) {
            throw InvalidInput(std::string(what) + ": row " + std::to_string(r) + " must have " +
                               std::to_string(cols) + " entries");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].get<double>();
        }
    }
    return a;
}

inline json vector_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

inline Vector json_vector(const json& j, std::size_t size, const char* what) {
    if (!j.is_array() || j.size() != size) {
        throw InvalidInput(std::string(what) + ": expected " + std::to_string(size) + " entries");
    }
    Vector v(static_cast<Eigen::Index>(size));
    for (std::size_t i = 0; i < size; ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

}  // namespace detail

enum class Method { simple, pl, cd };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::simple: return "simple";
        case Method::pl: return "pl";
        case Method::cd: return "cd";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "simple") return Method::simple;
    if (s == "pl") return Method::pl;
    if (s == "cd") return Method::cd;
    throw InvalidInput("unknown model method '" + s + "'");
}

using ModelParameters = std::variant<simple::StudentTExpertSet, pl::PlModel, cd::MixtureExpertSet>;

/// A trained model with the configuration and seed that produced it.
struct ModelArchive {
    int format_version = kFormatVersion;
    ModelParameters parameters;
    json config = json::object();
    std::uint64_t seed = 0;
    std::string created;  // ISO-8601 UTC

    Method method() const { return static_cast<Method>(parameters.index()); }
};

inline json to_json(const ModelArchive& a) {
    json j;
    j["format"] = "fas-model";
    j["format_version"] = a.format_version;
    j["method"] = to_string(a.method());
    j["config"] = a.config;
    j["seed"] = a.seed;
    j["created"] = a.created;
    json p;
    std::visit(
        [&](const auto& model) {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, simple::StudentTExpertSet>) {
                j["n"] = model.n();
                j["m"] = model.m();
                p["stiffness"] = model.stiffness;
                p["weights"] = detail::matrix_rows(model.weights);
            } else if constexpr (std::is_same_v<T, pl::PlModel>) {
                j["n"] = model.n();
                j["m"] = model.m();
                p["stiffness"] = model.experts.stiffness;
                p["weights"] = detail::matrix_rows(model.experts.weights);
                p["levels"] = model.space.levels();
            } else {
                j["n"] = model.n();
                j["m"] = model.m();
                // One row per expert: lambda_j.
                p["lambda"] = detail::matrix_rows(model.lambda.transpose());
                p["mixing_logit"] = detail::vector_json(model.mixing_logit);
                p["log_var1"] = detail::vector_json(model.log_var1);
                p["log_var0"] = detail::vector_json(model.log_var0);
                p["augmentation_scale"] = model.augmentation_scale;
                p["always_augment"] = model.always_augment;
            }
        },
        a.parameters);
    j["parameters"] = std::move(p);
    return j;
}

inline ModelArchive from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != "fas-model") {
            throw InvalidInput("not a model archive");
        }
        ModelArchive a;
        a.format_version = j.at("format_version").get<int>();
        if (a.format_version != kFormatVersion) {
            throw InvalidInput("unsupported model archive version " + std::to_string(a.format_version));
        }
        a.config = j.at("config");
        a.seed = j.at("seed").get<std::uint64_t>();
        a.created = j.at("created").get<std::string>();
        const auto n = j.at("n").get<std::size_t>();
        const auto m = j.at("m").get<std::size_t>();
        const json& p = j.at("parameters");
        switch (method_from_string(j.at("method").get<std::string>())) {
            case Method::simple: {
                simple::StudentTExpertSet s;
                s.stiffness = p.at("stiffness").get<double>();
                s.weights = detail::rows_matrix(p.at("weights"), m, n, "weights");
                a.parameters = std::move(s);
                break;
            }
            case Method::pl: {
                pl::PlModel s;
                s.experts.stiffness = p.at("stiffness").get<double>();
                s.experts.weights = detail::rows_matrix(p.at("weights"), m, n, "weights");
                s.space = pl::QuantizedSpace(p.at("levels").get<std::vector<double>>());
                a.parameters = std::move(s);
                break;
            }
            case Method::cd: {
                cd::MixtureExpertSet s;
                s.lambda = detail::rows_matrix(p.at("lambda"), m, n, "lambda").transpose();
                s.mixing_logit = detail::json_vector(p.at("mixing_logit"), m, "mixing_logit");
                s.log_var1 = detail::json_vector(p.at("log_var1"), m, "log_var1");
                s.log_var0 = detail::json_vector(p.at("log_var0"), m, "log_var0");
                s.augmentation_scale = p.at("augmentation_scale").get<double>();
                s.always_augment = p.at("always_augment").get<bool>();
                a.parameters = std::move(s);
                break;
            }
        }
        return a;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("malformed model archive: ") + e.what());
    }
}

inline std::string serialize_model(const ModelArchive& a) { return to_json(a).dump(2) + "\n"; }

inline void save_model(const ModelArchive& a, const std::string& path) { detail::write_file(path, serialize_model(a)); }

inline ModelArchive load_model(const std::string& path) {
    const std::string text = detail::read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid model JSON: ") + e.what(), e.byte);
    }
    return from_json(j);
}

/// Filters (m x n) of any model type: weights for student-t experts,
/// lambda^T for mixture experts.
inline Matrix filters_of(const ModelParameters& p) {
    return std::visit(
        [](const auto& model) -> Matrix {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, simple::StudentTExpertSet>) {
                return model.weights;
            } else if constexpr (std::is_same_v<T, pl::PlModel>) {
                return model.experts.weights;
            } else {
                return model.lambda.transpose();
            }
        },
        p);
}

/// Data archive: one line of JSON header, then (for the f64le encoding)
/// count * n little-endian IEEE-754 doubles, row-major. The inline encoding
/// stores the rows in the header's "values" field instead.
enum class BatchEncoding { f64le, inline_json };

inline std::string serialize_batch(const DataBatch& b, BatchEncoding enc = BatchEncoding::f64le) {
    require_finite(b.values, "serialize_batch");
    json h;
    h["format"] = "fas-batch";
    h["format_version"] = kFormatVersion;
    h["n"] = b.n();
    h["count"] = b.count();
    h["width"] = b.width;
    h["height"] = b.height;
    if (enc == BatchEncoding::inline_json) {
        h["encoding"] = "inline";
        h["values"] = detail::matrix_rows(b.values);
        return h.dump() + "\n";
    }
    h["encoding"] = "f64le";
    std::string out = h.dump() + "\n";
    const std::size_t header = out.size();
    out.resize(header + static_cast<std::size_t>(b.values.size()) * 8);
    char* dst = out.data() + header;
    for (double v : b.values.reshaped<Eigen::RowMajor>()) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int k = 0; k < 8; ++k) {
            *dst++ = static_cast<char>((bits >> (8 * k)) & 0xFF);
        }
    }
    return out;
}

inline DataBatch parse_batch(const std::string& bytes) {
    const std::size_t eol = bytes.find('\n');
    if (eol == std::string::npos) {
        throw ParseError("batch archive has no header line", bytes.size());
    }
    json h;
    try {
        h = json::parse(bytes.substr(0, eol));
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid batch header: ") + e.what(), e.byte);
    }
    try {
        if (h.at("format").get<std::string>() != "fas-batch") {
            throw ParseError("not a batch archive", 0);
        }
        if (h.at("format_version").get<int>() != kFormatVersion) {
            throw ParseError("unsupported batch archive version", 0);
        }
        const auto n = h.at("n").get<std::size_t>();
        const auto count = h.at("count").get<std::size_t>();
        DataBatch b(Matrix(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(n)),
                    h.at("width").get<std::size_t>(), h.at("height").get<std::size_t>());
        const std::string enc = h.at("encoding").get<std::string>();
        if (enc == "inline") {
            b.values = detail::rows_matrix(h.at("values"), count, n, "values");
        } else if (enc == "f64le") {
            const std::size_t need = count * n * 8;
            if (bytes.size() - (eol + 1) != need) {
                throw ParseError("batch payload has " + std::to_string(bytes.size() - eol - 1) + " bytes, expected " +
                                     std::to_string(need),
                                 eol + 1);
            }
            const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + eol + 1);
            for (auto& v : b.values.reshaped<Eigen::RowMajor>()) {
                std::uint64_t bits = 0;
                for (int k = 0; k < 8; ++k) {
                    bits |= static_cast<std::uint64_t>(*src++) << (8 * k);
                }
                v = std::bit_cast<double>(bits);
            }
        } else {
            throw ParseError("unknown batch encoding '" + enc + "'", 0);
        }
        require_finite(b.values, "batch archive");
        return b;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed batch header: ") + e.what(), 0);
    }
}

inline void save_batch(const DataBatch& b, const std::string& path, BatchEncoding enc = BatchEncoding::f64le) {
    detail::write_file(path, serialize_batch(b, enc));
}

inline DataBatch load_batch(const std::string& path) { return parse_batch(detail::read_file(path)); }

}  // namespace fas::io
