// fas: command-line driver for data generation, training and inspection.

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fas/config.hpp"
#include "fas/datagen.hpp"
#include "fas/fas_cd.hpp"
#include "fas/fas_pl.hpp"
#include "fas/fas_simple.hpp"
#include "fas/io.hpp"

using namespace fas;
using nlohmann::json;

namespace {

// Deferred "flag overrides config file" assignments.
using Overrides = std::vector<std::function<void()>>;

template <typename T>
CLI::Option* override_option(CLI::App* app, Overrides& ov, const std::string& name, T& target,
                             const std::string& help) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *holder, help);
    ov.push_back([opt, holder, &target] {
        if (opt->count()) target = *holder;
    });
    return opt;
}

void override_flag(CLI::App* app, Overrides& ov, const std::string& name, bool& target, bool value,
                   const std::string& help) {
    CLI::Option* opt = app->add_flag(name, help);
    ov.push_back([opt, &target, value] {
        if (opt->count()) target = value;
    });
}

json read_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("invalid config JSON in '" + path + "': " + e.what(), e.byte);
    }
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string stamp(const std::string& override_value) { return override_value.empty() ? utc_now() : override_value; }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw Error("write to '" + path + "' failed");
}

EdgeImageParams edge_params(std::size_t size, bool noise, bool mask) {
    EdgeImageParams p;
    p.width = p.height = size;
    if (!noise) p.noise = NoiseParams{0.0, 0.0};
    p.circular_mask = mask;
    return p;
}

io::BatchEncoding encoding_from(const std::string& s) {
    if (s == "f64le") return io::BatchEncoding::f64le;
    if (s == "inline") return io::BatchEncoding::inline_json;
    throw InvalidInput("unknown encoding '" + s + "' (expected f64le or inline)");
}

template <typename T>
T expect_method(const io::ModelArchive& a, io::Method want) {
    if (a.method() != want) {
        throw InvalidInput("model method is '" + io::to_string(a.method()) + "', expected '" + io::to_string(want) +
                           "'");
    }
    return std::get<T>(a.parameters);
}

std::size_t square_side(std::size_t n) {
    const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    return s * s == n ? s : 0;
}

// --------------------------------------------------------------------------

struct GenEdges {
    std::size_t count = 1000, size = 16;
    std::uint64_t seed = 0;
    std::string out, encoding = "f64le", edges_csv;
    bool no_noise = false, mask = false;

    void add(CLI::App& app) {
        auto* sc = app.add_subcommand("gen-edges", "Synthetic noisy edge images as a batch archive");
        sc->add_option("--count", count, "Number of images")->capture_default_str();
        sc->add_option("--size", size, "Image width and height")->capture_default_str()->check(CLI::Range(2, 4096));
        sc->add_option("--seed", seed, "Random seed")->capture_default_str();
        sc->add_option("-o,--out", out, "Output batch archive")->required();
        sc->add_option("--encoding", encoding, "f64le or inline")->capture_default_str();
        sc->add_option("--edges-csv", edges_csv, "Also write per-image edge parameters");
        sc->add_flag("--no-noise", no_noise, "Skip the anti-correlated noise");
        sc->add_flag("--mask", mask, "Apply the inscribed circular mask");
        sc->callback([this] { run(); });
    }

    void run() const {
        const auto enc = encoding_from(encoding);
        const EdgeImageParams p = edge_params(size, !no_noise, mask);
        validate(p);
        const RngStream root(seed, 1);
        DataBatch batch(Matrix(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(size * size)), size, size);
        io::CsvWriter csv({"index", "angle", "offset", "low", "high"});
        for (std::size_t c = 0; c < count; ++c) {
            RngStream child = root.split(c);
            const EdgeImage img = generate_edge_image(p, child);
            set_row(batch, c, img.image.pixels);
            csv.row({std::to_string(c), io::format_double(img.edge.angle), io::format_double(img.edge.offset),
                     io::format_double(img.edge.low), io::format_double(img.edge.high)});
        }
        io::save_batch(batch, out, enc);
        if (!edges_csv.empty()) csv.save(edges_csv);
    }
};

struct ExtractPatches {
    std::vector<std::string> images;
    std::size_t side = 16, count = 10000;
    std::uint64_t seed = 0;
    std::string out, encoding = "f64le";
    bool no_noise = false;

    void add(CLI::App& app) {
        auto* sc = app.add_subcommand("extract-patches", "Random square patches from PGM images");
        sc->add_option("images", images, "Source PGM files")->required()->check(CLI::ExistingFile);
        sc->add_option("--side", side, "Patch side in pixels")->capture_default_str()->check(CLI::PositiveNumber);
        sc->add_option("--count", count, "Number of patches")->capture_default_str();
        sc->add_option("--seed", seed, "Random seed")->capture_default_str();
        sc->add_option("-o,--out", out, "Output batch archive")->required();
        sc->add_option("--encoding", encoding, "f64le or inline")->capture_default_str();
        sc->add_flag("--no-noise", no_noise, "Skip the anti-correlated noise");
        sc->callback([this] { run(); });
    }

    void run() const {
        const auto enc = encoding_from(encoding);
        std::vector<GrayImage> loaded;
        for (const auto& path : images) loaded.push_back(io::read_pgm(path));
        RngStream rng(seed, 8);
        const auto noise = no_noise ? std::nullopt : std::optional<NoiseParams>(NoiseParams{});
        io::save_batch(extract_patches(loaded, side, count, rng, noise), out, enc);
    }
};

struct TrainSimple {
    simple::SimpleTrainConfig cfg;
    Overrides ov;
    bool dry_run = false;
    std::string config_path, data, out, trace, timestamp;
    std::size_t size = 16;

    void add(CLI::App& app) {
        auto* sc = app.add_subcommand("train-simple", "Student-t constraints by direct energy minimisation");
        sc->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        override_option(sc, ov, "--experts", cfg.experts, "Number of filters [25]");
        override_option(sc, ov, "--stiffness", cfg.stiffness, "Student-t k [100]");
        override_option(sc, ov, "--lr", cfg.learning_rate, "Learning rate [1e-7]");
        override_option(sc, ov, "--momentum", cfg.momentum, "Momentum [0.98]");
        override_option(sc, ov, "--batch", cfg.batch_size, "Cases per update [1000]");
        override_option(sc, ov, "--updates", cfg.updates, "Number of updates [4000]");
        override_option(sc, ov, "--seed", cfg.seed, "Random seed [0]");
        override_flag(sc, ov, "--no-reweight", cfg.reweight_by_energy, false, "Disable energy reweighting");
        override_flag(sc, ov, "--no-project", cfg.project_gradient, false, "Disable sum-plane gradient projection");
        sc->add_option("--data", data, "Batch archive to resample (default: fresh edge images)")
            ->check(CLI::ExistingFile);
        sc->add_option("--size", size, "Edge image size when generating")->capture_default_str();
        sc->add_option("-o,--out", out, "Output model archive")->required();
        sc->add_option("--trace", trace, "Per-update CSV trace");
        sc->add_option("--timestamp", timestamp, "Creation timestamp to record (default: now)");
        sc->add_flag("--dry-run", dry_run, "Print the resolved config and exit");
        sc->callback([this] { run(); });
    }

    void run() {
        config::apply_json(cfg, read_config_file(config_path));
        for (auto& f : ov) f();
        simple::validate(cfg);
        if (dry_run) {
            std::cout << config::to_json(cfg).dump(2) << "\n";
            return;
        }

        DataSource source;
        std::size_t n = size * size;
        if (!data.empty()) {
            DataBatch pool = io::load_batch(data);
            n = pool.n();
            source = resampling_source(std::move(pool), cfg.seed);
        } else {
            source = edge_image_source(edge_params(size, true, false), cfg.seed);
        }
        auto model = simple::init_experts(n, cfg.experts, cfg.stiffness, RngStream(cfg.seed, 4));
        const auto result = simple::train_simple(std::move(model), source, cfg);

        io::ModelArchive a;
        a.parameters = result.model;
        a.config = config::to_json(cfg);
        a.seed = cfg.seed;
        a.created = stamp(timestamp);
        io::save_model(a, out);
        if (!trace.empty()) {
            io::CsvWriter csv({"update", "mean_energy"});
            for (std::size_t u = 0; u < result.mean_energy.size(); ++u) {
                csv.row({std::to_string(u), io::format_double(result.mean_energy[u])});
            }
            csv.save(trace);
        }
    }
};

struct TrainPl {
    pl::PlTrainConfig cfg;
    Overrides ov;
    bool dry_run = false;
    std::string config_path, data, out, trace, timestamp, optimizer;
    bool snap = false;

    void add(CLI::App& app) {
        auto* sc = app.add_subcommand("train-pl", "Student-t constraints by pseudo-likelihood on quantized data");
        sc->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        override_option(sc, ov, "--experts", cfg.experts, "Number of experts [8]");
        override_option(sc, ov, "--stiffness", cfg.stiffness, "Student-t k [100]");
        override_option(sc, ov, "--levels", cfg.levels, "Uniform quantization levels on [0, 1] [16]");
        override_option(sc, ov, "--lr", cfg.learning_rate, "Step size on the per-case mean gradient [0.05]");
        override_option(sc, ov, "--momentum", cfg.momentum, "Momentum [0.9]");
        override_option(sc, ov, "--iterations", cfg.iterations, "Optimizer iterations [100]");
        override_option(sc, ov, "--max-backtracks", cfg.max_backtracks, "Line-search halvings [30]");
        override_option(sc, ov, "--seed", cfg.seed, "Random seed [0]");
        override_flag(sc, ov, "--no-line-search", cfg.line_search, false, "Accept every proposed step");
        sc->add_option("--optimizer", optimizer, "momentum or cg");
        sc->add_option("--data", data, "Batch archive")->required()->check(CLI::ExistingFile);
        sc->add_flag("--snap", snap, "Snap data to the nearest quantization level");
        sc->add_option("-o,--out", out, "Output model archive")->required();
        sc->add_option("--trace", trace, "Per-iteration CSV trace");
        sc->add_option("--timestamp", timestamp, "Creation timestamp to record (default: now)");
        sc->add_flag("--dry-run", dry_run, "Print the resolved config and exit");
        sc->callback([this] { run(); });
    }

    void run() {
        config::apply_json(cfg, read_config_file(config_path));
        for (auto& f : ov) f();
        if (!optimizer.empty()) cfg.optimizer = config::optimizer_from_string(optimizer);
        pl::validate(cfg);
        if (dry_run) {
            std::cout << config::to_json(cfg).dump(2) << "\n";
            return;
        }

        const auto space = pl::QuantizedSpace::uniform(cfg.levels);
        DataBatch batch = io::load_batch(data);
        if (snap) {
            const auto r = pl::snap_to_lattice(std::move(batch), space);
            std::cerr << "snapped to " << cfg.levels << " levels, max shift " << r.max_distance << "\n";
            batch = r.batch;
        }
        auto model = pl::init_pl_model(batch.n(), cfg.experts, cfg.stiffness, space, RngStream(cfg.seed, 5));
        pl::require_on_lattice(model, batch);
        const auto result = pl::train_pl(std::move(model), batch, cfg);

        io::ModelArchive a;
        a.parameters = result.model;
        a.config = config::to_json(cfg);
        a.seed = cfg.seed;
        a.created = stamp(timestamp);
        io::save_model(a, out);
        if (!trace.empty()) {
            io::CsvWriter csv({"iteration", "log_pseudo_likelihood"});
            for (std::size_t i = 0; i < result.objective.size(); ++i) {
                csv.row({std::to_string(i), io::format_double(result.objective[i])});
            }
            csv.save(trace);
        }
    }
};

struct TrainCd {
    cd::CdTrainConfig cfg;
    Overrides ov;
    bool dry_run = false;
    std::string config_path, data, out, trace, timestamp, checkpoint_prefix;
    double augmentation_scale = 0.1;
    bool always_augment = false;

    void add(CLI::App& app) {
        auto* sc = app.add_subcommand("train-cd", "Gaussian-mixture constraints by contrastive divergence");
        sc->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        override_option(sc, ov, "--experts", cfg.experts, "Number of experts [16]");
        override_option(sc, ov, "--lr", cfg.learning_rate, "Learning rate [0.001]");
        override_option(sc, ov, "--momentum", cfg.momentum, "Momentum [0.9]");
        override_option(sc, ov, "--batch", cfg.batch_size, "Cases per update [100]");
        override_option(sc, ov, "--updates", cfg.updates, "Number of updates [1000]");
        override_option(sc, ov, "--seed", cfg.seed, "Random seed [0]");
        override_option(sc, ov, "--lambda-scale", cfg.lambda_scale, "Rate multiplier for lambda [1]");
        override_option(sc, ov, "--mixing-scale", cfg.mixing_scale, "Rate multiplier for mixing logits [0.1]");
        override_option(sc, ov, "--variance-scale", cfg.variance_scale, "Rate multiplier for log variances [0.1]");
        override_option(sc, ov, "--checkpoint-every", cfg.checkpoint_every, "Save a checkpoint every N updates [0]");
        sc->add_option("--checkpoint-prefix", checkpoint_prefix, "Checkpoint path prefix (default: --out)");
        sc->add_option("--augmentation-scale", augmentation_scale, "Scale of the appended identity block")
            ->capture_default_str();
        sc->add_flag("--always-augment", always_augment, "Append the identity block even at full rank");
        sc->add_option("--data", data, "Batch archive to resample")->required()->check(CLI::ExistingFile);
        sc->add_option("-o,--out", out, "Output model archive")->required();
        sc->add_option("--trace", trace, "Per-update diagnostics CSV");
        sc->add_option("--timestamp", timestamp, "Creation timestamp to record (default: now)");
        sc->add_flag("--dry-run", dry_run, "Print the resolved config and exit");
        sc->callback([this] { run(); });
    }

    io::ModelArchive archive(const cd::MixtureExpertSet& model) const {
        io::ModelArchive a;
        a.parameters = model;
        a.config = config::to_json(cfg);
        a.seed = cfg.seed;
        a.created = stamp(timestamp);
        return a;
    }

    void run() {
        config::apply_json(cfg, read_config_file(config_path));
        for (auto& f : ov) f();
        cd::validate(cfg);
        if (dry_run) {
            std::cout << config::to_json(cfg).dump(2) << "\n";
            return;
        }

        DataBatch pool = io::load_batch(data);
        auto model = cd::init_mixture_experts(pool.n(), cfg.experts, RngStream(cfg.seed, 6));
        model.augmentation_scale = augmentation_scale;
        model.always_augment = always_augment;
        cd::check_consistent(model);

        std::string prefix = checkpoint_prefix;
        if (prefix.empty()) {
            prefix = out;
            if (prefix.size() > 5 && prefix.ends_with(".json")) prefix.resize(prefix.size() - 5);
        }
        const auto checkpoint = [&](std::size_t u, const cd::MixtureExpertSet& m) {
            io::save_model(archive(m), prefix + "." + std::to_string(u) + ".json");
        };
        const auto result = cd::train_cd(std::move(model), resampling_source(std::move(pool), cfg.seed), cfg,
                                         checkpoint);
        io::save_model(archive(result.model), out);
        if (!trace.empty()) {
            io::CsvWriter csv({"update", "reconstruction_error", "mean_responsibility", "lambda_norm",
                               "mean_mixing_logit", "mean_log_var1", "mean_log_var0"});
            for (const auto& d : result.trace) {
                csv.row({std::to_string(d.update), io::format_double(d.reconstruction_error),
                         io::format_double(d.mean_responsibility), io::format_double(d.lambda_norm),
                         io::format_double(d.mean_mixing_logit), io::format_double(d.mean_log_var1),
                         io::format_double(d.mean_log_var0)});
            }
            csv.save(trace);
        }
    }
};

struct SampleGibbs {
    std::string model_path, out, order = "sequential", encoding = "f64le";
    bool tiny = false;
    std::size_t sweeps = 1000, burn_in = 100, thin = 1;
    std::uint64_t seed = 0;

    void add(CLI::App& app) {
        auto* sc = app.add_subcommand("sample-gibbs", "Single-site Gibbs samples from a pseudo-likelihood model");
        auto* m = sc->add_option("--model", model_path, "pl model archive")->check(CLI::ExistingFile);
        sc->add_flag("--tiny-reference", tiny, "Use the built-in 3-pixel reference model")->excludes(m);
        sc->add_option("--sweeps", sweeps, "Recorded sweeps")->capture_default_str();
        sc->add_option("--burn-in", burn_in, "Discarded initial sweeps")->capture_default_str();
        sc->add_option("--thin", thin, "Record every N-th sweep")->capture_default_str()->check(CLI::PositiveNumber);
        sc->add_option("--order", order, "sequential or random")->capture_default_str();
        sc->add_option("--seed", seed, "Random seed")->capture_default_str();
        sc->add_option("-o,--out", out, "Output batch archive")->required();
        sc->add_option("--encoding", encoding, "f64le or inline")->capture_default_str();
        sc->callback([this] { run(); });
    }

    void run() const {
        if (!tiny && model_path.empty()) throw InvalidInput("need --model or --tiny-reference");
        if (order != "sequential" && order != "random") throw InvalidInput("order must be sequential or random");
        const auto enc = encoding_from(encoding);
        const pl::PlModel model =
            tiny ? pl::tiny_reference_model() : expect_method<pl::PlModel>(io::load_model(model_path), io::Method::pl);
        const auto scan = order == "random" ? pl::ScanOrder::random : pl::ScanOrder::sequential;

        RngStream rng(seed, 7);
        Vector d(static_cast<Eigen::Index>(model.n()));
        for (auto& x : d) x = model.space.level(rng.index(model.space.size()));
        for (std::size_t s = 0; s < burn_in; ++s) d = pl::gibbs_sweep(model, d, rng, scan);
        const std::size_t side = square_side(model.n());
        DataBatch samples(Matrix(static_cast<Eigen::Index>(sweeps), static_cast<Eigen::Index>(model.n())), side, side);
        for (std::size_t s = 0; s < sweeps; ++s) {
            for (std::size_t t = 0; t < thin; ++t) d = pl::gibbs_sweep(model, d, rng, scan);
            samples.values.row(static_cast<Eigen::Index>(s)) = d.transpose();
        }
        io::save_batch(samples, out, enc);
    }
};

struct Reconstruct {
    std::string model_path, data, out, encoding = "f64le";
    std::uint64_t seed = 0;

    void add(CLI::App& app) {
        auto* sc = app.add_subcommand("reconstruct", "One-step CD reconstructions of a batch");
        sc->add_option("--model", model_path, "cd model archive")->required()->check(CLI::ExistingFile);
        sc->add_option("--data", data, "Batch archive")->required()->check(CLI::ExistingFile);
        sc->add_option("--seed", seed, "Random seed")->capture_default_str();
        sc->add_option("-o,--out", out, "Output batch archive")->required();
        sc->add_option("--encoding", encoding, "f64le or inline")->capture_default_str();
        sc->callback([this] { run(); });
    }

    void run() const {
        const auto enc = encoding_from(encoding);
        const cd::MixtureExpertSet model = expect_method<cd::MixtureExpertSet>(io::load_model(model_path), io::Method::cd);
        const DataBatch batch = io::load_batch(data);
        const cd::AugmentedModel aug(model);
        const RngStream root(seed, 9);
        DataBatch result(Matrix(batch.values.rows(), batch.values.cols()), batch.width, batch.height);
        double error = 0.0;
        for (std::size_t c = 0; c < batch.count(); ++c) {
            RngStream rng = root.split(c);
            const Vector d = batch.row(c);
            const Vector d_hat = cd::reconstruct(aug, aug.augment(d), rng).d_hat.head(d.size());
            result.values.row(static_cast<Eigen::Index>(c)) = d_hat.transpose();
            error += (d - d_hat).norm();
        }
        io::save_batch(result, out, enc);
        std::cout << "mean_reconstruction_error " << (batch.count() ? error / batch.count() : 0.0) << "\n";
    }
};

struct RenderFilters {
    std::string model_path, out;
    std::size_t width = 0, height = 0, columns = 0;

    void add(CLI::App& app) {
        auto* sc = app.add_subcommand("render-filters", "Filter mosaic as a PGM image");
        sc->add_option("--model", model_path, "Model archive")->required()->check(CLI::ExistingFile);
        sc->add_option("--width", width, "Patch width (default: square)");
        sc->add_option("--height", height, "Patch height (default: square)");
        sc->add_option("--columns", columns, "Mosaic columns (default: ceil(sqrt(m)))");
        sc->add_option("-o,--out", out, "Output PGM")->required();
        sc->callback([this] { run(); });
    }

    void run() const {
        const Matrix filters = io::filters_of(io::load_model(model_path).parameters);
        const auto n = static_cast<std::size_t>(filters.cols());
        std::size_t w = width, h = height;
        if (!w && !h) {
            w = h = square_side(n);
            if (!w) throw InvalidInput("filter length " + std::to_string(n) + " is not square; pass --width/--height");
        } else if (!w || !h) {
            if (!w) w = h ? n / h : 0;
            if (!h) h = w ? n / w : 0;
        }
        std::size_t cols = columns;
        if (!cols) cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(filters.rows()))));
        io::write_pgm(io::render_filter_mosaic(filters, w, h, std::max<std::size_t>(cols, 1)), out);
    }
};

struct HistogramCmd {
    std::string model_path, data, out;
    std::size_t bins = 64, count = 1000, size = 0;
    std::uint64_t seed = 0;

    void add(CLI::App& app) {
        auto* sc = app.add_subcommand("histogram", "Histogram of pooled filter outputs");
        sc->add_option("--model", model_path, "Model archive")->required()->check(CLI::ExistingFile);
        auto* d = sc->add_option("--data", data, "Batch archive (default: fresh edge images)")
                      ->check(CLI::ExistingFile);
        sc->add_option("--count", count, "Fresh edge images to generate")->capture_default_str()->excludes(d);
        sc->add_option("--seed", seed, "Seed for fresh edge images")->capture_default_str()->excludes(d);
        sc->add_option("--bins", bins, "Number of bins")->capture_default_str()->check(CLI::PositiveNumber);
        sc->add_option("-o,--out", out, "Output CSV")->required();
        sc->callback([this] { run(); });
    }

    void run() const {
        const Matrix filters = io::filters_of(io::load_model(model_path).parameters);
        DataBatch batch;
        if (!data.empty()) {
            batch = io::load_batch(data);
        } else {
            const std::size_t side = square_side(static_cast<std::size_t>(filters.cols()));
            if (!side) throw InvalidInput("filter length is not square; pass --data");
            batch = generate_edge_batch(edge_params(side, true, false), count, RngStream(seed, 10));
        }
        const std::vector<double> outputs = io::pooled_outputs(filters, batch);
        const io::Histogram h = io::symmetric_histogram(outputs, bins);
        write_text(out, h.to_csv());
        std::cout << "observations " << h.total() << "\n";
        if (outputs.size() >= 2) {
            std::cout << "excess_kurtosis " << io::excess_kurtosis(outputs) << "\n";
        }
    }
};

struct OracleCheck {
    std::string model_path;
    std::uint64_t seed = 1;
    double tolerance = 1e-10;

    void add(CLI::App& app) {
        auto* sc = app.add_subcommand("oracle-check", "Compare pseudo-likelihood conditionals with enumeration");
        auto* m = sc->add_option("--model", model_path, "pl model archive (default: tiny reference)")
                      ->check(CLI::ExistingFile);
        sc->add_option("--seed", seed, "Seed of the tiny reference model")->capture_default_str()->excludes(m);
        sc->add_option("--tolerance", tolerance, "Largest accepted deviation")->capture_default_str();
        sc->callback([this] { run(); });
    }

    void run() const {
        const pl::PlModel model = model_path.empty()
                                      ? pl::tiny_reference_model(seed)
                                      : expect_method<pl::PlModel>(io::load_model(model_path), io::Method::pl);
        const pl::OracleReport r = pl::oracle_report(model);
        std::cout << "states " << r.states << "\n"
                  << "max_conditional_deviation " << r.conditional << "\n"
                  << "pseudo_likelihood_deviation " << r.pseudo_likelihood << "\n"
                  << "normalization_deviation " << r.normalization << "\n";
        if (!(r.worst() <= tolerance)) {
            throw InvariantFailure("oracle deviation " + io::format_double(r.worst()) + " exceeds tolerance " +
                                   io::format_double(tolerance));
        }
        std::cout << "ok\n";
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Constraint-learning toolkit: edge data, three trainers, inspection tools"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    GenEdges gen_edges;
    ExtractPatches extract;
    TrainSimple train_simple;
    TrainPl train_pl;
    TrainCd train_cd;
    SampleGibbs sample_gibbs;
    Reconstruct reconstruct;
    RenderFilters render;
    HistogramCmd histogram;
    OracleCheck oracle;
    gen_edges.add(app);
    extract.add(app);
    train_simple.add(app);
    train_pl.add(app);
    train_cd.add(app);
    sample_gibbs.add(app);
    reconstruct.add(app);
    render.add(app);
    histogram.add(app);
    oracle.add(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const fas::Error& e) {
        std::cerr << "fas: error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fas: internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
