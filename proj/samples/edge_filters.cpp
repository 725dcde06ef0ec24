// Trains student-t filters on synthetic edge images, then writes the filter
// mosaic and a histogram of pooled filter outputs on fresh images.
//
//   edge_filters [updates] [output-prefix]

#include <iostream>
#include <string>

#include "fas/fas_simple.hpp"
#include "fas/io.hpp"

using namespace fas;

int main(int argc, char** argv) {
    const std::size_t updates = argc > 1 ? std::stoul(argv[1]) : 300;
    const std::string prefix = argc > 2 ? argv[2] : "edge_filters";

    const EdgeImageParams images;
    simple::SimpleTrainConfig cfg;
    cfg.batch_size = 200;
    cfg.learning_rate = 2e-6;
    cfg.updates = updates;
    cfg.seed = 1;

    auto model = simple::init_experts(256, cfg.experts, cfg.stiffness, RngStream(cfg.seed, 4));
    const auto result = simple::train_simple(std::move(model), edge_image_source(images, cfg.seed), cfg);
    std::cout << "mean energy per case: " << result.mean_energy.front() << " -> " << result.mean_energy.back()
              << "\n";

    io::write_pgm(io::render_filter_mosaic(result.model.weights, 16, 16, 5), prefix + ".pgm");

    const DataBatch fresh = generate_edge_batch(images, 500, RngStream(2, 1));
    const auto outputs = io::pooled_outputs(result.model.weights, fresh);
    io::detail::write_file(prefix + "_hist.csv", io::symmetric_histogram(outputs).to_csv());
    std::cout << "excess kurtosis of filter outputs: " << io::excess_kurtosis(outputs) << "\n"
              << "wrote " << prefix << ".pgm and " << prefix << "_hist.csv\n";
}
