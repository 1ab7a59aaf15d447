#pragma once

// Tiny end-to-end fixtures: a 16x16 toy dataset, a matching untrained parser
// and a config small enough for a training step in milliseconds.

#include <filesystem>
#include <string>

#include "secgan/config.hpp"
#include "secgan/data.hpp"
#include "secgan/parsing.hpp"

namespace fixture {

inline secgan::ExperimentConfig tiny_config(uint64_t seed = 0) {
    auto c = secgan::ExperimentConfig::defaults_for(secgan::Backbone::StarGAN);
    c.resolution = 16;
    c.attributes = secgan::toy_attribute_names();
    c.g_width = 4;
    c.d_width = 4;
    c.n_res = 1;
    c.d_layers = 4;
    c.batch_size = 4;
    c.iterations = 20;
    c.n_critic = 5;
    c.parser_width = 4;
    c.checkpoint_every = 10;
    c.seed = seed;
    return c;
}

inline secgan::AttributeDataset tiny_data(int64_t n = 24, uint64_t seed = 0) {
    secgan::ToySpec spec;
    spec.canvas = 16;
    spec.seed = seed;
    return secgan::generate_toy_dataset(spec, n);
}

inline secgan::ParserHandle tiny_parser(uint64_t seed = 0) {
    secgan::ParserHandle p(16, 4, seed);
    p.freeze();
    return p;
}

inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("secgan_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixture

#include "secgan/evaluation.hpp"

namespace fixture {

// Images that carry their own label: pixel (0, 0, k) of channel 0 is +1 when
// attribute k is on and -1 otherwise. The translator rewrites those pixels to
// the target label and the classifier reads them back, so a perfect editor
// and a perfect judge are available without training anything.
inline torch::Tensor labelled_images(const torch::Tensor& labels, int64_t res, uint64_t seed) {
    auto gen = torch::make_generator<at::CPUGeneratorImpl>(seed);
    auto x = torch::rand({labels.size(0), 3, res, res}, gen) * 1.6 - 0.8;
    x.select(1, 0).select(1, 0).narrow(1, 0, labels.size(1)).copy_(labels * 2 - 1);
    return x;
}

inline torch::Tensor read_labels(const torch::Tensor& x, int64_t n_attrs) {
    return (x.select(1, 0).select(1, 0).narrow(1, 0, n_attrs) > 0).to(torch::kFloat32);
}

inline secgan::Translator oracle_translator(int64_t n_attrs) {
    return [n_attrs](const torch::Tensor& x, const torch::Tensor& y_diff) {
        auto out = x.clone();
        auto target = (read_labels(x, n_attrs) + y_diff).clamp(0, 1);
        out.select(1, 0).select(1, 0).narrow(1, 0, n_attrs).copy_(target * 2 - 1);
        return out;
    };
}

inline secgan::ProbabilityFn oracle_classifier(int64_t n_attrs) {
    return [n_attrs](const torch::Tensor& x) { return read_labels(x, n_attrs) * 0.98 + 0.01; };
}

}  // namespace fixture
