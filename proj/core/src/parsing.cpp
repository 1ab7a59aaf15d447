#include "secgan/parsing.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <cstring>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "secgan/losses.hpp"
#include "secgan/networks.hpp"

namespace secgan {

namespace nn = torch::nn;

namespace {

nn::Sequential down(int64_t in, int64_t out) {
    return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)),
                          nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
}

nn::Sequential up(int64_t in, int64_t out) {
    return nn::Sequential(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1)),
                          nn::ReLU());
}

torch::Tensor as_one_hot(const torch::Tensor& masks) {
    if (masks.dim() == 3) return OneHotMask::from_class_indices(masks).data();
    return masks.to(torch::kFloat32);
}

}  // namespace

ParserNetImpl::ParserNetImpl(int64_t w) {
    stem = register_module("stem", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, w, 3).padding(1)),
                                                  nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2))));
    down1 = register_module("down1", down(w, 2 * w));
    down2 = register_module("down2", down(2 * w, 4 * w));
    down3 = register_module("down3", down(4 * w, 8 * w));
    up1 = register_module("up1", up(8 * w, 4 * w));
    up2 = register_module("up2", up(8 * w, 2 * w));
    up3 = register_module("up3", up(4 * w, w));
    head = register_module("head", nn::Conv2d(nn::Conv2dOptions(2 * w, kNumSegments, 3).padding(1)));
}

torch::Tensor ParserNetImpl::forward(const torch::Tensor& x) {
    auto s0 = stem->forward(x);   // H
    auto s1 = down1->forward(s0); // H/2
    auto s2 = down2->forward(s1); // H/4
    auto s3 = down3->forward(s2); // H/8
    auto u = up1->forward(s3);
    u = up2->forward(torch::cat({u, s2}, 1));
    u = up3->forward(torch::cat({u, s1}, 1));
    return head->forward(torch::cat({u, s0}, 1));
}

ParserHandle::ParserHandle(int64_t resolution, int64_t width, uint64_t seed)
    : resolution_(resolution), width_(width), net_(width) {
    if (resolution % 8 != 0)
        throw ContractViolation(fmt::format("parser: resolution {} not divisible by 8", resolution));
    init_weights(*net_, seed);
}

void ParserHandle::freeze() {
    for (auto& p : net_->parameters()) p.set_requires_grad(false);
    net_->eval();
    frozen_ = true;
}

void ParserHandle::unfreeze() {
    for (auto& p : net_->parameters()) p.set_requires_grad(true);
    net_->train();
    frozen_ = false;
}

uint64_t ParserHandle::parameter_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : net_->parameters()) {
        auto c = p.detach().contiguous();
        const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
        const auto n = c.numel() * static_cast<int64_t>(c.element_size());
        for (int64_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

torch::Tensor parse(const ParserHandle& parser, const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != 3)
        throw ContractViolation("parse: expected RGB batch [B,3,H,W]");
    if (x.size(2) != parser.resolution() || x.size(3) != parser.resolution())
        throw ContractViolation(fmt::format("parse: input {}x{} does not match parser resolution {}",
                                            x.size(2), x.size(3), parser.resolution()));
    auto& net = const_cast<ParserNet&>(parser.net());
    return torch::softmax(net->forward(x), 1);
}

SoftMask parse(const ParserHandle& parser, const ImageBatch& x) {
    return SoftMask(parse(parser, x.data()));
}

ParserTrainingResult train_parser(const torch::Tensor& images, const torch::Tensor& masks,
                                  const ParserTrainingOptions& options) {
    if (!images.defined() || images.size(0) == 0)
        throw ContractViolation("train_parser: empty dataset");
    if (images.dim() != 4 || images.size(1) != 3)
        throw ContractViolation("train_parser: images must be [N,3,H,W]");
    const auto n = images.size(0);
    const auto res = images.size(2);
    if (masks.size(0) != n)
        throw ContractViolation("train_parser: image and mask counts differ");
    if (masks.size(-1) != images.size(3) || masks.size(-2) != res || images.size(3) != res)
        throw ContractViolation(fmt::format("train_parser: mask/image resolution mismatch ({}x{} vs {}x{})",
                                            masks.size(-2), masks.size(-1), res, images.size(3)));

    ParserHandle parser(res, options.width, options.seed);
    const auto targets = as_one_hot(masks);
    torch::optim::Adam opt(parser.net()->parameters(),
                           torch::optim::AdamOptions(options.learning_rate).betas({0.9, 0.999}));
    std::mt19937_64 rng(options.seed ^ 0x5eed5eedULL);
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    double last_epoch_loss = 0.0;
    for (int64_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        int64_t batches = 0;
        for (int64_t start = 0; start < n; start += options.batch_size) {
            const auto end = std::min(n, start + options.batch_size);
            auto idx = torch::from_blob(order.data() + start, {end - start}, torch::kLong);
            auto x = images.index_select(0, idx);
            auto s = targets.index_select(0, idx);
            auto loss = mask_cross_entropy(s, torch::softmax(parser.net()->forward(x), 1));
            opt.zero_grad();
            loss.backward();
            opt.step();
            sum += loss.item<double>();
            ++batches;
        }
        last_epoch_loss = sum / static_cast<double>(batches);
    }
    parser.freeze();
    return {std::move(parser), last_epoch_loss};
}

double pixel_accuracy(const ParserHandle& parser, const torch::Tensor& images,
                      const torch::Tensor& class_indices, int64_t batch_size) {
    torch::NoGradGuard no_grad;
    int64_t correct = 0;
    const auto n = images.size(0);
    for (int64_t start = 0; start < n; start += batch_size) {
        const auto end = std::min(n, start + batch_size);
        auto pred = parse(parser, images.slice(0, start, end)).argmax(1);
        correct += (pred == class_indices.slice(0, start, end).to(torch::kLong)).sum().item<int64_t>();
    }
    return static_cast<double>(correct) / static_cast<double>(class_indices.numel());
}

void save_parser(const ParserHandle& parser, const std::filesystem::path& path) {
    torch::serialize::OutputArchive archive;
    archive.write("resolution", c10::IValue(parser.resolution()));
    archive.write("width", c10::IValue(parser.width()));
    archive.write("taxonomy_hash", c10::IValue(static_cast<int64_t>(taxonomy_hash())));
    torch::serialize::OutputArchive params;
    parser.net()->save(params);
    archive.write("net", params);
    archive.save_to(path.string());
}

ParserHandle load_parser(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error(fmt::format("parser checkpoint not found: {}", path.string()));
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    c10::IValue res, width, hash;
    archive.read("resolution", res);
    archive.read("width", width);
    archive.read("taxonomy_hash", hash);
    if (static_cast<uint64_t>(hash.toInt()) != taxonomy_hash())
        throw ContractViolation("parser checkpoint uses a different segment taxonomy");
    ParserHandle parser(res.toInt(), width.toInt(), 0);
    torch::serialize::InputArchive params;
    archive.read("net", params);
    parser.net()->load(params);
    parser.freeze();
    return parser;
}

}  // namespace secgan
