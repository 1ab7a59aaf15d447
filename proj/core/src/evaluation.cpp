#include "secgan/evaluation.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "secgan/networks.hpp"

namespace secgan {

namespace nn = torch::nn;

namespace {

int64_t downsampling_stages(int64_t resolution) {
    int64_t stages = 0;
    for (int64_t r = resolution; r > 4 && r % 2 == 0 && stages < 5; r /= 2) ++stages;
    return stages;
}

torch::Tensor batched(const torch::Tensor& x, int64_t batch, const std::function<torch::Tensor(const torch::Tensor&)>& f) {
    std::vector<torch::Tensor> out;
    for (int64_t i = 0; i < x.size(0); i += batch) out.push_back(f(x.slice(0, i, std::min(i + batch, x.size(0)))));
    return torch::cat(out);
}

}  // namespace

// ----------------------------------------------------------------------------
// Classifier
// ----------------------------------------------------------------------------

AttributeClassifierImpl::AttributeClassifierImpl(int64_t n_attrs, int64_t resolution, int64_t width, int64_t hidden) {
    const auto stages = downsampling_stages(resolution);
    if (stages == 0) throw ContractViolation(fmt::format("classifier: unsupported resolution {}", resolution));
    body = nn::Sequential();
    int64_t in = 3, ch = width, spatial = resolution;
    for (int64_t s = 0; s < stages; ++s) {
        body->push_back(nn::Conv2d(nn::Conv2dOptions(in, ch, 4).stride(2).padding(1)));
        body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
        in = ch;
        ch = std::min(ch * 2, width * 8);
        spatial /= 2;
    }
    body->push_back(nn::Flatten());
    fc = nn::Linear(in * spatial * spatial, hidden);
    out = nn::Linear(hidden, n_attrs);
    register_module("body", body);
    register_module("fc", fc);
    register_module("out", out);
}

torch::Tensor AttributeClassifierImpl::features(const torch::Tensor& x) { return torch::relu(fc(body->forward(x))); }

torch::Tensor AttributeClassifierImpl::forward(const torch::Tensor& x) { return out(features(x)); }

namespace {

void check_input(const ClassifierHandle& c, const torch::Tensor& images) {
    if (images.dim() != 4 || images.size(1) != 3)
        throw ContractViolation("classifier: expected [N,3,H,W] images");
    if (images.size(2) != c.resolution || images.size(3) != c.resolution)
        throw ContractViolation(fmt::format("classifier expects {}x{} images, got {}x{}", c.resolution, c.resolution,
                                            images.size(2), images.size(3)));
}

}  // namespace

torch::Tensor ClassifierHandle::logits(const torch::Tensor& images, int64_t batch_size) const {
    check_input(*this, images);
    torch::NoGradGuard no_grad;
    auto net = this->net;  // holder copy shares the module
    net->eval();
    return batched(images, batch_size, [&](const torch::Tensor& x) { return net->forward(x); });
}

torch::Tensor ClassifierHandle::probabilities(const torch::Tensor& images, int64_t batch_size) const {
    return torch::sigmoid(logits(images, batch_size));
}

torch::Tensor ClassifierHandle::features(const torch::Tensor& images, int64_t batch_size) const {
    check_input(*this, images);
    torch::NoGradGuard no_grad;
    auto net = this->net;  // holder copy shares the module
    net->eval();
    return batched(images, batch_size, [&](const torch::Tensor& x) { return net->features(x); });
}

ClassifierTrainingResult train_attribute_classifier(const torch::Tensor& images, const torch::Tensor& labels,
                                                    const torch::Tensor& heldout_images,
                                                    const torch::Tensor& heldout_labels,
                                                    const std::vector<std::string>& names,
                                                    const ClassifierTrainingOptions& o) {
    if (!images.defined() || images.size(0) == 0) throw ContractViolation("classifier training set is empty");
    if (images.dim() != 4 || images.size(2) != images.size(3))
        throw ContractViolation("classifier: expected square [N,3,H,W] images");
    if (labels.dim() != 2 || labels.size(0) != images.size(0) || labels.size(1) != static_cast<int64_t>(names.size()))
        throw ContractViolation("classifier: labels must be [N, n_a] matching images and names");

    ClassifierTrainingResult result;
    const auto n = images.size(0);
    const auto n_a = labels.size(1);
    auto positives = labels.sum(0);
    for (int64_t k = 0; k < n_a; ++k) {
        const auto pos = positives[k].item<double>();
        if (pos == 0 || pos == static_cast<double>(n))
            result.warnings.push_back(fmt::format("attribute '{}' has a single class in the training set", names[k]));
    }

    auto& c = result.classifier;
    c.names = names;
    c.resolution = images.size(2);
    c.width = o.width;
    c.hidden = o.hidden;
    c.net = AttributeClassifier(n_a, c.resolution, o.width, o.hidden);
    init_weights(*c.net, o.seed);

    torch::optim::Adam opt(c.net->parameters(), torch::optim::AdamOptions(o.learning_rate));
    std::mt19937_64 rng(o.seed);
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    c.net->train();
    for (int64_t epoch = 0; epoch < o.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int64_t i = 0; i < n; i += o.batch_size) {
            auto idx = torch::tensor(std::vector<int64_t>(order.begin() + i, order.begin() + std::min(i + o.batch_size, n)));
            auto x = images.index_select(0, idx);
            auto y = labels.index_select(0, idx).to(torch::kFloat32);
            auto loss = torch::binary_cross_entropy_with_logits(c.net->forward(x), y);
            opt.zero_grad();
            loss.backward();
            opt.step();
        }
    }
    c.net->eval();

    if (heldout_images.defined() && heldout_images.size(0) > 0) {
        auto pred = c.probabilities(heldout_images) > 0.5;
        auto truth = heldout_labels > 0.5;
        auto acc = (pred == truth).to(torch::kFloat64).mean(0);
        for (int64_t k = 0; k < n_a; ++k) result.heldout_accuracy.push_back(acc[k].item<double>());
        result.mean_heldout_accuracy = acc.mean().item<double>();
    }
    return result;
}

void save_classifier(const ClassifierHandle& c, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive a, net;
    c.net->save(net);
    std::string joined;
    for (std::size_t i = 0; i < c.names.size(); ++i) joined += (i ? "," : "") + c.names[i];
    a.write("names", c10::IValue(joined));
    a.write("resolution", c10::IValue(c.resolution));
    a.write("width", c10::IValue(c.width));
    a.write("hidden", c10::IValue(c.hidden));
    a.write("net", net);
    a.save_to(path.string());
}

ClassifierHandle load_classifier(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error(fmt::format("classifier checkpoint {} not found", path.string()));
    torch::serialize::InputArchive a, net;
    a.load_from(path.string());
    auto get = [&](const char* key) {
        c10::IValue v;
        a.read(key, v);
        return v;
    };
    ClassifierHandle c;
    std::stringstream ss(get("names").toStringRef());
    for (std::string item; std::getline(ss, item, ',');) c.names.push_back(item);
    c.resolution = get("resolution").toInt();
    c.width = get("width").toInt();
    c.hidden = get("hidden").toInt();
    c.net = AttributeClassifier(static_cast<int64_t>(c.names.size()), c.resolution, c.width, c.hidden);
    a.read("net", net);
    c.net->load(net);
    c.net->eval();
    return c;
}

// ----------------------------------------------------------------------------
// Edit accuracy
// ----------------------------------------------------------------------------

EditAccuracy edit_accuracy(const Translator& translate, const torch::Tensor& images, const torch::Tensor& labels,
                           const ProbabilityFn& classify, const AttributeSchema& schema, int64_t batch_size) {
    if (images.size(0) == 0) throw ContractViolation("edit_accuracy: empty test set");
    if (labels.size(0) != images.size(0) || labels.size(1) != schema.size())
        throw ContractViolation("edit_accuracy: labels must be [N, n_a]");
    torch::NoGradGuard no_grad;
    EditAccuracy r;
    const auto n = images.size(0);
    for (int64_t k = 0; k < schema.size(); ++k) {
        int64_t correct = 0;
        for (int64_t i = 0; i < n; i += batch_size) {
            auto x = images.slice(0, i, std::min(i + batch_size, n));
            auto y = labels.slice(0, i, std::min(i + batch_size, n));
            auto y_trg = reverse_attribute(y, k, schema);
            auto p = classify(translate(x, label_diff(y, y_trg)));
            correct += ((p.select(1, k) > 0.5) == (y_trg.select(1, k) > 0.5)).sum().item<int64_t>();
        }
        r.per_attribute.push_back(static_cast<double>(correct) / static_cast<double>(n));
    }
    r.mean = std::accumulate(r.per_attribute.begin(), r.per_attribute.end(), 0.0) /
             static_cast<double>(r.per_attribute.size());
    return r;
}

// ----------------------------------------------------------------------------
// Inception score
// ----------------------------------------------------------------------------

torch::Tensor class_distribution(const torch::Tensor& logits) { return torch::softmax(logits.to(torch::kFloat64), 1); }

InceptionScore inception_score(const torch::Tensor& probs, int64_t n_splits, std::optional<uint64_t> shuffle_seed) {
    if (probs.dim() != 2) throw ContractViolation("inception_score: expected [N, K] probabilities");
    if (n_splits < 1) throw ContractViolation("inception_score: need at least one split");
    const auto n = probs.size(0);
    if (n < n_splits)
        throw ContractViolation(fmt::format("inception_score: {} images for {} splits", n, n_splits));
    auto p = probs.to(torch::kFloat64).contiguous();
    if (shuffle_seed) {
        std::vector<int64_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(*shuffle_seed);
        std::shuffle(perm.begin(), perm.end(), rng);
        p = p.index_select(0, torch::tensor(perm));
    }
    std::vector<double> scores;
    for (int64_t s = 0; s < n_splits; ++s) {
        // balanced contiguous chunks: sizes differ by at most one
        const auto lo = s * n / n_splits, hi = (s + 1) * n / n_splits;
        auto part = p.slice(0, lo, hi);
        auto marginal = part.mean(0, true);
        auto kl = torch::where(part > 0, part * (part.log() - marginal.log()), torch::zeros_like(part)).sum(1);
        scores.push_back(std::exp(kl.mean().item<double>()));
    }
    InceptionScore r;
    r.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    double var = 0;
    for (double v : scores) var += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(var / static_cast<double>(scores.size()));
    return r;
}

// ----------------------------------------------------------------------------
// Frechet distance
// ----------------------------------------------------------------------------

namespace {

torch::Tensor covariance(const torch::Tensor& x, const torch::Tensor& mu) {
    auto c = x - mu;
    return c.t().mm(c) / static_cast<double>(x.size(0) - 1);
}

// Square root of a symmetric PSD matrix via its eigendecomposition.
torch::Tensor sqrt_psd(const torch::Tensor& m) {
    auto [values, vectors] = torch::linalg_eigh(m);
    return vectors.mm(torch::diag(values.clamp_min(0).sqrt())).mm(vectors.t());
}

bool near_singular(const torch::Tensor& cov) {
    auto eig = torch::linalg_eigvalsh(cov);
    const double lo = eig.min().item<double>();
    const double hi = std::max(eig.max().item<double>(), 1e-300);
    return lo <= 1e-10 * hi;
}

}  // namespace

double frechet_distance(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.dim() != 2 || b.dim() != 2) throw ContractViolation("frechet_distance: expected [N, D] embeddings");
    if (a.size(1) != b.size(1))
        throw ContractViolation(fmt::format("frechet_distance: dimension mismatch {} vs {}", a.size(1), b.size(1)));
    if (a.size(0) < 2 || b.size(0) < 2) throw ContractViolation("frechet_distance: need at least 2 samples per set");
    auto xa = a.to(torch::kFloat64), xb = b.to(torch::kFloat64);
    auto mu_a = xa.mean(0, true), mu_b = xb.mean(0, true);
    auto ca = covariance(xa, mu_a), cb = covariance(xb, mu_b);
    if (near_singular(ca) || near_singular(cb)) {
        auto jitter = torch::eye(ca.size(0), ca.options()) * 1e-6;
        ca = ca + jitter;
        cb = cb + jitter;
    }
    // Tr (Sa Sb)^(1/2) = Tr (Sa^(1/2) Sb Sa^(1/2))^(1/2); the inner matrix is symmetric PSD.
    auto ra = sqrt_psd(ca);
    auto inner = ra.mm(cb).mm(ra);
    inner = (inner + inner.t()) / 2;
    const double tr_sqrt = torch::linalg_eigvalsh(inner).clamp_min(0).sqrt().sum().item<double>();
    const double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
    const double fd = mean_term + ca.trace().item<double>() + cb.trace().item<double>() - 2 * tr_sqrt;
    if (!std::isfinite(fd)) throw std::runtime_error("frechet_distance: non-finite result");
    return std::max(fd, 0.0);
}

// ----------------------------------------------------------------------------
// Embedders and the per-attribute distance protocol
// ----------------------------------------------------------------------------

torch::Tensor Embedder::embed(const torch::Tensor& images) const {
    torch::NoGradGuard no_grad;
    auto e = fn_(images);
    if (e.dim() != 2 || e.size(1) != dim_) throw ContractViolation("embedder produced wrong shape");
    return e;
}

Embedder classifier_embedder(const ClassifierHandle& classifier) {
    return Embedder("classifier", classifier.hidden,
                    [classifier](const torch::Tensor& x) { return classifier.features(x); });
}

Embedder random_embedder(int64_t dim, uint64_t seed) {
    auto net = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, 16, 4).stride(2).padding(1)), nn::ReLU(),
                              nn::Conv2d(nn::Conv2dOptions(16, 32, 4).stride(2).padding(1)), nn::ReLU(),
                              nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions({2, 2})), nn::Flatten(),
                              nn::Linear(128, dim));
    init_weights(*net, seed);
    net->eval();
    return Embedder("random", dim, [net](const torch::Tensor& x) mutable {
        return batched(x, 256, [&](const torch::Tensor& b) { return net->forward(b); });
    });
}

SsfidResult ssfid_protocol(const Translator& translate, const torch::Tensor& images, const torch::Tensor& labels,
                           const Embedder& embedder, const AttributeSchema& schema, int64_t batch_size) {
    torch::NoGradGuard no_grad;
    SsfidResult r;
    auto real = embedder.embed(images);
    for (int64_t k = 0; k < schema.size(); ++k) {
        std::vector<torch::Tensor> fake;
        for (int64_t i = 0; i < images.size(0); i += batch_size) {
            auto x = images.slice(0, i, std::min(i + batch_size, images.size(0)));
            auto y = labels.slice(0, i, std::min(i + batch_size, images.size(0)));
            fake.push_back(embedder.embed(translate(x, label_diff(y, reverse_attribute(y, k, schema)))));
        }
        r.per_attribute.push_back(frechet_distance(real, torch::cat(fake)));
    }
    r.mean = std::accumulate(r.per_attribute.begin(), r.per_attribute.end(), 0.0) /
             static_cast<double>(r.per_attribute.size());
    return r;
}

EvaluationResult evaluate_translator(const Translator& translate, const torch::Tensor& images,
                                     const torch::Tensor& labels, const ClassifierHandle& classifier,
                                     const Embedder& embedder, const AttributeSchema& schema,
                                     const EvaluationOptions& o) {
    if (images.size(0) == 0) throw ContractViolation("evaluation: empty test set");
    if (labels.size(0) != images.size(0) || labels.size(1) != schema.size())
        throw ContractViolation("evaluation: labels must be [N, n_a]");
    torch::NoGradGuard no_grad;
    EvaluationResult r;
    r.attributes = schema.names;
    const auto n = images.size(0);
    auto real = embedder.embed(images);
    std::vector<torch::Tensor> pool;
    for (int64_t k = 0; k < schema.size(); ++k) {
        int64_t correct = 0;
        std::vector<torch::Tensor> fake;
        for (int64_t i = 0; i < n; i += o.batch_size) {
            auto x = images.slice(0, i, std::min(i + o.batch_size, n));
            auto y = labels.slice(0, i, std::min(i + o.batch_size, n));
            auto y_trg = reverse_attribute(y, k, schema);
            auto out = translate(x, label_diff(y, y_trg));
            auto logits = classifier.logits(out, o.batch_size);
            correct += ((torch::sigmoid(logits).select(1, k) > 0.5) == (y_trg.select(1, k) > 0.5)).sum().item<int64_t>();
            pool.push_back(class_distribution(logits));
            fake.push_back(embedder.embed(out));
        }
        r.accuracy.per_attribute.push_back(static_cast<double>(correct) / static_cast<double>(n));
        r.ssfid.per_attribute.push_back(frechet_distance(real, torch::cat(fake)));
    }
    const auto k = static_cast<double>(schema.size());
    r.accuracy.mean = std::accumulate(r.accuracy.per_attribute.begin(), r.accuracy.per_attribute.end(), 0.0) / k;
    r.ssfid.mean = std::accumulate(r.ssfid.per_attribute.begin(), r.ssfid.per_attribute.end(), 0.0) / k;
    r.is = inception_score(torch::cat(pool), o.is_splits, o.seed);
    return r;
}

// ----------------------------------------------------------------------------
// Breakdown table
// ----------------------------------------------------------------------------

AccuracyBreakdown accuracy_breakdown_report(const std::vector<std::pair<std::string, EditAccuracy>>& results,
                                            const std::vector<std::string>& attributes) {
    AccuracyBreakdown b;
    b.attributes = attributes;
    for (const auto& [method, acc] : results) {
        if (acc.per_attribute.size() != attributes.size())
            throw ContractViolation(fmt::format("breakdown: '{}' has {} attributes, expected {}", method,
                                                acc.per_attribute.size(), attributes.size()));
        b.methods.push_back(method);
        b.accuracy.push_back(acc.per_attribute);
        b.means.push_back(std::accumulate(acc.per_attribute.begin(), acc.per_attribute.end(), 0.0) /
                          static_cast<double>(attributes.size()));
    }
    return b;
}

std::string AccuracyBreakdown::to_tsv() const {
    std::string out = "method";
    for (const auto& a : attributes) out += "\t" + a;
    out += "\tmean\n";
    for (std::size_t m = 0; m < methods.size(); ++m) {
        out += methods[m];
        for (double v : accuracy[m]) out += fmt::format("\t{:.6f}", v);
        out += fmt::format("\t{:.6f}\n", means[m]);
    }
    return out;
}

}  // namespace secgan
