#pragma once

// Metric suite: edit accuracy by an external attribute classifier, Inception
// Score over splits, and Frechet distance in a pluggable embedding space.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "secgan/domain.hpp"

namespace secgan {

class AttributeClassifierImpl : public torch::nn::Module {
public:
    AttributeClassifierImpl(int64_t n_attrs, int64_t resolution, int64_t width, int64_t hidden);

    torch::Tensor features(const torch::Tensor& x);  // penultimate activations [B, hidden]
    torch::Tensor forward(const torch::Tensor& x);   // logits [B, n_a]

private:
    torch::nn::Sequential body{nullptr};
    torch::nn::Linear fc{nullptr}, out{nullptr};
};
TORCH_MODULE(AttributeClassifier);

struct ClassifierHandle {
    AttributeClassifier net{nullptr};
    std::vector<std::string> names;
    int64_t resolution = 0;
    int64_t width = 0;
    int64_t hidden = 0;

    /// Per-attribute probabilities in (0,1). Throws on resolution mismatch.
    torch::Tensor probabilities(const torch::Tensor& images, int64_t batch_size = 256) const;
    torch::Tensor logits(const torch::Tensor& images, int64_t batch_size = 256) const;
    torch::Tensor features(const torch::Tensor& images, int64_t batch_size = 256) const;
};

struct ClassifierTrainingOptions {
    int64_t width = 16;
    int64_t hidden = 64;
    int64_t epochs = 10;
    int64_t batch_size = 64;
    double learning_rate = 1e-3;
    uint64_t seed = 0;
};

struct ClassifierTrainingResult {
    ClassifierHandle classifier;
    std::vector<double> heldout_accuracy;  // per attribute, threshold 0.5
    double mean_heldout_accuracy = 0;
    std::vector<std::string> warnings;
};

/// Multi-label classifier trained with binary cross-entropy. Held-out images
/// may be empty, in which case accuracies are left empty.
ClassifierTrainingResult train_attribute_classifier(const torch::Tensor& images, const torch::Tensor& labels,
                                                    const torch::Tensor& heldout_images,
                                                    const torch::Tensor& heldout_labels,
                                                    const std::vector<std::string>& names,
                                                    const ClassifierTrainingOptions& options);

void save_classifier(const ClassifierHandle& c, const std::filesystem::path& path);
ClassifierHandle load_classifier(const std::filesystem::path& path);

/// x, y_diff -> translated images.
using Translator = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;
/// images -> per-attribute probabilities [N, n_a].
using ProbabilityFn = std::function<torch::Tensor(const torch::Tensor&)>;

struct EditAccuracy {
    std::vector<double> per_attribute;
    double mean = 0;
};

/// Reverses each attribute k on every image and scores the fraction whose
/// predicted attribute k (threshold 0.5) equals the target value.
EditAccuracy edit_accuracy(const Translator& translate, const torch::Tensor& images, const torch::Tensor& labels,
                           const ProbabilityFn& classify, const AttributeSchema& schema, int64_t batch_size = 64);

struct InceptionScore {
    double mean = 0;
    double std = 0;
};

/// exp(E_x KL(p(y|x) || p(y))) per split; mean and population std over splits.
/// Rows are split contiguously, after a seeded shuffle when a seed is given.
InceptionScore inception_score(const torch::Tensor& class_probabilities, int64_t n_splits = 10,
                               std::optional<uint64_t> shuffle_seed = std::nullopt);

/// Softmax over classifier logits: the class distribution used by the score.
torch::Tensor class_distribution(const torch::Tensor& logits);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), computed in double.
double frechet_distance(const torch::Tensor& a, const torch::Tensor& b);

/// Deterministic image embedding for the distribution metric.
class Embedder {
public:
    using Fn = std::function<torch::Tensor(const torch::Tensor&)>;
    Embedder(std::string name, int64_t dim, Fn fn) : name_(std::move(name)), dim_(dim), fn_(std::move(fn)) {}

    const std::string& name() const { return name_; }
    int64_t dim() const { return dim_; }
    torch::Tensor embed(const torch::Tensor& images) const;

private:
    std::string name_;
    int64_t dim_;
    Fn fn_;
};

Embedder classifier_embedder(const ClassifierHandle& classifier);
/// Fixed, seeded two-layer random convolutional projection.
Embedder random_embedder(int64_t dim, uint64_t seed);

struct SsfidResult {
    std::vector<double> per_attribute;
    double mean = 0;
};

SsfidResult ssfid_protocol(const Translator& translate, const torch::Tensor& images, const torch::Tensor& labels,
                           const Embedder& embedder, const AttributeSchema& schema, int64_t batch_size = 64);

struct EvaluationOptions {
    int64_t batch_size = 64;
    int64_t is_splits = 10;
    uint64_t seed = 0;
};

struct EvaluationResult {
    std::vector<std::string> attributes;
    EditAccuracy accuracy;
    SsfidResult ssfid;
    InceptionScore is;
};

/// All metrics from one translation pass per attribute.
EvaluationResult evaluate_translator(const Translator& translate, const torch::Tensor& images,
                                     const torch::Tensor& labels, const ClassifierHandle& classifier,
                                     const Embedder& embedder, const AttributeSchema& schema,
                                     const EvaluationOptions& options);

struct AccuracyBreakdown {
    std::vector<std::string> methods;
    std::vector<std::string> attributes;
    std::vector<std::vector<double>> accuracy;  // [method][attribute]
    std::vector<double> means;

    /// Tab-separated: method, one column per attribute, mean.
    std::string to_tsv() const;
};

AccuracyBreakdown accuracy_breakdown_report(const std::vector<std::pair<std::string, EditAccuracy>>& results,
                                            const std::vector<std::string>& attributes);

}  // namespace secgan
