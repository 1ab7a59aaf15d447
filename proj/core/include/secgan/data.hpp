#pragma once

// Attribute-annotated face datasets: CelebA-style annotation ingestion,
// crop/resize preprocessing, target-label sampling, and a procedural toy face
// generator with exact segmentation masks.

#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "secgan/domain.hpp"

namespace secgan {

enum class Split { Train, Val, Test };
std::string to_string(Split s);

struct AttributeRecord {
    std::string filename;
    AttributeLabel label;
    Split split = Split::Train;
};

/// Split assignment in file order: the first `train` records, then `val`,
/// then the rest as test. Counts win over fractions when set.
struct SplitConfig {
    std::optional<int64_t> train_count;
    std::optional<int64_t> val_count;
    double train_fraction = 0.9;
    double val_fraction = 0.0;

    /// 182,000 train / 637 val / rest test.
    static SplitConfig celeba();
};

/// Geometry and colours of one rendered toy face.
struct ToyFace {
    double cx = 16, cy = 17, rx = 10, ry = 12;
    std::array<double, 3> skin{}, background{};
    int hair = -1;  // -1 neutral, 0 black, 1 blond, 2 brown
    bool eyeglasses = false;
    bool mouth_open = false;
    uint64_t noise_seed = 0;
};

struct ToySpec {
    int64_t canvas = 32;
    double p_black_hair = 0.3;
    double p_blond_hair = 0.3;
    double p_brown_hair = 0.3;  // remainder renders neutral hair
    double p_eyeglasses = 0.4;
    double p_mouth_open = 0.5;
    double centre_jitter = 1.5;  // pixels at 32x32, scaled with the canvas
    double noise_std = 3.0;      // per-pixel noise in 8-bit units
    uint64_t seed = 0;

    void validate() const;
};

struct AttributeDataset {
    std::filesystem::path root;
    AttributeSchema schema;
    std::vector<AttributeRecord> records;
    int64_t resolution = 0;
    std::optional<int64_t> crop_size;
    torch::Tensor images;  // optional in-memory cache [N,3,R,R]
    torch::Tensor masks;   // optional class indices [N,R,R]
    std::vector<ToyFace> toy_faces;  // generator parameters, toy data only

    int64_t size() const { return static_cast<int64_t>(records.size()); }
    std::vector<int64_t> indices(Split split) const;
    /// Labels of the given records as a float tensor [n, n_a].
    torch::Tensor labels(std::span<const int64_t> idx) const;
    torch::Tensor all_labels() const;
    /// Images of the given records [n,3,R,R]; cached or loaded from disk.
    torch::Tensor load_images(std::span<const int64_t> idx) const;
    torch::Tensor load_masks(std::span<const int64_t> idx) const;
};

struct LoadOptions {
    std::vector<std::string> selected;  // empty = all columns in file order
    SplitConfig split;
    int64_t resolution = 128;
    std::optional<int64_t> crop_size;   // default: shorter image side
    bool cache_images = true;
    bool load_masks = false;
};

/// The 13 CelebA attributes used for editing, in evaluation order.
const std::vector<std::string>& celeba_selected_attributes();
/// Attribute columns of the toy dataset.
const std::vector<std::string>& toy_attribute_names();

/// Reads `root/attributes.txt` (count line, names line, "file v1 .. vk" rows
/// with v in {-1,1}) and maps labels to {0,1}.
AttributeDataset load_attribute_dataset(const std::filesystem::path& root, const LoadOptions& options);

void assign_splits(AttributeDataset& dataset, const SplitConfig& split);

/// Centre crop to a square (shorter side, or `crop_size`), bilinear resize to
/// `target_resolution`, scale to [-1,1]. Returns [3,R,R].
torch::Tensor preprocess(const cv::Mat& rgb, int64_t target_resolution,
                         std::optional<int64_t> crop_size = std::nullopt);

/// Renders one face: image [3,C,C] in [-1,1] and class-index mask [C,C].
std::pair<torch::Tensor, torch::Tensor> render_toy_face(const ToyFace& face, int64_t canvas,
                                                        double noise_std);
/// Label vector of a toy face over toy_attribute_names().
AttributeLabel toy_label(const ToyFace& face);
/// Face with attributes replaced by `label` (geometry and colours kept).
ToyFace with_label(ToyFace face, const AttributeLabel& label);

AttributeDataset generate_toy_dataset(const ToySpec& spec, int64_t n);

/// Writes images/, masks/ and attributes.txt under `dir`.
void write_dataset(const AttributeDataset& dataset, const std::filesystem::path& dir);

enum class TargetMode { Shuffle, Reverse, RandomExpression };

struct TargetSampling {
    TargetMode mode = TargetMode::Shuffle;
    int64_t attribute = 0;  // used by Reverse

    /// "shuffle", "reverse:<k>", "random-expression".
    static TargetSampling parse(const std::string& text);
};

torch::Tensor sample_target_labels(const torch::Tensor& y_src, const TargetSampling& sampling,
                                   const AttributeSchema& schema, std::mt19937_64& rng);

}  // namespace secgan
