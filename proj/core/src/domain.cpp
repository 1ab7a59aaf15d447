#include "secgan/domain.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace secgan {

namespace {

void require(bool ok, std::string_view what) {
    if (!ok) throw ContractViolation(std::string(what));
}

void check_nchw(const torch::Tensor& t, int64_t channels, std::string_view type) {
    require(t.defined(), fmt::format("{}: undefined tensor", type));
    require(t.dim() == 4, fmt::format("{}: expected rank 4 [B,C,H,W], got rank {}", type, t.dim()));
    require(t.size(0) >= 1, fmt::format("{}: empty batch", type));
    require(t.size(1) == channels,
            fmt::format("{}: expected {} channels, got {}", type, channels, t.size(1)));
    require(t.size(2) == t.size(3),
            fmt::format("{}: expected square images, got {}x{}", type, t.size(2), t.size(3)));
}

constexpr std::array<std::string_view, 4> kHairColours = {"Black_Hair", "Blond_Hair",
                                                          "Brown_Hair", "Gray_Hair"};

}  // namespace

const std::array<std::string_view, kNumSegments>& segment_names() {
    static constexpr std::array<std::string_view, kNumSegments> names = {
        "skin", "eyebrows", "eyes", "eyeglasses", "ears", "earrings",
        "nose", "mouth",    "lips", "neck",       "hair", "others"};
    return names;
}

uint64_t taxonomy_hash() {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (auto name : segment_names()) {
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        h ^= 0xff;
        h *= 0x100000001b3ULL;
    }
    return h;
}

ImageBatch::ImageBatch(torch::Tensor data) : data_(std::move(data)) {
    check_nchw(data_, 3, "ImageBatch");
}

void ImageBatch::validate() const {
    auto lo = data_.min().item<double>();
    auto hi = data_.max().item<double>();
    require(lo >= -1.0 && hi <= 1.0,
            fmt::format("ImageBatch: values outside [-1,1] (min {}, max {})", lo, hi));
}

SoftMask::SoftMask(torch::Tensor data) : data_(std::move(data)) {
    check_nchw(data_, kNumSegments, "SoftMask");
}

void SoftMask::validate(double tolerance) const {
    auto d = data_.detach();
    require(d.min().item<double>() >= 0.0 && d.max().item<double>() <= 1.0,
            "SoftMask: probabilities outside [0,1]");
    auto err = (d.sum(1) - 1.0).abs().max().item<double>();
    require(err <= tolerance,
            fmt::format("SoftMask: per-pixel sums deviate from 1 by {}", err));
}

OneHotMask::OneHotMask(torch::Tensor data) : data_(std::move(data)) {
    check_nchw(data_, kNumSegments, "OneHotMask");
}

void OneHotMask::validate() const {
    auto d = data_.detach();
    require(torch::logical_or(d == 0, d == 1).all().item<bool>(),
            "OneHotMask: entries must be 0 or 1");
    require((d.sum(1) == 1).all().item<bool>(),
            "OneHotMask: every pixel needs exactly one active channel");
}

torch::Tensor OneHotMask::class_indices() const {
    return data_.detach().argmax(1);
}

OneHotMask OneHotMask::from_class_indices(const torch::Tensor& indices) {
    require(indices.dim() == 3, "OneHotMask: class indices must be [B,H,W]");
    auto idx = indices.to(torch::kLong);
    require(idx.min().item<int64_t>() >= 0 && idx.max().item<int64_t>() < kNumSegments,
            "OneHotMask: class index outside taxonomy");
    auto onehot = torch::one_hot(idx, kNumSegments).permute({0, 3, 1, 2});
    return OneHotMask(onehot.to(torch::kFloat32).contiguous());
}

torch::Tensor to_one_hot(const torch::Tensor& probabilities) {
    torch::NoGradGuard no_grad;
    // argmax returns the first maximal index, which is the lowest channel.
    auto idx = probabilities.detach().argmax(1, /*keepdim=*/true);
    return torch::zeros_like(probabilities, probabilities.options().requires_grad(false))
        .scatter_(1, idx, 1.0);
}

OneHotMask to_one_hot(const SoftMask& mask) {
    return OneHotMask(to_one_hot(mask.data()));
}

// ----------------------------------------------------------------------------

bool DiffLabel::is_zero() const {
    return std::all_of(values.begin(), values.end(), [](int v) { return v == 0; });
}

std::optional<int64_t> AttributeSchema::index_of(std::string_view name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<int64_t>(it - names.begin());
}

const std::vector<int64_t>* AttributeSchema::group_of(int64_t k) const {
    for (const auto& g : exclusive_groups) {
        if (std::find(g.begin(), g.end(), k) != g.end()) return &g;
    }
    return nullptr;
}

AttributeSchema AttributeSchema::with_hair_group(std::vector<std::string> names) {
    AttributeSchema schema{std::move(names), {}};
    std::vector<int64_t> hair;
    for (int64_t i = 0; i < schema.size(); ++i) {
        if (std::find(kHairColours.begin(), kHairColours.end(), schema.names[i]) !=
            kHairColours.end())
            hair.push_back(i);
    }
    if (hair.size() > 1) schema.exclusive_groups.push_back(std::move(hair));
    return schema;
}

DiffLabel label_diff(const AttributeLabel& source, const AttributeLabel& target) {
    require(source.size() == target.size(),
            fmt::format("label_diff: length mismatch ({} vs {})", source.size(), target.size()));
    DiffLabel diff;
    diff.values.resize(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        require((source.values[i] == 0 || source.values[i] == 1) &&
                    (target.values[i] == 0 || target.values[i] == 1),
                "label_diff: labels must be binary");
        diff.values[i] = target.values[i] - source.values[i];
    }
    return diff;
}

AttributeLabel reverse_attribute(const AttributeLabel& label, int64_t k,
                                 const AttributeSchema& schema) {
    require(k >= 0 && k < static_cast<int64_t>(label.size()),
            fmt::format("reverse_attribute: index {} out of range [0,{})", k, label.size()));
    AttributeLabel out = label;
    out.values[k] = 1 - out.values[k];
    if (out.values[k] == 1) {
        if (const auto* group = schema.group_of(k)) {
            for (auto j : *group)
                if (j != k) out.values[j] = 0;
        }
    }
    return out;
}

torch::Tensor label_diff(const torch::Tensor& source, const torch::Tensor& target) {
    require(source.sizes() == target.sizes(), "label_diff: shape mismatch");
    return target - source;
}

torch::Tensor reverse_attribute(const torch::Tensor& labels, int64_t k,
                                const AttributeSchema& schema) {
    require(labels.dim() == 2, "reverse_attribute: labels must be [B, n_a]");
    require(k >= 0 && k < labels.size(1),
            fmt::format("reverse_attribute: index {} out of range [0,{})", k, labels.size(1)));
    auto out = labels.clone();
    auto flipped = 1.0 - labels.select(1, k);
    out.select(1, k).copy_(flipped);
    if (const auto* group = schema.group_of(k)) {
        auto on = flipped > 0.5;
        for (auto j : *group) {
            if (j == k) continue;
            auto col = out.select(1, j);
            col.copy_(torch::where(on, torch::zeros_like(col), col));
        }
    }
    return out;
}

torch::Tensor to_tensor(const std::vector<AttributeLabel>& labels) {
    require(!labels.empty(), "to_tensor: empty label list");
    const auto n = static_cast<int64_t>(labels.front().size());
    auto t = torch::zeros({static_cast<int64_t>(labels.size()), n});
    auto acc = t.accessor<float, 2>();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(static_cast<int64_t>(labels[i].size()) == n, "to_tensor: ragged labels");
        for (int64_t k = 0; k < n; ++k) acc[i][k] = static_cast<float>(labels[i].values[k]);
    }
    return t;
}

std::vector<AttributeLabel> to_labels(const torch::Tensor& labels) {
    auto t = labels.detach().to(torch::kFloat32).contiguous();
    auto acc = t.accessor<float, 2>();
    std::vector<AttributeLabel> out(t.size(0));
    for (int64_t i = 0; i < t.size(0); ++i) {
        out[i].values.resize(t.size(1));
        for (int64_t k = 0; k < t.size(1); ++k) out[i].values[k] = acc[i][k] > 0.5f ? 1 : 0;
    }
    return out;
}

}  // namespace secgan
