#pragma once

// Core value types shared by every module: the fixed 12-segment taxonomy,
// attribute label algebra, and the image / mask batch wrappers.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace secgan {

/// Raised when a caller breaks an operation's precondition (shape, range, index).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a loss or total becomes NaN/Inf during training.
class TrainingDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------------------
// Segment taxonomy
// ----------------------------------------------------------------------------

inline constexpr int64_t kNumSegments = 12;

enum class Segment : int64_t {
    Skin = 0,
    Eyebrows,
    Eyes,
    Eyeglasses,
    Ears,
    Earrings,
    Nose,
    Mouth,
    Lips,
    Neck,
    Hair,
    Others,
};

/// Segment names in serialization order.
const std::array<std::string_view, kNumSegments>& segment_names();

/// Stable FNV-1a hash of the ordered segment names; stored in checkpoints and
/// mask files so incompatible taxonomies are rejected on load.
uint64_t taxonomy_hash();

// ----------------------------------------------------------------------------
// Batches
// ----------------------------------------------------------------------------

/// RGB images [B, 3, H, W], channel-first, values in [-1, 1].
class ImageBatch {
public:
    ImageBatch() = default;
    /// Checks rank, channel count and square spatial size. Value range is only
    /// checked by validate() since it needs a full pass over the data.
    explicit ImageBatch(torch::Tensor data);

    const torch::Tensor& data() const { return data_; }
    int64_t batch() const { return data_.size(0); }
    int64_t resolution() const { return data_.size(2); }

    /// Full invariant check (range [-1,1]); throws ContractViolation.
    void validate() const;

private:
    torch::Tensor data_;
};

/// Per-pixel probability distribution over the 12 segments, [B, 12, H, W].
class SoftMask {
public:
    SoftMask() = default;
    explicit SoftMask(torch::Tensor data);

    const torch::Tensor& data() const { return data_; }
    int64_t batch() const { return data_.size(0); }
    int64_t resolution() const { return data_.size(2); }

    /// Range [0,1] and per-pixel sum within `tolerance` of 1.
    void validate(double tolerance = 1e-5) const;

private:
    torch::Tensor data_;
};

/// Per-pixel indicator over the 12 segments, [B, 12, H, W], entries in {0,1}.
class OneHotMask {
public:
    OneHotMask() = default;
    explicit OneHotMask(torch::Tensor data);

    const torch::Tensor& data() const { return data_; }
    int64_t batch() const { return data_.size(0); }
    int64_t resolution() const { return data_.size(2); }

    /// Exactly one channel equal to 1 at every pixel.
    void validate() const;

    /// Class-index view [B, H, W] (int64), taxonomy order.
    torch::Tensor class_indices() const;
    static OneHotMask from_class_indices(const torch::Tensor& indices);

private:
    torch::Tensor data_;
};

/// Argmax indicator of a soft mask. Ties go to the lowest channel index and the
/// result is detached from any autograd graph.
OneHotMask to_one_hot(const SoftMask& mask);
torch::Tensor to_one_hot(const torch::Tensor& probabilities);

// ----------------------------------------------------------------------------
// Labels
// ----------------------------------------------------------------------------

/// Binary attribute vector in {0,1}^n.
struct AttributeLabel {
    std::vector<int> values;

    std::size_t size() const { return values.size(); }
    bool operator==(const AttributeLabel&) const = default;
};

/// Signed attribute difference in {-1,0,1}^n.
struct DiffLabel {
    std::vector<int> values;

    std::size_t size() const { return values.size(); }
    bool is_zero() const;
    bool operator==(const DiffLabel&) const = default;
};

/// Attribute names plus mutually exclusive groups (hair colours).
struct AttributeSchema {
    std::vector<std::string> names;
    std::vector<std::vector<int64_t>> exclusive_groups;

    int64_t size() const { return static_cast<int64_t>(names.size()); }
    std::optional<int64_t> index_of(std::string_view name) const;
    /// Group containing attribute k, if any.
    const std::vector<int64_t>* group_of(int64_t k) const;

    /// Schema whose exclusive group is every hair-colour column present.
    static AttributeSchema with_hair_group(std::vector<std::string> names);
};

DiffLabel label_diff(const AttributeLabel& source, const AttributeLabel& target);

/// Flips attribute k. Turning on a member of an exclusive group clears the
/// rest of that group.
AttributeLabel reverse_attribute(const AttributeLabel& label, int64_t k,
                                 const AttributeSchema& schema);

// Batched forms over float tensors [B, n_a].
torch::Tensor label_diff(const torch::Tensor& source, const torch::Tensor& target);
torch::Tensor reverse_attribute(const torch::Tensor& labels, int64_t k,
                                const AttributeSchema& schema);

torch::Tensor to_tensor(const std::vector<AttributeLabel>& labels);
std::vector<AttributeLabel> to_labels(const torch::Tensor& labels);

}  // namespace secgan
