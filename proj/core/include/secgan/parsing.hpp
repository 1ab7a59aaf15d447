#pragma once

// The fixed parsing network P (RGB image -> soft 12-segment mask) and a
// desk-scale training path for it.

#include <filesystem>
#include <memory>

#include <torch/torch.h>

#include "secgan/domain.hpp"

namespace secgan {

/// Small U-shaped FCN: 3 stride-2 downsampling stages, 3 transposed-conv
/// upsampling stages with skip concatenation, per-pixel softmax head.
class ParserNetImpl : public torch::nn::Module {
public:
    explicit ParserNetImpl(int64_t width);
    torch::Tensor forward(const torch::Tensor& x);  // logits [B,12,H,W]

private:
    torch::nn::Sequential stem{nullptr}, down1{nullptr}, down2{nullptr}, down3{nullptr};
    torch::nn::Sequential up1{nullptr}, up2{nullptr}, up3{nullptr};
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(ParserNet);

class ParserHandle {
public:
    ParserHandle(int64_t resolution, int64_t width, uint64_t seed);

    int64_t resolution() const { return resolution_; }
    int64_t width() const { return width_; }
    bool frozen() const { return frozen_; }

    /// Stops gradient updates to P's parameters (gradients still flow to inputs).
    void freeze();
    void unfreeze();

    ParserNet& net() { return net_; }
    const ParserNet& net() const { return net_; }

    /// FNV-1a hash over the raw parameter bytes.
    uint64_t parameter_hash() const;

private:
    int64_t resolution_;
    int64_t width_;
    bool frozen_ = false;
    ParserNet net_{nullptr};
};

/// Soft mask P(x); differentiable w.r.t. x.
SoftMask parse(const ParserHandle& parser, const ImageBatch& x);
torch::Tensor parse(const ParserHandle& parser, const torch::Tensor& x);

struct ParserTrainingOptions {
    int64_t width = 16;
    int64_t epochs = 8;
    int64_t batch_size = 32;
    double learning_rate = 2e-3;
    uint64_t seed = 0;
};

struct ParserTrainingResult {
    ParserHandle parser;
    double final_loss;  // mean cross-entropy over the last epoch
};

/// Fits a parser on (image, mask) pairs by per-pixel cross-entropy. images are
/// [N,3,H,W] in [-1,1]; masks are [N,H,W] class indices or [N,12,H,W] one-hot.
/// The returned handle is frozen.
ParserTrainingResult train_parser(const torch::Tensor& images, const torch::Tensor& masks,
                                  const ParserTrainingOptions& options);

/// Fraction of pixels whose argmax matches the class-index mask [N,H,W].
double pixel_accuracy(const ParserHandle& parser, const torch::Tensor& images,
                      const torch::Tensor& class_indices, int64_t batch_size = 64);

void save_parser(const ParserHandle& parser, const std::filesystem::path& path);
/// Loads a parser checkpoint; the handle comes back frozen.
ParserHandle load_parser(const std::filesystem::path& path);

}  // namespace secgan
