#pragma once

// Generators and discriminators for both modalities (RGB images, semantic
// masks) on both backbones (StarGAN-style residual translator, AttGAN-style
// encoder/decoder). Widths default to the full-scale layer tables and can be
// narrowed for desk-scale runs.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <torch/torch.h>

namespace secgan {

enum class Backbone { StarGAN, AttGAN };
enum class Modality { Rgb, Seg };
enum class Role { Generator, Discriminator };

std::string to_string(Backbone b);
std::string to_string(Modality m);
std::string to_string(Role r);
Backbone parse_backbone(const std::string& s);
Modality parse_modality(const std::string& s);

/// Image channels of a modality: 3 for RGB, 12 for masks.
int64_t modality_channels(Modality m);

/// Build arguments; together with the seed they determine a network bit-exactly.
struct NetworkSpec {
    Backbone backbone = Backbone::StarGAN;
    Modality modality = Modality::Rgb;
    Role role = Role::Generator;
    int64_t n_attrs = 13;
    int64_t resolution = 128;

    int64_t width = 64;        // channels after the first layer
    int64_t max_width = 1024;  // AttGAN channel cap
    int64_t n_res = 6;         // StarGAN residual blocks
    int64_t d_layers = 0;      // stride-2 discriminator convs; 0 = backbone default (6 / 5)
    int64_t enc_layers = 5;    // AttGAN encoder depth
    int64_t fc_dim = 1024;     // AttGAN discriminator hidden width
    double lrelu_slope = 0.01;
    uint64_t seed = 0;

    int64_t effective_d_layers() const;
    void validate() const;
};

/// Realism and attribute heads. adv is [B,1,h',w'] (StarGAN) or [B,1] (AttGAN);
/// cls holds sigmoid probabilities [B, n_a].
struct DiscriminatorOutput {
    torch::Tensor adv;
    torch::Tensor cls;
};

class GeneratorNetImpl : public torch::nn::Module {
public:
    virtual torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& y_diff) = 0;
};

class DiscriminatorNetImpl : public torch::nn::Module {
public:
    virtual DiscriminatorOutput forward(const torch::Tensor& x) = 0;
};

class Generator {
public:
    explicit Generator(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    GeneratorNetImpl& module() { return *net_; }
    const GeneratorNetImpl& module() const { return *net_; }
    std::vector<torch::Tensor> parameters() const { return net_->parameters(); }
    int64_t parameter_count() const;

    /// x is [B,3,h,h] or [B,12,h,h] per modality; y_diff is [B, n_a].
    /// Returns tanh images in [-1,1] or softmax masks.
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& y_diff) const;

    void train(bool on = true) { net_->train(on); }

private:
    NetworkSpec spec_;
    std::shared_ptr<GeneratorNetImpl> net_;
};

class Discriminator {
public:
    explicit Discriminator(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    DiscriminatorNetImpl& module() { return *net_; }
    const DiscriminatorNetImpl& module() const { return *net_; }
    std::vector<torch::Tensor> parameters() const { return net_->parameters(); }
    int64_t parameter_count() const;

    DiscriminatorOutput forward(const torch::Tensor& x) const;

    void train(bool on = true) { net_->train(on); }

private:
    NetworkSpec spec_;
    std::shared_ptr<DiscriminatorNetImpl> net_;
};

Generator build_generator(Backbone backbone, Modality modality, int64_t n_attrs,
                          int64_t resolution);
Generator build_generator(NetworkSpec spec);
Discriminator build_discriminator(Backbone backbone, Modality modality, int64_t n_attrs,
                                  int64_t resolution);
Discriminator build_discriminator(NetworkSpec spec);

torch::Tensor generator_forward(const Generator& g, const torch::Tensor& x,
                                const torch::Tensor& y_diff);
DiscriminatorOutput discriminator_forward(const Discriminator& d, const torch::Tensor& x);

/// Number of trainable scalars.
int64_t count_parameters(const torch::nn::Module& m);

/// Re-initialise convolution / linear weights with N(0, 2/fan_in), zero biases.
void init_weights(torch::nn::Module& m, uint64_t seed);

// Checkpoint I/O: spec metadata + parameters + buffers.
void write_spec(torch::serialize::OutputArchive& archive, const NetworkSpec& spec);
NetworkSpec read_spec(torch::serialize::InputArchive& archive);
void save_generator(const Generator& g, const std::filesystem::path& path);
void save_discriminator(const Discriminator& d, const std::filesystem::path& path);
Generator load_generator(const std::filesystem::path& path);
Discriminator load_discriminator(const std::filesystem::path& path);

/// Copies every parameter and buffer of `src` into `dst` (same architecture).
void copy_state(const torch::nn::Module& src, torch::nn::Module& dst);

}  // namespace secgan
