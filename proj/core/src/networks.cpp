#include "secgan/networks.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <cmath>

#include <fmt/format.h>

#include "secgan/domain.hpp"

namespace secgan {

namespace nn = torch::nn;

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ContractViolation(what);
}

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride, int64_t pad, bool bias) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(bias));
}

nn::ConvTranspose2d deconv(int64_t in, int64_t out, bool bias) {
    return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1).bias(bias));
}

nn::InstanceNorm2d instance_norm(int64_t c) {
    return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(c).affine(true).track_running_stats(false));
}

torch::Tensor broadcast_label(const torch::Tensor& y, int64_t h, int64_t w) {
    return y.view({y.size(0), y.size(1), 1, 1}).expand({y.size(0), y.size(1), h, w});
}

torch::Tensor output_activation(const torch::Tensor& x, Modality m) {
    return m == Modality::Rgb ? torch::tanh(x) : torch::softmax(x, 1);
}

// ----------------------------------------------------------------------------
// StarGAN-style translator
// ----------------------------------------------------------------------------

class ResidualBlockImpl : public nn::Module {
public:
    explicit ResidualBlockImpl(int64_t c) {
        body = register_module("body", nn::Sequential(conv(c, c, 3, 1, 1, false), instance_norm(c),
                                                      nn::ReLU(nn::ReLUOptions(true)),
                                                      conv(c, c, 3, 1, 1, false), instance_norm(c)));
    }
    torch::Tensor forward(const torch::Tensor& x) { return x + body->forward(x); }

    nn::Sequential body{nullptr};
};
TORCH_MODULE(ResidualBlock);

class StarGanGenerator final : public GeneratorNetImpl {
public:
    explicit StarGanGenerator(const NetworkSpec& s) : modality_(s.modality) {
        const int64_t c = modality_channels(s.modality);
        int64_t w = s.width;
        nn::Sequential body;
        body->push_back(conv(c + s.n_attrs, w, 7, 1, 3, false));
        body->push_back(instance_norm(w));
        body->push_back(nn::ReLU(nn::ReLUOptions(true)));
        for (int i = 0; i < 2; ++i) {
            body->push_back(conv(w, w * 2, 4, 2, 1, false));
            body->push_back(instance_norm(w * 2));
            body->push_back(nn::ReLU(nn::ReLUOptions(true)));
            w *= 2;
        }
        for (int64_t i = 0; i < s.n_res; ++i) body->push_back(ResidualBlock(w));
        for (int i = 0; i < 2; ++i) {
            body->push_back(deconv(w, w / 2, false));
            body->push_back(instance_norm(w / 2));
            body->push_back(nn::ReLU(nn::ReLUOptions(true)));
            w /= 2;
        }
        body->push_back(conv(w, c, 7, 1, 3, false));
        main = register_module("main", body);
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& y_diff) override {
        auto y = broadcast_label(y_diff.to(x.dtype()), x.size(2), x.size(3));
        return output_activation(main->forward(torch::cat({x, y}, 1)), modality_);
    }

private:
    Modality modality_;
    nn::Sequential main{nullptr};
};

class StarGanDiscriminator final : public DiscriminatorNetImpl {
public:
    explicit StarGanDiscriminator(const NetworkSpec& s) {
        const int64_t layers = s.effective_d_layers();
        int64_t w = s.width;
        nn::Sequential body;
        body->push_back(conv(modality_channels(s.modality), w, 4, 2, 1, true));
        body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(s.lrelu_slope)));
        for (int64_t i = 1; i < layers; ++i) {
            body->push_back(conv(w, w * 2, 4, 2, 1, true));
            body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(s.lrelu_slope)));
            w *= 2;
        }
        const int64_t k = s.resolution >> layers;
        main = register_module("main", body);
        adv_head = register_module("adv", conv(w, 1, 3, 1, 1, false));
        cls_head = register_module("cls", conv(w, s.n_attrs, k, 1, 0, false));
    }

    DiscriminatorOutput forward(const torch::Tensor& x) override {
        auto h = main->forward(x);
        auto cls = cls_head->forward(h);
        return {adv_head->forward(h), torch::sigmoid(cls.view({cls.size(0), cls.size(1)}))};
    }

private:
    nn::Sequential main{nullptr};
    nn::Conv2d adv_head{nullptr};
    nn::Conv2d cls_head{nullptr};
};

// ----------------------------------------------------------------------------
// AttGAN-style encoder / decoder
// ----------------------------------------------------------------------------

std::vector<int64_t> encoder_widths(const NetworkSpec& s, int64_t layers) {
    std::vector<int64_t> widths;
    for (int64_t i = 0; i < layers; ++i) widths.push_back(std::min(s.width << i, s.max_width));
    return widths;
}

class AttGanGenerator final : public GeneratorNetImpl {
public:
    explicit AttGanGenerator(const NetworkSpec& s) : modality_(s.modality) {
        const int64_t layers = s.enc_layers;
        const auto e = encoder_widths(s, layers);
        int64_t in = modality_channels(s.modality);
        for (int64_t i = 0; i < layers; ++i) {
            enc.push_back(register_module(
                fmt::format("enc{}", i),
                nn::Sequential(conv(in, e[i], 4, 2, 1, false), nn::BatchNorm2d(e[i]),
                               nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(s.lrelu_slope)))));
            in = e[i];
        }
        // Decoder: label injected at the bottleneck, then the single skip
        // (encoder layer L-2 output) plus the label again one scale up.
        auto block = [](int64_t cin, int64_t cout) {
            return nn::Sequential(deconv(cin, cout, false), nn::BatchNorm2d(cout),
                                  nn::ReLU(nn::ReLUOptions(true)));
        };
        const auto last = layers - 1;
        dec.push_back(register_module("dec0", block(e[last] + s.n_attrs, e[last])));
        dec.push_back(register_module("dec1", block(e[last] + e[last - 1] + s.n_attrs, e[last - 1])));
        for (int64_t j = 2; j < layers - 1; ++j)
            dec.push_back(register_module(fmt::format("dec{}", j), block(e[layers - j], e[layers - 1 - j])));
        out_layer = register_module("out", deconv(e[1], modality_channels(s.modality), true));
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& y_diff) override {
        const auto y = y_diff.to(x.dtype());
        std::vector<torch::Tensor> feats;
        auto h = x;
        for (auto& layer : enc) {
            h = layer->forward(h);
            feats.push_back(h);
        }
        h = dec[0]->forward(torch::cat({h, broadcast_label(y, h.size(2), h.size(3))}, 1));
        const auto& skip = feats[feats.size() - 2];
        h = dec[1]->forward(torch::cat({h, skip, broadcast_label(y, h.size(2), h.size(3))}, 1));
        for (std::size_t j = 2; j < dec.size(); ++j) h = dec[j]->forward(h);
        return output_activation(out_layer->forward(h), modality_);
    }

private:
    Modality modality_;
    std::vector<nn::Sequential> enc;
    std::vector<nn::Sequential> dec;
    nn::ConvTranspose2d out_layer{nullptr};
};

class AttGanDiscriminator final : public DiscriminatorNetImpl {
public:
    explicit AttGanDiscriminator(const NetworkSpec& s) {
        const int64_t layers = s.effective_d_layers();
        const auto e = encoder_widths(s, layers);
        nn::Sequential body;
        int64_t in = modality_channels(s.modality);
        for (int64_t i = 0; i < layers; ++i) {
            body->push_back(conv(in, e[i], 4, 2, 1, true));
            body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(s.lrelu_slope)));
            in = e[i];
        }
        const int64_t side = s.resolution >> layers;
        const int64_t flat = in * side * side;
        main = register_module("main", body);
        adv_head = register_module(
            "adv", nn::Sequential(nn::Linear(flat, s.fc_dim), nn::ReLU(nn::ReLUOptions(true)),
                                  nn::Linear(s.fc_dim, 1)));
        cls_head = register_module(
            "cls", nn::Sequential(nn::Linear(flat, s.fc_dim), nn::ReLU(nn::ReLUOptions(true)),
                                  nn::Linear(s.fc_dim, s.n_attrs)));
    }

    DiscriminatorOutput forward(const torch::Tensor& x) override {
        auto h = main->forward(x).flatten(1);
        return {adv_head->forward(h), torch::sigmoid(cls_head->forward(h))};
    }

private:
    nn::Sequential main{nullptr};
    nn::Sequential adv_head{nullptr};
    nn::Sequential cls_head{nullptr};
};

void check_input(const NetworkSpec& s, const torch::Tensor& x, const char* what) {
    require(x.dim() == 4, fmt::format("{}: expected [B,C,H,W] input", what));
    require(x.size(1) == modality_channels(s.modality),
            fmt::format("{}: {} network expects {} channels, got {}", what, to_string(s.modality),
                        modality_channels(s.modality), x.size(1)));
    require(x.size(2) == s.resolution && x.size(3) == s.resolution,
            fmt::format("{}: expected {}x{} input, got {}x{}", what, s.resolution, s.resolution,
                        x.size(2), x.size(3)));
}

}  // namespace

// ----------------------------------------------------------------------------

std::string to_string(Backbone b) { return b == Backbone::StarGAN ? "stargan" : "attgan"; }
std::string to_string(Modality m) { return m == Modality::Rgb ? "rgb" : "seg"; }
std::string to_string(Role r) { return r == Role::Generator ? "generator" : "discriminator"; }

Backbone parse_backbone(const std::string& s) {
    if (s == "stargan") return Backbone::StarGAN;
    if (s == "attgan") return Backbone::AttGAN;
    throw ContractViolation(fmt::format("unknown backbone '{}' (expected stargan|attgan)", s));
}

Modality parse_modality(const std::string& s) {
    if (s == "rgb") return Modality::Rgb;
    if (s == "seg") return Modality::Seg;
    throw ContractViolation(fmt::format("unknown modality '{}' (expected rgb|seg)", s));
}

int64_t modality_channels(Modality m) { return m == Modality::Rgb ? 3 : kNumSegments; }

int64_t NetworkSpec::effective_d_layers() const {
    if (d_layers > 0) return d_layers;
    return backbone == Backbone::StarGAN ? 6 : 5;
}

void NetworkSpec::validate() const {
    require(n_attrs >= 1, "network: n_attrs must be >= 1");
    require(width >= 1 && resolution >= 1, "network: width and resolution must be positive");
    if (role == Role::Generator) {
        if (backbone == Backbone::StarGAN) {
            require(resolution % 4 == 0,
                    fmt::format("stargan generator: resolution {} not divisible by 4", resolution));
            require(n_res >= 0, "stargan generator: n_res must be >= 0");
        } else {
            require(enc_layers >= 3, "attgan generator: needs at least 3 encoder layers");
            const int64_t div = int64_t{1} << enc_layers;
            require(resolution % div == 0,
                    fmt::format("attgan generator: resolution {} not divisible by {}", resolution, div));
        }
    } else {
        const int64_t layers = effective_d_layers();
        const int64_t div = int64_t{1} << layers;
        require(resolution % div == 0,
                fmt::format("{} discriminator: resolution {} not divisible by {}", to_string(backbone),
                            resolution, div));
    }
}

Generator::Generator(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.role = Role::Generator;
    spec_.validate();
    if (spec_.backbone == Backbone::StarGAN)
        net_ = std::make_shared<StarGanGenerator>(spec_);
    else
        net_ = std::make_shared<AttGanGenerator>(spec_);
    init_weights(*net_, spec_.seed);
}

int64_t Generator::parameter_count() const { return count_parameters(*net_); }

torch::Tensor Generator::forward(const torch::Tensor& x, const torch::Tensor& y_diff) const {
    check_input(spec_, x, "generator_forward");
    require(y_diff.dim() == 2 && y_diff.size(0) == x.size(0) && y_diff.size(1) == spec_.n_attrs,
            fmt::format("generator_forward: y_diff must be [{}, {}]", x.size(0), spec_.n_attrs));
    return net_->forward(x, y_diff);
}

Discriminator::Discriminator(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.role = Role::Discriminator;
    spec_.validate();
    if (spec_.backbone == Backbone::StarGAN)
        net_ = std::make_shared<StarGanDiscriminator>(spec_);
    else
        net_ = std::make_shared<AttGanDiscriminator>(spec_);
    init_weights(*net_, spec_.seed);
}

int64_t Discriminator::parameter_count() const { return count_parameters(*net_); }

DiscriminatorOutput Discriminator::forward(const torch::Tensor& x) const {
    check_input(spec_, x, "discriminator_forward");
    return net_->forward(x);
}

Generator build_generator(Backbone backbone, Modality modality, int64_t n_attrs, int64_t resolution) {
    NetworkSpec s;
    s.backbone = backbone;
    s.modality = modality;
    s.n_attrs = n_attrs;
    s.resolution = resolution;
    return Generator(s);
}

Generator build_generator(NetworkSpec spec) { return Generator(std::move(spec)); }

Discriminator build_discriminator(Backbone backbone, Modality modality, int64_t n_attrs,
                                  int64_t resolution) {
    NetworkSpec s;
    s.backbone = backbone;
    s.modality = modality;
    s.n_attrs = n_attrs;
    s.resolution = resolution;
    return Discriminator(s);
}

Discriminator build_discriminator(NetworkSpec spec) { return Discriminator(std::move(spec)); }

torch::Tensor generator_forward(const Generator& g, const torch::Tensor& x,
                                const torch::Tensor& y_diff) {
    return g.forward(x, y_diff);
}

DiscriminatorOutput discriminator_forward(const Discriminator& d, const torch::Tensor& x) {
    return d.forward(x);
}

int64_t count_parameters(const torch::nn::Module& m) {
    int64_t n = 0;
    for (const auto& p : m.parameters())
        if (p.requires_grad()) n += p.numel();
    return n;
}

void init_weights(torch::nn::Module& m, uint64_t seed) {
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    for (auto& item : m.named_parameters()) {
        auto& p = item.value();
        const auto& name = item.key();
        const bool is_weight = name.size() >= 6 && name.compare(name.size() - 6, 6, "weight") == 0;
        if (is_weight && p.dim() >= 2) {
            const auto fan_in = p.numel() / p.size(0);
            p.normal_(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)), gen);
        } else if (!is_weight) {
            p.zero_();
        }
        // 1-D weights belong to normalisation layers and keep their unit init.
    }
}

// ----------------------------------------------------------------------------
// Checkpoints
// ----------------------------------------------------------------------------

void write_spec(torch::serialize::OutputArchive& a, const NetworkSpec& s) {
    a.write("spec_backbone", c10::IValue(to_string(s.backbone)));
    a.write("spec_modality", c10::IValue(to_string(s.modality)));
    a.write("spec_role", c10::IValue(to_string(s.role)));
    a.write("spec_n_attrs", c10::IValue(s.n_attrs));
    a.write("spec_resolution", c10::IValue(s.resolution));
    a.write("spec_width", c10::IValue(s.width));
    a.write("spec_max_width", c10::IValue(s.max_width));
    a.write("spec_n_res", c10::IValue(s.n_res));
    a.write("spec_d_layers", c10::IValue(s.d_layers));
    a.write("spec_enc_layers", c10::IValue(s.enc_layers));
    a.write("spec_fc_dim", c10::IValue(s.fc_dim));
    a.write("spec_lrelu_slope", c10::IValue(s.lrelu_slope));
    a.write("spec_seed", c10::IValue(static_cast<int64_t>(s.seed)));
    a.write("spec_taxonomy_hash", c10::IValue(static_cast<int64_t>(taxonomy_hash())));
}

NetworkSpec read_spec(torch::serialize::InputArchive& a) {
    auto get = [&a](const char* key) {
        c10::IValue v;
        a.read(key, v);
        return v;
    };
    if (static_cast<uint64_t>(get("spec_taxonomy_hash").toInt()) != taxonomy_hash())
        throw ContractViolation("checkpoint was written with a different segment taxonomy");
    NetworkSpec s;
    s.backbone = parse_backbone(get("spec_backbone").toStringRef());
    s.modality = parse_modality(get("spec_modality").toStringRef());
    s.role = get("spec_role").toStringRef() == "generator" ? Role::Generator : Role::Discriminator;
    s.n_attrs = get("spec_n_attrs").toInt();
    s.resolution = get("spec_resolution").toInt();
    s.width = get("spec_width").toInt();
    s.max_width = get("spec_max_width").toInt();
    s.n_res = get("spec_n_res").toInt();
    s.d_layers = get("spec_d_layers").toInt();
    s.enc_layers = get("spec_enc_layers").toInt();
    s.fc_dim = get("spec_fc_dim").toInt();
    s.lrelu_slope = get("spec_lrelu_slope").toDouble();
    s.seed = static_cast<uint64_t>(get("spec_seed").toInt());
    return s;
}

namespace {

template <typename Net>
void save_network(const Net& net, const std::filesystem::path& path) {
    torch::serialize::OutputArchive archive;
    write_spec(archive, net.spec());
    torch::serialize::OutputArchive params;
    const_cast<Net&>(net).module().save(params);
    archive.write("net", params);
    archive.save_to(path.string());
}

template <typename Net>
Net load_network(const std::filesystem::path& path, Role expected) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error(fmt::format("checkpoint not found: {}", path.string()));
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    auto spec = read_spec(archive);
    require(spec.role == expected, fmt::format("{}: checkpoint holds a {}", path.string(),
                                               to_string(spec.role)));
    Net net(spec);
    torch::serialize::InputArchive params;
    archive.read("net", params);
    net.module().load(params);
    return net;
}

}  // namespace

void save_generator(const Generator& g, const std::filesystem::path& path) { save_network(g, path); }
void save_discriminator(const Discriminator& d, const std::filesystem::path& path) {
    save_network(d, path);
}
Generator load_generator(const std::filesystem::path& path) {
    return load_network<Generator>(path, Role::Generator);
}
Discriminator load_discriminator(const std::filesystem::path& path) {
    return load_network<Discriminator>(path, Role::Discriminator);
}

void copy_state(const torch::nn::Module& src, torch::nn::Module& dst) {
    torch::NoGradGuard no_grad;
    auto from = src.named_parameters();
    for (auto& item : dst.named_parameters()) item.value().copy_(from[item.key()]);
    auto from_buffers = src.named_buffers();
    for (auto& item : dst.named_buffers()) item.value().copy_(from_buffers[item.key()]);
}

}  // namespace secgan
