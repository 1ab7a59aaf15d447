#include "secgan/losses.hpp"

#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "secgan/domain.hpp"

namespace secgan {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
    if (a.sizes() != b.sizes())
        throw ContractViolation(fmt::format("{}: shape mismatch [{}] vs [{}]", op,
                                            fmt::join(a.sizes(), ","), fmt::join(b.sizes(), ",")));
}

void require_finite(double v, const char* name) {
    if (!std::isfinite(v)) throw TrainingDivergence(fmt::format("non-finite loss term {}", name));
}

}  // namespace

void LossWeights::validate() const {
    if (lambda_cls < 0 || lambda_rec < 0 || lambda_gp < 0 || lambda_sc < 0)
        throw ContractViolation("loss weights must be non-negative");
}

torch::Tensor adv_loss_d(const torch::Tensor& real_adv, const torch::Tensor& fake_adv,
                         const torch::Tensor& gradient_penalty, double lambda_gp) {
    return fake_adv.mean() - real_adv.mean() + gradient_penalty * lambda_gp;
}

torch::Tensor adv_loss_g(const torch::Tensor& fake_adv) { return -fake_adv.mean(); }

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& x_in,
                               const torch::Tensor& x_out, const torch::Tensor& u) {
    require_same_shape(x_in, x_out, "gradient_penalty");
    if (u.dim() != 1 || u.size(0) != x_in.size(0))
        throw ContractViolation("gradient_penalty: need one interpolation weight per example");

    std::vector<int64_t> bshape(x_in.dim(), 1);
    bshape[0] = x_in.size(0);
    auto w = u.to(x_in.dtype()).view(bshape);
    auto x_hat = (w * x_in.detach() + (1 - w) * x_out.detach()).requires_grad_(true);

    auto out = critic(x_hat);
    if (!out.requires_grad())
        throw ContractViolation("gradient_penalty: critic output is not differentiable");
    auto grad = torch::autograd::grad({out}, {x_hat}, {torch::ones_like(out)},
                                      /*retain_graph=*/true, /*create_graph=*/true)[0];
    auto norm = grad.reshape({grad.size(0), -1}).norm(2, 1);
    return (norm - 1).pow(2).mean();
}

torch::Tensor sample_interpolation_weights(int64_t batch, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    auto u = torch::empty({batch});
    auto acc = u.accessor<float, 1>();
    for (int64_t b = 0; b < batch; ++b) acc[b] = static_cast<float>(uniform(rng));
    return u;
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& x_in,
                               const torch::Tensor& x_out, std::mt19937_64& rng) {
    return gradient_penalty(critic, x_in, x_out, sample_interpolation_weights(x_in.size(0), rng));
}

torch::Tensor cls_loss(const torch::Tensor& probabilities, const torch::Tensor& targets,
                       ClsLossForm form) {
    require_same_shape(probabilities, targets, "cls_loss");
    auto p = probabilities.clamp(kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
    auto y = targets.to(p.dtype());
    torch::Tensor per_attr;
    if (form == ClsLossForm::BinaryCrossEntropy) {
        per_attr = y * p.log() + (1 - y) * (1 - p).log();
    } else {
        per_attr = y * p.log() + (1 - y) * (1 - p.log());
    }
    return -per_attr.sum(-1).mean();
}

torch::Tensor rec_loss_rgb(const torch::Tensor& x_in, const torch::Tensor& x_rec) {
    require_same_shape(x_in, x_rec, "rec_loss_rgb");
    return (x_in - x_rec).abs().mean();
}

torch::Tensor mask_cross_entropy(const torch::Tensor& target, const torch::Tensor& probabilities) {
    require_same_shape(target, probabilities, "mask_cross_entropy");
    if (target.dim() != 4) throw ContractViolation("mask_cross_entropy: expected [B,C,H,W]");
    auto logp = probabilities.clamp_min(kProbabilityEpsilon).log();
    // sum over channels, mean over pixels, mean over batch
    return -(target * logp).sum(1).mean();
}

torch::Tensor rec_loss_seg(const torch::Tensor& s_in, const torch::Tensor& s_rec) {
    return mask_cross_entropy(s_in, s_rec);
}

torch::Tensor sc_loss_rgb(const torch::Tensor& s_out_onehot, const torch::Tensor& parsed) {
    return mask_cross_entropy(s_out_onehot.detach(), parsed);
}

torch::Tensor sc_loss_seg(const torch::Tensor& parsed_onehot, const torch::Tensor& s_out_soft) {
    return mask_cross_entropy(parsed_onehot.detach(), s_out_soft);
}

LossTotals total_losses(const BranchLossParts& rgb, const BranchLossParts& seg,
                        const LossWeights& w) {
    for (const auto* parts : {&rgb, &seg}) {
        require_finite(parts->adv_d, "adv_d");
        require_finite(parts->cls_d, "cls_d");
        require_finite(parts->adv_g, "adv_g");
        require_finite(parts->cls_g, "cls_g");
        require_finite(parts->rec, "rec");
        require_finite(parts->sc, "sc");
    }
    LossTotals t;
    t.d_rgb = discriminator_total(rgb.adv_d, rgb.cls_d, w);
    t.g_rgb = generator_total(rgb.adv_g, rgb.cls_g, rgb.rec, rgb.sc, w);
    t.d_seg = discriminator_total(seg.adv_d, seg.cls_d, w);
    t.g_seg = generator_total(seg.adv_g, seg.cls_g, seg.rec, seg.sc, w);
    return t;
}

}  // namespace secgan
