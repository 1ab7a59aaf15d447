#pragma once

// Loss terms of the two-branch objective as pure functions over tensors.
// All functions return 0-dim tensors so they can be combined and
// back-propagated; the *_value helpers in tests convert to double.

#include <functional>
#include <random>

#include <torch/torch.h>

namespace secgan {

inline constexpr double kProbabilityEpsilon = 1e-7;

struct LossWeights {
    double lambda_cls = 1.0;
    double lambda_rec = 10.0;
    double lambda_gp = 10.0;
    double lambda_sc = 0.01;

    void validate() const;
};

/// How the attribute classification term treats negative labels.
enum class ClsLossForm {
    BinaryCrossEntropy,  // (1-y) log(1-p)
    Literal,             // (1-y)(1 - log p), as typeset; kept for auditing only
};

/// Critic realism head as a function of its input.
using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// WGAN-GP critic loss: mean(fake) - mean(real) + lambda_gp * gp.
torch::Tensor adv_loss_d(const torch::Tensor& real_adv, const torch::Tensor& fake_adv,
                         const torch::Tensor& gradient_penalty, double lambda_gp);

/// Generator adversarial loss: -mean(fake).
torch::Tensor adv_loss_g(const torch::Tensor& fake_adv);

/// Penalty mean_b (||grad_x D(x_b)||_2 - 1)^2 at x = u_b x_in + (1-u_b) x_out.
/// `u` holds one interpolation weight per example, shape [B]. The returned
/// tensor keeps the graph (create_graph) so it can be minimised w.r.t. D.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& x_in,
                               const torch::Tensor& x_out, const torch::Tensor& u);

/// Same, drawing u ~ Uniform[0,1] per example from `rng`.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& x_in,
                               const torch::Tensor& x_out, std::mt19937_64& rng);

/// Per-example interpolation weights in [0,1) drawn from rng.
torch::Tensor sample_interpolation_weights(int64_t batch, std::mt19937_64& rng);

/// Multi-label classification loss, summed over attributes, averaged over batch.
torch::Tensor cls_loss(const torch::Tensor& probabilities, const torch::Tensor& targets,
                       ClsLossForm form = ClsLossForm::BinaryCrossEntropy);

/// Mean absolute error over all elements.
torch::Tensor rec_loss_rgb(const torch::Tensor& x_in, const torch::Tensor& x_rec);

/// Pixel-averaged cross entropy -1/(HW) sum s_in . log s_rec, batch averaged.
torch::Tensor rec_loss_seg(const torch::Tensor& s_in, const torch::Tensor& s_rec);

/// Consistency term for the RGB generator: target is the semantic generator's
/// one-hot output (detached here), prediction is the parsed RGB output.
torch::Tensor sc_loss_rgb(const torch::Tensor& s_out_onehot, const torch::Tensor& parsed);

/// Consistency term for the semantic generator: target is the one-hot parse of
/// the RGB output (detached here), prediction is the soft semantic output.
torch::Tensor sc_loss_seg(const torch::Tensor& parsed_onehot, const torch::Tensor& s_out_soft);

/// Shared cross-entropy kernel of the three mask losses. The target is used as-is.
torch::Tensor mask_cross_entropy(const torch::Tensor& target, const torch::Tensor& probabilities);

// ----------------------------------------------------------------------------
// Totals
// ----------------------------------------------------------------------------

template <typename T>
T discriminator_total(const T& adv, const T& cls, const LossWeights& w) {
    return adv + cls * w.lambda_cls;
}

template <typename T>
T generator_total(const T& adv, const T& cls, const T& rec, const T& sc, const LossWeights& w) {
    return adv + cls * w.lambda_cls + rec * w.lambda_rec + sc * w.lambda_sc;
}

/// Scalar loss parts of one branch. adv_d already includes lambda_gp * gp.
struct BranchLossParts {
    double adv_d = 0, cls_d = 0;
    double adv_g = 0, cls_g = 0, rec = 0, sc = 0;
};

struct LossTotals {
    double d_rgb = 0, g_rgb = 0, d_seg = 0, g_seg = 0;
};

/// All four objectives; throws TrainingDivergence on any non-finite part.
LossTotals total_losses(const BranchLossParts& rgb, const BranchLossParts& seg,
                        const LossWeights& w);

}  // namespace secgan
