#include "secgan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "secgan/domain.hpp"
#include "secgan/image_io.hpp"
#include "secgan/losses.hpp"

namespace secgan {

namespace fs = std::filesystem;

namespace {

uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

void set_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

std::unique_ptr<torch::optim::Adam> make_adam(const std::vector<torch::Tensor>& params,
                                              const ExperimentConfig& c, double lr) {
    return std::make_unique<torch::optim::Adam>(
        params, torch::optim::AdamOptions(lr)
                    .betas({c.beta1, c.beta2})
                    .eps(c.adam_eps)
                    .weight_decay(c.weight_decay));
}

double checked(const torch::Tensor& t, const char* what) {
    const double v = t.item<double>();
    if (!std::isfinite(v)) throw TrainingDivergence(fmt::format("non-finite {} loss ({})", what, v));
    return v;
}

// Critic parameters are switched off while a generator step back-propagates
// through the critic, so no gradient is accumulated into them.
class FreezeParameters {
public:
    explicit FreezeParameters(std::vector<torch::Tensor> params) : params_(std::move(params)) {
        for (auto& p : params_) p.requires_grad_(false);
    }
    ~FreezeParameters() {
        for (auto& p : params_) p.requires_grad_(true);
    }
    FreezeParameters(const FreezeParameters&) = delete;
    FreezeParameters& operator=(const FreezeParameters&) = delete;

private:
    std::vector<torch::Tensor> params_;
};

std::string rng_state(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void restore_rng(std::mt19937_64& rng, const std::string& state) {
    std::istringstream is(state);
    is >> rng;
    if (!is) throw std::runtime_error("corrupt RNG state in checkpoint");
}

void write_string(torch::serialize::OutputArchive& a, const std::string& key, const std::string& v) {
    a.write(key, c10::IValue(v));
}

std::string read_string(torch::serialize::InputArchive& a, const std::string& key) {
    c10::IValue v;
    a.read(key, v);
    return v.toStringRef();
}

int64_t read_int(torch::serialize::InputArchive& a, const std::string& key) {
    c10::IValue v;
    a.read(key, v);
    return v.toInt();
}

}  // namespace

// ----------------------------------------------------------------------------
// Learning-rate schedule
// ----------------------------------------------------------------------------

LearningRates lr_schedule(const ExperimentConfig& c, int64_t t) {
    const int64_t total = c.iterations;
    if (t < 0 || t > total)
        throw ContractViolation(fmt::format("lr_schedule: step {} outside [0, {}]", t, total));
    const double start = c.lr_decay_start * static_cast<double>(total);
    const double tt = static_cast<double>(t);
    auto rate = [&](double eta0) {
        if (c.lr_schedule == ScheduleKind::Constant || tt <= start) return eta0;
        const double span = static_cast<double>(total) - start;
        if (c.lr_schedule == ScheduleKind::Linear) return eta0 * (1.0 - (tt - start) / span);
        // eta0 * r^(t - start) with r chosen so the rate reaches lr_floor at t = total
        return eta0 * std::pow(c.lr_floor / eta0, (tt - start) / span);
    };
    return {rate(c.lr_g), rate(c.lr_d)};
}

// ----------------------------------------------------------------------------
// Branch
// ----------------------------------------------------------------------------

Branch::Branch(Modality modality, const ExperimentConfig& config)
    : modality_(modality),
      gen_(build_generator(config.network_spec(modality, Role::Generator))),
      disc_(build_discriminator(config.network_spec(modality, Role::Discriminator))),
      g_opt_(make_adam(gen_.parameters(), config, config.lr_g)),
      d_opt_(make_adam(disc_.parameters(), config, config.lr_d)),
      gp_rng_(splitmix(config.seed * 2 + (modality == Modality::Seg ? 1 : 0))) {}

CriticRecord Branch::d_step(const torch::Tensor& real, const torch::Tensor& y_src, const torch::Tensor& y_diff,
                            const LossWeights& w, ClsLossForm form, double lr) {
    torch::Tensor fake;
    {
        torch::NoGradGuard no_grad;
        fake = gen_.forward(real, y_diff);
    }
    auto out_real = disc_.forward(real);
    auto out_fake = disc_.forward(fake);
    auto gp = gradient_penalty([this](const torch::Tensor& x) { return disc_.forward(x).adv; }, real, fake,
                               gp_rng_);
    auto adv = adv_loss_d(out_real.adv, out_fake.adv, gp, w.lambda_gp);
    auto cls = cls_loss(out_real.cls, y_src, form);
    auto total = discriminator_total(adv, cls, w);

    CriticRecord r;
    r.adv = checked(adv, "critic adversarial");
    r.gp = gp.item<double>();
    r.cls = checked(cls, "critic classification");
    r.total = checked(total, "critic total");

    set_lr(*d_opt_, lr);
    d_opt_->zero_grad();
    total.backward();
    d_opt_->step();
    ++d_updates_;
    return r;
}

Branch::Forward Branch::g_forward(const torch::Tensor& real, const torch::Tensor& y_diff) const {
    Forward f;
    f.out = gen_.forward(real, y_diff);
    f.rec = gen_.forward(real, torch::zeros_like(y_diff));
    return f;
}

GeneratorRecord Branch::g_step(const Forward& fwd, const torch::Tensor& real, const torch::Tensor& y_trg,
                               const torch::Tensor& sc, const LossWeights& w, ClsLossForm form, double lr) {
    FreezeParameters frozen(disc_.parameters());
    auto out = disc_.forward(fwd.out);
    auto adv = adv_loss_g(out.adv);
    auto cls = cls_loss(out.cls, y_trg, form);
    auto rec = modality_ == Modality::Rgb ? rec_loss_rgb(real, fwd.rec) : rec_loss_seg(real, fwd.rec);
    const bool coupled = sc.defined() && w.lambda_sc > 0;
    auto sc_term = coupled ? sc : torch::zeros({}, adv.options());
    auto total = generator_total(adv, cls, rec, sc_term, w);

    GeneratorRecord r;
    r.adv = checked(adv, "generator adversarial");
    r.cls = checked(cls, "generator classification");
    r.rec = checked(rec, "reconstruction");
    r.sc = sc.defined() ? checked(sc, "consistency") : 0.0;
    r.total = checked(total, "generator total");

    set_lr(*g_opt_, lr);
    g_opt_->zero_grad();
    total.backward();
    g_opt_->step();
    ++g_updates_;
    return r;
}

void Branch::save(torch::serialize::OutputArchive& a) const {
    torch::serialize::OutputArchive g, d, go, dop;
    gen_.module().save(g);
    disc_.module().save(d);
    g_opt_->save(go);
    d_opt_->save(dop);
    a.write("generator", g);
    a.write("discriminator", d);
    a.write("g_optimizer", go);
    a.write("d_optimizer", dop);
    write_string(a, "gp_rng", rng_state(gp_rng_));
    a.write("d_updates", c10::IValue(d_updates_));
    a.write("g_updates", c10::IValue(g_updates_));
}

void Branch::load(torch::serialize::InputArchive& a) {
    torch::serialize::InputArchive g, d, go, dop;
    a.read("generator", g);
    a.read("discriminator", d);
    a.read("g_optimizer", go);
    a.read("d_optimizer", dop);
    gen_.module().load(g);
    disc_.module().load(d);
    g_opt_->load(go);
    d_opt_->load(dop);
    restore_rng(gp_rng_, read_string(a, "gp_rng"));
    d_updates_ = read_int(a, "d_updates");
    g_updates_ = read_int(a, "g_updates");
}

// ----------------------------------------------------------------------------
// Batches
// ----------------------------------------------------------------------------

uint64_t batch_hash(const torch::Tensor& x, const torch::Tensor& y) {
    uint64_t h = 1469598103934665603ULL;
    for (const auto* t : {&x, &y}) {
        auto c = t->detach().contiguous();
        const auto* p = static_cast<const unsigned char*>(c.data_ptr());
        const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

BatchSampler::BatchSampler(const AttributeDataset& data, std::vector<int64_t> indices, int64_t batch_size,
                           TargetSampling sampling, uint64_t seed)
    : data_(&data), indices_(std::move(indices)), batch_size_(batch_size), sampling_(sampling), rng_(seed) {
    if (batch_size_ < 1) throw ContractViolation("batch size must be at least 1");
    if (static_cast<int64_t>(indices_.size()) < batch_size_)
        throw ContractViolation(fmt::format("training split has {} records, fewer than batch size {}",
                                            indices_.size(), batch_size_));
    cursor_ = indices_.size();  // forces a shuffle on the first draw
}

Batch BatchSampler::next() {
    if (cursor_ + static_cast<std::size_t>(batch_size_) > order_.size()) {
        order_ = indices_;
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
    }
    std::span<const int64_t> idx(order_.data() + cursor_, static_cast<std::size_t>(batch_size_));
    cursor_ += static_cast<std::size_t>(batch_size_);
    Batch b;
    b.x = data_->load_images(idx);
    b.y_src = data_->labels(idx);
    b.y_trg = sample_target_labels(b.y_src, sampling_, data_->schema, rng_);
    b.y_diff = label_diff(b.y_src, b.y_trg);
    return b;
}

std::string BatchSampler::state() const {
    std::ostringstream os;
    os << cursor_ << ' ' << order_.size();
    for (auto i : order_) os << ' ' << i;
    os << '\n' << rng_;
    return os.str();
}

void BatchSampler::restore(const std::string& state) {
    std::istringstream is(state);
    std::size_t n = 0;
    is >> cursor_ >> n;
    order_.resize(n);
    for (auto& i : order_) is >> i;
    is >> rng_;
    if (!is) throw std::runtime_error("corrupt sampler state in checkpoint");
}

// ----------------------------------------------------------------------------
// Trainer
// ----------------------------------------------------------------------------

namespace {

std::vector<int64_t> training_indices(const AttributeDataset& data) {
    auto idx = data.indices(Split::Train);
    if (idx.empty()) throw ContractViolation("dataset has no training records");
    return idx;
}

}  // namespace

Trainer::Trainer(ExperimentConfig config, const AttributeDataset& data, ParserHandle parser)
    : config_(std::move(config)),
      data_(&data),
      parser_(std::move(parser)),
      parser_hash_(0),
      rgb_(Modality::Rgb, config_),
      seg_(Modality::Seg, config_),
      sampler_(data, training_indices(data), config_.batch_size, TargetSampling::parse(config_.target_sampling),
               splitmix(config_.seed ^ 0xDA7AULL)) {
    config_.validate();
    if (data.schema.size() != config_.n_attrs())
        throw ContractViolation(fmt::format("dataset has {} attributes, config lists {}", data.schema.size(),
                                            config_.n_attrs()));
    if (data.resolution != config_.resolution)
        throw ContractViolation(fmt::format("dataset resolution {} differs from config resolution {}",
                                            data.resolution, config_.resolution));
    if (parser_.resolution() != config_.resolution)
        throw ContractViolation(fmt::format("parser resolution {} differs from config resolution {}",
                                            parser_.resolution(), config_.resolution));
    parser_.freeze();
    parser_hash_ = parser_.parameter_hash();
}

torch::Tensor Trainer::semantic_input(const torch::Tensor& x) const {
    torch::NoGradGuard no_grad;
    return to_one_hot(parse(parser_, x));
}

StepRecord Trainer::train_step_d(const Batch& batch) {
    StepRecord r;
    r.step = step_ + 1;
    r.lr = lr_schedule(config_, std::min(step_, config_.iterations));
    r.d_batch_hash = batch_hash(batch.x, batch.y_src);
    r.d_rgb = rgb_.d_step(batch.x, batch.y_src, batch.y_diff, config_.weights, config_.cls_loss_form, r.lr.d);
    if (config_.semantic_branch) {
        auto s_in = semantic_input(batch.x);
        r.d_seg = seg_.d_step(s_in, batch.y_src, batch.y_diff, config_.weights, config_.cls_loss_form, r.lr.d);
    }
    return r;
}

void Trainer::train_step_g(const Batch& batch, StepRecord& r) {
    const auto& w = config_.weights;
    r.g_batch_hash = batch_hash(batch.x, batch.y_src);
    auto fr = rgb_.g_forward(batch.x, batch.y_diff);
    if (!config_.semantic_branch) {
        r.g_rgb = rgb_.g_step(fr, batch.x, batch.y_trg, {}, w, config_.cls_loss_form, r.lr.g);
        return;
    }
    auto s_in = semantic_input(batch.x);
    auto fs = seg_.g_forward(s_in, batch.y_diff);

    // With lambda_sc = 0 the parse is taken off the graph; the terms are still logged.
    torch::Tensor parsed;
    if (w.lambda_sc > 0) {
        parsed = parse(parser_, fr.out);
    } else {
        torch::NoGradGuard no_grad;
        parsed = parse(parser_, fr.out);
    }
    auto sc_rgb = sc_loss_rgb(to_one_hot(fs.out), parsed);
    auto sc_seg = sc_loss_seg(to_one_hot(parsed), fs.out);

    r.g_rgb = rgb_.g_step(fr, batch.x, batch.y_trg, sc_rgb, w, config_.cls_loss_form, r.lr.g);
    r.g_seg = seg_.g_step(fs, s_in, batch.y_trg, sc_seg, w, config_.cls_loss_form, r.lr.g);
}

StepRecord Trainer::iterate() {
    if (step_ >= config_.iterations) throw ContractViolation("training already complete");
    auto batch = sampler_.next();
    auto r = train_step_d(batch);
    ++step_;
    if (step_ % config_.n_critic == 0) train_step_g(batch, r);
    if (parser_.parameter_hash() != parser_hash_)
        throw std::logic_error("parser parameters changed during training");
    return r;
}

void Trainer::save_checkpoint(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    torch::serialize::OutputArchive a;
    a.write("step", c10::IValue(step_));
    write_string(a, "config", to_text(config_));
    write_string(a, "sampler", sampler_.state());
    a.write("parser_hash", c10::IValue(static_cast<int64_t>(parser_hash_)));
    torch::serialize::OutputArchive rgb, seg;
    rgb_.save(rgb);
    a.write("rgb", rgb);
    if (config_.semantic_branch) {
        seg_.save(seg);
        a.write("seg", seg);
    }
    // write-then-rename so an interrupted save never leaves a torn checkpoint
    auto tmp = path;
    tmp += ".tmp";
    a.save_to(tmp.string());
    fs::rename(tmp, path);
}

void Trainer::load_checkpoint(const fs::path& path) {
    torch::serialize::InputArchive a;
    a.load_from(path.string());
    const auto saved_config = read_string(a, "config");
    if (saved_config != to_text(config_)) {
        // iterations and checkpoint cadence may change on resume; nothing else
        auto saved = config_from_key_values(parse_key_values(saved_config));
        saved.iterations = config_.iterations;
        saved.checkpoint_every = config_.checkpoint_every;
        saved.sample_every = config_.sample_every;
        saved.run_dir = config_.run_dir;
        if (to_text(saved) != to_text(config_))
            throw ContractViolation(fmt::format("{}: checkpoint was written under a different config", path.string()));
    }
    if (static_cast<uint64_t>(read_int(a, "parser_hash")) != parser_hash_)
        throw ContractViolation(fmt::format("{}: checkpoint was trained with a different parser", path.string()));
    step_ = read_int(a, "step");
    sampler_.restore(read_string(a, "sampler"));
    torch::serialize::InputArchive rgb, seg;
    a.read("rgb", rgb);
    rgb_.load(rgb);
    if (config_.semantic_branch) {
        a.read("seg", seg);
        seg_.load(seg);
    }
}

// ----------------------------------------------------------------------------
// Logging
// ----------------------------------------------------------------------------

std::string log_header() {
    return "step,lr_g,lr_d,"
           "d_rgb_adv,d_rgb_gp,d_rgb_cls,d_rgb_total,"
           "d_seg_adv,d_seg_gp,d_seg_cls,d_seg_total,"
           "g_rgb_adv,g_rgb_cls,g_rgb_rec,g_rgb_sc,g_rgb_total,"
           "g_seg_adv,g_seg_cls,g_seg_rec,g_seg_sc,g_seg_total,"
           "batch_hash";
}

std::string log_row(const StepRecord& r) {
    auto g = [](const std::optional<GeneratorRecord>& rec) {
        if (!rec) return std::string(",,,,");
        return fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}", rec->adv, rec->cls, rec->rec, rec->sc, rec->total);
    };
    return fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{},{},{:016x}", r.step,
                       r.lr.g, r.lr.d, r.d_rgb.adv, r.d_rgb.gp, r.d_rgb.cls, r.d_rgb.total, r.d_seg.adv, r.d_seg.gp,
                       r.d_seg.cls, r.d_seg.total, g(r.g_rgb), g(r.g_seg), r.d_batch_hash);
}

std::vector<std::pair<int64_t, double>> read_log_column(const fs::path& log, const std::string& column) {
    std::ifstream in(log);
    if (!in) throw std::runtime_error(fmt::format("cannot open log {}", log.string()));
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
        if (!line.empty() && line.back() == ',') out.emplace_back();
        return out;
    };
    std::string line;
    std::getline(in, line);
    auto header = split(line);
    auto it = std::find(header.begin(), header.end(), column);
    if (it == header.end()) throw std::runtime_error(fmt::format("{}: no column '{}'", log.string(), column));
    const auto col = static_cast<std::size_t>(it - header.begin());
    std::vector<std::pair<int64_t, double>> out;
    while (std::getline(in, line)) {
        auto cells = split(line);
        if (cells.size() <= col || cells[col].empty()) continue;
        out.emplace_back(std::stoll(cells[0]), std::stod(cells[col]));
    }
    return out;
}

// ----------------------------------------------------------------------------
// Run loop
// ----------------------------------------------------------------------------

fs::path checkpoint_path(const fs::path& run_dir, int64_t step) {
    return run_dir / "checkpoints" / fmt::format("step_{:08d}.pt", step);
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
    const auto dir = run_dir / "checkpoints";
    if (!fs::exists(dir)) return std::nullopt;
    std::optional<fs::path> best;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("step_", 0) != 0 || e.path().extension() != ".pt") continue;
        if (!best || name > best->filename().string()) best = e.path();
    }
    return best;
}

namespace {

// Keeps rows up to `step` so a resumed run appends without duplicates.
void truncate_log(const fs::path& log, int64_t step) {
    std::ifstream in(log);
    if (!in) return;
    std::vector<std::string> keep;
    std::string line;
    if (std::getline(in, line)) keep.push_back(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (std::stoll(line.substr(0, line.find(','))) <= step) keep.push_back(line);
    }
    in.close();
    std::ofstream out(log, std::ios::trunc);
    for (const auto& l : keep) out << l << '\n';
}

void write_samples(Trainer& trainer, const AttributeDataset& data, const fs::path& path) {
    auto idx = data.indices(Split::Train);
    idx.resize(std::min<std::size_t>(idx.size(), 4));
    auto x = data.load_images(idx);
    auto y = data.labels(idx);
    std::mt19937_64 rng(0);
    auto y_trg = sample_target_labels(y, TargetSampling::parse(trainer.config().target_sampling), data.schema, rng);
    torch::NoGradGuard no_grad;
    auto& g = trainer.rgb().generator();
    g.train(false);
    auto out = g.forward(x, label_diff(y, y_trg));
    g.train(true);
    auto grid = torch::cat({torch::cat(x.unbind(0), 2), torch::cat(out.unbind(0), 2)}, 1);
    write_image(path, grid);
}

}  // namespace

RunResult run_training(const ExperimentConfig& config, const AttributeDataset& data, const ParserHandle& parser,
                       const RunOptions& options) {
    if (config.run_dir.empty()) throw ContractViolation("run_dir is not set");
    const fs::path run_dir = config.run_dir;
    fs::create_directories(run_dir);

    Trainer trainer(config, data, parser);
    RunResult result;
    result.log_path = run_dir / "log.csv";

    if (options.resume) {
        if (auto ckpt = latest_checkpoint(run_dir)) {
            trainer.load_checkpoint(*ckpt);
            truncate_log(result.log_path, trainer.step());
        }
    }
    if (!fs::exists(run_dir / "config.cfg")) {
        std::ofstream snap(run_dir / "config.cfg");
        snap << to_text(config);
    }
    const bool fresh = trainer.step() == 0 || !fs::exists(result.log_path);
    std::ofstream log(result.log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error(fmt::format("cannot write {}", result.log_path.string()));
    if (fresh) log << log_header() << '\n';

    int64_t session = 0;
    while (trainer.step() < config.iterations) {
        if (options.stop_after && session >= *options.stop_after) break;
        StepRecord r;
        try {
            r = trainer.iterate();
        } catch (const TrainingDivergence& e) {
            log.flush();
            const auto snap = run_dir / fmt::format("divergence_step_{:08d}.pt", trainer.step() + 1);
            trainer.save_checkpoint(snap);
            throw TrainingDivergence(fmt::format("{} at step {}; state saved to {}", e.what(), trainer.step() + 1,
                                                 snap.string()));
        }
        ++session;
        log << log_row(r) << '\n';
        if (options.on_step) options.on_step(r);
        const auto t = trainer.step();
        if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0 && t < config.iterations) {
            log.flush();
            trainer.save_checkpoint(checkpoint_path(run_dir, t));
        }
        if (config.sample_every > 0 && t % config.sample_every == 0)
            write_samples(trainer, data, run_dir / "samples" / fmt::format("step_{:08d}.png", t));
    }
    log.flush();
    result.steps = trainer.step();
    result.completed = trainer.step() >= config.iterations;
    if (result.completed) {
        if (config.iterations > 0) trainer.save_checkpoint(checkpoint_path(run_dir, trainer.step()));
        result.product_path = run_dir / "g_rgb.pt";
        save_generator(trainer.rgb().generator(), result.product_path);
        if (config.semantic_branch) save_generator(trainer.seg().generator(), run_dir / "g_seg.pt");
    } else if (config.checkpoint_every > 0 && trainer.step() > 0) {
        // interrupted session: keep a checkpoint at the stopping point
        trainer.save_checkpoint(checkpoint_path(run_dir, trainer.step()));
    }
    return result;
}

}  // namespace secgan
