#include "support/doctest_torch.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "secgan/losses.hpp"
#include "secgan/training.hpp"
#include "support/fixtures.hpp"

using namespace secgan;
using doctest::Approx;

namespace {

bool same_parameters(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!torch::equal(a[i], b[i])) return false;
    return true;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("linear schedule anchors") {
    auto c = ExperimentConfig::defaults_for(Backbone::StarGAN);
    c.iterations = 200000;
    CHECK(lr_schedule(c, 0).g == Approx(1e-4));
    CHECK(lr_schedule(c, 100000).g == Approx(1e-4));
    CHECK(lr_schedule(c, 150000).g == Approx(5e-5));
    CHECK(lr_schedule(c, 150000).d == Approx(5e-5));
    CHECK(lr_schedule(c, 200000).g == 0.0);
    CHECK_THROWS_AS(lr_schedule(c, 200001), ContractViolation);
    CHECK_THROWS_AS(lr_schedule(c, -1), ContractViolation);
}

TEST_CASE("exponential and constant schedules") {
    auto c = ExperimentConfig::defaults_for(Backbone::AttGAN);
    c.iterations = 1000;
    CHECK(lr_schedule(c, 500).g == Approx(2e-4));
    CHECK(lr_schedule(c, 1000).g == Approx(c.lr_floor));
    CHECK(lr_schedule(c, 750).g == Approx(std::sqrt(2e-4 * c.lr_floor)));
    c.lr_schedule = ScheduleKind::Constant;
    CHECK(lr_schedule(c, 1000).g == Approx(2e-4));
}

TEST_CASE("property: linear schedule is non-increasing") {
    auto c = fixture::tiny_config();
    c.iterations = 97;
    double prev = lr_schedule(c, 0).g;
    for (int64_t t = 1; t <= c.iterations; ++t) {
        const double now = lr_schedule(c, t).g;
        CHECK(now <= prev);
        prev = now;
    }
}

TEST_CASE("update counts follow the critic ratio and the parser stays fixed") {
    auto data = fixture::tiny_data();
    auto c = fixture::tiny_config();
    c.iterations = 100;
    Trainer t(c, data, fixture::tiny_parser());
    const auto hash = t.parser().parameter_hash();
    int64_t last = 0;
    for (int64_t i = 0; i < c.iterations; ++i) {
        auto r = t.iterate();
        CHECK(r.step == last + 1);
        CHECK(r.g_rgb.has_value() == (r.step % 5 == 0));
        last = r.step;
    }
    CHECK(t.rgb().d_updates() == 100);
    CHECK(t.seg().d_updates() == 100);
    CHECK(t.rgb().g_updates() == 20);
    CHECK(t.seg().g_updates() == 20);
    CHECK(t.parser().parameter_hash() == hash);
    CHECK_THROWS_AS(t.iterate(), ContractViolation);
}

TEST_CASE("consistency terms do not leak gradient across branches") {
    auto data = fixture::tiny_data();
    Trainer t(fixture::tiny_config(), data, fixture::tiny_parser());
    BatchSampler sampler(data, data.indices(Split::Train), 4, TargetSampling{}, 1);
    auto batch = sampler.next();
    auto fr = t.rgb().g_forward(batch.x, batch.y_diff);
    auto fs = t.seg().g_forward(t.semantic_input(batch.x), batch.y_diff);
    auto parsed = parse(t.parser(), fr.out);
    auto sc_rgb = sc_loss_rgb(to_one_hot(fs.out), parsed);
    auto sc_seg = sc_loss_seg(to_one_hot(parsed), fs.out);

    auto g_rgb = t.rgb().generator().parameters(), g_seg = t.seg().generator().parameters();
    auto grads = torch::autograd::grad({sc_rgb}, g_seg, {}, true, false, true);
    for (const auto& g : grads) CHECK((!g.defined() || g.abs().max().item<double>() == 0.0));
    grads = torch::autograd::grad({sc_rgb}, g_rgb, {}, true, false, true);
    double total = 0;
    for (const auto& g : grads) total += g.defined() ? g.abs().sum().item<double>() : 0.0;
    CHECK(total > 0);
    grads = torch::autograd::grad({sc_seg}, g_rgb, {}, true, false, true);
    for (const auto& g : grads) CHECK((!g.defined() || g.abs().max().item<double>() == 0.0));
}

TEST_CASE("zero coupling equals two independent baseline branches") {
    auto data = fixture::tiny_data();
    auto c = fixture::tiny_config(4);
    c.weights.lambda_sc = 0;
    Trainer coupled(c, data, fixture::tiny_parser());
    Branch rgb(Modality::Rgb, c), seg(Modality::Seg, c);
    BatchSampler sampler(data, data.indices(Split::Train), c.batch_size, TargetSampling{}, 77);
    const auto& w = c.weights;
    for (int64_t step = 1; step <= 10; ++step) {
        auto batch = sampler.next();
        auto r = coupled.train_step_d(batch);
        auto s_in = coupled.semantic_input(batch.x);
        rgb.d_step(batch.x, batch.y_src, batch.y_diff, w, c.cls_loss_form, r.lr.d);
        seg.d_step(s_in, batch.y_src, batch.y_diff, w, c.cls_loss_form, r.lr.d);
        if (step % c.n_critic == 0) {
            coupled.train_step_g(batch, r);
            rgb.g_step(rgb.g_forward(batch.x, batch.y_diff), batch.x, batch.y_trg, {}, w, c.cls_loss_form, r.lr.g);
            seg.g_step(seg.g_forward(s_in, batch.y_diff), s_in, batch.y_trg, {}, w, c.cls_loss_form, r.lr.g);
        }
    }
    CHECK(same_parameters(coupled.rgb().generator().parameters(), rgb.generator().parameters()));
    CHECK(same_parameters(coupled.seg().generator().parameters(), seg.generator().parameters()));
    CHECK(same_parameters(coupled.rgb().discriminator().parameters(), rgb.discriminator().parameters()));
    CHECK(same_parameters(coupled.seg().discriminator().parameters(), seg.discriminator().parameters()));
}

TEST_CASE("zero coupling leaves the image branch identical to an image-only run") {
    auto data = fixture::tiny_data();
    auto c = fixture::tiny_config(5);
    c.weights.lambda_sc = 0;
    Trainer coupled(c, data, fixture::tiny_parser());
    auto solo_cfg = c;
    solo_cfg.semantic_branch = false;
    Trainer solo(solo_cfg, data, fixture::tiny_parser());
    for (int i = 0; i < 10; ++i) {
        auto a = coupled.iterate(), b = solo.iterate();
        CHECK(a.d_rgb.total == b.d_rgb.total);
        CHECK(a.d_batch_hash == b.d_batch_hash);
    }
    CHECK(same_parameters(coupled.rgb().generator().parameters(), solo.rgb().generator().parameters()));
    CHECK(solo.seg().d_updates() == 0);
}

TEST_CASE("coupling changes the image generator update") {
    auto data = fixture::tiny_data();
    auto c = fixture::tiny_config(5);
    auto off = c;
    off.weights.lambda_sc = 0;
    Trainer a(c, data, fixture::tiny_parser()), b(off, data, fixture::tiny_parser());
    for (int i = 0; i < 5; ++i) {
        a.iterate();
        b.iterate();
    }
    CHECK_FALSE(same_parameters(a.rgb().generator().parameters(), b.rgb().generator().parameters()));
}

TEST_CASE("sampler state restores the exact batch stream") {
    auto data = fixture::tiny_data(10);
    BatchSampler a(data, data.indices(Split::Train), 3, TargetSampling{}, 9);
    for (int i = 0; i < 4; ++i) a.next();  // crosses an epoch boundary (3 batches per epoch)
    BatchSampler b(data, data.indices(Split::Train), 3, TargetSampling{}, 123);
    b.restore(a.state());
    for (int i = 0; i < 5; ++i) {
        auto x = a.next(), y = b.next();
        CHECK(torch::equal(x.x, y.x));
        CHECK(torch::equal(x.y_trg, y.y_trg));
    }
    CHECK_THROWS(BatchSampler(data, data.indices(Split::Train), 11, TargetSampling{}, 0));
}

TEST_CASE("same config and seed produce identical logs, resume matches the uninterrupted run") {
    auto data = fixture::tiny_data();
    auto root = fixture::scratch("training_repro");
    auto c = fixture::tiny_config(6);
    c.iterations = 20;
    c.checkpoint_every = 1000;  // longer than the run: only the stop point is saved
    auto run = [&](const std::string& name, RunOptions opts) {
        auto cfg = c;
        cfg.run_dir = (root / name).string();
        return run_training(cfg, data, fixture::tiny_parser(), opts);
    };
    auto a = run("a", {});
    auto b = run("b", {});
    CHECK(a.completed);
    CHECK(slurp(a.log_path) == slurp(b.log_path));

    RunOptions first;
    first.stop_after = 7;
    auto partial = run("c", first);
    CHECK_FALSE(partial.completed);
    CHECK(partial.steps == 7);
    REQUIRE(latest_checkpoint(root / "c").has_value());
    RunOptions again;
    again.resume = true;
    auto resumed = run("c", again);
    CHECK(resumed.completed);
    CHECK(slurp(resumed.log_path) == slurp(a.log_path));
    CHECK(std::filesystem::exists(root / "c" / "g_rgb.pt"));
    CHECK(std::filesystem::exists(root / "c" / "g_seg.pt"));
    std::filesystem::remove_all(root);
}

TEST_CASE("checkpoints refuse a different parser or config") {
    auto data = fixture::tiny_data();
    auto root = fixture::scratch("training_ckpt");
    auto c = fixture::tiny_config(7);
    Trainer t(c, data, fixture::tiny_parser());
    t.iterate();
    t.save_checkpoint(root / "x.pt");
    Trainer other_parser(c, data, fixture::tiny_parser(99));
    CHECK_THROWS_AS(other_parser.load_checkpoint(root / "x.pt"), ContractViolation);
    auto changed = c;
    changed.weights.lambda_sc = 0.5;
    Trainer other_config(changed, data, fixture::tiny_parser());
    CHECK_THROWS_AS(other_config.load_checkpoint(root / "x.pt"), ContractViolation);
    auto longer = c;
    longer.iterations = 50;
    Trainer ok(longer, data, fixture::tiny_parser());
    ok.load_checkpoint(root / "x.pt");
    CHECK(ok.step() == 1);
    std::filesystem::remove_all(root);
}

TEST_CASE("log rows and column reader agree") {
    auto data = fixture::tiny_data();
    auto root = fixture::scratch("training_log");
    auto c = fixture::tiny_config(8);
    c.iterations = 10;
    c.run_dir = root.string();
    std::vector<StepRecord> seen;
    RunOptions opts;
    opts.on_step = [&](const StepRecord& r) { seen.push_back(r); };
    auto res = run_training(c, data, fixture::tiny_parser(), opts);
    auto col = read_log_column(res.log_path, "g_rgb_sc");
    REQUIRE(col.size() == 2);
    CHECK(col[0].first == 5);
    CHECK(col[1].second == Approx(seen[9].g_rgb->sc).epsilon(1e-8));
    CHECK(read_log_column(res.log_path, "d_seg_total").size() == 10);
    CHECK_THROWS(read_log_column(res.log_path, "nope"));
    std::filesystem::remove_all(root);
}

TEST_CASE("trainer rejects mismatched inputs") {
    auto data = fixture::tiny_data();
    auto c = fixture::tiny_config();
    c.resolution = 32;
    CHECK_THROWS(Trainer(c, data, fixture::tiny_parser()));
    c = fixture::tiny_config();
    c.attributes = {"Black_Hair"};
    CHECK_THROWS(Trainer(c, data, fixture::tiny_parser()));
}

}
