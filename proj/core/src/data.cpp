#include "secgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include "secgan/image_io.hpp"

namespace secgan {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::array<double, 3>, 4> kHairPalette = {{
    {150, 150, 150},  // neutral
    {25, 22, 20},     // black
    {230, 200, 110},  // blond
    {110, 65, 35},    // brown
}};
constexpr std::array<double, 3> kGlassesColour = {25, 25, 70};
constexpr std::array<double, 3> kMouthColour = {175, 45, 55};

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

std::runtime_error format_error(const fs::path& file, int64_t line, const std::string& what) {
    return std::runtime_error(fmt::format("{}:{}: {}", file.string(), line, what));
}

}  // namespace

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

SplitConfig SplitConfig::celeba() {
    SplitConfig c;
    c.train_count = 182000;
    c.val_count = 637;
    return c;
}

void ToySpec::validate() const {
    if (canvas < 8) throw ContractViolation("toy: canvas must be at least 8 pixels");
    for (double p : {p_black_hair, p_blond_hair, p_brown_hair, p_eyeglasses, p_mouth_open})
        if (p < 0 || p > 1) throw ContractViolation("toy: probabilities must lie in [0,1]");
    if (p_black_hair + p_blond_hair + p_brown_hair > 1.0 + 1e-12)
        throw ContractViolation("toy: hair colour probabilities sum above 1");
}

const std::vector<std::string>& celeba_selected_attributes() {
    static const std::vector<std::string> names = {
        "Bald",       "Bangs", "Black_Hair",          "Blond_Hair", "Brown_Hair",
        "Bushy_Eyebrows", "Eyeglasses", "Male", "Mouth_Slightly_Open", "Mustache",
        "No_Beard",   "Pale_Skin", "Young"};
    return names;
}

const std::vector<std::string>& toy_attribute_names() {
    static const std::vector<std::string> names = {"Black_Hair", "Blond_Hair", "Brown_Hair",
                                                   "Eyeglasses", "Mouth_Slightly_Open"};
    return names;
}

// ----------------------------------------------------------------------------
// Dataset access
// ----------------------------------------------------------------------------

std::vector<int64_t> AttributeDataset::indices(Split split) const {
    std::vector<int64_t> out;
    for (int64_t i = 0; i < size(); ++i)
        if (records[i].split == split) out.push_back(i);
    return out;
}

torch::Tensor AttributeDataset::labels(std::span<const int64_t> idx) const {
    const auto n_a = schema.size();
    auto t = torch::zeros({static_cast<int64_t>(idx.size()), n_a});
    auto acc = t.accessor<float, 2>();
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (int64_t k = 0; k < n_a; ++k)
            acc[i][k] = static_cast<float>(records.at(idx[i]).label.values[k]);
    return t;
}

torch::Tensor AttributeDataset::all_labels() const {
    std::vector<int64_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), 0);
    return labels(idx);
}

torch::Tensor AttributeDataset::load_images(std::span<const int64_t> idx) const {
    if (images.defined()) {
        auto t = torch::tensor(std::vector<int64_t>(idx.begin(), idx.end()), torch::kLong);
        return images.index_select(0, t);
    }
    std::vector<torch::Tensor> out;
    out.reserve(idx.size());
    for (auto i : idx)
        out.push_back(preprocess(read_image_rgb(root / "images" / records.at(i).filename), resolution, crop_size));
    return torch::stack(out);
}

torch::Tensor AttributeDataset::load_masks(std::span<const int64_t> idx) const {
    if (!masks.defined()) throw ContractViolation("dataset has no ground-truth masks");
    auto t = torch::tensor(std::vector<int64_t>(idx.begin(), idx.end()), torch::kLong);
    return masks.index_select(0, t);
}

// ----------------------------------------------------------------------------
// Ingestion
// ----------------------------------------------------------------------------

AttributeDataset load_attribute_dataset(const fs::path& root, const LoadOptions& options) {
    const auto file = root / "attributes.txt";
    std::ifstream in(file);
    if (!in) throw std::runtime_error(fmt::format("cannot open annotation file {}", file.string()));

    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    if (lines.empty() || std::all_of(lines.begin(), lines.end(), [](const auto& l) {
            return split_ws(l).empty();
        }))
        throw std::runtime_error(fmt::format("{}: annotation file is empty", file.string()));

    // Line 1 is a count (images in CelebA releases); only its form is checked.
    {
        auto tok = split_ws(lines[0]);
        long long count = 0;
        if (tok.size() != 1 || std::sscanf(tok[0].c_str(), "%lld", &count) != 1 || count < 0)
            throw format_error(file, 1, "expected a non-negative count");
    }
    if (lines.size() < 2 || split_ws(lines[1]).empty())
        throw format_error(file, 2, "expected attribute names");
    const auto all_names = split_ws(lines[1]);

    std::vector<std::size_t> columns;
    std::vector<std::string> names;
    if (options.selected.empty()) {
        names = all_names;
        for (std::size_t i = 0; i < all_names.size(); ++i) columns.push_back(i);
    } else {
        for (const auto& want : options.selected) {
            auto it = std::find(all_names.begin(), all_names.end(), want);
            if (it == all_names.end())
                throw std::runtime_error(fmt::format("{}: attribute '{}' not in header", file.string(), want));
            columns.push_back(static_cast<std::size_t>(it - all_names.begin()));
            names.push_back(want);
        }
    }

    AttributeDataset ds;
    ds.root = root;
    ds.schema = AttributeSchema::with_hair_group(names);
    ds.resolution = options.resolution;
    ds.crop_size = options.crop_size;
    for (std::size_t ln = 2; ln < lines.size(); ++ln) {
        auto tok = split_ws(lines[ln]);
        if (tok.empty()) continue;
        const auto lineno = static_cast<int64_t>(ln + 1);
        if (tok.size() != all_names.size() + 1)
            throw format_error(file, lineno, fmt::format("expected filename and {} values, got {} fields",
                                                         all_names.size(), tok.size()));
        AttributeRecord rec;
        rec.filename = tok[0];
        for (auto c : columns) {
            const auto& v = tok[c + 1];
            if (v == "1")
                rec.label.values.push_back(1);
            else if (v == "-1")
                rec.label.values.push_back(0);
            else
                throw format_error(file, lineno, fmt::format("value '{}' is not -1 or 1", v));
        }
        const auto img = root / "images" / rec.filename;
        if (!fs::exists(img)) throw std::runtime_error(fmt::format("missing image file {}", img.string()));
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.empty()) throw std::runtime_error(fmt::format("{}: no records", file.string()));
    assign_splits(ds, options.split);

    if (options.cache_images) {
        std::vector<torch::Tensor> imgs;
        imgs.reserve(ds.records.size());
        for (const auto& r : ds.records)
            imgs.push_back(preprocess(read_image_rgb(root / "images" / r.filename), options.resolution,
                                      options.crop_size));
        ds.images = torch::stack(imgs);
    }
    if (options.load_masks) {
        std::vector<torch::Tensor> ms;
        for (const auto& r : ds.records) {
            auto m = read_mask(root / "masks" / r.filename);
            if (m.size(0) != options.resolution || m.size(1) != options.resolution)
                throw std::runtime_error(fmt::format("mask {} is {}x{}, expected {}x{}", r.filename, m.size(0),
                                                     m.size(1), options.resolution, options.resolution));
            ms.push_back(m);
        }
        ds.masks = torch::stack(ms);
    }
    return ds;
}

void assign_splits(AttributeDataset& ds, const SplitConfig& split) {
    const auto n = ds.size();
    const auto train = std::min<int64_t>(
        n, split.train_count.value_or(static_cast<int64_t>(std::floor(split.train_fraction * n))));
    const auto val = std::min<int64_t>(
        n - train, split.val_count.value_or(static_cast<int64_t>(std::floor(split.val_fraction * n))));
    for (int64_t i = 0; i < n; ++i)
        ds.records[i].split = i < train ? Split::Train : (i < train + val ? Split::Val : Split::Test);
}

torch::Tensor preprocess(const cv::Mat& rgb, int64_t target_resolution, std::optional<int64_t> crop_size) {
    if (rgb.empty()) throw ContractViolation("preprocess: empty image");
    const int64_t crop = crop_size.value_or(std::min(rgb.rows, rgb.cols));
    if (rgb.rows < crop || rgb.cols < crop)
        throw ContractViolation(fmt::format("preprocess: {}x{} image smaller than {} crop", rgb.cols,
                                            rgb.rows, crop));
    const int x0 = static_cast<int>((rgb.cols - crop) / 2);
    const int y0 = static_cast<int>((rgb.rows - crop) / 2);
    cv::Mat square = rgb(cv::Rect(x0, y0, static_cast<int>(crop), static_cast<int>(crop)));
    cv::Mat resized;
    if (crop != target_resolution) {
        cv::resize(square, resized,
                   cv::Size(static_cast<int>(target_resolution), static_cast<int>(target_resolution)), 0, 0,
                   cv::INTER_LINEAR);
    } else {
        resized = square.clone();
    }
    return to_tensor(resized);
}

// ----------------------------------------------------------------------------
// Toy faces
// ----------------------------------------------------------------------------

std::pair<torch::Tensor, torch::Tensor> render_toy_face(const ToyFace& f, int64_t canvas, double noise_std) {
    const double s = static_cast<double>(canvas) / 32.0;
    auto mask = torch::empty({canvas, canvas}, torch::kLong);
    auto image = torch::empty({3, canvas, canvas}, torch::kFloat32);
    auto m = mask.accessor<int64_t, 2>();
    auto im = image.accessor<float, 3>();

    std::mt19937_64 noise_rng(f.noise_seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    const double eye_y = f.cy - 0.12 * f.ry;
    const double mouth_y = f.cy + 0.5 * f.ry;
    const auto& hair_colour = kHairPalette[static_cast<std::size_t>(f.hair + 1)];

    for (int64_t y = 0; y < canvas; ++y) {
        for (int64_t x = 0; x < canvas; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            const double dx = (px - f.cx) / f.rx, dy = (py - f.cy) / f.ry;
            const double hx = (px - f.cx) / (1.12 * f.rx), hy = (py - f.cy) / (1.10 * f.ry);

            Segment seg = Segment::Others;
            const std::array<double, 3>* colour = &f.background;
            if (hx * hx + hy * hy <= 1.0 && py < f.cy - 0.2 * f.ry) {
                seg = Segment::Hair;
                colour = &hair_colour;
            } else if (dx * dx + dy * dy <= 1.0) {
                seg = Segment::Skin;
                colour = &f.skin;
            }
            if (f.eyeglasses && seg == Segment::Skin) {
                const bool lens = std::abs(py - eye_y) <= 1.6 * s &&
                                  (std::abs(px - (f.cx - 0.42 * f.rx)) <= 0.28 * f.rx ||
                                   std::abs(px - (f.cx + 0.42 * f.rx)) <= 0.28 * f.rx);
                const bool bridge = std::abs(py - eye_y) <= 0.5 * s && std::abs(px - f.cx) <= 0.16 * f.rx;
                if (lens || bridge) {
                    seg = Segment::Eyeglasses;
                    colour = &kGlassesColour;
                }
            }
            if (seg == Segment::Skin) {
                bool mouth = false;
                if (f.mouth_open) {
                    const double mx = (px - f.cx) / (0.30 * f.rx), my = (py - mouth_y) / (2.2 * s);
                    mouth = mx * mx + my * my <= 1.0;
                } else {
                    mouth = std::abs(px - f.cx) <= 0.33 * f.rx && std::abs(py - mouth_y) <= 0.5 * s;
                }
                if (mouth) {
                    seg = Segment::Mouth;
                    colour = &kMouthColour;
                }
            }
            m[y][x] = static_cast<int64_t>(seg);
            for (int c = 0; c < 3; ++c) {
                double v = (*colour)[c] + noise_std * noise(noise_rng);
                v = std::round(std::clamp(v, 0.0, 255.0));
                im[c][y][x] = static_cast<float>(v / 127.5 - 1.0);
            }
        }
    }
    return {image, mask};
}

AttributeLabel toy_label(const ToyFace& f) {
    AttributeLabel l;
    l.values = {f.hair == 0, f.hair == 1, f.hair == 2, f.eyeglasses ? 1 : 0, f.mouth_open ? 1 : 0};
    return l;
}

ToyFace with_label(ToyFace f, const AttributeLabel& label) {
    if (label.size() != toy_attribute_names().size())
        throw ContractViolation("with_label: label length does not match toy attributes");
    f.hair = -1;
    for (int h = 0; h < 3; ++h)
        if (label.values[h] == 1) {
            f.hair = h;
            break;
        }
    f.eyeglasses = label.values[3] == 1;
    f.mouth_open = label.values[4] == 1;
    return f;
}

AttributeDataset generate_toy_dataset(const ToySpec& spec, int64_t n) {
    spec.validate();
    if (n < 1) throw ContractViolation("generate_toy_dataset: n must be >= 1");
    const double s = static_cast<double>(spec.canvas) / 32.0;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    AttributeDataset ds;
    ds.schema = AttributeSchema::with_hair_group(toy_attribute_names());
    ds.resolution = spec.canvas;
    std::vector<torch::Tensor> images, masks;
    images.reserve(n);
    masks.reserve(n);
    for (int64_t i = 0; i < n; ++i) {
        ToyFace f;
        f.cx = spec.canvas / 2.0 + uniform(-spec.centre_jitter, spec.centre_jitter) * s;
        f.cy = spec.canvas / 2.0 + s + uniform(-spec.centre_jitter, spec.centre_jitter) * s;
        f.rx = uniform(9.5, 11.0) * s;
        f.ry = uniform(11.5, 13.0) * s;
        f.skin = {uniform(215, 245), uniform(170, 200), uniform(140, 170)};
        f.background = {uniform(50, 90), uniform(110, 150), uniform(150, 200)};
        const double h = u01(rng);
        if (h < spec.p_black_hair)
            f.hair = 0;
        else if (h < spec.p_black_hair + spec.p_blond_hair)
            f.hair = 1;
        else if (h < spec.p_black_hair + spec.p_blond_hair + spec.p_brown_hair)
            f.hair = 2;
        else
            f.hair = -1;
        f.eyeglasses = u01(rng) < spec.p_eyeglasses;
        f.mouth_open = u01(rng) < spec.p_mouth_open;
        f.noise_seed = rng();

        auto [img, mask] = render_toy_face(f, spec.canvas, spec.noise_std);
        images.push_back(img);
        masks.push_back(mask);
        ds.records.push_back({fmt::format("{:06d}.png", i), toy_label(f), Split::Train});
        ds.toy_faces.push_back(f);
    }
    ds.images = torch::stack(images);
    ds.masks = torch::stack(masks);
    return ds;
}

void write_dataset(const AttributeDataset& ds, const fs::path& dir) {
    if (!ds.images.defined()) throw ContractViolation("write_dataset: dataset has no cached images");
    fs::create_directories(dir / "images");
    if (ds.masks.defined()) fs::create_directories(dir / "masks");
    std::ofstream out(dir / "attributes.txt", std::ios::binary);
    out << ds.size() << "\n";
    for (std::size_t k = 0; k < ds.schema.names.size(); ++k) out << (k ? " " : "") << ds.schema.names[k];
    out << "\n";
    for (int64_t i = 0; i < ds.size(); ++i) {
        const auto& r = ds.records[i];
        out << r.filename;
        for (int v : r.label.values) out << (v ? " 1" : " -1");
        out << "\n";
        write_image(dir / "images" / r.filename, ds.images[i]);
        if (ds.masks.defined()) write_mask(dir / "masks" / r.filename, ds.masks[i]);
    }
    if (!out) throw std::runtime_error(fmt::format("failed writing {}", (dir / "attributes.txt").string()));
}

// ----------------------------------------------------------------------------
// Target labels
// ----------------------------------------------------------------------------

TargetSampling TargetSampling::parse(const std::string& text) {
    if (text == "shuffle") return {TargetMode::Shuffle, 0};
    if (text == "random-expression") return {TargetMode::RandomExpression, 0};
    if (text.rfind("reverse:", 0) == 0) {
        try {
            return {TargetMode::Reverse, std::stoll(text.substr(8))};
        } catch (const std::exception&) {
        }
    }
    throw ContractViolation(fmt::format(
        "unknown target sampling mode '{}' (expected shuffle|reverse:<k>|random-expression)", text));
}

torch::Tensor sample_target_labels(const torch::Tensor& y_src, const TargetSampling& sampling,
                                   const AttributeSchema& schema, std::mt19937_64& rng) {
    if (y_src.dim() != 2 || y_src.size(0) == 0)
        throw ContractViolation("sample_target_labels: need a non-empty [B, n_a] batch");
    const auto b = y_src.size(0);
    switch (sampling.mode) {
        case TargetMode::Shuffle: {
            std::vector<int64_t> perm(b);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            return y_src.index_select(0, torch::tensor(perm, torch::kLong));
        }
        case TargetMode::Reverse:
            return reverse_attribute(y_src, sampling.attribute, schema);
        case TargetMode::RandomExpression: {
            std::uniform_int_distribution<int64_t> pick(0, y_src.size(1) - 1);
            auto out = torch::zeros_like(y_src);
            for (int64_t i = 0; i < b; ++i) out[i][pick(rng)] = 1.0;
            return out;
        }
    }
    throw ContractViolation("sample_target_labels: unknown mode");
}

}  // namespace secgan
