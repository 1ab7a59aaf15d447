#include "secgan/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "secgan/domain.hpp"

namespace secgan {

namespace fs = std::filesystem;

std::vector<ReportRow> report_rows(const EvaluationReport& rep) {
    const auto& r = rep.result;
    std::vector<ReportRow> rows;
    for (std::size_t k = 0; k < r.attributes.size(); ++k)
        rows.push_back({rep.method, rep.lambda_sc, r.attributes[k], r.accuracy.per_attribute.at(k),
                        r.ssfid.per_attribute.at(k), r.is.mean, r.is.std});
    rows.push_back({rep.method, rep.lambda_sc, "mean", r.accuracy.mean, r.ssfid.mean, r.is.mean, r.is.std});
    return rows;
}

void write_report(const EvaluationReport& rep, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "report.tsv", std::ios::trunc);
        const auto& cols = report_columns();
        for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "\t" : "") << cols[i];
        out << '\n';
        for (const auto& row : report_rows(rep))
            out << fmt::format("{}\t{:.17g}\t{}\t{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\n", row.method, row.lambda_sc,
                               row.attribute, row.accuracy, row.ssfid, row.is_mean, row.is_std);
        if (!out) throw std::runtime_error(fmt::format("failed writing {}", (dir / "report.tsv").string()));
    }
    nlohmann::ordered_json per;
    for (std::size_t k = 0; k < rep.result.attributes.size(); ++k)
        per[rep.result.attributes[k]] = {{"accuracy", rep.result.accuracy.per_attribute[k]},
                                         {"ssfid", rep.result.ssfid.per_attribute[k]}};
    nlohmann::ordered_json summary = {
        {rep.config_hash,
         {{"method", rep.method},
          {"lambda_sc", rep.lambda_sc},
          {"seed", rep.seed},
          {"embedder", rep.embedder},
          {"mean_accuracy", rep.result.accuracy.mean},
          {"mean_ssfid", rep.result.ssfid.mean},
          {"is_mean", rep.result.is.mean},
          {"is_std", rep.result.is.std},
          {"attributes", per}}}};
    std::ofstream js(dir / "summary.json", std::ios::trunc);
    js << summary.dump(2) << '\n';
}

std::vector<ReportRow> read_report(const fs::path& tsv) {
    std::ifstream in(tsv);
    if (!in) throw std::runtime_error(fmt::format("cannot open report {}", tsv.string()));
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, '\t');) out.push_back(cell);
        return out;
    };
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(fmt::format("{}: empty report", tsv.string()));
    const auto header = split(line);
    std::map<std::string, std::size_t> col;
    for (const auto& name : report_columns()) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw std::runtime_error(fmt::format("{}: missing column '{}'", tsv.string(), name));
        col[name] = static_cast<std::size_t>(it - header.begin());
    }
    std::vector<ReportRow> rows;
    int64_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != header.size())
            throw std::runtime_error(fmt::format("{}:{}: expected {} fields, got {}", tsv.string(), lineno,
                                                 header.size(), cells.size()));
        auto num = [&](const char* name) {
            try {
                return std::stod(cells[col[name]]);
            } catch (const std::exception&) {
                throw std::runtime_error(fmt::format("{}:{}: column '{}' is not numeric", tsv.string(), lineno, name));
            }
        };
        rows.push_back({cells[col["method"]], num("lambda_sc"), cells[col["attribute"]], num("accuracy"),
                        num("ssfid"), num("is_mean"), num("is_std")});
    }
    if (rows.empty()) throw std::runtime_error(fmt::format("{}: report has no rows", tsv.string()));
    return rows;
}

namespace {

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

std::string label_of(const std::vector<ReportRow>& rows) {
    return fmt::format("{} (lambda_sc={:g})", rows.front().method, rows.front().lambda_sc);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

}  // namespace

void plot_accuracy_bars(const std::vector<std::vector<ReportRow>>& reports, const fs::path& svg) {
    if (reports.empty()) throw ContractViolation("plot: need at least one report");
    std::vector<std::string> attrs;
    for (const auto& row : reports.front())
        if (row.attribute != "mean") attrs.push_back(row.attribute);
    const double group_w = 60, bar_w = std::max(4.0, 48.0 / static_cast<double>(reports.size()));
    const double left = 60, top = 30, plot_h = 240;
    const double width = left + group_w * static_cast<double>(attrs.size() + 1) + 20;
    const double height = top + plot_h + 120 + 18 * static_cast<double>(reports.size());
    std::string s = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\" "
        "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        width, height);
    s += fmt::format("<text x=\"{}\" y=\"18\" font-size=\"13\">Edit accuracy per attribute</text>\n", left);
    for (int tick = 0; tick <= 4; ++tick) {
        const double y = top + plot_h - plot_h * tick / 4.0;
        s += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{:.0f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", left, y,
                         width - 20, y);
        s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{}%</text>\n", left - 4, y + 4, tick * 25);
    }
    auto columns = attrs;
    columns.push_back("mean");
    for (std::size_t a = 0; a < columns.size(); ++a) {
        const double gx = left + group_w * static_cast<double>(a) + 6;
        for (std::size_t m = 0; m < reports.size(); ++m) {
            auto it = std::find_if(reports[m].begin(), reports[m].end(),
                                   [&](const ReportRow& r) { return r.attribute == columns[a]; });
            if (it == reports[m].end())
                throw std::runtime_error(fmt::format("plot: report '{}' lacks attribute '{}'", label_of(reports[m]),
                                                     columns[a]));
            const double h = plot_h * std::clamp(it->accuracy, 0.0, 1.0);
            s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n",
                             gx + bar_w * static_cast<double>(m), top + plot_h - h, bar_w - 1, h, kPalette[m % 8]);
        }
        const double lx = gx + 20, ly = top + plot_h + 10;
        s += fmt::format("<text transform=\"translate({:.1f},{:.1f}) rotate(45)\">{}</text>\n", lx, ly,
                         escape(columns[a]));
    }
    for (std::size_t m = 0; m < reports.size(); ++m) {
        const double y = top + plot_h + 100 + 18 * static_cast<double>(m);
        s += fmt::format("<rect x=\"{}\" y=\"{:.0f}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", left, y - 10,
                         kPalette[m % 8]);
        s += fmt::format("<text x=\"{}\" y=\"{:.0f}\">{}</text>\n", left + 18, y, escape(label_of(reports[m])));
    }
    s += "</svg>\n";
    write_text(svg, s);
}

void plot_lambda_curve(const std::vector<std::vector<ReportRow>>& reports, const fs::path& svg) {
    if (reports.empty()) throw ContractViolation("plot: need at least one report");
    std::vector<std::pair<double, double>> pts;
    for (const auto& rows : reports) {
        auto it = std::find_if(rows.begin(), rows.end(), [](const ReportRow& r) { return r.attribute == "mean"; });
        if (it == rows.end()) throw std::runtime_error("plot: report lacks the 'mean' row");
        pts.emplace_back(it->lambda_sc, it->accuracy);
    }
    std::sort(pts.begin(), pts.end());
    const double left = 60, top = 30, w = 360, h = 220;
    double lo = 1, hi = 0;
    for (auto& p : pts) {
        lo = std::min(lo, p.second);
        hi = std::max(hi, p.second);
    }
    lo = std::max(0.0, lo - 0.05);
    hi = std::min(1.0, hi + 0.05);
    if (hi <= lo) hi = lo + 0.1;
    auto px = [&](std::size_t i) {
        return pts.size() == 1 ? left + w / 2 : left + w * static_cast<double>(i) / static_cast<double>(pts.size() - 1);
    };
    auto py = [&](double v) { return top + h - h * (v - lo) / (hi - lo); };
    std::string s = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\" "
        "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        left + w + 30, top + h + 50);
    s += fmt::format("<text x=\"{}\" y=\"18\" font-size=\"13\">Mean edit accuracy by lambda_sc</text>\n", left);
    s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", left, top + h, left + w,
                     top + h);
    s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", left, top, left, top + h);
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.1f}%</text>\n", left - 4, py(hi) + 4,
                     hi * 100);
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.1f}%</text>\n", left - 4, py(lo) + 4,
                     lo * 100);
    std::string poly;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        poly += fmt::format("{:.1f},{:.1f} ", px(i), py(pts[i].second));
        s += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"4\" fill=\"#4e79a7\"/>\n", px(i), py(pts[i].second));
        s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:g}</text>\n", px(i), top + h + 16,
                         pts[i].first);
    }
    s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"#4e79a7\" stroke-width=\"2\"/>\n", poly);
    s += fmt::format("<text x=\"{:.0f}\" y=\"{:.0f}\" text-anchor=\"middle\">lambda_sc</text>\n", left + w / 2,
                     top + h + 36);
    s += "</svg>\n";
    write_text(svg, s);
}

}  // namespace secgan
