#include "vtc/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "vtc/util.hpp"

namespace vtc {

std::string pct(double fraction) {
    char buf[32];
    snprintf(buf, sizeof(buf), "%.4f", fraction * 100.0);
    return buf;
}

namespace {

constexpr const char* kCsvHeader = "run_id,probe,dataset,condition,metric,value\n";

std::string meta_line(const std::string& params_hash, const std::string& config_hash) {
    return cat("<!-- params_hash:", params_hash, " config_hash:", config_hash, " -->\n");
}

void write_pair(const std::filesystem::path& dir, const std::string& stem, const std::string& md,
                const std::string& csv) {
    write_file_atomic(dir / (stem + ".md"), md);
    write_file_atomic(dir / (stem + ".csv"), csv);
}

}  // namespace

void write_eval_report(const std::filesystem::path& report_dir, const std::string& run_id,
                       const EvalReport& r) {
    std::string md = meta_line(r.params_hash, r.config_hash);
    md += cat("# eval ", r.dataset_id, "\n\n");
    md += cat("- clips: ", r.clip_count, "\n- views: 1x", r.views, "\n\n");
    md += "| metric | value |\n| --- | --- |\n";
    md += cat("| top1 | ", pct(r.top1), " |\n");
    for (size_t c = 0; c < r.per_class.size(); ++c)
        md += cat("| class_", c, " | ", pct(r.per_class[c]), " |\n");

    std::string csv = kCsvHeader;
    csv += cat(run_id, ",eval,", r.dataset_id, ",normal,top1,", pct(r.top1), "\n");
    for (size_t c = 0; c < r.per_class.size(); ++c)
        csv += cat(run_id, ",eval,", r.dataset_id, ",normal,class_", c, ",", pct(r.per_class[c]), "\n");
    write_pair(report_dir, "eval_" + r.dataset_id, md, csv);
}

void write_probe_report(const std::filesystem::path& report_dir, const std::string& run_id,
                        const ProbeReport& r) {
    std::string md = meta_line(r.params_hash, r.config_hash);
    md += cat("# probe ", r.kind, " (", r.subject, ")\n\n");
    md += "| condition |";
    for (const std::string& c : r.columns) md += cat(" ", c, " |");
    md += "\n| --- |";
    for (size_t c = 0; c < r.columns.size(); ++c) md += " --- |";
    md += "\n";
    for (const auto& row : r.rows) {
        md += cat("| ", row.condition, " |");
        for (double v : row.values) md += cat(" ", std::isnan(v) ? std::string("-") : pct(v), " |");
        md += "\n";
    }
    for (const auto& d : r.deltas) md += cat("\n- ", d.name, ": ", pct(d.value), " points\n");

    std::string csv = kCsvHeader;
    for (const auto& row : r.rows)
        for (size_t c = 0; c < r.columns.size(); ++c)
            if (!std::isnan(row.values[c]))
                csv += cat(run_id, ",", r.kind, ",",
                           r.kind == "ablation" ? r.columns[c] : r.subject, ",", row.condition, ",",
                           r.kind == "ablation" ? "top1" : r.columns[c], ",", pct(row.values[c]), "\n");
    for (const auto& d : r.deltas)
        csv += cat(run_id, ",", r.kind, ",", r.subject, ",delta,", d.name, ",", pct(d.value), "\n");

    std::string stem = r.kind == "ablation" ? std::string("ablation") : r.kind + "_" + r.subject;
    write_pair(report_dir, stem, md, csv);
}

int merge_reports(const std::vector<std::string>& run_dirs, const std::filesystem::path& out_dir) {
    if (run_dirs.empty()) fail("report: no run directories given");

    std::vector<std::string> missing;
    std::string md, csv = kCsvHeader;
    std::set<std::string> params_hashes, config_hashes;

    md += "# summary\n\n";
    for (const std::string& dir : run_dirs) md += cat("- run: ", dir, "\n");
    std::string body;

    for (const std::string& dir : run_dirs) {
        const std::filesystem::path reports = std::filesystem::path(dir) / "reports";
        std::vector<std::filesystem::path> mds, csvs;
        if (std::filesystem::is_directory(reports)) {
            for (const auto& e : std::filesystem::directory_iterator(reports)) {
                if (e.path().extension() == ".md") mds.push_back(e.path());
                if (e.path().extension() == ".csv") csvs.push_back(e.path());
            }
        }
        std::sort(mds.begin(), mds.end());
        std::sort(csvs.begin(), csvs.end());
        if (mds.empty() && csvs.empty()) {
            missing.push_back(dir);
            continue;
        }
        for (const auto& p : mds) {
            const std::string text = read_file(p);
            // Collect the hash metadata comment for the header flagging.
            const size_t ph = text.find("params_hash:");
            const size_t ch = text.find("config_hash:");
            if (ph != std::string::npos) params_hashes.insert(text.substr(ph + 12, 16));
            if (ch != std::string::npos) config_hashes.insert(text.substr(ch + 12, 16));
            body += cat("\n---\n_run: ", dir, "_\n\n", text);
        }
        for (const auto& p : csvs) {
            const std::string text = read_file(p);
            const size_t nl = text.find('\n');
            if (nl != std::string::npos) csv += text.substr(nl + 1);
        }
    }
    if (!missing.empty()) {
        std::string msg = "report: no reports found under:";
        for (const std::string& d : missing) msg += cat("\n  - ", d);
        fail(msg);
    }
    if (params_hashes.size() > 1)
        md += cat("\n**WARNING**: runs span ", params_hashes.size(), " distinct parameter hashes\n");
    if (config_hashes.size() > 1)
        md += cat("\n**WARNING**: runs span ", config_hashes.size(), " distinct model config hashes\n");
    md += body;

    std::filesystem::create_directories(out_dir);
    write_file_atomic(out_dir / "summary.md", md);
    write_file_atomic(out_dir / "summary.csv", csv);
    return 0;
}

}  // namespace vtc
