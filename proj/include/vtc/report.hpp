#pragma once

#include <filesystem>
#include <string>

#include "vtc/evalsuite.hpp"

namespace vtc {

// Formats a fraction as percent with a fixed width, e.g. 0.8613 -> "86.1300".
std::string pct(double fraction);

// Report files are pure functions of their inputs: no timestamps, fixed
// formatting, so identical runs produce identical bytes.
// CSV columns (fixed): run_id,probe,dataset,condition,metric,value
void write_eval_report(const std::filesystem::path& report_dir, const std::string& run_id,
                       const EvalReport& report);
void write_probe_report(const std::filesystem::path& report_dir, const std::string& run_id,
                        const ProbeReport& report);

// Merges every reports/*.md and *.csv of the given run directories into
// summary.md / summary.csv under out_dir. Runs whose parameter or config
// hashes differ are flagged in the summary header.
int merge_reports(const std::vector<std::string>& run_dirs, const std::filesystem::path& out_dir);

}  // namespace vtc
