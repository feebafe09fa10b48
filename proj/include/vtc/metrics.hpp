#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vtc/util.hpp"

namespace vtc {

// Line-delimited JSON metrics stream.
class MetricsSink {
  public:
    explicit MetricsSink(const std::filesystem::path& path) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        out_.open(path, std::ios::app);
        if (!out_) fail("cannot open metrics file: ", path.string());
    }

    void write(const nlohmann::json& record) {
        out_ << record.dump() << '\n';
        out_.flush();
    }

  private:
    std::ofstream out_;
};

}  // namespace vtc
