#include "vtc/util.hpp"

#include <cstdio>
#include <fstream>

namespace vtc {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open file for reading: ", path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail("read error on file: ", path.string());
    return data;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail("cannot open file for writing: ", tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) fail("write error on file: ", tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace vtc
