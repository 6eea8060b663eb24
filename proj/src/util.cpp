#include "armor/util.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace armor {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("FileMissing", "cannot open file: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("WriteFailed", "cannot open file for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("WriteFailed", "short write: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void for_each_line(const std::filesystem::path& path,
                   const std::function<void(int, const std::string&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("FileMissing", "cannot open file: " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        fn(line_no, line);
    }
}

std::string to_hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace armor
