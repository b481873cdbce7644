#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cardiomm/core/errors.hpp"

namespace cardiomm {

// RFC-style quoting: fields containing comma, quote or newline are wrapped
// in double quotes with embedded quotes doubled.
inline std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// fixed shortest-roundtrip formatting so reruns are byte-identical
inline std::string csv_num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path, bool append = false) {
        f_ = std::fopen(path.string().c_str(), append ? "ab" : "wb");
        if (!f_) throw IoError("cannot open csv " + path.string());
    }
    ~CsvWriter() {
        if (f_) std::fclose(f_);
    }
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<std::string>& fields) {
        std::string line;
        for (size_t i = 0; i < fields.size(); ++i) {
            if (i) line += ',';
            line += csv_quote(fields[i]);
        }
        line += '\n';
        std::fwrite(line.data(), 1, line.size(), f_);
    }

private:
    FILE* f_ = nullptr;
};

} // namespace cardiomm
