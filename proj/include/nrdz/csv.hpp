#pragma once

#include "nrdz/errors.hpp"

#include <cstdio>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace nrdz {

// Fixed formatting so identical runs produce identical bytes.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) fail(Err::IoError, "cannot open " + path + " for writing");
    }

    void header(const std::vector<std::string>& names) { line(names); }

    void field(const std::string& v) {
        if (!first_) out_ << ',';
        out_ << v;
        first_ = false;
    }

    void field(double v) { field(format_double(v)); }
    void field(long long v) { field(std::to_string(v)); }
    void field(int v) { field(std::to_string(v)); }

    void end_row() {
        out_ << '\n';
        first_ = true;
    }

    void line(const std::vector<std::string>& fields) {
        for (const auto& f : fields) field(f);
        end_row();
    }

private:
    std::ofstream out_;
    bool first_ = true;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const {
        for (size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        fail(Err::IoError, "missing CSV column '" + name + "'");
    }
};

std::vector<std::string> split_csv_line(const std::string& line);
CsvTable read_csv(const std::string& path);

} // namespace nrdz
