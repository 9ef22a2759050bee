#include "nrdz/csv.hpp"

namespace nrdz {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Err::IoError, "cannot open " + path);
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) fail(Err::IoError, "empty CSV " + path);
    table.columns = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        table.rows.push_back(split_csv_line(line));
    }
    return table;
}

} // namespace nrdz
