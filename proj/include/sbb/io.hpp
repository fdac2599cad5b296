#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbb/measures.hpp"

namespace sbb {

using nlohmann::json;

// All numeric output goes through one shortest-round-trip formatter so that
// re-exports of identical data are byte-identical.
inline std::string format_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

class CsvError : public std::runtime_error {
public:
    explicit CsvError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

// Atom CSV format: header "x1,...,xd,weight", one row per atom.
inline DiscreteMeasure read_atoms_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError(path + ": cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw CsvError(path + ": empty file, header required");
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header.back() != "weight")
        throw CsvError(path + ": header must be x1,..,xd,weight");
    const std::size_t d = header.size() - 1;
    for (std::size_t k = 0; k < d; ++k)
        if (header[k] != "x" + std::to_string(k + 1))
            throw CsvError(path + ": column " + std::to_string(k + 1) + " must be x" +
                           std::to_string(k + 1));

    std::vector<double> flat, w;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != d + 1)
            throw CsvError(path + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(d + 1) + " columns, got " + std::to_string(cells.size()));
        for (std::size_t k = 0; k <= d; ++k) {
            double val = 0.0;
            const auto& cell = cells[k];
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), val);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
                throw CsvError(path + ":" + std::to_string(lineno) + ": bad number in column " +
                               std::to_string(k + 1) + " ('" + cell + "')");
            (k < d ? flat : w).push_back(val);
        }
    }
    if (w.empty()) throw CsvError(path + ": no atom rows");
    return DiscreteMeasure(d, std::move(flat), std::move(w));
}

inline void write_atoms_csv(const std::string& path, const DiscreteMeasure& m) {
    std::ofstream out(path);
    if (!out) throw CsvError(path + ": cannot open for writing");
    for (std::size_t k = 0; k < m.dim(); ++k) out << "x" << (k + 1) << ",";
    out << "weight\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto x = m.atom(i);
        for (std::size_t k = 0; k < m.dim(); ++k) out << format_double(x[k]) << ",";
        out << format_double(m.weight(i)) << "\n";
    }
}

inline json to_json(const GridMeasure& g) {
    return json{{"origin", g.origin()},
                {"spacing", g.spacing()},
                {"shape", g.shape()},
                {"weights", g.weights()}};
}

inline GridMeasure grid_from_json(const json& j) {
    return GridMeasure(j.at("origin").get<Vec>(), j.at("spacing").get<Vec>(),
                       j.at("shape").get<std::vector<std::size_t>>(),
                       j.at("weights").get<std::vector<double>>());
}

inline json to_json(const DiscreteMeasure& m) {
    json atoms = json::array();
    for (std::size_t i = 0; i < m.size(); ++i) atoms.push_back(m.atom_vec(i));
    return json{{"atoms", atoms}, {"weights", m.weights()}};
}

inline DiscreteMeasure discrete_from_json(const json& j) {
    std::vector<Vec> pts;
    for (const auto& a : j.at("atoms")) pts.push_back(a.get<Vec>());
    return DiscreteMeasure::from_points(pts, j.at("weights").get<std::vector<double>>());
}

// Reads either an atom CSV or a grid-measure JSON, depending on extension.
struct LoadedMeasure {
    DiscreteMeasure atoms;
    bool is_grid = false;
    GridMeasure grid;
};

inline LoadedMeasure load_measure(const std::string& path) {
    LoadedMeasure out;
    if (std::filesystem::path(path).extension() == ".json") {
        std::ifstream in(path);
        if (!in) throw CsvError(path + ": cannot open file");
        json j = json::parse(in);
        out.grid = grid_from_json(j);
        out.atoms = out.grid.to_discrete();
        out.is_grid = true;
    } else {
        out.atoms = read_atoms_csv(path);
    }
    return out;
}

// Serialized with a fixed key order and single-line layout so identical
// inputs re-export byte-identically.
inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << j.dump(2) << "\n";
}

}  // namespace sbb
