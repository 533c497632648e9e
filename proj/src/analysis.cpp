#include "streamattn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "streamattn/error.hpp"

namespace streamattn {

RealMatrix normalize_columns(const RealMatrix& a) {
    RealMatrix out(a.rows, a.cols);
    for (std::size_t c = 0; c < a.cols; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t r = 0; r < a.rows; ++r) {
            lo = std::min(lo, a(r, c));
            hi = std::max(hi, a(r, c));
        }
        const double span = hi - lo;
        for (std::size_t r = 0; r < a.rows; ++r) {
            if (span > 0.0) out(r, c) = (a(r, c) - lo) / span;
        }
    }
    return out;
}

RealMatrix gamma_transform(const RealMatrix& a, double gamma) {
    STREAMATTN_REQUIRE(gamma > 0.0 && std::isfinite(gamma), "gamma_transform: gamma must be positive");
    RealMatrix out = a;
    for (double& v : out.data) {
        STREAMATTN_REQUIRE(v >= 0.0 && v <= 1.0, "gamma_transform: entries must lie in [0, 1]");
        v = std::pow(v, gamma);
    }
    return out;
}

RealMatrix sink_strip(const RealMatrix& a) {
    STREAMATTN_REQUIRE(a.cols >= 2, "sink_strip: need at least two key columns");
    RealMatrix out(a.rows, a.cols - 1);
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t c = 1; c < a.cols; ++c) out(r, c - 1) = a(r, c);
    }
    return out;
}

AttentionMap sink_strip(const AttentionMap& map) {
    AttentionMap out = map;
    out.matrix = sink_strip(map.matrix);
    if (!out.col_roles.empty()) out.col_roles.erase(out.col_roles.begin());
    return out;
}

std::string to_csv(const RealMatrix& a) {
    std::ostringstream out;
    out << std::setprecision(6);
    for (std::size_t c = 0; c < a.cols; ++c) out << (c ? "," : "") << c;
    out << '\n';
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t c = 0; c < a.cols; ++c) out << (c ? "," : "") << a(r, c);
        out << '\n';
    }
    return out.str();
}

void write_csv(const std::filesystem::path& path, const RealMatrix& a) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_csv(a);
    if (!out) throw IoError("write failed for " + path.string());
}

RealMatrix parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    RealMatrix out;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ParseError("not a number: \"" + cell + "\"", line_no);
            }
        }
        if (header) {
            out.cols = row.size();
            header = false;
            continue;
        }
        if (row.size() != out.cols) throw ParseError("row has " + std::to_string(row.size()) + " cells", line_no);
        out.data.insert(out.data.end(), row.begin(), row.end());
        ++out.rows;
    }
    if (header) throw ParseError("missing header row");
    return out;
}

RealMatrix read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_csv(text.str());
}

std::string to_svg(const AttentionMap& map) {
    const RealMatrix& a = map.matrix;
    constexpr int cell = 12;
    constexpr int margin = 24;
    double hi = 0.0;
    for (double v : a.data) hi = std::max(hi, v);
    const int width = margin + static_cast<int>(a.cols) * cell;
    const int height = margin + static_cast<int>(a.rows) * cell;
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    auto label = [](const std::vector<Role>& roles, std::size_t i) {
        if (i >= roles.size()) return std::string();
        return std::string(roles[i] == Role::Source ? "S" : "T");
    };
    for (std::size_t c = 0; c < a.cols; ++c) {
        out << "<text x=\"" << margin + static_cast<int>(c) * cell + 3 << "\" y=\"" << margin - 6
            << "\" font-size=\"9\">" << label(map.col_roles, c) << "</text>\n";
    }
    for (std::size_t r = 0; r < a.rows; ++r) {
        out << "<text x=\"4\" y=\"" << margin + static_cast<int>(r) * cell + 9 << "\" font-size=\"9\">"
            << label(map.row_roles, r) << "</text>\n";
    }
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t c = 0; c < a.cols; ++c) {
            const double v = hi > 0.0 ? a(r, c) / hi : 0.0;
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 1.0))));
            out << "<rect x=\"" << margin + static_cast<int>(c) * cell << "\" y=\"" << margin + static_cast<int>(r) * cell
                << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ',' << shade << ','
                << shade << ")\"/>\n";
        }
    }
    out << "</svg>\n";
    return out.str();
}

void write_svg(const std::filesystem::path& path, const AttentionMap& map) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_svg(map);
    if (!out) throw IoError("write failed for " + path.string());
}

template <typename Scalar>
AttentionMap extract_attention(const Transformer<Scalar>& model, const ArrangedSequence& arr, std::size_t layer,
                               std::size_t head) {
    const auto& cfg = model.config();
    STREAMATTN_REQUIRE(layer < static_cast<std::size_t>(cfg.layers), "attention: layer out of range");
    STREAMATTN_REQUIRE(head < static_cast<std::size_t>(cfg.heads), "attention: head out of range");
    const auto out = model.forward(arr, true);
    const auto& p = out.attention[layer][head];
    AttentionMap map;
    map.layer = layer;
    map.head = head;
    map.matrix = RealMatrix(arr.size(), arr.size());
    for (std::size_t r = 0; r < arr.size(); ++r) {
        for (std::size_t c = 0; c < arr.size(); ++c) {
            map.matrix(r, c) = static_cast<double>(p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
        }
    }
    map.row_roles = arr.roles;
    map.col_roles = arr.roles;
    return map;
}

RealMatrix target_to_source(const AttentionMap& map) {
    std::vector<std::size_t> rows, cols;
    for (std::size_t r = 0; r < map.row_roles.size(); ++r) {
        if (map.row_roles[r] == Role::Target) rows.push_back(r);
    }
    for (std::size_t c = 0; c < map.col_roles.size(); ++c) {
        if (map.col_roles[c] == Role::Source) cols.push_back(c);
    }
    RealMatrix out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = map.matrix(rows[i], cols[j]);
    }
    return out;
}

double diagonal_band_mass(const RealMatrix& a, std::size_t band) {
    double total = 0.0, inside = 0.0;
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t c = 0; c < a.cols; ++c) {
            total += a(r, c);
            const std::size_t dist = r > c ? r - c : c - r;
            if (dist <= band) inside += a(r, c);
        }
    }
    return total > 0.0 ? inside / total : 0.0;
}

template AttentionMap extract_attention(const Transformer<float>&, const ArrangedSequence&, std::size_t, std::size_t);
template AttentionMap extract_attention(const Transformer<double>&, const ArrangedSequence&, std::size_t, std::size_t);

}  // namespace streamattn
