#pragma once

// Text scan format, one file per scan:
//
//   ESM1 <num_points> <K>
//   x y z e_1 ... e_K          (one line per point, evidence payload)
//
// Hard labels are written as one-hot evidence whose magnitude reproduces the
// label's confidence as vacuity: E = K c / (1 - c), so K / (K + E) = 1 - c.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "evsem/errors.hpp"
#include "evsem/evidence.hpp"
#include "evsem/text.hpp"
#include "evsem/voxel_map.hpp"

namespace evsem {

inline constexpr std::string_view kScanMagic = "ESM1";
inline constexpr double kMaxHardEvidence = 1e6;

struct Scan {
    std::vector<SemanticPoint> points;
    std::size_t num_classes = 0;
};

inline EvidenceVector hard_label_evidence(const HardLabel& hard, std::size_t num_classes) {
    std::vector<double> e(num_classes, 0.0);
    if (hard.label >= num_classes) throw ValidationError("hard label out of range");
    const double c = hard.confidence;
    e[hard.label] = c >= 1.0 ? kMaxHardEvidence
                             : std::min(kMaxHardEvidence, static_cast<double>(num_classes) * c / (1.0 - c));
    return EvidenceVector(std::move(e));
}

inline Scan read_scan(std::istream& in, const std::string& source = "<scan>") {
    std::string line;
    std::size_t lineno = 0;
    Scan scan;

    std::size_t declared = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        const auto tok = text::split_ws(line);
        if (tok.size() != 3 || tok[0] != kScanMagic) throw ParseError(source, lineno, "expected header 'ESM1 <num_points> <K>'");
        const auto n = text::parse_int<std::size_t>(tok[1]);
        const auto k = text::parse_int<std::size_t>(tok[2]);
        if (!n || !k) throw ParseError(source, lineno, "malformed header counts");
        if (*k < 2) throw ParseError(source, lineno, "K must be >= 2");
        declared = *n;
        scan.num_classes = *k;
        have_header = true;
        break;
    }
    if (!have_header) throw ParseError(source, lineno, "missing header");

    const std::size_t arity = 3 + scan.num_classes;
    scan.points.reserve(declared);
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        if (scan.points.size() == declared) throw ParseError(source, lineno, "more points than the header declares");
        const auto tok = text::split_ws(line);
        if (tok.size() != arity) {
            throw ParseError(source, lineno, "expected " + std::to_string(arity) + " values, got " + std::to_string(tok.size()));
        }
        std::vector<double> values(arity);
        for (std::size_t i = 0; i < arity; ++i) {
            const auto v = text::parse_double(tok[i]);
            if (!v) throw ParseError(source, lineno, "malformed number '" + std::string(tok[i]) + "'");
            if (!std::isfinite(*v)) throw ParseError(source, lineno, "non-finite value");
            if (i >= 3 && *v < 0.0) throw ParseError(source, lineno, "negative evidence");
            values[i] = *v;
        }
        SemanticPoint p{Vec3(values[0], values[1], values[2]),
                        EvidenceVector(std::vector<double>(values.begin() + 3, values.end()))};
        scan.points.push_back(std::move(p));
    }
    if (scan.points.size() != declared) {
        throw ParseError(source, lineno, "header declares " + std::to_string(declared) + " points, found " + std::to_string(scan.points.size()));
    }
    return scan;
}

inline Scan read_scan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scan file " + path);
    return read_scan(in, path);
}

inline void write_scan(std::ostream& out, std::span<const SemanticPoint> points, std::size_t num_classes) {
    out << kScanMagic << ' ' << points.size() << ' ' << num_classes << '\n';
    for (const auto& p : points) {
        const EvidenceVector e = std::holds_alternative<EvidenceVector>(p.payload)
                                     ? std::get<EvidenceVector>(p.payload)
                                     : hard_label_evidence(std::get<HardLabel>(p.payload), num_classes);
        if (e.size() != num_classes) throw ValidationError("point evidence length does not match K");
        out << text::format_exact(p.position.x()) << ' ' << text::format_exact(p.position.y()) << ' '
            << text::format_exact(p.position.z());
        for (double v : e.values()) out << ' ' << text::format_exact(v);
        out << '\n';
    }
}

inline void write_scan(const std::string& path, std::span<const SemanticPoint> points, std::size_t num_classes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_scan(out, points, num_classes);
    if (!out) throw Error("failed writing " + path);
}

}  // namespace evsem
