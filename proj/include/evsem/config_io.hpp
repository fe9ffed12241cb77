#pragma once

// Flat key=value text used for map configs, synthetic scene specs and run
// manifests. Blank lines and lines starting with '#' are ignored. Keys
// mirror the struct field names.

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "evsem/errors.hpp"
#include "evsem/synthetic.hpp"
#include "evsem/text.hpp"
#include "evsem/voxel_map.hpp"

namespace evsem {

struct KeyValueEntry {
    std::string value;
    std::size_t line = 0;
};

using KeyValues = std::map<std::string, KeyValueEntry>;

inline KeyValues read_key_values(std::istream& in, const std::string& source) {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = text::trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ParseError(source, lineno, "expected key=value");
        std::string key(text::trim(body.substr(0, eq)));
        std::string value(text::trim(body.substr(eq + 1)));
        if (key.empty()) throw ParseError(source, lineno, "empty key");
        if (!kv.emplace(key, KeyValueEntry{std::move(value), lineno}).second) throw ParseError(source, lineno, "duplicate key '" + key + "'");
    }
    return kv;
}

inline void write_key_values(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& entries) {
    for (const auto& [key, value] : entries) out << key << '=' << value << '\n';
}

inline const char* to_string(LabelMode m) { return m == LabelMode::hard_onehot ? "hard_onehot" : "soft_probs"; }
inline const char* to_string(Weighting w) { return w == Weighting::uniform ? "uniform" : "one_minus_vacuity"; }

inline LabelMode parse_label_mode(std::string_view s) {
    if (s == "hard_onehot") return LabelMode::hard_onehot;
    if (s == "soft_probs") return LabelMode::soft_probs;
    throw ValidationError("unknown label_mode '" + std::string(s) + "' (expected hard_onehot or soft_probs)");
}

inline Weighting parse_weighting(std::string_view s) {
    if (s == "uniform") return Weighting::uniform;
    if (s == "one_minus_vacuity") return Weighting::one_minus_vacuity;
    throw ValidationError("unknown weighting '" + std::string(s) + "' (expected uniform or one_minus_vacuity)");
}

namespace detail {

class KeyValueReader {
public:
    KeyValueReader(const KeyValues& kv, std::string source) : kv_(kv), source_(std::move(source)) {}

    template <typename Fn>
    void apply(const std::string& key, Fn&& fn) {
        known_.insert(key);
        const auto it = kv_.find(key);
        if (it == kv_.end()) return;
        try {
            fn(it->second.value);
        } catch (const ParseError&) {
            throw;
        } catch (const ValidationError& e) {
            throw ParseError(source_, it->second.line, e.what());
        }
    }

    void real(const std::string& key, double& out) {
        apply(key, [&](const std::string& v) {
            const auto d = text::parse_double(v);
            if (!d) throw ValidationError("'" + key + "' expects a number, got '" + v + "'");
            out = *d;
        });
    }

    template <typename Int>
    void integer(const std::string& key, Int& out) {
        apply(key, [&](const std::string& v) {
            const auto i = text::parse_int<Int>(v);
            if (!i) throw ValidationError("'" + key + "' expects a non-negative integer, got '" + v + "'");
            out = *i;
        });
    }

    void reject_unknown() const {
        for (const auto& [key, entry] : kv_) {
            if (!known_.contains(key)) throw ParseError(source_, entry.line, "unknown key '" + key + "'");
        }
    }

private:
    const KeyValues& kv_;
    std::string source_;
    std::set<std::string> known_;
};

}  // namespace detail

inline MapConfig map_config_from(const KeyValues& kv, const std::string& source = "<config>", MapConfig cfg = {}) {
    detail::KeyValueReader r(kv, source);
    r.real("resolution", cfg.resolution);
    r.integer("num_classes", cfg.num_classes);
    r.real("prior_alpha", cfg.prior_alpha);
    r.real("length_scale", cfg.kernel.length_scale);
    r.real("signal_scale", cfg.kernel.signal_scale);
    r.real("weight_floor", cfg.weight_floor);
    r.apply("label_mode", [&](const std::string& v) { cfg.label_mode = parse_label_mode(v); });
    r.apply("weighting", [&](const std::string& v) { cfg.weighting = parse_weighting(v); });
    r.reject_unknown();
    try {
        cfg.validate();
    } catch (const ValidationError& e) {
        throw ParseError(source, 0, e.what());
    }
    return cfg;
}

inline std::vector<std::pair<std::string, std::string>> map_config_entries(const MapConfig& cfg) {
    return {
        {"resolution", text::format_exact(cfg.resolution)},
        {"num_classes", std::to_string(cfg.num_classes)},
        {"prior_alpha", text::format_exact(cfg.prior_alpha)},
        {"length_scale", text::format_exact(cfg.kernel.length_scale)},
        {"signal_scale", text::format_exact(cfg.kernel.signal_scale)},
        {"weight_floor", text::format_exact(cfg.weight_floor)},
        {"label_mode", to_string(cfg.label_mode)},
        {"weighting", to_string(cfg.weighting)},
    };
}

inline SyntheticSceneSpec synthetic_spec_from(const KeyValues& kv, const std::string& source = "<spec>") {
    SyntheticSceneSpec spec;
    detail::KeyValueReader r(kv, source);
    r.integer("seed", spec.seed);
    r.real("extent", spec.extent);
    r.integer("num_classes", spec.num_classes);
    r.integer("points_per_scan", spec.points_per_scan);
    r.integer("num_scans", spec.num_scans);
    r.real("noise_rate", spec.noise_rate);
    r.real("vacuity_correlation", spec.vacuity_correlation);
    r.real("resolution", spec.resolution);
    r.real("high_evidence", spec.high_evidence);
    r.real("low_evidence", spec.low_evidence);
    r.reject_unknown();
    try {
        spec.validate();
    } catch (const ValidationError& e) {
        throw ParseError(source, 0, e.what());
    }
    return spec;
}

inline std::vector<std::pair<std::string, std::string>> synthetic_spec_entries(const SyntheticSceneSpec& spec) {
    return {
        {"seed", std::to_string(spec.seed)},
        {"extent", text::format_exact(spec.extent)},
        {"num_classes", std::to_string(spec.num_classes)},
        {"points_per_scan", std::to_string(spec.points_per_scan)},
        {"num_scans", std::to_string(spec.num_scans)},
        {"noise_rate", text::format_exact(spec.noise_rate)},
        {"vacuity_correlation", text::format_exact(spec.vacuity_correlation)},
        {"resolution", text::format_exact(spec.resolution)},
        {"high_evidence", text::format_exact(spec.high_evidence)},
        {"low_evidence", text::format_exact(spec.low_evidence)},
    };
}

inline KeyValues read_key_value_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    return read_key_values(in, path);
}

inline MapConfig read_map_config(const std::string& path) { return map_config_from(read_key_value_file(path), path); }

inline SyntheticSceneSpec read_synthetic_spec(const std::string& path) {
    return synthetic_spec_from(read_key_value_file(path), path);
}

}  // namespace evsem
