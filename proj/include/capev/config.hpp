#pragma once

// Run configuration: line-oriented "key = value" text, '#' starts a comment.
//
//   manifest = data/manifest.csv      # or: features = features.csv
//   out = runs/rf
//   family = rf                       # rf | knn | svr | mlp | conv
//   seed = 42
//   grid.k = 1,3,5                    # override one grid axis
//   param.n_trees = 300               # fixed value (used when grid_search = false)
//
// Relative paths resolve against the config file's directory.

#include "capev/augmentation.hpp"
#include "capev/error.hpp"
#include "capev/manifest.hpp"
#include "capev/regressor.hpp"
#include "capev/rng.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace capev {

struct RunConfig {
    std::filesystem::path manifest;
    std::filesystem::path features;
    std::filesystem::path out;
    std::filesystem::path augmented_manifest; // neural families only
    Family family = Family::Forest;
    int sample_rate = 8000;
    double test_fraction = 0.2;
    std::size_t n_bins = 5;
    std::uint64_t seed = 0;
    int repeats = 1;
    bool grid_search = true;
    int cv_folds = 5;
    ParamGrid grid;   // merged over default_grid(family)
    ParamSet params;  // merged over default_params(family)
    unsigned threads = 1;
    int permutation_repeats = 5;
    std::vector<std::pair<std::string, std::string>> entries; // as given, for the digest

    std::string digest() const {
        std::uint64_t h = fnv1a("capev-config");
        for (const auto& [k, v] : entries) {
            h = fnv1a(k, h);
            h = fnv1a("=", h);
            h = fnv1a(v, h);
            h = fnv1a("\n", h);
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    /// Grid actually searched: defaults with overridden axes replaced.
    ParamGrid effective_grid() const {
        ParamGrid g = default_grid(family);
        for (const auto& [k, v] : grid) g[k] = v;
        return g;
    }

    ParamSet effective_params() const {
        ParamSet p = default_params(family);
        for (const auto& [k, v] : params) p[k] = v;
        return p;
    }

    void validate() const {
        auto bad = [](const std::string& m) { throw Error(ErrorCode::ConfigInvalid, m); };
        if (manifest.empty() == features.empty()) bad("exactly one of 'manifest' or 'features' is required");
        if (out.empty()) bad("'out' is required");
        if (sample_rate <= 0) bad("sample_rate must be positive");
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) bad("test_fraction must be in (0, 1)");
        if (n_bins < 2) bad("n_bins must be >= 2");
        if (repeats < 1) bad("repeats must be >= 1");
        if (cv_folds < 2) bad("cv_folds must be >= 2");
        if (threads < 1) bad("threads must be >= 1");
        if (permutation_repeats < 0) bad("permutation_repeats must be >= 0");
        if (is_neural(family)) {
            if (!grid.empty()) bad("grid search is not offered for neural heads; use param.<name>");
            if (!features.empty() && !augmented_manifest.empty()) bad("augmented_manifest needs a manifest run");
        } else if (!augmented_manifest.empty()) {
            bad("augmentation applies to neural heads only (family mlp or conv)");
        }
        if (grid_search && !is_neural(family) && effective_grid().empty()) bad("empty hyperparameter grid");
    }
};

namespace detail {

inline std::vector<double> parse_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const auto& f : split_csv(value)) {
        double v = 0.0;
        if (!parse_double(f, v)) throw Error(ErrorCode::ConfigInvalid, key + ": '" + f + "' is not a number");
        out.push_back(v);
    }
    if (out.empty()) throw Error(ErrorCode::ConfigInvalid, key + ": empty list");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error(ErrorCode::ConfigInvalid, key + ": expected true or false, got '" + v + "'");
}

template <typename T>
T parse_integer(const std::string& key, const std::string& v) {
    T out{};
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || end != v.data() + v.size())
        throw Error(ErrorCode::ConfigInvalid, key + ": '" + v + "' is not an integer");
    return out;
}

} // namespace detail

/// "name=v1,v2;name2=v3" or the same one axis per line.
inline ParamGrid parse_grid_spec(const std::string& spec) {
    ParamGrid g;
    std::string item;
    auto flush = [&] {
        const auto b = item.find_first_not_of(" \t\r\n");
        if (b == std::string::npos || item[b] == '#') return;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::ConfigInvalid, "grid entry '" + item + "' lacks '='");
        auto name = detail::split_csv(item.substr(0, eq)).front();
        g[name] = detail::parse_list(name, item.substr(eq + 1));
    };
    for (char c : spec) {
        if (c == ';' || c == '\n') {
            flush();
            item.clear();
        } else {
            item += c;
        }
    }
    flush();
    if (g.empty()) throw Error(ErrorCode::ConfigInvalid, "empty grid specification");
    return g;
}

inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
    RunConfig c;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) throw Error(ErrorCode::ConfigInvalid, where + "expected 'key = value'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (value.empty()) throw Error(ErrorCode::ConfigInvalid, where + "'" + key + "' has no value");
        c.entries.emplace_back(key, value);
        auto path = [&] { return base_dir / value; };
        if (key == "manifest") c.manifest = path();
        else if (key == "features") c.features = path();
        else if (key == "out") c.out = path();
        else if (key == "augmented_manifest") c.augmented_manifest = path();
        else if (key == "family") c.family = parse_family(value);
        else if (key == "sample_rate") c.sample_rate = detail::parse_integer<int>(key, value);
        else if (key == "test_fraction") c.test_fraction = detail::parse_list(key, value).at(0);
        else if (key == "n_bins") c.n_bins = detail::parse_integer<std::size_t>(key, value);
        else if (key == "seed") c.seed = detail::parse_integer<std::uint64_t>(key, value);
        else if (key == "repeats") c.repeats = detail::parse_integer<int>(key, value);
        else if (key == "grid_search") c.grid_search = detail::parse_bool(key, value);
        else if (key == "cv_folds") c.cv_folds = detail::parse_integer<int>(key, value);
        else if (key == "threads") c.threads = detail::parse_integer<unsigned>(key, value);
        else if (key == "permutation_repeats") c.permutation_repeats = detail::parse_integer<int>(key, value);
        else if (key.rfind("grid.", 0) == 0 && key.size() > 5) c.grid[key.substr(5)] = detail::parse_list(key, value);
        else if (key.rfind("param.", 0) == 0 && key.size() > 6) {
            const auto v = detail::parse_list(key, value);
            if (v.size() != 1) throw Error(ErrorCode::ConfigInvalid, where + key + " takes a single value");
            c.params[key.substr(6)] = v[0];
        } else {
            throw Error(ErrorCode::ConfigInvalid, where + "unknown key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open config " + path.string());
    return parse_config(in, path.parent_path());
}

/// "0.9,0.1;0.7,0.3"
inline std::vector<WeightPair> parse_weight_pairs(const std::string& spec) {
    std::vector<WeightPair> out;
    std::string item;
    auto flush = [&] {
        if (item.find_first_not_of(" \t") == std::string::npos) return;
        const auto v = detail::parse_list("pairs", item);
        if (v.size() != 2) throw Error(ErrorCode::ConfigInvalid, "weight pair '" + item + "' needs two numbers");
        WeightPair w{v[0], v[1]};
        try {
            validate(w);
        } catch (const Error& e) {
            throw Error(ErrorCode::ConfigInvalid, e.what());
        }
        out.push_back(w);
    };
    for (char c : spec) {
        if (c == ';') {
            flush();
            item.clear();
        } else {
            item += c;
        }
    }
    flush();
    if (out.empty()) throw Error(ErrorCode::ConfigInvalid, "no weight pairs given");
    return out;
}

} // namespace capev
