// Copyright 2026 The twpa-corr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Run artifacts: CSV tables and JSON summaries. Every file starts with the
// tool version, the config hash and the master seed; numbers are printed
// with 9 significant digits so reruns are byte-identical.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "twpa/version.hpp"

namespace twpa::cli {

/// %.9g, with "nan" / "inf" / "-inf" spelled out.
inline std::string fmt9(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

/// 64-bit FNV-1a.
inline uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Provenance stamped into every artifact of one run.
struct RunStamp {
    std::string config_hash;
    uint64_t seed = 0;
};

inline RunStamp make_stamp(const nlohmann::json &canonical, uint64_t seed) {
    return {hex64(fnv1a64(canonical.dump())), seed};
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path &path, const RunStamp &stamp, std::initializer_list<std::string_view> columns)
        : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        out_ << "# " << kToolVersionLine << "\n";
        out_ << "# config_hash=" << stamp.config_hash << "\n";
        out_ << "# seed=" << stamp.seed << "\n";
        bool first = true;
        for (auto c : columns) {
            out_ << (first ? "" : ",") << c;
            first = false;
        }
        out_ << "\n";
        width_ = columns.size();
    }

    /// One row; each cell is already formatted.
    void row(const std::vector<std::string> &cells) {
        if (cells.size() != width_) throw std::logic_error("CsvWriter: row width mismatch");
        for (std::size_t k = 0; k < cells.size(); ++k) out_ << (k ? "," : "") << cells[k];
        out_ << "\n";
    }

private:
    std::ofstream out_;
    std::size_t width_ = 0;
};

/// Rounds every floating-point leaf to 9 significant digits so the dump is
/// stable; non-finite values become strings.
inline nlohmann::json stable_numbers(const nlohmann::json &j) {
    if (j.is_number_float()) {
        const double v = j.get<double>();
        if (!std::isfinite(v)) return fmt9(v);
        return std::stod(fmt9(v));
    }
    if (j.is_object() || j.is_array()) {
        nlohmann::json out = j;
        for (auto it = out.begin(); it != out.end(); ++it) *it = stable_numbers(*it);
        return out;
    }
    return j;
}

inline void write_json(const std::filesystem::path &path, const RunStamp &stamp, nlohmann::json body) {
    body["tool_version"] = kToolVersionLine;
    body["config_hash"] = stamp.config_hash;
    body["seed"] = stamp.seed;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << stable_numbers(body).dump(2) << "\n";
}

}  // namespace twpa::cli
