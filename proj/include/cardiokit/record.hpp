#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cardiokit/errors.hpp"

namespace cardiokit {

enum class Segment { Baseline, Anger };

inline const char* segment_name(Segment s) {
    return s == Segment::Baseline ? "baseline" : "anger";
}

inline Segment parse_segment(const std::string& s) {
    if (s == "baseline" || s == "Baseline")
        return Segment::Baseline;
    if (s == "anger" || s == "Anger")
        return Segment::Anger;
    throw parse_error("unknown segment label: " + s);
}

// Shortest round-trip representation; keeps every emitted artifact
// byte-stable across runs.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// One subject-segment recording: simultaneously sampled ECG and ICG.
struct SignalRecord {
    std::string subject_id;
    Segment segment = Segment::Baseline;
    double fs = 0.0;
    std::vector<double> ecg;
    std::vector<double> icg;

    void validate() const {
        if (fs <= 0.0)
            throw data_error("record " + subject_id + ": fs must be positive");
        if (ecg.size() != icg.size())
            throw data_error("record " + subject_id + ": ecg/icg length mismatch");
        if (static_cast<double>(ecg.size()) < 20.0 * fs)
            throw data_error("record " + subject_id + ": shorter than 20 s");
    }

    double duration_s() const {
        return static_cast<double>(ecg.size()) / fs;
    }
};

struct ManifestEntry {
    std::string subject_id;
    Segment segment = Segment::Baseline;
    std::string path;
    double fs = 0.0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    void validate() const {
        std::set<std::pair<std::string, int>> seen;
        for (const auto& e : entries) {
            if (e.fs <= 0.0)
                throw config_error("manifest entry " + e.subject_id + ": fs must be positive");
            if (!seen.insert({e.subject_id, static_cast<int>(e.segment)}).second)
                throw config_error("manifest: duplicate (subject, segment) " + e.subject_id +
                                   "/" + segment_name(e.segment));
        }
    }

    static DatasetManifest from_json_file(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw io_error("cannot open manifest: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw parse_error("manifest " + path + ": " + e.what());
        }
        DatasetManifest m;
        for (const auto& item : j) {
            ManifestEntry e;
            e.subject_id = item.at("subject_id").get<std::string>();
            e.segment = parse_segment(item.at("segment").get<std::string>());
            e.path = item.at("path").get<std::string>();
            e.fs = item.at("fs").get<double>();
            m.entries.push_back(std::move(e));
        }
        m.validate();
        return m;
    }

    void to_json_file(const std::string& path) const {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& e : entries) {
            j.push_back({{"subject_id", e.subject_id},
                         {"segment", segment_name(e.segment)},
                         {"path", e.path},
                         {"fs", e.fs}});
        }
        std::ofstream out(path);
        if (!out)
            throw io_error("cannot write manifest: " + path);
        out << j.dump(2) << "\n";
    }
};

namespace detail {

inline double parse_csv_cell(const std::string& cell, const std::string& path, std::size_t line_no) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    while (first != last && (*first == ' ' || *first == '\t'))
        ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v))
        throw parse_error(path + ": non-numeric cell '" + cell + "' at row " +
                          std::to_string(line_no));
    return v;
}

} // namespace detail

// Reads one two-column `ecg,icg` CSV (one header line). Row numbers in
// errors are 1-based file lines, header included.
inline SignalRecord load_signal_csv(const ManifestEntry& entry) {
    std::ifstream in(entry.path);
    if (!in)
        throw io_error("missing signal file: " + entry.path);

    SignalRecord rec;
    rec.subject_id = entry.subject_id;
    rec.segment = entry.segment;
    rec.fs = entry.fs;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line_no == 1)
            continue; // header
        if (line.empty())
            continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw parse_error(entry.path + ": expected exactly 2 columns at row " +
                              std::to_string(line_no));
        rec.ecg.push_back(detail::parse_csv_cell(line.substr(0, comma), entry.path, line_no));
        rec.icg.push_back(detail::parse_csv_cell(line.substr(comma + 1), entry.path, line_no));
    }
    return rec;
}

inline void write_signal_csv(const SignalRecord& rec, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw io_error("cannot write signal file: " + path);
    out << "ecg,icg\n";
    for (std::size_t i = 0; i < rec.ecg.size(); ++i)
        out << format_double(rec.ecg[i]) << ',' << format_double(rec.icg[i]) << '\n';
}

inline std::vector<SignalRecord> load_dataset(const DatasetManifest& manifest) {
    manifest.validate();
    std::vector<SignalRecord> records;
    records.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        SignalRecord rec = load_signal_csv(e);
        rec.validate();
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace cardiokit
