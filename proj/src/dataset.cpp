#include "wlclean/dataset.hpp"

#include "wlclean/errors.hpp"
#include "io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace wlclean {

using nlohmann::json;

WeakDataset::WeakDataset(std::vector<FaceRecord> records, std::size_t dim)
    : records_(std::move(records)), dim_(dim) {
    if (dim_ == 0) {
        throw DimensionError("feature dimension must be positive");
    }
    index_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.record_id < 0) {
            throw IntegrityError("negative record_id " + std::to_string(r.record_id));
        }
        if (r.features.size() != dim_) {
            throw DimensionError("record " + std::to_string(r.record_id) + " has " +
                                 std::to_string(r.features.size()) + " features, expected " +
                                 std::to_string(dim_));
        }
        for (double v : r.features) {
            if (!std::isfinite(v)) {
                throw IntegrityError("record " + std::to_string(r.record_id) + " has a non-finite feature");
            }
        }
        if (!index_.emplace(r.record_id, i).second) {
            throw IntegrityError("duplicate record_id " + std::to_string(r.record_id));
        }
        groups_[r.weak_label].push_back(r.record_id);
    }
}

const FaceRecord& WeakDataset::at(RecordId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        throw IntegrityError("unknown record_id " + std::to_string(id));
    }
    return records_[it->second];
}

const std::vector<RecordId>& WeakDataset::group(const Label& label) const {
    auto it = groups_.find(label);
    if (it == groups_.end()) {
        throw IntegrityError("unknown label '" + label + "'");
    }
    return it->second;
}

bool WeakDataset::has_truth() const {
    for (const auto& r : records_) {
        if (!r.truth_label) return false;
    }
    return !records_.empty();
}

std::vector<Label> WeakDataset::labels() const {
    std::vector<Label> out;
    out.reserve(groups_.size());
    for (const auto& [label, ids] : groups_) out.push_back(label);
    return out;
}

std::size_t CleanedDataset::kept_count() const {
    std::size_t n = 0;
    for (const auto& [label, ids] : kept) n += ids.size();
    return n;
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".csv") return DatasetFormat::csv;
    if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return DatasetFormat::jsonl;
    throw ConfigError("cannot infer dataset format from '" + path.string() + "'");
}

namespace detail {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    return out;
}

}  // namespace detail

namespace {

using detail::open_input;
using detail::open_output;

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

FaceRecord parse_json_row(const std::string& line, std::size_t lineno) {
    json row;
    try {
        row = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!row.is_object()) throw ParseError("row is not an object", lineno);
    FaceRecord rec;
    try {
        const auto& id = row.at("record_id");
        if (!id.is_number_integer()) throw ParseError("record_id must be an integer", lineno);
        rec.record_id = id.get<RecordId>();
        rec.weak_label = row.at("weak_label").get<std::string>();
        const auto& feats = row.at("features");
        if (!feats.is_array()) throw ParseError("features must be an array", lineno);
        rec.features.reserve(feats.size());
        for (const auto& v : feats) {
            if (!v.is_number()) throw ParseError("non-numeric feature", lineno);
            rec.features.push_back(v.get<double>());
        }
        if (auto it = row.find("truth_label"); it != row.end() && !it->is_null()) {
            rec.truth_label = it->get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ParseError(e.what(), lineno);
    }
    return rec;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        auto start = cell.find_first_not_of(' ');
        cells.push_back(start == std::string::npos ? std::string{} : cell.substr(start));
    }
    return cells;
}

double parse_double(const std::string& s, std::size_t lineno) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ParseError("not a number: '" + s + "'", lineno);
    }
    if (used != s.size()) throw ParseError("not a number: '" + s + "'", lineno);
    return v;
}

// Features are checked per line so the error names the offending line.
void check_row(const FaceRecord& rec, std::optional<std::size_t>& dim, std::size_t lineno) {
    if (!dim) {
        if (rec.features.empty()) throw ParseError("record has no features", lineno);
        dim = rec.features.size();
    } else if (rec.features.size() != *dim) {
        throw DimensionError("line " + std::to_string(lineno) + ": expected " + std::to_string(*dim) +
                             " features, got " + std::to_string(rec.features.size()));
    }
    for (double v : rec.features) {
        if (!std::isfinite(v)) throw ParseError("non-finite feature value", lineno);
    }
}

WeakDataset finish(std::vector<FaceRecord> records, std::optional<std::size_t> dim,
                   const std::filesystem::path& path) {
    if (records.empty()) {
        throw IntegrityError("no records in '" + path.string() + "'");
    }
    return WeakDataset(std::move(records), *dim);
}

WeakDataset load_jsonl(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<FaceRecord> records;
    std::optional<std::size_t> dim;
    std::unordered_map<RecordId, std::size_t> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        auto rec = parse_json_row(line, lineno);
        check_row(rec, dim, lineno);
        if (auto [it, fresh] = seen.emplace(rec.record_id, lineno); !fresh) {
            throw IntegrityError("line " + std::to_string(lineno) + ": duplicate record_id " +
                                 std::to_string(rec.record_id) + " (first on line " +
                                 std::to_string(it->second) + ")");
        }
        records.push_back(std::move(rec));
    }
    return finish(std::move(records), dim, path);
}

WeakDataset load_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++lineno;
        if (!blank(line)) header = split_csv(line);
    }
    if (header.empty()) {
        throw IntegrityError("no records in '" + path.string() + "'");
    }
    if (header.size() < 3 || header[0] != "record_id" || header[1] != "weak_label") {
        throw ParseError("CSV header must start with record_id,weak_label", lineno);
    }
    const bool has_truth = header[2] == "truth_label";
    const std::size_t first_feature = has_truth ? 3 : 2;
    if (header.size() <= first_feature) throw ParseError("CSV header has no feature columns", lineno);

    std::vector<FaceRecord> records;
    std::optional<std::size_t> dim = header.size() - first_feature;
    std::unordered_map<RecordId, std::size_t> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        auto cells = split_csv(line);
        if (cells.size() < first_feature + 1) throw ParseError("too few columns", lineno);
        FaceRecord rec;
        try {
            std::size_t used = 0;
            rec.record_id = std::stoll(cells[0], &used);
            if (used != cells[0].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError("bad record_id '" + cells[0] + "'", lineno);
        }
        rec.weak_label = cells[1];
        if (has_truth && !cells[2].empty()) rec.truth_label = cells[2];
        for (std::size_t c = first_feature; c < cells.size(); ++c) {
            rec.features.push_back(parse_double(cells[c], lineno));
        }
        check_row(rec, dim, lineno);
        if (auto [it, fresh] = seen.emplace(rec.record_id, lineno); !fresh) {
            throw IntegrityError("line " + std::to_string(lineno) + ": duplicate record_id " +
                                 std::to_string(rec.record_id));
        }
        records.push_back(std::move(rec));
    }
    return finish(std::move(records), dim, path);
}

}  // namespace

WeakDataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
    return format == DatasetFormat::csv ? load_csv(path) : load_jsonl(path);
}

WeakDataset load_dataset(const std::filesystem::path& path) {
    return load_dataset(path, format_from_path(path));
}

void save_dataset(const WeakDataset& ds, const std::filesystem::path& path) {
    auto out = open_output(path);
    for (const auto& r : ds.records()) {
        json row;
        row["record_id"] = r.record_id;
        row["weak_label"] = r.weak_label;
        row["features"] = r.features;
        row["truth_label"] = r.truth_label ? json(*r.truth_label) : json(nullptr);
        out << row.dump() << '\n';
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void save_cleaned(const CleanedDataset& ds, const std::filesystem::path& path) {
    auto out = open_output(path);
    for (const auto& [label, ids] : ds.kept) {
        for (RecordId id : ids) {
            json row;
            row["weak_label"] = label;
            row["record_id"] = id;
            row["iteration"] = ds.iteration;
            out << row.dump() << '\n';
        }
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

CleanedDataset load_cleaned(const std::filesystem::path& path) {
    auto in = open_input(path);
    CleanedDataset ds;
    ds.threshold_used = std::numeric_limits<double>::quiet_NaN();
    std::optional<int> iteration;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        try {
            auto row = json::parse(line);
            auto label = row.at("weak_label").get<std::string>();
            auto id = row.at("record_id").get<RecordId>();
            auto it = row.at("iteration").get<int>();
            if (iteration && *iteration != it) {
                throw ParseError("mixed iterations in one cleaned file", lineno);
            }
            iteration = it;
            if (!ds.kept[label].insert(id).second) {
                throw IntegrityError("line " + std::to_string(lineno) + ": duplicate kept record " +
                                     std::to_string(id));
            }
        } catch (const json::exception& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    ds.iteration = iteration.value_or(0);
    return ds;
}

std::pair<WeakDataset, WeakDataset> holdout_split(const WeakDataset& ds, const std::set<Label>& labels) {
    for (const auto& label : labels) {
        if (!ds.groups().count(label)) {
            throw IntegrityError("holdout label '" + label + "' not in dataset");
        }
    }
    std::vector<FaceRecord> train;
    std::vector<FaceRecord> eval;
    for (const auto& r : ds.records()) {
        (labels.count(r.weak_label) ? eval : train).push_back(r);
    }
    return {WeakDataset(std::move(train), ds.dim()), WeakDataset(std::move(eval), ds.dim())};
}

std::set<Label> holdout_labels(const WeakDataset& ds, std::size_t count, std::uint64_t seed) {
    auto labels = ds.labels();
    if (count > labels.size()) {
        throw ConfigError("cannot hold out " + std::to_string(count) + " of " + std::to_string(labels.size()) +
                          " labels");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(labels.begin(), labels.end(), rng);
    return {labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(count)};
}

WeakDataset restrict_to(const WeakDataset& ds, const CleanedDataset& cleaned) {
    std::vector<FaceRecord> out;
    out.reserve(cleaned.kept_count());
    for (const auto& r : ds.records()) {
        auto it = cleaned.kept.find(r.weak_label);
        if (it != cleaned.kept.end() && it->second.count(r.record_id)) out.push_back(r);
    }
    if (out.size() != cleaned.kept_count()) {
        throw IntegrityError("cleaned set references records outside the dataset");
    }
    return WeakDataset(std::move(out), ds.dim());
}

WeakDataset drop_small_groups(const WeakDataset& ds, std::size_t min_size) {
    std::vector<FaceRecord> out;
    for (const auto& r : ds.records()) {
        if (ds.group(r.weak_label).size() >= min_size) out.push_back(r);
    }
    return WeakDataset(std::move(out), ds.dim());
}

}  // namespace wlclean
