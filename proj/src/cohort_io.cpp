#include "opendx/cohort_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "opendx/errors.hpp"

namespace opendx {

using nlohmann::json;

nlohmann::json visit_to_json(const VisitRecord& v) {
    json j;
    j["subject_id"] = v.subject_id;
    j["visit_index"] = v.visit_index;
    j["label"] = v.label == Label::Unlabeled ? json(nullptr) : json(std::string(to_string(v.label)));
    json blocks = json::object();
    for (const auto& [c, b] : v.blocks) blocks[std::string(to_string(c))] = b;
    j["blocks"] = std::move(blocks);
    json ind = json::object();
    for (const auto& [k, x] : v.indicators) ind[k] = x;
    j["indicators"] = std::move(ind);
    return j;
}

VisitRecord visit_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("visit record must be a JSON object");
    VisitRecord v;
    v.subject_id = j.at("subject_id").get<std::string>();
    v.visit_index = j.at("visit_index").get<int>();
    if (v.visit_index < 0) throw SchemaError("visit_index must be non-negative");
    const auto& label = j.at("label");
    if (label.is_null()) {
        v.label = Label::Unlabeled;
    } else {
        auto parsed = parse_label(label.get<std::string>());
        if (!parsed || *parsed == Label::Unlabeled)
            throw SchemaError("unknown label '" + label.get<std::string>() + "'");
        v.label = *parsed;
    }
    for (const auto& [name, arr] : j.at("blocks").items()) {
        auto c = parse_category(name);
        if (!c) throw SchemaError("unknown examination category '" + name + "'");
        v.blocks.emplace(*c, arr.get<Block>());
    }
    if (auto it = j.find("indicators"); it != j.end())
        for (const auto& [name, x] : it->items()) v.indicators.emplace(name, x.get<double>());
    return v;
}

Cohort read_cohort(std::istream& in, std::optional<std::size_t> expected_width) {
    Cohort cohort;
    std::unordered_map<std::string, std::size_t> slot;
    std::optional<std::size_t> width = expected_width;

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        VisitRecord v;
        try {
            v = visit_from_json(json::parse(line));
        } catch (const json::exception& e) {
            throw ParseError(lineno, e.what());
        } catch (const SchemaError& e) {
            throw ParseError(lineno, e.what());
        }
        for (const auto& [c, b] : v.blocks) {
            if (!width) width = b.size();
            if (b.size() != *width)
                throw SchemaError("line " + std::to_string(lineno) + ": " + std::string(to_string(c)) +
                                  " block has width " + std::to_string(b.size()) + ", expected " +
                                  std::to_string(*width));
        }
        auto [it, inserted] = slot.emplace(v.subject_id, cohort.subjects.size());
        if (inserted) cohort.subjects.push_back(Subject{v.subject_id, {}});
        cohort.subjects[it->second].visits.push_back(std::move(v));
    }
    cohort.width = width.value_or(0);
    for (auto& s : cohort.subjects)
        std::stable_sort(s.visits.begin(), s.visits.end(),
                         [](const VisitRecord& a, const VisitRecord& b) { return a.visit_index < b.visit_index; });
    validate(cohort);
    return cohort;
}

Cohort load_cohort(const std::filesystem::path& path, std::optional<std::size_t> expected_width) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open cohort file " + path.string());
    return read_cohort(in, expected_width);
}

void write_cohort(std::ostream& out, const Cohort& cohort) {
    for (const auto& s : cohort.subjects)
        for (const auto& v : s.visits) out << visit_to_json(v).dump() << '\n';
}

void save_cohort(const std::filesystem::path& path, const Cohort& cohort) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write cohort file " + path.string());
    write_cohort(out, cohort);
}

json indicator_table_to_json(const IndicatorTable& t) {
    json arr = json::array();
    for (const auto& r : t.rows())
        arr.push_back({{"name", r.name},
                       {"ad_low", r.ad_low},
                       {"ad_high", r.ad_high},
                       {"cn_low", r.cn_low},
                       {"cn_high", r.cn_high},
                       {"source", std::string(to_string(r.source))}});
    return arr;
}

IndicatorTable indicator_table_from_json(const json& j) {
    if (!j.is_array()) throw SchemaError("indicator table must be a JSON array");
    std::vector<IndicatorRange> rows;
    for (const auto& e : j) {
        IndicatorRange r;
        r.name = e.at("name").get<std::string>();
        r.ad_low = e.at("ad_low").get<double>();
        r.ad_high = e.at("ad_high").get<double>();
        r.cn_low = e.at("cn_low").get<double>();
        r.cn_high = e.at("cn_high").get<double>();
        if (auto it = e.find("source"); it != e.end()) {
            auto c = parse_category(it->get<std::string>());
            if (!c) throw SchemaError("indicator '" + r.name + "' has unknown source category");
            r.source = *c;
        }
        rows.push_back(std::move(r));
    }
    return IndicatorTable(std::move(rows));
}

IndicatorTable load_indicator_table(const std::filesystem::path& path) {
    return indicator_table_from_json(read_json_file(path));
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}
}  // namespace

IndicatorSheet read_indicator_csv(std::istream& in, const IndicatorTable& table) {
    IndicatorSheet sheet;
    std::string line;
    if (!std::getline(in, line)) return sheet;
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "subject_id" || header[1] != "visit_index")
        throw ParseError(1, "header must start with subject_id,visit_index");
    for (std::size_t i = 2; i < header.size(); ++i)
        if (!table.find(header[i])) throw SchemaError("unknown indicator column '" + header[i] + "'");

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(lineno, "expected " + std::to_string(header.size()) + " cells");
        std::map<std::string, double> values;
        int visit = 0;
        try {
            visit = std::stoi(cells[1]);
            for (std::size_t i = 2; i < cells.size(); ++i)
                if (!cells[i].empty()) values.emplace(header[i], std::stod(cells[i]));
        } catch (const std::exception&) {
            throw ParseError(lineno, "non-numeric cell");
        }
        sheet[{cells[0], visit}] = std::move(values);
    }
    return sheet;
}

void merge_indicators(Cohort& cohort, const IndicatorSheet& sheet) {
    for (auto& s : cohort.subjects)
        for (auto& v : s.visits)
            if (auto it = sheet.find({s.id, v.visit_index}); it != sheet.end()) v.indicators = it->second;
}

json split_to_json(const SplitSpec& s) {
    json assign = json::object();
    for (const auto& [id, p] : s.assignment) assign[id] = std::string(to_string(p));
    return {{"mode", std::string(to_string(s.mode))}, {"seed", s.seed}, {"assignment", std::move(assign)}};
}

SplitSpec split_from_json(const json& j) {
    SplitSpec s;
    auto mode = parse_mode(j.at("mode").get<std::string>());
    if (!mode) throw SchemaError("unknown split mode");
    s.mode = *mode;
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& [id, p] : j.at("assignment").items()) {
        auto part = parse_partition(p.get<std::string>());
        if (!part) throw SchemaError("unknown partition for subject '" + id + "'");
        s.assignment.emplace(id, *part);
    }
    return s;
}

json cohort_config_to_json(const CohortConfig& c) {
    json miss = json::object();
    for (auto cat : kAllCategories) miss[std::string(to_string(cat))] = c.missingness[index_of(cat)];
    return {
        {"n_subjects", {{"AD", c.n_subjects.ad}, {"CN", c.n_subjects.cn}, {"MCI", c.n_subjects.mci}, {"SMC", c.n_subjects.smc}}},
        {"width", c.width},
        {"separation", c.separation},
        {"block_noise", c.block_noise},
        {"missingness", std::move(miss)},
        {"max_visits", c.max_visits},
        {"indicator_in_range_prob", c.indicator_in_range_prob},
        {"indicator_missing_prob", c.indicator_missing_prob},
        {"mci_between_prob", c.mci_between_prob},
        {"smc_between_prob", c.smc_between_prob},
        {"seed", c.seed},
    };
}

CohortConfig cohort_config_from_json(const json& j) {
    CohortConfig c;
    if (auto it = j.find("n_subjects"); it != j.end()) {
        c.n_subjects.ad = it->value("AD", c.n_subjects.ad);
        c.n_subjects.cn = it->value("CN", c.n_subjects.cn);
        c.n_subjects.mci = it->value("MCI", c.n_subjects.mci);
        c.n_subjects.smc = it->value("SMC", c.n_subjects.smc);
    }
    c.width = j.value("width", c.width);
    c.separation = j.value("separation", c.separation);
    c.block_noise = j.value("block_noise", c.block_noise);
    if (auto it = j.find("missingness"); it != j.end()) {
        if (it->is_number()) {
            c.missingness = CohortConfig::filled(it->get<double>());
        } else {
            for (const auto& [name, p] : it->items()) {
                auto cat = parse_category(name);
                if (!cat) throw ConfigError("unknown category '" + name + "' in missingness");
                c.missingness[index_of(*cat)] = p.get<double>();
            }
        }
    }
    c.max_visits = j.value("max_visits", c.max_visits);
    c.indicator_in_range_prob = j.value("indicator_in_range_prob", c.indicator_in_range_prob);
    c.indicator_missing_prob = j.value("indicator_missing_prob", c.indicator_missing_prob);
    c.mci_between_prob = j.value("mci_between_prob", c.mci_between_prob);
    c.smc_between_prob = j.value("smc_between_prob", c.smc_between_prob);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(0, path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace opendx
