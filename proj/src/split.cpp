#include "opendx/split.hpp"

#include "opendx/errors.hpp"
#include "opendx/rng.hpp"

namespace opendx {

std::string_view to_string(SettingMode m) noexcept { return m == SettingMode::RealWorld ? "real-world" : "closed"; }

std::string_view to_string(Partition p) noexcept {
    switch (p) {
        case Partition::Train: return "train";
        case Partition::Validation: return "validation";
        case Partition::Test: return "test";
    }
    return "test";
}

std::optional<SettingMode> parse_mode(std::string_view s) noexcept {
    if (s == "real-world") return SettingMode::RealWorld;
    if (s == "closed") return SettingMode::Closed;
    return std::nullopt;
}

std::optional<Partition> parse_partition(std::string_view s) noexcept {
    if (s == "train") return Partition::Train;
    if (s == "validation") return Partition::Validation;
    if (s == "test") return Partition::Test;
    return std::nullopt;
}

std::optional<Partition> SplitSpec::partition_of(const std::string& subject_id) const {
    if (auto it = assignment.find(subject_id); it != assignment.end()) return it->second;
    return std::nullopt;
}

std::size_t SplitSpec::count(Partition p) const {
    std::size_t n = 0;
    for (const auto& [_, part] : assignment) n += part == p;
    return n;
}

Label subject_label(const Subject& subject) {
    Label last = Label::Unlabeled;
    for (const auto& v : subject.visits) {
        if (v.label == Label::MCI || v.label == Label::SMC) return v.label;
        if (v.label != Label::Unlabeled) last = v.label;
    }
    return last;
}

double split_draw(std::uint64_t seed, std::string_view subject_id) noexcept {
    return unit_double(derive_seed(seed, subject_id));
}

SplitSpec split_clinical_aibench(const Cohort& cohort, SettingMode mode, std::uint64_t seed) {
    SplitSpec split;
    split.mode = mode;
    split.seed = seed;

    std::size_t n_ad = 0, n_cn = 0;
    for (const auto& s : cohort.subjects) {
        const Label l = subject_label(s);
        n_ad += l == Label::AD;
        n_cn += l == Label::CN;
    }
    if (mode == SettingMode::RealWorld && ((n_ad == 0) != (n_cn == 0)))
        throw DegenerateSplit(n_ad == 0 ? "cohort has CN subjects but no AD subjects"
                                        : "cohort has AD subjects but no CN subjects");

    for (const auto& s : cohort.subjects) {
        const Label l = subject_label(s);
        if (l == Label::Unlabeled) continue;
        if (!is_known(l)) {
            if (mode == SettingMode::RealWorld) split.assignment.emplace(s.id, Partition::Test);
            continue;
        }
        const double u = split_draw(seed, s.id);
        const Partition p = u < 0.8 ? Partition::Train : (u < 0.85 ? Partition::Validation : Partition::Test);
        split.assignment.emplace(s.id, p);
    }
    return split;
}

}  // namespace opendx
