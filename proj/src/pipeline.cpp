#include "opendx/pipeline.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <map>
#include <string>

#include "opendx/cohort_io.hpp"
#include "opendx/errors.hpp"
#include "opendx/rng.hpp"

namespace opendx {

namespace {

std::string visit_tag(const std::string& prefix, const std::string& subject, int visit) {
    return prefix + ":" + subject + ":" + std::to_string(visit);
}

std::array<double, 2> one_hot(KnownClass c) {
    return c == KnownClass::AD ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
}

// Calls fn(subject, position, class) for every known-label Train visit.
template <class Fn>
void for_each_training_visit(const Cohort& cohort, const SplitSpec& split, bool first_visit_only, Fn&& fn) {
    for (const auto& subject : cohort.subjects) {
        if (split.partition_of(subject.id) != Partition::Train) continue;
        for (std::size_t v = 0; v < subject.visits.size(); ++v) {
            const auto& visit = subject.visits[v];
            const auto cls = known_class_of(visit.label);
            if (!cls) continue;
            if (first_visit_only && visit.visit_index != 0) continue;
            fn(subject, v, *cls);
        }
    }
}

std::span<const VisitRecord> history_of(const Subject& s, std::size_t position) {
    return {s.visits.data(), position};
}

TrainConfig variant_config(const TrainConfig& c) {
    TrainConfig v = c;
    v.seed = derive_seed(c.seed, "first-visit");
    return v;
}

}  // namespace

void write_labeled(std::ostream& out, const std::vector<LabeledStrategy>& labels) {
    for (const auto& l : labels) {
        auto j = label_record_to_json(l.record);
        j["model"] = l.role == ModelRole::Main ? "main" : "first_visit";
        out << j.dump() << '\n';
    }
}

std::vector<LabeledStrategy> read_labeled(std::istream& in) {
    std::vector<LabeledStrategy> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const std::string role = j.value("model", "main");
            if (role != "main" && role != "first_visit") throw ParseError(n, "model must be main or first_visit");
            out.push_back({role == "main" ? ModelRole::Main : ModelRole::FirstVisit, label_record_from_json(j)});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(n, e.what());
        } catch (const SchemaError& e) {
            throw ParseError(n, e.what());
        }
    }
    return out;
}

std::vector<StrategyMask> sample_strategies(const std::vector<StrategyMask>& canonical, std::size_t cap,
                                            std::uint64_t seed) {
    if (cap == 0 || canonical.size() <= cap) return canonical;
    if (cap == 1) return {canonical.back()};
    std::vector<std::size_t> middle(canonical.size() - 2);
    for (std::size_t i = 0; i < middle.size(); ++i) middle[i] = i + 1;
    Rng rng(seed);
    const std::size_t take = cap - 2;
    for (std::size_t i = 0; i < take; ++i) std::swap(middle[i], middle[i + uniform_index(rng, middle.size() - i)]);
    middle.resize(take);
    middle.push_back(0);
    middle.push_back(canonical.size() - 1);
    std::sort(middle.begin(), middle.end());
    std::vector<StrategyMask> out;
    out.reserve(middle.size());
    for (auto i : middle) out.push_back(canonical[i]);
    return out;
}

std::vector<PooledExample> build_stage1_examples(const Cohort& cohort, const SplitSpec& split,
                                                 const TrainConfig& config, bool first_visit_only) {
    std::vector<PooledExample> out;
    for_each_training_visit(cohort, split, first_visit_only, [&](const Subject& s, std::size_t v, KnownClass cls) {
        const auto& visit = s.visits[v];
        const auto masks =
            sample_strategies(enumerate_strategies(visit), config.strategies_per_visit,
                              derive_seed(config.seed, visit_tag("strategies", s.id, visit.visit_index)));
        for (auto mask : masks) {
            const auto seq = build_feature_sequence(history_of(s, v), visit, mask);
            out.push_back({pool_sequence(seq, cohort.width), cls, std::nullopt, visit.visit_index});
        }
    });
    return out;
}

std::vector<ExamLabelRecord> label_training_visits(const BackboneModel& model, const Cohort& cohort,
                                                   const SplitSpec& split, bool first_visit_only) {
    std::vector<ExamLabelRecord> out;
    for_each_training_visit(cohort, split, first_visit_only, [&](const Subject& s, std::size_t v, KnownClass cls) {
        const auto& visit = s.visits[v];
        std::vector<StrategyPrediction> preds;
        for (auto mask : enumerate_strategies(visit)) {
            const auto f = forward(model, build_feature_sequence(history_of(s, v), visit, mask));
            preds.push_back({mask, one_hot(cls), f.class_probs});
        }
        std::vector<ExamLabelRecord> records;
        for (const auto& [bits, targets] : label_next_examinations(std::move(preds)))
            records.push_back({s.id, visit.visit_index, StrategyMask(bits), targets});
        std::sort(records.begin(), records.end(), [](const ExamLabelRecord& a, const ExamLabelRecord& b) {
            return CategorySet::canonical_less(a.mask, b.mask);
        });
        out.insert(out.end(), records.begin(), records.end());
    });
    return out;
}

std::vector<PooledExample> build_stage2_examples(const Cohort& cohort, const std::vector<ExamLabelRecord>& labels,
                                                 const TrainConfig& config) {
    std::map<std::string, const Subject*> by_id;
    for (const auto& s : cohort.subjects) by_id[s.id] = &s;

    // Group records of one visit, keeping first-seen order of visits.
    std::vector<std::pair<std::pair<std::string, int>, std::vector<const ExamLabelRecord*>>> groups;
    std::map<std::pair<std::string, int>, std::size_t> slot;
    for (const auto& r : labels) {
        const auto key = std::make_pair(r.subject_id, r.visit_index);
        auto [it, inserted] = slot.try_emplace(key, groups.size());
        if (inserted) groups.push_back({key, {}});
        groups[it->second].second.push_back(&r);
    }

    std::vector<PooledExample> out;
    for (auto& [key, records] : groups) {
        const auto sit = by_id.find(key.first);
        if (sit == by_id.end()) throw SchemaError("label record for unknown subject " + key.first);
        const Subject& s = *sit->second;
        const auto vit = std::find_if(s.visits.begin(), s.visits.end(),
                                      [&](const VisitRecord& v) { return v.visit_index == key.second; });
        if (vit == s.visits.end())
            throw SchemaError("label record for unknown visit " + key.first + "#" + std::to_string(key.second));
        const auto cls = known_class_of(vit->label);
        if (!cls) throw SchemaError("label record for a visit without a known label");
        const auto position = static_cast<std::size_t>(vit - s.visits.begin());

        std::sort(records.begin(), records.end(),
                  [](const auto* a, const auto* b) { return CategorySet::canonical_less(a->mask, b->mask); });
        std::vector<StrategyMask> masks;
        std::map<std::uint16_t, const ExamLabelRecord*> by_mask;
        for (const auto* r : records) {
            masks.push_back(r->mask);
            by_mask[r->mask.bits()] = r;
        }
        for (auto mask : sample_strategies(masks, config.labeled_per_visit,
                                           derive_seed(config.seed, visit_tag("labeled", s.id, key.second)))) {
            const auto seq = build_feature_sequence(history_of(s, position), *vit, mask);
            out.push_back({pool_sequence(seq, cohort.width), *cls, by_mask.at(mask.bits())->targets, key.second});
        }
    }
    return out;
}

ModelBundle train_stage1_bundle(const Cohort& cohort, const SplitSpec& split, const TrainConfig& config,
                                bool first_visit_variant, const EpochObserver& observer) {
    ModelBundle bundle{train_stage1(build_stage1_examples(cohort, split, config), config, cohort.width, observer),
                       std::nullopt, nlohmann::json::object()};
    if (first_visit_variant) {
        const TrainConfig vc = variant_config(config);
        const auto first = build_stage1_examples(cohort, split, vc, true);
        if (first.empty()) throw EmptyDataset("no first-visit training examples");
        bundle.first_visit = train_stage1(first, vc, cohort.width, observer);
    }
    bundle.config_echo = {{"train", train_config_to_json(config)}, {"first_visit_variant", first_visit_variant}};
    return bundle;
}

std::vector<LabeledStrategy> label_bundle(const ModelBundle& bundle, const Cohort& cohort, const SplitSpec& split) {
    std::vector<LabeledStrategy> out;
    for (auto& r : label_training_visits(bundle.main, cohort, split)) out.push_back({ModelRole::Main, std::move(r)});
    if (bundle.first_visit)
        for (auto& r : label_training_visits(*bundle.first_visit, cohort, split, true))
            out.push_back({ModelRole::FirstVisit, std::move(r)});
    return out;
}

ModelBundle train_stage2_bundle(ModelBundle bundle, const Cohort& cohort, const std::vector<LabeledStrategy>& labels,
                                const TrainConfig& config, const EpochObserver& observer) {
    std::vector<ExamLabelRecord> main, first;
    for (const auto& l : labels) (l.role == ModelRole::Main ? main : first).push_back(l.record);
    bundle.main = train_stage2(std::move(bundle.main), build_stage2_examples(cohort, main, config), config, observer);
    if (bundle.first_visit) {
        if (first.empty()) throw EmptyDataset("no first-visit exam labels");
        const TrainConfig vc = variant_config(config);
        bundle.first_visit =
            train_stage2(std::move(*bundle.first_visit), build_stage2_examples(cohort, first, vc), vc, observer);
    }
    return bundle;
}

TrainOutcome train_system(const Cohort& cohort, const SplitSpec& split, const TrainConfig& config,
                          bool first_visit_variant, const EpochObserver& observer) {
    config.validate();
    TrainOutcome out;
    out.bundle = train_stage1_bundle(cohort, split, config, first_visit_variant, observer);
    out.labels = label_bundle(out.bundle, cohort, split);
    out.bundle = train_stage2_bundle(std::move(out.bundle), cohort, out.labels, config, observer);
    return out;
}

std::array<std::vector<AbnormalPattern>, 2> correct_training_patterns(const ModelBundle& bundle, const Cohort& cohort,
                                                                     const SplitSpec& split,
                                                                     const IndicatorTable& table) {
    std::array<std::vector<AbnormalPattern>, 2> out;
    for_each_training_visit(cohort, split, false, [&](const Subject& s, std::size_t v, KnownClass cls) {
        const auto& visit = s.visits[v];
        const auto f = forward(bundle.route(visit.visit_index),
                               build_feature_sequence(history_of(s, v), visit, visit.present()));
        const auto c = static_cast<std::size_t>(cls);
        if (f.class_probs[c] > f.class_probs[1 - c]) out[c].push_back(extract_abnormal_pattern(visit, table));
    });
    return out;
}

OpenMaxModel fit_openmax_for(const ModelBundle& bundle, const Cohort& cohort, const SplitSpec& split,
                             const IndicatorTable& table, const OpenMaxOptions& options) {
    return fit_openmax(correct_training_patterns(bundle, cohort, split, table), options);
}

void PipelineConfig::validate() const {
    cohort.validate();
    train.validate();
    openmax.validate();
    policy.thresholds.validate();
    evaluation.validate();
    if (cohort.width == 0) throw ConfigError("cohort width must be >= 1");
}

nlohmann::json evaluation_options_to_json(const EvaluationOptions& o) {
    nlohmann::json j{{"seed", o.seed},
                     {"capability_prob", o.capability_prob},
                     {"capability", nullptr},
                     {"bootstrap_samples", o.bootstrap.n_sample},
                     {"bootstrap_trials", o.bootstrap.n_trials},
                     {"threads", o.threads}};
    if (o.capability) j["capability"] = category_names(*o.capability);
    return j;
}

EvaluationOptions evaluation_options_from_json(const nlohmann::json& j) {
    EvaluationOptions o;
    o.seed = j.value("seed", o.seed);
    o.capability_prob = j.value("capability_prob", o.capability_prob);
    if (auto it = j.find("capability"); it != j.end() && !it->is_null()) {
        InstitutionCapability cap;
        for (const auto& name : *it) {
            const auto c = parse_category(name.get<std::string>());
            if (!c) throw ConfigError("unknown category in capability: " + name.dump());
            cap.insert(*c);
        }
        o.capability = cap;
    }
    o.bootstrap.n_sample = j.value("bootstrap_samples", o.bootstrap.n_sample);
    o.bootstrap.n_trials = j.value("bootstrap_trials", o.bootstrap.n_trials);
    o.threads = j.value("threads", o.threads);
    return o;
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
    return {{"cohort", cohort_config_to_json(c.cohort)},
            {"split", {{"mode", std::string(to_string(c.mode))}, {"seed", c.split_seed}}},
            {"train", train_config_to_json(c.train)},
            {"first_visit_variant", c.first_visit_variant},
            {"openmax", openmax_options_to_json(c.openmax)},
            {"policy", policy_config_to_json(c.policy)},
            {"evaluation", evaluation_options_to_json(c.evaluation)}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    PipelineConfig c;
    try {
        if (auto it = j.find("cohort"); it != j.end()) c.cohort = cohort_config_from_json(*it);
        if (auto it = j.find("split"); it != j.end()) {
            if (auto m = it->find("mode"); m != it->end()) {
                const auto mode = parse_mode(m->get<std::string>());
                if (!mode) throw ConfigError("split.mode must be real-world or closed");
                c.mode = *mode;
            }
            c.split_seed = it->value("seed", c.split_seed);
        }
        if (auto it = j.find("train"); it != j.end()) c.train = train_config_from_json(*it);
        c.first_visit_variant = j.value("first_visit_variant", c.first_visit_variant);
        if (auto it = j.find("openmax"); it != j.end()) c.openmax = openmax_options_from_json(*it);
        if (auto it = j.find("policy"); it != j.end()) c.policy = policy_config_from_json(*it);
        if (auto it = j.find("evaluation"); it != j.end()) c.evaluation = evaluation_options_from_json(*it);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("configuration: ") + e.what());
    }
    c.evaluation.mode = c.mode;
    c.validate();
    return c;
}

void reseed(PipelineConfig& c, std::uint64_t seed) {
    c.cohort.seed = derive_seed(seed, "cohort");
    c.split_seed = derive_seed(seed, "split");
    c.train.seed = derive_seed(seed, "train");
    c.openmax.seed = derive_seed(seed, "openmax");
    c.evaluation.seed = derive_seed(seed, "evaluation");
}

PipelineResult run_pipeline(const PipelineConfig& config, const IndicatorTable& table, const EpochObserver& observer) {
    config.validate();
    PipelineResult r;
    r.cohort = generate_cohort(config.cohort, table);
    r.split = split_clinical_aibench(r.cohort, config.mode, config.split_seed);
    r.bundle = train_system(r.cohort, r.split, config.train, config.first_visit_variant, observer).bundle;
    r.openmax = fit_openmax_for(r.bundle, r.cohort, r.split, table, config.openmax);
    const OpenSetModel model(r.bundle, r.openmax, table);
    const PolicyEngine engine(model, config.policy, table);
    EvaluationOptions eval = config.evaluation;
    eval.mode = config.mode;
    r.report = evaluate_system(r.split, r.cohort, engine, eval);
    return r;
}

}  // namespace opendx
