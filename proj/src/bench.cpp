#include "opendx/bench.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "opendx/errors.hpp"
#include "opendx/rng.hpp"

namespace opendx {

double roc_auc(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) throw ShapeError("roc_auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            if (positive[order[k]]) {
                rank_sum += avg_rank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("AUC needs both classes");
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

std::optional<Outcome> outcome_of(Label l) noexcept {
    switch (l) {
        case Label::AD: return Outcome::AD;
        case Label::CN: return Outcome::CN;
        case Label::MCI:
        case Label::SMC: return Outcome::Unknown;
        case Label::Unlabeled: return std::nullopt;
    }
    return std::nullopt;
}

double sensitivity(std::span<const OutcomeCase> cases, Outcome c, const OutcomeThresholds& delta) {
    std::size_t total = 0, hit = 0;
    for (const auto& k : cases) {
        if (k.truth != c) continue;
        ++total;
        if (decide_outcome(k.probs, delta) == c) ++hit;
    }
    if (total == 0) throw UndefinedMetric(std::string("no ") + std::string(to_string(c)) + " cases");
    return static_cast<double>(hit) / static_cast<double>(total);
}

std::array<std::optional<double>, kNumOutcomes> sensitivities_at_operating_point(std::span<const OutcomeCase> cases,
                                                                                const OutcomeThresholds& delta) {
    std::array<std::optional<double>, kNumOutcomes> out;
    for (Outcome c : {Outcome::Unknown, Outcome::AD, Outcome::CN}) {
        try {
            out[static_cast<std::size_t>(c)] = sensitivity(cases, c, delta);
        } catch (const UndefinedMetric&) {
        }
    }
    return out;
}

Interval bootstrap_ci(const ResampleMetric& metric, std::size_t n_cases, const BootstrapOptions& options) {
    if (n_cases == 0) throw EmptyDataset("bootstrap over no cases");
    if (options.n_sample == 0 || options.n_trials == 0) throw ConfigError("bootstrap sizes must be >= 1");
    std::vector<double> values;
    values.reserve(options.n_trials);
    std::vector<std::size_t> idx(options.n_sample);
    std::size_t skipped = 0;
    for (std::size_t t = 0; t < options.n_trials; ++t) {
        Rng rng(derive_seed(options.seed, t));
        for (auto& i : idx) i = uniform_index(rng, n_cases);
        try {
            values.push_back(metric(idx));
        } catch (const UndefinedMetric&) {
            ++skipped;
        }
    }
    if (static_cast<double>(skipped) > options.max_skip_fraction * static_cast<double>(options.n_trials))
        throw UnstableMetric(std::to_string(skipped) + " of " + std::to_string(options.n_trials) +
                             " bootstrap trials were undefined");
    Interval out;
    out.lo = nearest_rank_quantile(values, 0.025);
    out.hi = nearest_rank_quantile(values, 0.975);
    out.skipped = skipped;
    return out;
}

void EvaluationOptions::validate() const {
    if (!(capability_prob >= 0 && capability_prob <= 1)) throw ConfigError("capability_prob must lie in [0, 1]");
    if (capability && !capability->contains(ExamCategory::Base))
        throw InvalidCapability("fixed capability must include Base");
    if (threads == 0) throw ConfigError("threads must be >= 1");
}

InstitutionCapability sample_capability(std::uint64_t seed, const std::string& subject_id, int visit_index,
                                        double prob) {
    Rng rng(derive_seed(derive_seed(seed, "capability:" + subject_id), static_cast<std::uint64_t>(visit_index)));
    InstitutionCapability cap{ExamCategory::Base};
    for (std::size_t i = 1; i < kNumCategories; ++i)
        if (uniform01(rng) < prob) cap.insert(category_at(i));
    return cap;
}

SessionTrace replay_visit(const PolicyEngine& engine, const Subject& subject, std::size_t visit_position,
                          const InstitutionCapability& capability) {
    const VisitRecord& visit = subject.visits.at(visit_position);
    const auto base = visit.blocks.find(ExamCategory::Base);
    if (base == visit.blocks.end()) throw InvalidVisit("visit without a Base block");

    SessionStart start;
    start.session_id = subject.id + "#" + std::to_string(visit.visit_index);
    start.history.assign(subject.visits.begin(), subject.visits.begin() + static_cast<std::ptrdiff_t>(visit_position));
    start.visit_index = visit.visit_index;
    start.base_block = base->second;
    start.indicators = visit.indicators;
    start.capability = capability;
    SessionState s = engine.start_session(std::move(start));
    s.current.subject_id = subject.id;

    while (!s.terminal()) {
        SessionEvent e;
        e.category = *s.pending;
        if (const auto it = visit.blocks.find(e.category); it != visit.blocks.end()) {
            e.type = SessionEvent::Type::ExamResult;
            e.block = it->second;
        } else {
            e.type = SessionEvent::Type::ExamUnavailable;
        }
        engine.step(s, e);
    }

    SessionTrace t;
    t.subject_id = subject.id;
    t.visit_index = visit.visit_index;
    t.label = visit.label;
    t.truth = outcome_of(visit.label).value_or(Outcome::Unknown);
    t.capability = capability;
    t.acquired = s.acquired;
    t.refused = s.refused;
    t.decision = s.status == SessionStatus::Diagnosed ? *s.last_action.label : Outcome::Unknown;
    t.probs = s.last_action.probs;
    t.steps = s.decision_steps;
    t.requests = s.requests;
    t.fallback_requests = s.fallback_requests;
    return t;
}

namespace {

std::string mask_key(CategorySet s) {
    std::string out;
    for (const auto& n : category_names(s)) {
        if (!out.empty()) out += '+';
        out += n;
    }
    return out;
}

MetricEstimate estimate(const ResampleMetric& metric, std::size_t n, const BootstrapOptions& options,
                        std::uint64_t stream) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    MetricEstimate e;
    e.value = metric(all);
    BootstrapOptions o = options;
    o.seed = derive_seed(options.seed, stream);
    const Interval ci = bootstrap_ci(metric, n, o);
    // The percentile interval can miss the full-sample value on skewed
    // resampling distributions; the report keeps lo <= value <= hi.
    e.lo = std::min(ci.lo, e.value);
    e.hi = std::max(ci.hi, e.value);
    e.skipped = ci.skipped;
    return e;
}

}  // namespace

EvaluationReport summarize(std::vector<SessionTrace> traces, SettingMode mode, const OutcomeThresholds& delta,
                           const BootstrapOptions& bootstrap) {
    EvaluationReport r;
    r.mode = mode;
    r.sessions = traces.size();
    if (traces.empty()) throw EmptyDataset("no test sessions to evaluate");

    std::vector<OutcomeCase> cases;
    cases.reserve(traces.size());
    for (const auto& t : traces) {
        cases.push_back({t.probs, t.truth});
        ++r.class_counts[static_cast<std::size_t>(t.truth)];
        for (auto c : t.acquired.members()) ++r.exam_usage[index_of(c)];
        ++r.strategy_census[mask_key(t.acquired)];
        r.requests += t.requests;
        r.fallback_requests += t.fallback_requests;
        r.refusals += t.refused.size();
    }
    const std::size_t n = cases.size();

    auto auc_metric = [&](Outcome positive) -> ResampleMetric {
        return [&cases, positive](std::span<const std::size_t> idx) {
            std::vector<double> scores(idx.size());
            auto labels = std::make_unique<bool[]>(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) {
                scores[k] = cases[idx[k]].probs[static_cast<std::size_t>(positive)];
                labels[k] = cases[idx[k]].truth == positive;
            }
            return roc_auc(scores, std::span<const bool>(labels.get(), idx.size()));
        };
    };
    auto sens_metric = [&](Outcome c) -> ResampleMetric {
        return [&cases, c, delta](std::span<const std::size_t> idx) {
            std::size_t total = 0, hit = 0;
            for (auto i : idx) {
                if (cases[i].truth != c) continue;
                ++total;
                if (decide_outcome(cases[i].probs, delta) == c) ++hit;
            }
            if (total == 0) throw UndefinedMetric("class absent from resample");
            return static_cast<double>(hit) / static_cast<double>(total);
        };
    };
    const ResampleMetric acc_metric = [&cases, delta](std::span<const std::size_t> idx) {
        std::size_t hit = 0;
        for (auto i : idx)
            if (decide_outcome(cases[i].probs, delta) == cases[i].truth) ++hit;
        return static_cast<double>(hit) / static_cast<double>(idx.size());
    };

    auto try_estimate = [&](const ResampleMetric& m, std::uint64_t stream) -> std::optional<MetricEstimate> {
        try {
            return estimate(m, n, bootstrap, stream);
        } catch (const UndefinedMetric&) {
            return std::nullopt;
        }
    };
    r.auc_ad = try_estimate(auc_metric(Outcome::AD), 1);
    r.auc_cn = try_estimate(auc_metric(Outcome::CN), 2);
    for (Outcome c : {Outcome::Unknown, Outcome::AD, Outcome::CN})
        r.sensitivity[static_cast<std::size_t>(c)] = try_estimate(sens_metric(c), 10 + static_cast<std::uint64_t>(c));
    r.accuracy = estimate(acc_metric, n, bootstrap, 3);
    r.traces = std::move(traces);
    return r;
}

EvaluationReport evaluate_system(const SplitSpec& split, const Cohort& cohort, const PolicyEngine& engine,
                                 const EvaluationOptions& options) {
    options.validate();
    struct Job {
        const Subject* subject;
        std::size_t position;
    };
    std::vector<Job> jobs;
    for (const auto& subject : cohort.subjects) {
        if (split.partition_of(subject.id) != Partition::Test) continue;
        for (std::size_t v = 0; v < subject.visits.size(); ++v) {
            const Label l = subject.visits[v].label;
            if (!outcome_of(l)) continue;
            if (options.mode == SettingMode::Closed && !is_known(l)) continue;
            jobs.push_back({&subject, v});
        }
    }
    if (jobs.empty()) throw EmptyDataset("test partition has no labeled visits");

    std::vector<SessionTrace> traces(jobs.size());
    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& job = jobs[i];
            const auto& visit = job.subject->visits[job.position];
            const InstitutionCapability cap =
                options.capability ? *options.capability
                                   : sample_capability(options.seed, job.subject->id, visit.visit_index,
                                                       options.capability_prob);
            traces[i] = replay_visit(engine, *job.subject, job.position, cap);
        }
    };
    const std::size_t workers = std::min(options.threads, jobs.size());
    if (workers <= 1) {
        run(0, jobs.size());
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        const std::size_t chunk = (jobs.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    run(w * chunk, std::min(jobs.size(), (w + 1) * chunk));
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    BootstrapOptions boot = options.bootstrap;
    boot.seed = derive_seed(options.seed, "bootstrap");
    return summarize(std::move(traces), options.mode, engine.config().thresholds.delta, boot);
}

namespace {

nlohmann::json metric_json(const std::optional<MetricEstimate>& m) {
    if (!m) return nullptr;
    return {{"value", m->value}, {"ci", {m->lo, m->hi}}, {"skipped_trials", m->skipped}};
}

std::string probs_text(const OutcomeProbs& p) {
    std::ostringstream s;
    s << std::setprecision(6) << p[0] << ';' << p[1] << ';' << p[2];
    return s.str();
}

}  // namespace

nlohmann::json report_to_json(const EvaluationReport& r) {
    nlohmann::json usage = nlohmann::json::object();
    for (std::size_t i = 0; i < kNumCategories; ++i) usage[std::string(to_string(category_at(i)))] = r.exam_usage[i];
    nlohmann::json census = nlohmann::json::object();
    for (const auto& [k, v] : r.strategy_census) census[k] = v;
    return {{"format", "opendx.report"},
            {"version", 1},
            {"mode", std::string(to_string(r.mode))},
            {"sessions", r.sessions},
            {"class_counts", {{"unknown", r.class_counts[0]}, {"ad", r.class_counts[1]}, {"cn", r.class_counts[2]}}},
            {"auc", {{"ad", metric_json(r.auc_ad)}, {"cn", metric_json(r.auc_cn)}}},
            {"sensitivity",
             {{"unknown", metric_json(r.sensitivity[0])}, {"ad", metric_json(r.sensitivity[1])},
              {"cn", metric_json(r.sensitivity[2])}}},
            {"accuracy", metric_json(r.accuracy)},
            {"exam_usage", usage},
            {"strategy_census", census},
            {"requests", r.requests},
            {"fallback_requests", r.fallback_requests},
            {"refusals", r.refusals}};
}

void write_report_text(std::ostream& out, const EvaluationReport& r) {
    auto line = [&](const std::string& name, const std::optional<MetricEstimate>& m) {
        out << std::left << std::setw(22) << name;
        if (!m) {
            out << "undefined\n";
            return;
        }
        out << std::fixed << std::setprecision(4) << m->value << "  [" << m->lo << ", " << m->hi << "]\n";
        out.unsetf(std::ios::fixed);
    };
    out << "mode: " << to_string(r.mode) << "   sessions: " << r.sessions << "   (AD " << r.class_counts[1]
        << ", CN " << r.class_counts[2] << ", Unknown " << r.class_counts[0] << ")\n";
    line("AUC AD-vs-rest", r.auc_ad);
    line("AUC CN-vs-rest", r.auc_cn);
    line("sensitivity AD", r.sensitivity[1]);
    line("sensitivity CN", r.sensitivity[2]);
    line("sensitivity Unknown", r.sensitivity[0]);
    line("accuracy", r.accuracy);
    out << "exam requests: " << r.requests << "   fallback requests: " << r.fallback_requests
        << "   refusals: " << r.refusals << "\n";
    out << "exam usage:";
    for (std::size_t i = 0; i < kNumCategories; ++i) out << ' ' << to_string(category_at(i)) << '=' << r.exam_usage[i];
    out << "\ndistinct strategies: " << r.strategy_census.size() << "\n";
}

void write_traces_csv(std::ostream& out, const EvaluationReport& r) {
    out << "subject_id,visit_index,label,truth,decision,p_unknown,p_ad,p_cn,acquired,refused,steps,requests,"
           "fallback_requests\n";
    for (const auto& t : r.traces) {
        const auto probs = probs_text(t.probs);
        std::string p = probs;
        std::replace(p.begin(), p.end(), ';', ',');
        out << t.subject_id << ',' << t.visit_index << ',' << to_string(t.label) << ',' << to_string(t.truth) << ','
            << to_string(t.decision) << ',' << p << ',' << mask_key(t.acquired) << ',' << mask_key(t.refused) << ','
            << t.steps << ',' << t.requests << ',' << t.fallback_requests << '\n';
    }
}

}  // namespace opendx
