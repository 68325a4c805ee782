#include "opendx/backbone.hpp"

#include <cmath>
#include <fstream>

#include "opendx/errors.hpp"
#include "opendx/rng.hpp"

namespace opendx {

namespace {

struct Stage1Offsets {
    std::size_t w1, b1, wd, bd, wr, br, end;
};
Stage1Offsets stage1_offsets(const BackboneShape& s) {
    const std::size_t d = s.input_dim(), h = s.hidden;
    Stage1Offsets o{};
    o.w1 = 0;
    o.b1 = o.w1 + h * d;
    o.wd = o.b1 + h;
    o.bd = o.wd + kNumKnownClasses * h;
    o.wr = o.bd + kNumKnownClasses;
    o.br = o.wr + d * h;
    o.end = o.br + d;
    return o;
}

struct Stage2Offsets {
    std::size_t a, a_bias, b, b_bias, log_sigma, end;
};
Stage2Offsets stage2_offsets(const BackboneShape& s) {
    const std::size_t q = s.input_dim() + kNumKnownClasses, g = s.exam_hidden;
    Stage2Offsets o{};
    o.a = 0;
    o.a_bias = o.a + g * q;
    o.b = o.a_bias + g;
    o.b_bias = o.b + kNumExamHeads * g;
    o.log_sigma = o.b_bias + kNumExamHeads;
    o.end = o.log_sigma + kNumExamHeads;
    return o;
}

template <class Vec, class View>
View make_stage1(const BackboneShape& s, Vec& flat) {
    const auto o = stage1_offsets(s);
    const auto d = static_cast<Eigen::Index>(s.input_dim());
    const auto h = static_cast<Eigen::Index>(s.hidden);
    const auto l = static_cast<Eigen::Index>(kNumKnownClasses);
    auto* p = flat.data();
    return View{{p + o.w1, h, d}, {p + o.b1, h}, {p + o.wd, l, h}, {p + o.bd, l}, {p + o.wr, d, h}, {p + o.br, d}};
}

template <class Vec, class View>
View make_stage2(const BackboneShape& s, Vec& flat) {
    const auto o = stage2_offsets(s);
    const auto q = static_cast<Eigen::Index>(s.input_dim() + kNumKnownClasses);
    const auto g = static_cast<Eigen::Index>(s.exam_hidden);
    const auto k = static_cast<Eigen::Index>(kNumExamHeads);
    auto* p = flat.data();
    return View{{p + o.a, g, q}, {p + o.a_bias, g}, {p + o.b, k, g}, {p + o.b_bias, k}, {p + o.log_sigma, k}};
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void fill_gaussian(Eigen::Map<Eigen::MatrixXd> m, Rng& rng, double scale) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * standard_normal(rng);
}

}  // namespace

std::size_t BackboneShape::stage1_size() const noexcept { return stage1_offsets(*this).end; }
std::size_t BackboneShape::stage2_size() const noexcept { return stage2_offsets(*this).end; }

Stage1View stage1_view(const BackboneShape& s, const Eigen::VectorXd& flat) {
    return make_stage1<const Eigen::VectorXd, Stage1View>(s, flat);
}
Stage1MutView stage1_view(const BackboneShape& s, Eigen::VectorXd& flat) {
    return make_stage1<Eigen::VectorXd, Stage1MutView>(s, flat);
}
Stage2View stage2_view(const BackboneShape& s, const Eigen::VectorXd& flat) {
    return make_stage2<const Eigen::VectorXd, Stage2View>(s, flat);
}
Stage2MutView stage2_view(const BackboneShape& s, Eigen::VectorXd& flat) {
    return make_stage2<Eigen::VectorXd, Stage2MutView>(s, flat);
}

BackboneModel::BackboneModel(const BackboneShape& shape)
    : shape_(shape),
      stage1_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.stage1_size()))),
      stage2_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.stage2_size()))) {
    if (shape.width == 0 || shape.hidden == 0 || shape.exam_hidden == 0)
        throw ShapeError("backbone dimensions must be positive");
}

BackboneModel BackboneModel::initialized(const BackboneShape& shape, std::uint64_t seed) {
    BackboneModel m(shape);
    Rng rng(derive_seed(seed, "backbone-init"));
    const double d = static_cast<double>(shape.input_dim());
    const double h = static_cast<double>(shape.hidden);
    const double g = static_cast<double>(shape.exam_hidden);

    auto s1 = stage1_view(shape, m.stage1_);
    fill_gaussian(s1.w1, rng, 1.0 / std::sqrt(d));
    for (Eigen::Index j = 0; j < s1.wd.cols(); ++j) {
        s1.wd(0, j) = standard_normal(rng) / std::sqrt(h);
        s1.wd(1, j) = -s1.wd(0, j);
    }
    fill_gaussian(s1.wr, rng, 1.0 / std::sqrt(h));

    auto s2 = stage2_view(shape, m.stage2_);
    fill_gaussian(s2.a, rng, 1.0 / std::sqrt(d + kNumKnownClasses));
    fill_gaussian(s2.b, rng, 1.0 / std::sqrt(g));
    return m;
}

Eigen::Ref<const Eigen::VectorXd> BackboneModel::log_sigmas() const {
    return stage2_.tail(static_cast<Eigen::Index>(kNumExamHeads));
}

Eigen::VectorXd pool_sequence(const FeatureSequence& seq, std::size_t width) {
    if (seq.empty()) throw ShapeError("cannot pool an empty feature sequence");
    Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width + kPoolExtra));
    for (const auto& e : seq.entries) {
        if (e.block.size() != width)
            throw ShapeError(std::string(to_string(e.category)) + " block has width " +
                             std::to_string(e.block.size()) + ", model expects " + std::to_string(width));
        for (std::size_t i = 0; i < width; ++i) p[static_cast<Eigen::Index>(i)] += e.block[i];
    }
    p.head(static_cast<Eigen::Index>(width)) /= static_cast<double>(seq.size());
    for (auto c : seq.current_mask().members()) p[static_cast<Eigen::Index>(width + index_of(c))] = 1.0;
    p[static_cast<Eigen::Index>(width + kNumCategories)] = 1.0 - 1.0 / static_cast<double>(seq.visit_span());
    return p;
}

ForwardResult forward_pooled(const BackboneModel& model, const Eigen::Ref<const Eigen::VectorXd>& pooled) {
    const auto& shape = model.shape();
    if (static_cast<std::size_t>(pooled.size()) != shape.input_dim())
        throw ShapeError("pooled input has size " + std::to_string(pooled.size()) + ", model expects " +
                         std::to_string(shape.input_dim()));
    const auto s1 = stage1_view(shape, model.stage1());
    const auto s2 = stage2_view(shape, model.stage2());

    ForwardResult out;
    const Eigen::VectorXd h = (s1.w1 * pooled + s1.b1).array().tanh().matrix();
    const Eigen::VectorXd z = s1.wd * h + s1.bd;
    const double zmax = z.maxCoeff();
    const Eigen::ArrayXd ez = (z.array() - zmax).exp();
    const double norm = ez.sum();
    for (std::size_t k = 0; k < kNumKnownClasses; ++k) {
        out.activations[k] = z[static_cast<Eigen::Index>(k)];
        out.class_probs[k] = ez[static_cast<Eigen::Index>(k)] / norm;
    }
    out.reconstruction = (s1.wr * h + s1.br).unaryExpr([](double x) { return sigmoid(x); });

    Eigen::VectorXd q(pooled.size() + static_cast<Eigen::Index>(kNumKnownClasses));
    q << pooled, out.class_probs[0], out.class_probs[1];
    const Eigen::VectorXd g = (s2.a * q + s2.a_bias).array().tanh().matrix();
    const Eigen::VectorXd e = s2.b * g + s2.b_bias;
    for (std::size_t i = 0; i < kNumExamHeads; ++i) out.exam_scores[i] = sigmoid(e[static_cast<Eigen::Index>(i)]);
    return out;
}

ForwardResult forward(const BackboneModel& model, const FeatureSequence& seq) {
    return forward_pooled(model, pool_sequence(seq, model.shape().width));
}

namespace {
nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}
Eigen::VectorXd vec_from_json(const nlohmann::json& j, std::size_t expected, const char* what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != expected)
        throw SchemaError(std::string(what) + " has " + std::to_string(v.size()) + " parameters, expected " +
                          std::to_string(expected));
    for (double x : v)
        if (!std::isfinite(x)) throw SchemaError(std::string(what) + " holds a non-finite parameter");
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

nlohmann::json backbone_to_json(const BackboneModel& model) {
    const auto& s = model.shape();
    return {{"format", "opendx.backbone"},
            {"version", 1},
            {"shape", {{"width", s.width}, {"hidden", s.hidden}, {"exam_hidden", s.exam_hidden}}},
            {"stage1", vec_to_json(model.stage1())},
            {"stage2", vec_to_json(model.stage2())}};
}

BackboneModel backbone_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "opendx.backbone") throw SchemaError("not an opendx backbone checkpoint");
    if (j.value("version", 0) != 1) throw SchemaError("unsupported backbone checkpoint version");
    BackboneShape s;
    s.width = j.at("shape").at("width").get<std::size_t>();
    s.hidden = j.at("shape").at("hidden").get<std::size_t>();
    s.exam_hidden = j.at("shape").at("exam_hidden").get<std::size_t>();
    BackboneModel m(s);
    m.stage1() = vec_from_json(j.at("stage1"), s.stage1_size(), "stage1");
    m.stage2() = vec_from_json(j.at("stage2"), s.stage2_size(), "stage2");
    return m;
}

nlohmann::json bundle_to_json(const ModelBundle& bundle) {
    nlohmann::json j{{"format", "opendx.model-bundle"},
                     {"version", 1},
                     {"main", backbone_to_json(bundle.main)},
                     {"first_visit", nullptr},
                     {"config", bundle.config_echo}};
    if (bundle.first_visit) j["first_visit"] = backbone_to_json(*bundle.first_visit);
    return j;
}

ModelBundle bundle_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "opendx.model-bundle") throw SchemaError("not an opendx model bundle");
    if (j.value("version", 0) != 1) throw SchemaError("unsupported model bundle version");
    ModelBundle b{backbone_from_json(j.at("main")), std::nullopt, j.value("config", nlohmann::json::object())};
    if (const auto& fv = j.at("first_visit"); !fv.is_null()) {
        b.first_visit = backbone_from_json(fv);
        if (b.first_visit->shape() != b.main.shape()) throw SchemaError("first-visit model shape differs from main");
    }
    return b;
}

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write model file " + path.string());
    out << bundle_to_json(bundle).dump() << '\n';
}

ModelBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    return bundle_from_json(j);
}

}  // namespace opendx
