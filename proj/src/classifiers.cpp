#include "c2p2/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "c2p2/common.hpp"

namespace c2p2 {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

Vector json_vector(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> std_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::size_t Dataset::positives() const {
    return static_cast<std::size_t>((y.array() > 0.5).count());
}

void Dataset::validate() const {
    if (X.rows() < 1) throw Error(ErrorCode::DimMismatch, "dataset needs at least one row");
    if (y.size() != X.rows()) throw Error(ErrorCode::DimMismatch, "label count differs from row count");
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] != 0.0 && y[i] != 1.0) throw Error(ErrorCode::DimMismatch, "labels must be 0 or 1");
    }
}

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::LR: return "LR";
        case ModelKind::RF: return "RF";
        case ModelKind::KNN: return "KNN";
        case ModelKind::LSVM: return "LSVM";
        case ModelKind::GNB: return "GNB";
    }
    return "?";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) {
    for (auto k : {ModelKind::LR, ModelKind::RF, ModelKind::KNN, ModelKind::LSVM, ModelKind::GNB}) {
        if (to_string(k) == name) return k;
    }
    if (name == "L-SVM") return ModelKind::LSVM;
    if (name == "NB") return ModelKind::GNB;
    return std::nullopt;
}

void ModelSpec::validate() const {
    auto bad = [&](const std::string& msg) {
        throw Error(ErrorCode::BadHyperparameters, std::string(to_string(kind)) + ": " + msg);
    };
    switch (kind) {
        case ModelKind::LR:
            if (!(l2 > 0.0)) bad("regularization must be > 0");
            if (max_iter < 1) bad("max_iter must be >= 1");
            if (!(tol > 0.0)) bad("tol must be > 0");
            break;
        case ModelKind::LSVM:
            if (!(l2 > 0.0)) bad("regularization must be > 0");
            if (max_iter < 1) bad("max_iter must be >= 1");
            break;
        case ModelKind::RF:
            if (trees < 1) bad("trees must be >= 1");
            if (max_depth < 0) bad("max_depth must be >= 0");
            break;
        case ModelKind::KNN:
            if (k < 1) bad("k must be >= 1");
            break;
        case ModelKind::GNB:
            if (!(var_floor > 0.0)) bad("var_floor must be > 0");
            break;
    }
}

nlohmann::json ModelSpec::to_json() const {
    nlohmann::json j{{"kind", std::string(to_string(kind))}};
    switch (kind) {
        case ModelKind::LR: j.update({{"l2", l2}, {"max_iter", max_iter}, {"tol", tol}}); break;
        case ModelKind::LSVM: j.update({{"l2", l2}, {"max_iter", max_iter}}); break;
        case ModelKind::RF: j.update({{"trees", trees}, {"max_depth", max_depth}, {"bootstrap", bootstrap}}); break;
        case ModelKind::KNN: j["k"] = k; break;
        case ModelKind::GNB: j["var_floor"] = var_floor; break;
    }
    return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
    ModelSpec s;
    const auto name = j.at("kind").get<std::string>();
    const auto kind = parse_model_kind(name);
    if (!kind) throw Error(ErrorCode::BadHyperparameters, "unknown model kind '" + name + "'");
    s.kind = *kind;
    s.l2 = j.value("l2", s.l2);
    s.max_iter = j.value("max_iter", s.max_iter);
    s.tol = j.value("tol", s.tol);
    s.trees = j.value("trees", s.trees);
    s.max_depth = j.value("max_depth", s.max_depth);
    s.bootstrap = j.value("bootstrap", s.bootstrap);
    s.k = j.value("k", s.k);
    s.var_floor = j.value("var_floor", s.var_floor);
    return s;
}

// ---------------------------------------------------------------------------

TrainedModel fit(const ModelSpec& spec, const Dataset& data) {
    spec.validate();
    data.validate();
    const std::size_t pos = data.positives();
    if (pos == 0 || pos == data.rows()) {
        const double p = pos == 0 ? kSingleClassDelta : 1.0 - kSingleClassDelta;
        return std::make_shared<ConstantModel>(spec.kind, data.cols(), p);
    }
    switch (spec.kind) {
        case ModelKind::LR: return LogisticModel::train(spec, data);
        case ModelKind::RF: return RandomForestModel::train(spec, data);
        case ModelKind::KNN: return std::make_shared<KnnModel>(data.X, data.y, spec.k);
        case ModelKind::LSVM: return LinearSvmModel::train(spec, data);
        case ModelKind::GNB: return GaussianNbModel::train(spec, data);
    }
    throw Error(ErrorCode::BadHyperparameters, "unknown model kind");
}

Vector predict_proba(const Classifier& model, const Matrix& X) {
    if (static_cast<std::size_t>(X.cols()) != model.num_features()) {
        throw Error(ErrorCode::DimMismatch, "model expects " + std::to_string(model.num_features()) +
                                                " columns, got " + std::to_string(X.cols()));
    }
    return model.predict_rows(X).cwiseMax(0.0).cwiseMin(1.0);
}

TrainedModel model_from_json(const nlohmann::json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "constant") {
        auto kind = parse_model_kind(j.at("kind").get<std::string>());
        if (!kind) throw Error(ErrorCode::ParseError, "bad model kind");
        return std::make_shared<ConstantModel>(*kind, j.at("m").get<std::size_t>(), j.at("p").get<double>());
    }
    if (type == "LR") return std::make_shared<LogisticModel>(json_vector(j.at("w")), j.at("b").get<double>());
    if (type == "LSVM") {
        return std::make_shared<LinearSvmModel>(json_vector(j.at("w")), j.at("b").get<double>(),
                                                j.at("slope").get<double>());
    }
    if (type == "GNB") {
        return std::make_shared<GaussianNbModel>(json_vector(j.at("mean0")), json_vector(j.at("var0")),
                                                 json_vector(j.at("mean1")), json_vector(j.at("var1")),
                                                 j.at("prior1").get<double>());
    }
    if (type == "KNN") {
        const auto m = j.at("m").get<Eigen::Index>();
        const auto flat = j.at("X").get<std::vector<double>>();
        const Vector y = json_vector(j.at("y"));
        Matrix X(y.size(), m);
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            for (Eigen::Index c = 0; c < m; ++c) X(i, c) = flat[static_cast<std::size_t>(i * m + c)];
        }
        return std::make_shared<KnnModel>(std::move(X), y, j.at("k").get<int>());
    }
    if (type == "RF") {
        std::vector<RandomForestModel::Tree> trees;
        for (const auto& t : j.at("trees")) {
            const auto f = t.at("feature").get<std::vector<int>>();
            const auto th = t.at("threshold").get<std::vector<double>>();
            const auto l = t.at("left").get<std::vector<int>>();
            const auto r = t.at("right").get<std::vector<int>>();
            const auto v = t.at("value").get<std::vector<double>>();
            RandomForestModel::Tree tree(f.size());
            for (std::size_t i = 0; i < f.size(); ++i) tree[i] = {f[i], th[i], l[i], r[i], v[i]};
            trees.push_back(std::move(tree));
        }
        return std::make_shared<RandomForestModel>(j.at("m").get<std::size_t>(), std::move(trees));
    }
    throw Error(ErrorCode::ParseError, "unknown model type '" + type + "'");
}

nlohmann::json ConstantModel::to_json() const {
    return {{"type", "constant"}, {"kind", std::string(to_string(kind_))}, {"m", m_}, {"p", p_}};
}

// ---------------------------------------------------------------------------
// Logistic regression: Newton's method with backtracking on the penalized NLL.

namespace logistic {

double loss(const Matrix& X, const Vector& y, const Vector& w, double b, double l2) {
    const Vector z = (X * w).array() + b;
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) total += softplus(z[i]) - y[i] * z[i];
    return total + 0.5 * l2 * w.squaredNorm();
}

Vector gradient(const Matrix& X, const Vector& y, const Vector& w, double b, double l2) {
    const Vector z = (X * w).array() + b;
    Vector r(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) r[i] = sigmoid(z[i]) - y[i];
    Vector g(w.size() + 1);
    g.head(w.size()) = X.transpose() * r + l2 * w;
    g[w.size()] = r.sum();
    return g;
}

}  // namespace logistic

std::shared_ptr<LogisticModel> LogisticModel::train(const ModelSpec& spec, const Dataset& data) {
    const Matrix& X = data.X;
    const Vector& y = data.y;
    const Eigen::Index m = X.cols();
    Vector w = Vector::Zero(m);
    double b = 0.0;
    double f = logistic::loss(X, y, w, b, spec.l2);
    std::vector<double> history{f};
    Vector g = logistic::gradient(X, y, w, b, spec.l2);

    for (int it = 0; it < spec.max_iter && g.norm() >= spec.tol; ++it) {
        const Vector z = (X * w).array() + b;
        Vector s(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            const double p = sigmoid(z[i]);
            s[i] = p * (1.0 - p);
        }
        Matrix H(m + 1, m + 1);
        H.topLeftCorner(m, m) = X.transpose() * s.asDiagonal() * X;
        H.topLeftCorner(m, m).diagonal().array() += spec.l2;
        const Vector Xs = X.transpose() * s;
        H.topRightCorner(m, 1) = Xs;
        H.bottomLeftCorner(1, m) = Xs.transpose();
        H(m, m) = s.sum() + 1e-12;

        const Vector step = -H.ldlt().solve(g);
        const double slope = g.dot(step);
        if (!(slope < 0.0)) break;

        // Near the optimum the Armijo test drowns in rounding; take the full
        // step if it does not increase the loss, else stop.
        const bool roundoff = -slope <= 1e-12 * std::max(1.0, std::abs(f));
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < (roundoff ? 1 : 60); ++ls, t *= 0.5) {
            const Vector w_new = w + t * step.head(m);
            const double b_new = b + t * step[m];
            const double f_new = logistic::loss(X, y, w_new, b_new, spec.l2);
            if (roundoff ? f_new <= f : f_new <= f + 1e-4 * t * slope) {
                w = w_new;
                b = b_new;
                f = f_new;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        history.push_back(f);
        g = logistic::gradient(X, y, w, b, spec.l2);
    }

    auto model = std::make_shared<LogisticModel>(std::move(w), b);
    model->loss_history_ = std::move(history);
    model->grad_norm_ = g.norm();
    return model;
}

Vector LogisticModel::predict_rows(const Matrix& X) const {
    Vector z = (X * w_).array() + b_;
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = sigmoid(z[i]);
    return z;
}

nlohmann::json LogisticModel::to_json() const { return {{"type", "LR"}, {"w", std_vector(w_)}, {"b", b_}}; }

// ---------------------------------------------------------------------------
// Random forest: bootstrapped CART trees with Gini splits over sqrt(m) candidate features.

namespace {

struct TreeBuilder {
    const Matrix& X;
    const Vector& y;
    std::size_t mtry;
    int max_depth;
    std::mt19937_64 rng;
    RandomForestModel::Tree nodes;

    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double score = 0.0;  // weighted child Gini, lower is better
    };

    static double gini(double pos, double n) {
        if (n <= 0.0) return 0.0;
        const double p = pos / n;
        return 2.0 * p * (1.0 - p);
    }

    Split best_split(const std::vector<Eigen::Index>& idx) {
        const auto m = static_cast<std::size_t>(X.cols());
        std::vector<std::size_t> features(m);
        std::iota(features.begin(), features.end(), std::size_t{0});
        std::shuffle(features.begin(), features.end(), rng);

        const double n = static_cast<double>(idx.size());
        double total_pos = 0.0;
        for (auto i : idx) total_pos += y[i];

        Split best;
        best.score = std::numeric_limits<double>::infinity();
        std::vector<std::pair<double, double>> xs(idx.size());
        for (std::size_t fi = 0; fi < m; ++fi) {
            if (fi >= mtry && best.feature >= 0) break;
            const auto f = static_cast<Eigen::Index>(features[fi]);
            for (std::size_t r = 0; r < idx.size(); ++r) xs[r] = {X(idx[r], f), y[idx[r]]};
            std::sort(xs.begin(), xs.end());
            double left_pos = 0.0;
            for (std::size_t r = 0; r + 1 < xs.size(); ++r) {
                left_pos += xs[r].second;
                if (xs[r].first == xs[r + 1].first) continue;
                const double nl = static_cast<double>(r + 1), nr = n - nl;
                const double score = (nl * gini(left_pos, nl) + nr * gini(total_pos - left_pos, nr)) / n;
                if (score < best.score) {
                    double thr = 0.5 * (xs[r].first + xs[r + 1].first);
                    if (thr >= xs[r + 1].first) thr = xs[r].first;
                    best = {static_cast<int>(f), thr, score};
                }
            }
        }
        return best;
    }

    int build(std::vector<Eigen::Index> idx, int depth) {
        double pos = 0.0;
        for (auto i : idx) pos += y[i];
        const int id = static_cast<int>(nodes.size());
        nodes.push_back({-1, 0.0, -1, -1, pos / static_cast<double>(idx.size())});
        const bool pure = pos == 0.0 || pos == static_cast<double>(idx.size());
        if (pure || idx.size() < 2 || (max_depth > 0 && depth >= max_depth)) return id;

        const Split s = best_split(idx);
        if (s.feature < 0) return id;
        std::vector<Eigen::Index> left, right;
        for (auto i : idx) (X(i, s.feature) <= s.threshold ? left : right).push_back(i);
        if (left.empty() || right.empty()) return id;
        idx.clear();
        idx.shrink_to_fit();
        const int l = build(std::move(left), depth + 1);
        const int r = build(std::move(right), depth + 1);
        nodes[id].feature = s.feature;
        nodes[id].threshold = s.threshold;
        nodes[id].left = l;
        nodes[id].right = r;
        return id;
    }
};

double tree_predict(const RandomForestModel::Tree& tree, const Matrix& X, Eigen::Index row) {
    int n = 0;
    while (tree[n].feature >= 0) n = X(row, tree[n].feature) <= tree[n].threshold ? tree[n].left : tree[n].right;
    return tree[n].value;
}

}  // namespace

std::shared_ptr<RandomForestModel> RandomForestModel::train(const ModelSpec& spec, const Dataset& data) {
    const auto n = static_cast<Eigen::Index>(data.rows());
    const std::size_t m = data.cols();
    const std::size_t mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(m))));
    std::vector<Tree> trees;
    trees.reserve(static_cast<std::size_t>(spec.trees));
    for (int t = 0; t < spec.trees; ++t) {
        TreeBuilder builder{data.X, data.y, mtry, spec.max_depth, std::mt19937_64(derive_seed(spec.seed, t)), {}};
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
        if (spec.bootstrap) {
            std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
            for (auto& i : idx) i = pick(builder.rng);
        } else {
            std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        }
        builder.build(std::move(idx), 0);
        trees.push_back(std::move(builder.nodes));
    }
    return std::make_shared<RandomForestModel>(m, std::move(trees));
}

Vector RandomForestModel::predict_rows(const Matrix& X) const {
    Vector out = Vector::Zero(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double s = 0.0;
        for (const auto& tree : trees_) s += tree_predict(tree, X, i);
        out[i] = s / static_cast<double>(trees_.size());
    }
    return out;
}

nlohmann::json RandomForestModel::to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : trees_) {
        std::vector<int> f, l, r;
        std::vector<double> th, v;
        for (const auto& n : tree) {
            f.push_back(n.feature);
            th.push_back(n.threshold);
            l.push_back(n.left);
            r.push_back(n.right);
            v.push_back(n.value);
        }
        trees.push_back({{"feature", f}, {"threshold", th}, {"left", l}, {"right", r}, {"value", v}});
    }
    return {{"type", "RF"}, {"m", m_}, {"trees", trees}};
}

// ---------------------------------------------------------------------------

Vector KnnModel::predict_rows(const Matrix& X) const {
    const auto n = static_cast<std::size_t>(X_.rows());
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_), n);
    Vector out(X.rows());
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (Eigen::Index q = 0; q < X.rows(); ++q) {
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = {(X_.row(static_cast<Eigen::Index>(i)) - X.row(q)).squaredNorm(), i};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        double votes = 0.0;
        for (std::size_t j = 0; j < k; ++j) votes += y_[static_cast<Eigen::Index>(dist[j].second)];
        out[q] = votes / static_cast<double>(k);
    }
    return out;
}

nlohmann::json KnnModel::to_json() const {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(X_.size()));
    for (Eigen::Index i = 0; i < X_.rows(); ++i) {
        for (Eigen::Index c = 0; c < X_.cols(); ++c) flat.push_back(X_(i, c));
    }
    return {{"type", "KNN"}, {"m", X_.cols()}, {"X", flat}, {"y", std_vector(y_)}, {"k", k_}};
}

// ---------------------------------------------------------------------------
// Linear SVM: dual coordinate descent on 1/2|w|^2 + C sum hinge, C = 1/l2, bias
// as an augmented constant feature. Probabilities via a slope-only logistic link
// fitted on the training margins with smoothed targets.

std::shared_ptr<LinearSvmModel> LinearSvmModel::train(const ModelSpec& spec, const Dataset& data) {
    const Matrix& X = data.X;
    const auto n = X.rows();
    const auto m = X.cols();
    const double C = 1.0 / spec.l2;
    Vector ysgn = (2.0 * data.y.array() - 1.0).matrix();
    Vector qdiag = X.rowwise().squaredNorm().array() + 1.0;
    Vector alpha = Vector::Zero(n);
    Vector w = Vector::Zero(m);
    double b = 0.0;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(spec.seed);
    const int max_epochs = 4 * spec.max_iter;
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double pg_max = -std::numeric_limits<double>::infinity();
        double pg_min = std::numeric_limits<double>::infinity();
        for (auto i : order) {
            const double G = ysgn[i] * (X.row(i).dot(w) + b) - 1.0;
            double pg = G;
            if (alpha[i] <= 0.0) pg = std::min(G, 0.0);
            else if (alpha[i] >= C) pg = std::max(G, 0.0);
            pg_max = std::max(pg_max, pg);
            pg_min = std::min(pg_min, pg);
            if (pg == 0.0) continue;
            const double old = alpha[i];
            alpha[i] = std::clamp(old - G / qdiag[i], 0.0, C);
            const double delta = (alpha[i] - old) * ysgn[i];
            w += delta * X.row(i).transpose();
            b += delta;
        }
        if (pg_max - pg_min < 1e-6) break;
    }

    const Vector margin = (X * w).array() + b;
    const double npos = static_cast<double>(data.positives());
    const double nneg = static_cast<double>(n) - npos;
    const double t_pos = (npos + 1.0) / (npos + 2.0), t_neg = 1.0 / (nneg + 2.0);
    double slope = 0.0;
    for (int it = 0; it < 100; ++it) {
        double g = 0.0, h = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = sigmoid(slope * margin[i]);
            const double t = data.y[i] > 0.5 ? t_pos : t_neg;
            g += (p - t) * margin[i];
            h += p * (1.0 - p) * margin[i] * margin[i];
        }
        if (h <= 1e-300 || std::abs(g) < 1e-12) break;
        const double step = g / h;
        slope -= step;
        if (std::abs(step) < 1e-12 * std::max(1.0, std::abs(slope))) break;
    }
    return std::make_shared<LinearSvmModel>(std::move(w), b, slope);
}

Vector LinearSvmModel::margins(const Matrix& X) const { return (X * w_).array() + b_; }

Vector LinearSvmModel::predict_rows(const Matrix& X) const {
    Vector z = margins(X);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = sigmoid(slope_ * z[i]);
    return z;
}

nlohmann::json LinearSvmModel::to_json() const {
    return {{"type", "LSVM"}, {"w", std_vector(w_)}, {"b", b_}, {"slope", slope_}};
}

// ---------------------------------------------------------------------------

std::shared_ptr<GaussianNbModel> GaussianNbModel::train(const ModelSpec& spec, const Dataset& data) {
    const auto m = data.X.cols();
    Vector sum[2] = {Vector::Zero(m), Vector::Zero(m)};
    double count[2] = {0.0, 0.0};
    for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
        const int c = data.y[i] > 0.5 ? 1 : 0;
        sum[c] += data.X.row(i).transpose();
        count[c] += 1.0;
    }
    Vector mean[2] = {sum[0] / count[0], sum[1] / count[1]};
    Vector var[2] = {Vector::Zero(m), Vector::Zero(m)};
    for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
        const int c = data.y[i] > 0.5 ? 1 : 0;
        var[c].array() += (data.X.row(i).transpose() - mean[c]).array().square();
    }
    for (int c = 0; c < 2; ++c) var[c] = (var[c] / count[c]).cwiseMax(spec.var_floor);
    const double prior1 = count[1] / (count[0] + count[1]);
    return std::make_shared<GaussianNbModel>(mean[0], var[0], mean[1], var[1], prior1);
}

Vector GaussianNbModel::predict_rows(const Matrix& X) const {
    Vector out(X.rows());
    const double log_prior0 = std::log(1.0 - prior1_), log_prior1 = std::log(prior1_);
    const double norm0 = -0.5 * var0_.array().log().sum(), norm1 = -0.5 * var1_.array().log().sum();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const auto x = X.row(i).transpose().array();
        const double l0 = log_prior0 + norm0 - 0.5 * ((x - mean0_.array()).square() / var0_.array()).sum();
        const double l1 = log_prior1 + norm1 - 0.5 * ((x - mean1_.array()).square() / var1_.array()).sum();
        out[i] = sigmoid(l1 - l0);
    }
    return out;
}

nlohmann::json GaussianNbModel::to_json() const {
    return {{"type", "GNB"},           {"mean0", std_vector(mean0_)}, {"var0", std_vector(var0_)},
            {"mean1", std_vector(mean1_)}, {"var1", std_vector(var1_)},   {"prior1", prior1_}};
}

}  // namespace c2p2
