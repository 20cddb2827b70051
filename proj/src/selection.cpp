#include <algorithm>
#include <numeric>

#include <Eigen/SVD>

#include "c2p2/classifiers.hpp"
#include "c2p2/common.hpp"

namespace c2p2 {

std::string_view to_string(SelectorMethod method) {
    switch (method) {
        case SelectorMethod::None: return "none";
        case SelectorMethod::PCA: return "PCA";
        case SelectorMethod::AnovaTopK: return "ANOVA";
    }
    return "?";
}

std::optional<SelectorMethod> parse_selector_method(std::string_view name) {
    for (auto m : {SelectorMethod::None, SelectorMethod::PCA, SelectorMethod::AnovaTopK}) {
        if (to_string(m) == name) return m;
    }
    if (name == "pca") return SelectorMethod::PCA;
    if (name == "anova" || name == "anova_top_k") return SelectorMethod::AnovaTopK;
    return std::nullopt;
}

nlohmann::json SelectorSpec::to_json() const {
    nlohmann::json j{{"method", std::string(to_string(method))}};
    if (method != SelectorMethod::None) j["k"] = k;
    return j;
}

SelectorSpec SelectorSpec::from_json(const nlohmann::json& j) {
    SelectorSpec s;
    const auto name = j.at("method").get<std::string>();
    const auto method = parse_selector_method(name);
    if (!method) throw Error(ErrorCode::BadK, "unknown selector '" + name + "'");
    s.method = *method;
    s.k = j.value("k", s.method == SelectorMethod::AnovaTopK ? std::size_t{512} : std::size_t{120});
    if (s.method != SelectorMethod::None && s.k < 1) throw Error(ErrorCode::BadK, "selector k must be >= 1");
    return s;
}

std::string SelectorSpec::label() const {
    if (method == SelectorMethod::None) return "none";
    return std::string(to_string(method)) + "(" + std::to_string(k) + ")";
}

FeatureSelector FeatureSelector::identity(std::size_t m) {
    FeatureSelector s;
    s.method_ = SelectorMethod::None;
    s.input_dim_ = m;
    return s;
}

FeatureSelector FeatureSelector::pca(Vector means, Matrix components, Vector explained_variance) {
    FeatureSelector s;
    s.method_ = SelectorMethod::PCA;
    s.input_dim_ = static_cast<std::size_t>(means.size());
    s.means_ = std::move(means);
    s.components_ = std::move(components);
    s.explained_variance_ = std::move(explained_variance);
    return s;
}

FeatureSelector FeatureSelector::columns(std::size_t m, std::vector<std::size_t> indices) {
    for (auto i : indices) {
        if (i >= m) throw Error(ErrorCode::BadK, "column index out of range");
    }
    FeatureSelector s;
    s.method_ = SelectorMethod::AnovaTopK;
    s.input_dim_ = m;
    s.indices_ = std::move(indices);
    return s;
}

std::size_t FeatureSelector::output_dim() const {
    switch (method_) {
        case SelectorMethod::None: return input_dim_;
        case SelectorMethod::PCA: return static_cast<std::size_t>(components_.cols());
        case SelectorMethod::AnovaTopK: return indices_.size();
    }
    return 0;
}

Matrix FeatureSelector::transform(const Matrix& X) const {
    if (static_cast<std::size_t>(X.cols()) != input_dim_) {
        throw Error(ErrorCode::DimMismatch, "selector expects " + std::to_string(input_dim_) + " columns, got " +
                                                std::to_string(X.cols()));
    }
    switch (method_) {
        case SelectorMethod::None: return X;
        case SelectorMethod::PCA: return (X.rowwise() - means_.transpose()) * components_;
        case SelectorMethod::AnovaTopK: {
            Matrix out(X.rows(), static_cast<Eigen::Index>(indices_.size()));
            for (std::size_t j = 0; j < indices_.size(); ++j) {
                out.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(indices_[j]));
            }
            return out;
        }
    }
    return X;
}

nlohmann::json FeatureSelector::to_json() const {
    nlohmann::json j{{"method", std::string(to_string(method_))}, {"input_dim", input_dim_}};
    if (method_ == SelectorMethod::AnovaTopK) j["indices"] = indices_;
    if (method_ == SelectorMethod::PCA) {
        j["means"] = std::vector<double>(means_.data(), means_.data() + means_.size());
        j["explained_variance"] =
            std::vector<double>(explained_variance_.data(), explained_variance_.data() + explained_variance_.size());
        nlohmann::json comps = nlohmann::json::array();
        for (Eigen::Index c = 0; c < components_.cols(); ++c) {
            const Vector col = components_.col(c);
            comps.push_back(std::vector<double>(col.data(), col.data() + col.size()));
        }
        j["components"] = comps;
    }
    return j;
}

FeatureSelector FeatureSelector::from_json(const nlohmann::json& j) {
    const auto method = parse_selector_method(j.at("method").get<std::string>());
    if (!method) throw Error(ErrorCode::ParseError, "bad selector method");
    const auto m = j.at("input_dim").get<std::size_t>();
    switch (*method) {
        case SelectorMethod::None: return identity(m);
        case SelectorMethod::AnovaTopK: return columns(m, j.at("indices").get<std::vector<std::size_t>>());
        case SelectorMethod::PCA: {
            const auto means = j.at("means").get<std::vector<double>>();
            const auto ev = j.at("explained_variance").get<std::vector<double>>();
            const auto& comps = j.at("components");
            Matrix C(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(comps.size()));
            for (std::size_t c = 0; c < comps.size(); ++c) {
                const auto col = comps[c].get<std::vector<double>>();
                if (col.size() != m) throw Error(ErrorCode::ParseError, "component length mismatch");
                for (std::size_t r = 0; r < m; ++r) C(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = col[r];
            }
            return pca(Eigen::Map<const Vector>(means.data(), static_cast<Eigen::Index>(means.size())), std::move(C),
                       Eigen::Map<const Vector>(ev.data(), static_cast<Eigen::Index>(ev.size())));
        }
    }
    throw Error(ErrorCode::ParseError, "bad selector method");
}

FeatureSelector pca_fit(const Matrix& X, std::size_t k) {
    const auto n = static_cast<std::size_t>(X.rows());
    const auto m = static_cast<std::size_t>(X.cols());
    if (k < 1 || k > std::min(n, m)) {
        throw Error(ErrorCode::BadK, "PCA k=" + std::to_string(k) + " outside [1, " + std::to_string(std::min(n, m)) + "]");
    }
    const Vector means = X.colwise().mean();
    const Matrix centered = X.rowwise() - means.transpose();
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const auto kk = static_cast<Eigen::Index>(k);
    Matrix components = svd.matrixV().leftCols(kk);
    for (Eigen::Index c = 0; c < kk; ++c) {
        Eigen::Index arg = 0;
        components.col(c).cwiseAbs().maxCoeff(&arg);
        if (components(arg, c) < 0.0) components.col(c) *= -1.0;
    }
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    Vector ev = svd.singularValues().head(kk).array().square() / denom;
    return FeatureSelector::pca(means, std::move(components), std::move(ev));
}

Matrix pca_transform(const FeatureSelector& selector, const Matrix& X) {
    if (selector.method() != SelectorMethod::PCA) throw Error(ErrorCode::BadK, "selector is not a PCA projection");
    return selector.transform(X);
}

std::vector<double> anova_f_scores(const Dataset& data) {
    data.validate();
    const std::size_t n = data.rows();
    const std::size_t n1 = data.positives();
    const std::size_t n0 = n - n1;
    if (n0 == 0 || n1 == 0) throw Error(ErrorCode::SingleClass, "ANOVA needs both classes in the labels");
    std::vector<double> scores(data.cols());
    for (Eigen::Index f = 0; f < data.X.cols(); ++f) {
        double s0 = 0.0, s1 = 0.0;
        for (Eigen::Index i = 0; i < data.X.rows(); ++i) (data.y[i] > 0.5 ? s1 : s0) += data.X(i, f);
        const double m0 = s0 / static_cast<double>(n0), m1 = s1 / static_cast<double>(n1);
        const double mall = (s0 + s1) / static_cast<double>(n);
        double ssw = 0.0;
        for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
            const double mu = data.y[i] > 0.5 ? m1 : m0;
            ssw += (data.X(i, f) - mu) * (data.X(i, f) - mu);
        }
        const double ssb = static_cast<double>(n0) * (m0 - mall) * (m0 - mall) +
                           static_cast<double>(n1) * (m1 - mall) * (m1 - mall);
        double score;
        if (ssw <= 0.0) score = ssb > 0.0 ? kAnovaSentinel : 0.0;
        else if (n <= 2) score = ssb > 0.0 ? kAnovaSentinel : 0.0;
        else score = ssb / (ssw / static_cast<double>(n - 2));
        scores[static_cast<std::size_t>(f)] = score;
    }
    return scores;
}

FeatureSelector select_top_k(std::span<const double> scores, std::size_t k) {
    if (k < 1 || k > scores.size()) {
        throw Error(ErrorCode::BadK, "top-k k=" + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) + "]");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return FeatureSelector::columns(scores.size(), std::move(order));
}

FeatureSelector fit_selector(const SelectorSpec& spec, const Dataset& data) {
    data.validate();
    switch (spec.method) {
        case SelectorMethod::None: return FeatureSelector::identity(data.cols());
        case SelectorMethod::PCA:
            if (spec.k < 1) throw Error(ErrorCode::BadK, "PCA k must be >= 1");
            return pca_fit(data.X, std::min({spec.k, data.rows(), data.cols()}));
        case SelectorMethod::AnovaTopK: {
            if (spec.k < 1) throw Error(ErrorCode::BadK, "ANOVA k must be >= 1");
            const auto scores = anova_f_scores(data);
            return select_top_k(scores, std::min(spec.k, data.cols()));
        }
    }
    throw Error(ErrorCode::BadK, "unknown selector");
}

}  // namespace c2p2
