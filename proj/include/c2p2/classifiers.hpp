#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace c2p2 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Design matrix (rows are examples) with binary labels stored as 0.0 / 1.0.
struct Dataset {
    Matrix X;
    Vector y;

    std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(X.cols()); }
    std::size_t positives() const;
    /// n >= 1, |y| = n, y in {0,1}; throws DimMismatch otherwise.
    void validate() const;
};

enum class ModelKind { LR, RF, KNN, LSVM, GNB };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view name);

/// Hyperparameters for all five kinds; only the fields of `kind` are used.
struct ModelSpec {
    ModelKind kind = ModelKind::LR;
    double l2 = 1.0;            // LR, LSVM
    int max_iter = 500;         // LR Newton steps, LSVM epochs (x4)
    double tol = 1e-8;          // LR gradient norm
    int trees = 100;            // RF
    int max_depth = 0;          // RF, 0 = unlimited
    bool bootstrap = true;      // RF
    int k = 5;                  // KNN
    double var_floor = 1e-9;    // GNB
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelSpec from_json(const nlohmann::json& j);
};

/// Probability assigned to the observed class when training labels are single-class.
inline constexpr double kSingleClassDelta = 1e-3;

class Classifier {
public:
    virtual ~Classifier() = default;

    virtual ModelKind kind() const = 0;
    virtual std::size_t num_features() const = 0;
    /// Probability of class 1 for each row; caller guarantees column count.
    virtual Vector predict_rows(const Matrix& X) const = 0;
    virtual nlohmann::json to_json() const = 0;
};

using TrainedModel = std::shared_ptr<const Classifier>;

TrainedModel fit(const ModelSpec& spec, const Dataset& data);
Vector predict_proba(const Classifier& model, const Matrix& X);
TrainedModel model_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------

/// Returned for single-class training sets.
class ConstantModel final : public Classifier {
public:
    ConstantModel(ModelKind kind, std::size_t m, double p) : kind_(kind), m_(m), p_(p) {}
    ModelKind kind() const override { return kind_; }
    std::size_t num_features() const override { return m_; }
    Vector predict_rows(const Matrix& X) const override { return Vector::Constant(X.rows(), p_); }
    nlohmann::json to_json() const override;
    double probability() const { return p_; }

private:
    ModelKind kind_;
    std::size_t m_;
    double p_;
};

namespace logistic {

/// Regularized negative log-likelihood: sum_i logloss(x_i.w + b, y_i) + l2/2 |w|^2.
/// The intercept is not penalized.
double loss(const Matrix& X, const Vector& y, const Vector& w, double b, double l2);
/// Gradient of `loss`; the last entry is d/db.
Vector gradient(const Matrix& X, const Vector& y, const Vector& w, double b, double l2);

}  // namespace logistic

class LogisticModel final : public Classifier {
public:
    LogisticModel(Vector w, double b) : w_(std::move(w)), b_(b) {}
    static std::shared_ptr<LogisticModel> train(const ModelSpec& spec, const Dataset& data);

    ModelKind kind() const override { return ModelKind::LR; }
    std::size_t num_features() const override { return static_cast<std::size_t>(w_.size()); }
    Vector predict_rows(const Matrix& X) const override;
    nlohmann::json to_json() const override;

    const Vector& weights() const { return w_; }
    double bias() const { return b_; }
    /// Objective value before the first step and after every accepted step.
    const std::vector<double>& loss_history() const { return loss_history_; }
    double final_gradient_norm() const { return grad_norm_; }

private:
    Vector w_;
    double b_;
    std::vector<double> loss_history_;
    double grad_norm_ = 0.0;
};

class RandomForestModel final : public Classifier {
public:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;  // fraction of class 1 at a leaf
    };
    using Tree = std::vector<Node>;

    RandomForestModel(std::size_t m, std::vector<Tree> trees) : m_(m), trees_(std::move(trees)) {}
    static std::shared_ptr<RandomForestModel> train(const ModelSpec& spec, const Dataset& data);

    ModelKind kind() const override { return ModelKind::RF; }
    std::size_t num_features() const override { return m_; }
    Vector predict_rows(const Matrix& X) const override;
    nlohmann::json to_json() const override;

    const std::vector<Tree>& trees() const { return trees_; }

private:
    std::size_t m_;
    std::vector<Tree> trees_;
};

class KnnModel final : public Classifier {
public:
    KnnModel(Matrix X, Vector y, int k) : X_(std::move(X)), y_(std::move(y)), k_(k) {}

    ModelKind kind() const override { return ModelKind::KNN; }
    std::size_t num_features() const override { return static_cast<std::size_t>(X_.cols()); }
    Vector predict_rows(const Matrix& X) const override;
    nlohmann::json to_json() const override;

private:
    Matrix X_;
    Vector y_;
    int k_;
};

/// Hinge-loss linear SVM; probability = sigmoid(slope * margin).
class LinearSvmModel final : public Classifier {
public:
    LinearSvmModel(Vector w, double b, double slope) : w_(std::move(w)), b_(b), slope_(slope) {}
    static std::shared_ptr<LinearSvmModel> train(const ModelSpec& spec, const Dataset& data);

    ModelKind kind() const override { return ModelKind::LSVM; }
    std::size_t num_features() const override { return static_cast<std::size_t>(w_.size()); }
    Vector predict_rows(const Matrix& X) const override;
    Vector margins(const Matrix& X) const;
    nlohmann::json to_json() const override;

    double slope() const { return slope_; }

private:
    Vector w_;
    double b_;
    double slope_;
};

class GaussianNbModel final : public Classifier {
public:
    GaussianNbModel(Vector mean0, Vector var0, Vector mean1, Vector var1, double prior1)
        : mean0_(std::move(mean0)), var0_(std::move(var0)), mean1_(std::move(mean1)), var1_(std::move(var1)),
          prior1_(prior1) {}
    static std::shared_ptr<GaussianNbModel> train(const ModelSpec& spec, const Dataset& data);

    ModelKind kind() const override { return ModelKind::GNB; }
    std::size_t num_features() const override { return static_cast<std::size_t>(mean0_.size()); }
    Vector predict_rows(const Matrix& X) const override;
    nlohmann::json to_json() const override;

private:
    Vector mean0_, var0_, mean1_, var1_;
    double prior1_;
};

// ---------------------------------------------------------------------------
// Feature selection

enum class SelectorMethod { None, PCA, AnovaTopK };

std::string_view to_string(SelectorMethod method);
std::optional<SelectorMethod> parse_selector_method(std::string_view name);

struct SelectorSpec {
    SelectorMethod method = SelectorMethod::PCA;
    std::size_t k = 120;

    nlohmann::json to_json() const;
    static SelectorSpec from_json(const nlohmann::json& j);
    std::string label() const;
};

/// Fitted projection (PCA) or column subset (AnovaTopK, None).
class FeatureSelector {
public:
    FeatureSelector() = default;

    static FeatureSelector identity(std::size_t m);
    static FeatureSelector pca(Vector means, Matrix components, Vector explained_variance);
    static FeatureSelector columns(std::size_t m, std::vector<std::size_t> indices);

    SelectorMethod method() const { return method_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const;

    Matrix transform(const Matrix& X) const;

    const Vector& means() const { return means_; }
    const Matrix& components() const { return components_; }  // input_dim x k
    const Vector& explained_variance() const { return explained_variance_; }
    const std::vector<std::size_t>& indices() const { return indices_; }

    nlohmann::json to_json() const;
    static FeatureSelector from_json(const nlohmann::json& j);

private:
    SelectorMethod method_ = SelectorMethod::None;
    std::size_t input_dim_ = 0;
    Vector means_;
    Matrix components_;
    Vector explained_variance_;
    std::vector<std::size_t> indices_;
};

/// Top-k principal directions of the centered data; 1 <= k <= min(n, m).
FeatureSelector pca_fit(const Matrix& X, std::size_t k);
Matrix pca_transform(const FeatureSelector& selector, const Matrix& X);

/// Score reported when the within-class variance is zero but classes differ.
inline constexpr double kAnovaSentinel = 1e18;

/// One-way ANOVA F statistic per column for the two label groups.
std::vector<double> anova_f_scores(const Dataset& data);
/// Keeps the k largest scores (ties to the lower index), in ascending column order.
FeatureSelector select_top_k(std::span<const double> scores, std::size_t k);

/// Fits the selector named by `spec`, capping k at what the data admits
/// (min(n, m) for PCA, m for AnovaTopK).
FeatureSelector fit_selector(const SelectorSpec& spec, const Dataset& data);

}  // namespace c2p2
