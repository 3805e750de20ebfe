#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "scrub/provisioning.hpp"
#include "scrub/table.hpp"

namespace scrub {

inline constexpr std::string_view kMissingToken = "__MISSING__";
inline constexpr std::string_view kOtherToken = "__OTHER__";

enum class ModelKind { LogisticRegression, DecisionTree };
// Auto: binary positive-class F1 for two-class targets, macro otherwise.
enum class F1Averaging { Auto, Binary, Macro };

struct PipelineConfig {
  std::size_t top_k = 50;
  double variance_floor = 1e-12;
  ModelKind model = ModelKind::LogisticRegression;
  double l2 = 1e-3;
  int max_iterations = 100;
  double tolerance = 1e-6;
  int tree_depth = 6;
  std::size_t tree_min_leaf = 5;
  F1Averaging averaging = F1Averaging::Auto;
  std::uint64_t training_seed = 0;
};

nlohmann::json pipeline_config_to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const nlohmann::json& json);

// Fitted preprocessing state. Every statistic comes from the training table.
class Preprocessor {
 public:
  struct NumericColumn {
    std::string name;
    double median = 0.0;
  };
  struct CategoricalColumn {
    std::string name;
    // Top-K categories by training frequency, ties broken lexicographically.
    std::vector<std::string> vocabulary;
  };

  static Preprocessor fit(const Table& train, std::span<const std::string> feature_columns,
                          const PipelineConfig& config);

  // Columns absent from `table` are treated as entirely missing.
  Eigen::MatrixXd transform(const Table& table) const;

  std::size_t num_features() const { return static_cast<std::size_t>(means_.size()); }
  std::vector<std::string> feature_names() const;
  const std::vector<NumericColumn>& numeric_columns() const { return numeric_; }
  const std::vector<CategoricalColumn>& categorical_columns() const { return categorical_; }
  const Eigen::VectorXd& means() const { return means_; }
  const Eigen::VectorXd& scales() const { return scales_; }

  friend bool operator==(const Preprocessor& lhs, const Preprocessor& rhs);

 private:
  Eigen::MatrixXd encode(const Table& table) const;

  std::vector<NumericColumn> numeric_;
  std::vector<CategoricalColumn> categorical_;
  Eigen::VectorXd means_;
  Eigen::VectorXd scales_;
};

// Class labels are the target cells' text, sorted.
struct LabelSet {
  std::vector<std::string> classes;
  int positive = -1;  // position of the positive class for binary tasks

  int encode(const std::string& label) const;
};

struct FittedFeatures {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  Preprocessor preprocessor;
  LabelSet label_set;
  std::size_t rows_used = 0;
};

// Feature columns: everything except the index, the target and text columns.
std::vector<std::string> feature_columns_of(const Table& table, const TaskSpec& task);

FittedFeatures fit_transform(const Table& train, const TaskSpec& task, const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Models

// Binary models carry one weight column; multinomial models one per class.
struct LogisticModel {
  Eigen::MatrixXd weights;  // features x (1 or classes)
  Eigen::VectorXd bias;
  int num_classes = 2;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  int num_classes = 2;
};

using Model = std::variant<LogisticModel, DecisionTree>;

// Parameter layout: column-major weights (features x outputs) followed by the
// per-output biases. Loss = mean cross-entropy + l2 * ||weights||^2.
double logistic_loss(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                     const Eigen::VectorXd& params, double l2, Eigen::VectorXd* gradient = nullptr);
std::size_t logistic_param_count(std::size_t num_features, int num_classes);
Eigen::VectorXd pack_params(const LogisticModel& model);

LogisticModel train_logistic(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                             const PipelineConfig& config);
DecisionTree train_tree(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                        const PipelineConfig& config);
Model train_model(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                  const PipelineConfig& config);

std::vector<int> predict(const Model& model, const Eigen::MatrixXd& features);
bool model_converged(const Model& model);

// ---------------------------------------------------------------------------
// Scoring

// Binary: 2TP / (2TP + FP + FN) for `positive`. Macro: unweighted mean of
// per-class F1 over the labels present in either vector. 0/0 counts as 0.
double f1_score(std::span<const int> predicted, std::span<const int> truth, F1Averaging averaging,
                int positive = 1);

struct EvalResult {
  double f1 = 0.0;
  std::size_t n_train_rows_used = 0;
  std::map<std::string, std::size_t> category_counts;
  std::size_t n_features = 0;
  bool converged = true;
  double wall_time_ms = 0.0;
};

struct BaselineReport {
  double p_clean = 0.0;
  double p_dirty = 0.0;
  double gap = 0.0;
};

nlohmann::json baseline_to_json(const BaselineReport& report);
BaselineReport baseline_from_json(const nlohmann::json& json);

// Fits on `train` (re-typed to the bundle schema) and scores on bundle.test_clean.
EvalResult evaluate_table(const Table& train, const DatasetBundle& bundle, const PipelineConfig& config);
EvalResult evaluate_submission(const std::filesystem::path& train_path, const DatasetBundle& bundle,
                               const PipelineConfig& config);
BaselineReport compute_baselines(const DatasetBundle& bundle, const PipelineConfig& config);

// Python rendering of the fixed pipeline, shown to agents.
std::string describe_pipeline(const TaskSpec& task, const PipelineConfig& config);

}  // namespace scrub
