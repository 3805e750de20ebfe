#include "scrub/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "scrub/error.hpp"

namespace scrub {

using nlohmann::json;

json pipeline_config_to_json(const PipelineConfig& config) {
  const char* averaging = config.averaging == F1Averaging::Auto     ? "auto"
                          : config.averaging == F1Averaging::Binary ? "binary"
                                                                    : "macro";
  return {{"top_k", config.top_k},
          {"variance_floor", config.variance_floor},
          {"model", config.model == ModelKind::LogisticRegression ? "logistic_regression" : "decision_tree"},
          {"l2", config.l2},
          {"max_iterations", config.max_iterations},
          {"tolerance", config.tolerance},
          {"tree_depth", config.tree_depth},
          {"tree_min_leaf", config.tree_min_leaf},
          {"f1_averaging", averaging},
          {"training_seed", config.training_seed}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig config;
  try {
    config.top_k = j.value("top_k", config.top_k);
    config.variance_floor = j.value("variance_floor", config.variance_floor);
    const auto model = j.value("model", std::string("logistic_regression"));
    if (model == "logistic_regression") {
      config.model = ModelKind::LogisticRegression;
    } else if (model == "decision_tree") {
      config.model = ModelKind::DecisionTree;
    } else {
      throw Error(ErrorKind::InvalidConfig, "unknown model '" + model + "'");
    }
    config.l2 = j.value("l2", config.l2);
    config.max_iterations = j.value("max_iterations", config.max_iterations);
    config.tolerance = j.value("tolerance", config.tolerance);
    config.tree_depth = j.value("tree_depth", config.tree_depth);
    config.tree_min_leaf = j.value("tree_min_leaf", config.tree_min_leaf);
    const auto averaging = j.value("f1_averaging", std::string("auto"));
    if (averaging == "auto") {
      config.averaging = F1Averaging::Auto;
    } else if (averaging == "binary") {
      config.averaging = F1Averaging::Binary;
    } else if (averaging == "macro") {
      config.averaging = F1Averaging::Macro;
    } else {
      throw Error(ErrorKind::InvalidConfig, "unknown f1_averaging '" + averaging + "'");
    }
    config.training_seed = j.value("training_seed", config.training_seed);
  } catch (const json::exception& error) {
    throw Error(ErrorKind::InvalidConfig, std::string("pipeline: ") + error.what());
  }
  if (config.top_k == 0 || config.max_iterations <= 0 || !(config.tolerance > 0) || config.l2 < 0) {
    throw Error(ErrorKind::InvalidConfig, "pipeline: top_k, max_iterations, tolerance must be positive, l2 >= 0");
  }
  return config;
}

// ---------------------------------------------------------------------------
// Preprocessing

namespace {

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::optional<double> numeric_value(const Cell& cell) {
  if (const auto* number = std::get_if<double>(&cell)) return *number;
  if (const auto* text = std::get_if<std::string>(&cell)) return parse_number(*text);
  return std::nullopt;
}

}  // namespace

Preprocessor Preprocessor::fit(const Table& train, std::span<const std::string> feature_columns,
                               const PipelineConfig& config) {
  Preprocessor pre;
  for (const auto& name : feature_columns) {
    const auto position = train.column_position(name);
    const auto cells = train.column_cells(position);
    if (train.column(position).kind == ColumnKind::Numeric) {
      std::vector<double> values;
      for (const auto& cell : cells) {
        if (auto value = numeric_value(cell)) values.push_back(*value);
      }
      pre.numeric_.push_back({name, median_of(std::move(values))});
    } else {
      std::map<std::string, std::size_t> counts;
      for (const auto& cell : cells) {
        if (!is_missing(cell)) ++counts[cell_to_string(cell)];
      }
      std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
      // std::map order is lexicographic, so a stable sort on count keeps ties lexicographic.
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      CategoricalColumn column{name, {}};
      for (std::size_t i = 0; i < ranked.size() && i < config.top_k; ++i) column.vocabulary.push_back(ranked[i].first);
      pre.categorical_.push_back(std::move(column));
    }
  }

  const Eigen::MatrixXd raw = pre.encode(train);
  const auto n = static_cast<double>(raw.rows());
  pre.means_ = Eigen::VectorXd::Zero(raw.cols());
  pre.scales_ = Eigen::VectorXd::Ones(raw.cols());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    double sum = 0.0;
    for (Eigen::Index r = 0; r < raw.rows(); ++r) sum += raw(r, c);
    const double mean = raw.rows() > 0 ? sum / n : 0.0;
    double squares = 0.0;
    for (Eigen::Index r = 0; r < raw.rows(); ++r) squares += (raw(r, c) - mean) * (raw(r, c) - mean);
    const double variance = raw.rows() > 0 ? squares / n : 0.0;
    pre.means_(c) = mean;
    pre.scales_(c) = std::sqrt(std::max(variance, config.variance_floor));
  }
  return pre;
}

Eigen::MatrixXd Preprocessor::encode(const Table& table) const {
  std::size_t width = numeric_.size();
  for (const auto& column : categorical_) width += column.vocabulary.size() + 2;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(table.num_rows()),
                                              static_cast<Eigen::Index>(width));
  const auto rows = static_cast<Eigen::Index>(table.num_rows());
  Eigen::Index offset = 0;
  for (const auto& column : numeric_) {
    const auto position = table.find_column(column.name);
    for (Eigen::Index r = 0; r < rows; ++r) {
      std::optional<double> value;
      if (position) value = numeric_value(table.cell(static_cast<std::size_t>(r), *position));
      out(r, offset) = value.value_or(column.median);
    }
    ++offset;
  }
  for (const auto& column : categorical_) {
    const auto position = table.find_column(column.name);
    std::unordered_map<std::string, Eigen::Index> slots;
    for (std::size_t i = 0; i < column.vocabulary.size(); ++i) {
      slots.emplace(column.vocabulary[i], static_cast<Eigen::Index>(i));
    }
    const auto other = static_cast<Eigen::Index>(column.vocabulary.size());
    const auto missing = other + 1;
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Index slot = missing;
      if (position) {
        const auto& cell = table.cell(static_cast<std::size_t>(r), *position);
        if (!is_missing(cell)) {
          const auto it = slots.find(cell_to_string(cell));
          slot = it == slots.end() ? other : it->second;
        }
      }
      out(r, offset + slot) = 1.0;
    }
    offset += missing + 1;
  }
  return out;
}

Eigen::MatrixXd Preprocessor::transform(const Table& table) const {
  Eigen::MatrixXd out = encode(table);
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    out.col(c) = (out.col(c).array() - means_(c)) / scales_(c);
  }
  return out;
}

std::vector<std::string> Preprocessor::feature_names() const {
  std::vector<std::string> names;
  for (const auto& column : numeric_) names.push_back(column.name);
  for (const auto& column : categorical_) {
    for (const auto& category : column.vocabulary) names.push_back(column.name + "=" + category);
    names.push_back(column.name + "=" + std::string(kOtherToken));
    names.push_back(column.name + "=" + std::string(kMissingToken));
  }
  return names;
}

bool operator==(const Preprocessor& lhs, const Preprocessor& rhs) {
  auto same_numeric = std::equal(lhs.numeric_.begin(), lhs.numeric_.end(), rhs.numeric_.begin(),
                                 rhs.numeric_.end(), [](const auto& a, const auto& b) {
                                   return a.name == b.name && a.median == b.median;
                                 });
  auto same_categorical = std::equal(lhs.categorical_.begin(), lhs.categorical_.end(), rhs.categorical_.begin(),
                                     rhs.categorical_.end(), [](const auto& a, const auto& b) {
                                       return a.name == b.name && a.vocabulary == b.vocabulary;
                                     });
  return same_numeric && same_categorical && lhs.means_ == rhs.means_ && lhs.scales_ == rhs.scales_;
}

int LabelSet::encode(const std::string& label) const {
  const auto it = std::lower_bound(classes.begin(), classes.end(), label);
  return it != classes.end() && *it == label ? static_cast<int>(it - classes.begin()) : -1;
}

std::vector<std::string> feature_columns_of(const Table& table, const TaskSpec& task) {
  std::vector<std::string> columns;
  for (const auto& spec : table.columns()) {
    if (spec.name == task.target_column || spec.name == task.index_column) continue;
    if (table.index_column() && spec.name == *table.index_column()) continue;
    if (spec.kind == ColumnKind::Text) continue;
    columns.push_back(spec.name);
  }
  return columns;
}

FittedFeatures fit_transform(const Table& train, const TaskSpec& task, const PipelineConfig& config) {
  const auto target = train.find_column(task.target_column);
  if (!target) throw Error(ErrorKind::MissingTarget, "no target column '" + task.target_column + "'");
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < train.num_rows(); ++r) {
    if (!is_missing(train.cell(r, *target))) rows.push_back(r);
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyTrain, "no training rows with a target value");
  const Table usable = rows.size() == train.num_rows() ? train : train.take_rows(rows);

  FittedFeatures fitted;
  std::set<std::string> classes;
  for (std::size_t r = 0; r < usable.num_rows(); ++r) classes.insert(cell_to_string(usable.cell(r, *target)));
  if (classes.size() < 2) throw Error(ErrorKind::DegenerateTarget, "training target has a single class");
  fitted.label_set.classes.assign(classes.begin(), classes.end());
  if (classes.size() == 2) {
    fitted.label_set.positive = task.positive_label ? fitted.label_set.encode(*task.positive_label) : -1;
    if (fitted.label_set.positive < 0) fitted.label_set.positive = 1;
  }

  const auto features = feature_columns_of(usable, task);
  fitted.preprocessor = Preprocessor::fit(usable, features, config);
  fitted.features = fitted.preprocessor.transform(usable);
  fitted.labels.reserve(usable.num_rows());
  for (std::size_t r = 0; r < usable.num_rows(); ++r) {
    fitted.labels.push_back(fitted.label_set.encode(cell_to_string(usable.cell(r, *target))));
  }
  fitted.rows_used = usable.num_rows();
  return fitted;
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

int output_count(int num_classes) { return num_classes == 2 ? 1 : num_classes; }

}  // namespace

std::size_t logistic_param_count(std::size_t num_features, int num_classes) {
  const auto outputs = static_cast<std::size_t>(output_count(num_classes));
  return num_features * outputs + outputs;
}

Eigen::VectorXd pack_params(const LogisticModel& model) {
  const auto d = model.weights.rows();
  const auto k = model.weights.cols();
  Eigen::VectorXd params(d * k + k);
  for (Eigen::Index j = 0; j < k; ++j) params.segment(j * d, d) = model.weights.col(j);
  params.tail(k) = model.bias;
  return params;
}

namespace {

struct Probabilities {
  Eigen::MatrixXd p;  // n x outputs
  double loss = 0.0;
};

Probabilities forward(const Eigen::MatrixXd& x, std::span<const int> labels, int num_classes,
                      const Eigen::VectorXd& params) {
  const auto n = x.rows();
  const auto d = x.cols();
  const int k = output_count(num_classes);
  const Eigen::Map<const Eigen::MatrixXd> weights(params.data(), d, k);
  const Eigen::VectorXd bias = params.tail(k);
  Eigen::MatrixXd z = x * weights;
  z.rowwise() += bias.transpose();

  Probabilities out{Eigen::MatrixXd(n, k), 0.0};
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (k == 1) {
      const double zi = z(i, 0);
      // softplus(z) - y * z, computed stably
      const double softplus = zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
      total += softplus - (y == 1 ? zi : 0.0);
      out.p(i, 0) = zi >= 0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
    } else {
      const double top = z.row(i).maxCoeff();
      double sum = 0.0;
      for (int c = 0; c < k; ++c) sum += std::exp(z(i, c) - top);
      const double lse = top + std::log(sum);
      total += lse - z(i, y);
      for (int c = 0; c < k; ++c) out.p(i, c) = std::exp(z(i, c) - lse);
    }
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

Eigen::MatrixXd residuals(const Probabilities& probs, std::span<const int> labels) {
  Eigen::MatrixXd r = probs.p;
  const bool binary = r.cols() == 1;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (binary) {
      r(i, 0) -= y == 1 ? 1.0 : 0.0;
    } else {
      r(i, y) -= 1.0;
    }
  }
  return r;
}

Eigen::VectorXd gradient_of(const Eigen::MatrixXd& x, const Eigen::MatrixXd& residual, const Eigen::VectorXd& params,
                            double l2) {
  const auto n = static_cast<double>(x.rows());
  const auto d = x.cols();
  const auto k = residual.cols();
  Eigen::VectorXd gradient(params.size());
  const Eigen::MatrixXd gw = x.transpose() * residual / n;
  for (Eigen::Index j = 0; j < k; ++j) {
    gradient.segment(j * d, d) = gw.col(j) + 2.0 * l2 * params.segment(j * d, d);
  }
  gradient.tail(k) = residual.colwise().sum().transpose() / n;
  return gradient;
}

Eigen::MatrixXd hessian_of(const Eigen::MatrixXd& x, const Probabilities& probs, double l2) {
  const auto n = x.rows();
  const auto d = x.cols();
  const auto k = probs.p.cols();
  const auto size = d * k + k;
  Eigen::MatrixXd augmented(n, d + 1);
  augmented.leftCols(d) = x;
  augmented.col(d).setOnes();
  auto slot = [&](Eigen::Index output, Eigen::Index j) { return j < d ? output * d + j : d * k + output; };

  Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(size, size);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = a; b < k; ++b) {
      Eigen::VectorXd s(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (k == 1) {
          s(i) = probs.p(i, 0) * (1.0 - probs.p(i, 0));
        } else {
          s(i) = probs.p(i, a) * ((a == b ? 1.0 : 0.0) - probs.p(i, b));
        }
      }
      s /= static_cast<double>(n);
      const Eigen::MatrixXd block = augmented.transpose() * s.asDiagonal() * augmented;
      for (Eigen::Index p = 0; p <= d; ++p) {
        for (Eigen::Index q = 0; q <= d; ++q) {
          hessian(slot(a, p), slot(b, q)) = block(p, q);
          hessian(slot(b, q), slot(a, p)) = block(p, q);
        }
      }
    }
  }
  for (Eigen::Index i = 0; i < d * k; ++i) hessian(i, i) += 2.0 * l2;
  return hessian;
}

}  // namespace

double logistic_loss(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                     const Eigen::VectorXd& params, double l2, Eigen::VectorXd* gradient) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw Error(ErrorKind::LengthMismatch, "feature rows and labels differ in length");
  }
  const auto d = features.cols();
  const auto k = output_count(num_classes);
  const auto probs = forward(features, labels, num_classes, params);
  const double penalty = l2 * params.head(d * k).squaredNorm();
  if (gradient != nullptr) *gradient = gradient_of(features, residuals(probs, labels), params, l2);
  return probs.loss + penalty;
}

LogisticModel train_logistic(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                             const PipelineConfig& config) {
  if (features.rows() == 0) throw Error(ErrorKind::EmptyTrain, "no training rows");
  if (num_classes < 2) throw Error(ErrorKind::DegenerateTarget, "fewer than two classes");
  const auto d = features.cols();
  const int k = output_count(num_classes);
  const double penalty_scale = config.l2;

  Eigen::VectorXd params = Eigen::VectorXd::Zero(d * k + k);
  auto objective = [&](const Eigen::VectorXd& theta, Probabilities& probs) {
    probs = forward(features, labels, num_classes, theta);
    return probs.loss + penalty_scale * theta.head(d * k).squaredNorm();
  };

  Probabilities probs;
  double loss = objective(params, probs);
  Eigen::VectorXd gradient = gradient_of(features, residuals(probs, labels), params, config.l2);
  Eigen::VectorXd best = params;
  double best_loss = loss;
  double best_norm = gradient.norm();

  LogisticModel model;
  model.num_classes = num_classes;
  int iteration = 0;
  for (; iteration < config.max_iterations && gradient.norm() > config.tolerance; ++iteration) {
    Eigen::MatrixXd hessian = hessian_of(features, probs, config.l2);
    hessian.diagonal().array() += 1e-10;
    Eigen::LDLT<Eigen::MatrixXd> solver(hessian);
    Eigen::VectorXd direction = solver.solve(gradient);
    if (solver.info() != Eigen::Success || !direction.allFinite() || direction.dot(gradient) <= 0) {
      direction = gradient;
    }
    // Armijo backtracking.
    double step = 1.0;
    const double slope = direction.dot(gradient);
    Eigen::VectorXd candidate;
    Probabilities candidate_probs;
    double candidate_loss = loss;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
      candidate = params - step * direction;
      candidate_loss = objective(candidate, candidate_probs);
      if (candidate_loss <= loss - 1e-4 * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    params = std::move(candidate);
    probs = std::move(candidate_probs);
    loss = candidate_loss;
    gradient = gradient_of(features, residuals(probs, labels), params, config.l2);
    if (loss < best_loss || (loss == best_loss && gradient.norm() < best_norm)) {
      best = params;
      best_loss = loss;
      best_norm = gradient.norm();
    }
  }

  model.weights = Eigen::Map<const Eigen::MatrixXd>(best.data(), d, k);
  model.bias = best.tail(k);
  model.iterations = iteration;
  model.gradient_norm = best_norm;
  model.converged = best_norm <= config.tolerance;
  return model;
}

// ---------------------------------------------------------------------------
// Decision tree

namespace {

double gini(const std::vector<std::size_t>& counts, std::size_t total) {
  if (total == 0) return 0.0;
  double sum = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum += p * p;
  }
  return 1.0 - sum;
}

int majority(const std::vector<std::size_t>& counts) {
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

int grow(DecisionTree& tree, const Eigen::MatrixXd& x, std::span<const int> labels, std::vector<std::size_t> rows,
         int depth, const PipelineConfig& config) {
  const auto classes = static_cast<std::size_t>(tree.num_classes);
  std::vector<std::size_t> counts(classes, 0);
  for (auto r : rows) ++counts[static_cast<std::size_t>(labels[r])];
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({-1, 0.0, -1, -1, majority(counts)});

  const double parent = gini(counts, rows.size());
  if (depth >= config.tree_depth || parent == 0.0 || rows.size() < 2 * config.tree_min_leaf) return node_id;

  double best_impurity = parent - 1e-12;
  int best_feature = -1;
  double best_threshold = 0.0;
  std::vector<std::size_t> order = rows;
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x(static_cast<Eigen::Index>(a), f) <
                                                                x(static_cast<Eigen::Index>(b), f); });
    std::vector<std::size_t> left(classes, 0);
    std::vector<std::size_t> right = counts;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const auto label = static_cast<std::size_t>(labels[order[i]]);
      ++left[label];
      --right[label];
      const double here = x(static_cast<Eigen::Index>(order[i]), f);
      const double next = x(static_cast<Eigen::Index>(order[i + 1]), f);
      const auto n_left = i + 1;
      const auto n_right = order.size() - n_left;
      if (here == next || n_left < config.tree_min_leaf || n_right < config.tree_min_leaf) continue;
      const double impurity = (static_cast<double>(n_left) * gini(left, n_left) +
                               static_cast<double>(n_right) * gini(right, n_right)) /
                              static_cast<double>(order.size());
      if (impurity < best_impurity) {
        best_impurity = impurity;
        best_feature = static_cast<int>(f);
        best_threshold = 0.5 * (here + next);
      }
    }
  }
  if (best_feature < 0) return node_id;

  std::vector<std::size_t> left_rows;
  std::vector<std::size_t> right_rows;
  for (auto r : rows) {
    (x(static_cast<Eigen::Index>(r), best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
  }
  rows.clear();
  rows.shrink_to_fit();
  const int left = grow(tree, x, labels, std::move(left_rows), depth + 1, config);
  const int right = grow(tree, x, labels, std::move(right_rows), depth + 1, config);
  auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
  node.feature = best_feature;
  node.threshold = best_threshold;
  node.left = left;
  node.right = right;
  return node_id;
}

}  // namespace

DecisionTree train_tree(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                        const PipelineConfig& config) {
  if (features.rows() == 0) throw Error(ErrorKind::EmptyTrain, "no training rows");
  DecisionTree tree;
  tree.num_classes = num_classes;
  std::vector<std::size_t> rows(static_cast<std::size_t>(features.rows()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  grow(tree, features, labels, std::move(rows), 0, config);
  return tree;
}

Model train_model(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                  const PipelineConfig& config) {
  if (config.model == ModelKind::DecisionTree) return train_tree(features, labels, num_classes, config);
  return train_logistic(features, labels, num_classes, config);
}

std::vector<int> predict(const Model& model, const Eigen::MatrixXd& features) {
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  if (const auto* logistic = std::get_if<LogisticModel>(&model)) {
    Eigen::MatrixXd z = features * logistic->weights;
    z.rowwise() += logistic->bias.transpose();
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      if (z.cols() == 1) {
        out[static_cast<std::size_t>(i)] = z(i, 0) > 0.0 ? 1 : 0;
      } else {
        Eigen::Index best = 0;
        z.row(i).maxCoeff(&best);
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
      }
    }
    return out;
  }
  const auto& tree = std::get<DecisionTree>(model);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    std::size_t node = 0;
    while (tree.nodes[node].feature >= 0) {
      const auto& n = tree.nodes[node];
      node = static_cast<std::size_t>(features(i, n.feature) <= n.threshold ? n.left : n.right);
    }
    out[static_cast<std::size_t>(i)] = tree.nodes[node].label;
  }
  return out;
}

bool model_converged(const Model& model) {
  if (const auto* logistic = std::get_if<LogisticModel>(&model)) return logistic->converged;
  return true;
}

// ---------------------------------------------------------------------------
// Scoring

double f1_score(std::span<const int> predicted, std::span<const int> truth, F1Averaging averaging, int positive) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw Error(ErrorKind::LengthMismatch, "prediction and truth vectors must be equal and non-empty");
  }
  std::set<int> labels(truth.begin(), truth.end());
  labels.insert(predicted.begin(), predicted.end());
  if (averaging == F1Averaging::Auto) averaging = labels.size() <= 2 ? F1Averaging::Binary : F1Averaging::Macro;

  auto class_f1 = [&](int label) {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool p = predicted[i] == label;
      const bool t = truth[i] == label;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    const auto denominator = 2 * tp + fp + fn;
    return denominator == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denominator);
  };

  if (averaging == F1Averaging::Binary) return class_f1(positive);
  double sum = 0.0;
  for (int label : labels) sum += class_f1(label);
  return sum / static_cast<double>(labels.size());
}

json baseline_to_json(const BaselineReport& report) {
  return {{"p_clean", report.p_clean}, {"p_dirty", report.p_dirty}, {"gap", report.gap}};
}

BaselineReport baseline_from_json(const json& j) {
  try {
    return {j.at("p_clean").get<double>(), j.at("p_dirty").get<double>(), j.at("gap").get<double>()};
  } catch (const json::exception& error) {
    throw Error(ErrorKind::MissingBaselines, error.what());
  }
}

EvalResult evaluate_table(const Table& train, const DatasetBundle& bundle, const PipelineConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  std::map<std::string, ColumnKind, std::less<>> kinds;
  for (const auto& spec : bundle.train_clean.columns()) kinds.emplace(spec.name, spec.kind);
  const Table typed = train.cast_to(kinds);

  auto fitted = fit_transform(typed, bundle.task, config);
  const int num_classes = static_cast<int>(fitted.label_set.classes.size());
  const auto model = train_model(fitted.features, fitted.labels, num_classes, config);

  const auto& test = bundle.test_clean;
  const auto target = test.column_position(bundle.task.target_column);
  std::vector<std::size_t> scored;
  for (std::size_t r = 0; r < test.num_rows(); ++r) {
    if (!is_missing(test.cell(r, target))) scored.push_back(r);
  }
  const Table test_rows = scored.size() == test.num_rows() ? test : test.take_rows(scored);
  const auto predicted = predict(model, fitted.preprocessor.transform(test_rows));

  std::map<std::string, int> unseen;
  std::vector<int> truth;
  truth.reserve(test_rows.num_rows());
  for (std::size_t r = 0; r < test_rows.num_rows(); ++r) {
    const auto label = cell_to_string(test_rows.cell(r, target));
    int code = fitted.label_set.encode(label);
    if (code < 0) code = unseen.emplace(label, num_classes + static_cast<int>(unseen.size())).first->second;
    truth.push_back(code);
  }

  auto averaging = config.averaging;
  if (averaging == F1Averaging::Auto) {
    averaging = num_classes + unseen.size() == 2 ? F1Averaging::Binary : F1Averaging::Macro;
  }
  const int positive = fitted.label_set.positive >= 0 ? fitted.label_set.positive : 1;

  EvalResult result;
  result.f1 = f1_score(predicted, truth, averaging, positive);
  result.n_train_rows_used = fitted.rows_used;
  for (const auto& column : fitted.preprocessor.categorical_columns()) {
    result.category_counts[column.name] = column.vocabulary.size();
  }
  result.n_features = fitted.preprocessor.num_features();
  result.converged = model_converged(model);
  result.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return result;
}

EvalResult evaluate_submission(const std::filesystem::path& train_path, const DatasetBundle& bundle,
                               const PipelineConfig& config) {
  LoadOptions options;
  options.index_column = bundle.task.index_column;
  return evaluate_table(load_csv(train_path, options), bundle, config);
}

BaselineReport compute_baselines(const DatasetBundle& bundle, const PipelineConfig& config) {
  if (!bundle.train_dirty) throw Error(ErrorKind::MissingBaselines, "bundle has no dirty training table");
  BaselineReport report;
  report.p_clean = evaluate_table(bundle.train_clean, bundle, config).f1;
  report.p_dirty = evaluate_table(*bundle.train_dirty, bundle, config).f1;
  report.gap = report.p_clean - report.p_dirty;
  return report;
}

std::string describe_pipeline(const TaskSpec& task, const PipelineConfig& config) {
  std::ostringstream out;
  out << "import numpy as np\n"
         "import pandas as pd\n";
  if (config.model == ModelKind::LogisticRegression) {
    out << "from sklearn.linear_model import LogisticRegression\n";
  } else {
    out << "from sklearn.tree import DecisionTreeClassifier\n";
  }
  out << "\n"
      << "TARGET = \"" << task.target_column << "\"\n"
      << "INDEX = \"" << task.index_column << "\"\n"
      << "TOP_K = " << config.top_k << "\n"
      << "\n"
         "def preprocess(train: pd.DataFrame, test: pd.DataFrame):\n"
         "    train = train.dropna(subset=[TARGET])\n"
         "    features = [c for c in train.columns if c not in (TARGET, INDEX)]\n"
         "    blocks_train, blocks_test = [], []\n"
         "    for col in features:\n"
         "        if pd.api.types.is_numeric_dtype(train[col]):\n"
         "            median = train[col].median()\n"
         "            blocks_train.append(train[[col]].fillna(median))\n"
         "            blocks_test.append(test[[col]].fillna(median))\n"
         "        else:\n"
         "            counts = train[col].value_counts()\n"
         "            ranked = sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0])))\n"
         "            vocab = [k for k, _ in ranked[:TOP_K]]\n"
         "            def encode(s):\n"
         "                s = s.astype(object).where(s.notna(), \"" << kMissingToken << "\")\n"
         "                s = s.where(s.isin(vocab + [\"" << kMissingToken << "\"]), \"" << kOtherToken << "\")\n"
         "                cats = vocab + [\"" << kOtherToken << "\", \"" << kMissingToken << "\"]\n"
         "                return pd.get_dummies(pd.Categorical(s, categories=cats), prefix=col).astype(float)\n"
         "            blocks_train.append(encode(train[col]).set_index(train.index))\n"
         "            blocks_test.append(encode(test[col]).set_index(test.index))\n"
         "    X_train = pd.concat(blocks_train, axis=1)\n"
         "    X_test = pd.concat(blocks_test, axis=1)\n"
         "    mean = X_train.mean()\n"
         "    std = np.sqrt(np.maximum(X_train.var(ddof=0), " << format_number(config.variance_floor) << "))\n"
         "    return (X_train - mean) / std, train[TARGET], (X_test - mean) / std\n"
         "\n";
  if (config.model == ModelKind::LogisticRegression) {
    out << "# Full-batch Newton solve of mean cross-entropy + " << format_number(config.l2)
        << " * ||w||^2, from zero weights.\n"
        << "model = LogisticRegression(C=1.0 / (2 * " << format_number(config.l2)
        << " * len(X_train)), max_iter=" << config.max_iterations << ", tol=" << format_number(config.tolerance)
        << ")\n";
  } else {
    out << "model = DecisionTreeClassifier(max_depth=" << config.tree_depth
        << ", min_samples_leaf=" << config.tree_min_leaf << ")\n";
  }
  out << "# Score: F1 on the held-out test set ("
      << (config.averaging == F1Averaging::Macro ? "macro" : "positive class for binary targets, macro otherwise")
      << ").\n";
  return out.str();
}

}  // namespace scrub
