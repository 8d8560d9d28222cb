#pragma once

// JSON model documents and diagnostics/prediction CSVs.

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "sdcm/evalkit.hpp"
#include "sdcm/graph_io.hpp"

namespace sdcm {

namespace detail {

inline nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Vector row = m.row(i).transpose();
    rows.push_back(vector_json(row));
  }
  return rows;
}

inline Vector vector_from_json(const nlohmann::json& j, const char* key) {
  if (!j.is_array()) throw ValidationError(std::string("model field '") + key + "' must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const char* key) {
  if (!j.is_array()) throw ValidationError(std::string("model field '") + key + "' must be an array of rows");
  const std::size_t cols = j.empty() ? 0 : j[0].size();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw ValidationError(std::string("model field '") + key + "' is ragged");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
  }
  return m;
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("model document lacks '") + key + "'");
  return j.at(key);
}

}  // namespace detail

inline nlohmann::json model_to_json(const FittedModel& fitted, const ModelConfig& config) {
  nlohmann::json j;
  j["model"] = std::string(model_name(fitted.kind));
  switch (fitted.kind) {
    case ModelKind::kLogistic: {
      const auto& m = std::get<LogisticModel>(fitted.model);
      j["w"] = detail::vector_json(m.w);
      j["b"] = m.b;
      j["separated"] = m.separated;
      j["l2"] = config.l2;
      break;
    }
    case ModelKind::kLatentClass: {
      const auto& m = std::get<LatentClassModel>(fitted.model);
      j["K"] = m.num_classes();
      j["W"] = detail::matrix_json(m.W);
      j["b"] = detail::vector_json(m.b);
      j["pi"] = detail::vector_json(m.pi);
      j["log_likelihood"] = m.log_likelihood;
      j["l2"] = config.l2;
      break;
    }
    case ModelKind::kLLGR: {
      const auto& m = std::get<ADMMResult>(fitted.model);
      j["lambda"] = config.lambda();
      j["W"] = detail::vector_json(m.params.W);
      j["b"] = detail::vector_json(m.params.b);
      j["converged"] = m.converged;
      j["iters"] = m.iters;
      break;
    }
    case ModelKind::kLCGR: {
      const auto& m = std::get<MCEMResult>(fitted.model);
      j["K"] = m.params.num_classes();
      j["lambda"] = config.lambda();
      j["W"] = detail::matrix_json(m.params.W);
      j["b"] = detail::matrix_json(m.params.b);
      j["converged"] = m.converged;
      nlohmann::json history = nlohmann::json::array();
      for (const auto& it : m.history) history.push_back({{"iter", it.iter}, {"Q", it.q}, {"samples", it.samples}});
      j["history"] = std::move(history);
      j["node_posterior"] = detail::matrix_json(m.posteriors.node);
      break;
    }
  }
  return j;
}

/// Inverse of model_to_json, enough to predict.
inline FittedModel model_from_json(const nlohmann::json& j) {
  FittedModel fitted;
  fitted.kind = parse_model_kind(detail::field(j, "model").get<std::string>());
  switch (fitted.kind) {
    case ModelKind::kLogistic: {
      LogisticModel m;
      m.w = detail::vector_from_json(detail::field(j, "w"), "w");
      m.b = detail::field(j, "b").get<double>();
      m.separated = j.value("separated", false);
      fitted.model = std::move(m);
      break;
    }
    case ModelKind::kLatentClass: {
      LatentClassModel m;
      m.W = detail::matrix_from_json(detail::field(j, "W"), "W");
      m.b = detail::vector_from_json(detail::field(j, "b"), "b");
      m.pi = detail::vector_from_json(detail::field(j, "pi"), "pi");
      if (m.b.size() != m.W.rows() || m.pi.size() != m.W.rows()) throw ValidationError("latent class shapes disagree");
      m.log_likelihood = j.value("log_likelihood", 0.0);
      fitted.model = std::move(m);
      break;
    }
    case ModelKind::kLLGR: {
      ADMMResult m;
      m.params.W = detail::vector_from_json(detail::field(j, "W"), "W");
      m.params.b = detail::vector_from_json(detail::field(j, "b"), "b");
      m.converged = j.value("converged", true);
      m.iters = j.value("iters", 0);
      fitted.converged = m.converged;
      fitted.model = std::move(m);
      break;
    }
    case ModelKind::kLCGR: {
      MCEMResult m;
      m.params.W = detail::matrix_from_json(detail::field(j, "W"), "W");
      m.params.b = detail::matrix_from_json(detail::field(j, "b"), "b");
      m.posteriors.node = detail::matrix_from_json(detail::field(j, "node_posterior"), "node_posterior");
      m.converged = j.value("converged", true);
      if (m.params.b.cols() != m.params.W.rows() || m.posteriors.node.rows() != m.params.b.rows() ||
          m.posteriors.node.cols() != m.params.W.rows())
        throw ValidationError("lcgr model shapes disagree");
      fitted.converged = m.converged;
      fitted.model = std::move(m);
      break;
    }
  }
  return fitted;
}

/// Checks that a loaded model fits data with `n` nodes and `d` features.
inline void check_model_shape(const FittedModel& fitted, std::size_t n, std::size_t d) {
  auto fail = [&] {
    throw DimensionError("model does not match the data (N=" + std::to_string(n) + ", d=" + std::to_string(d) + ")");
  };
  const auto dd = static_cast<Eigen::Index>(d);
  const auto nn = static_cast<Eigen::Index>(n);
  switch (fitted.kind) {
    case ModelKind::kLogistic:
      if (std::get<LogisticModel>(fitted.model).w.size() != dd) fail();
      break;
    case ModelKind::kLatentClass:
      if (std::get<LatentClassModel>(fitted.model).W.cols() != dd) fail();
      break;
    case ModelKind::kLLGR: {
      const auto& p = std::get<ADMMResult>(fitted.model).params;
      if (p.W.size() != dd || p.b.size() != nn) fail();
      break;
    }
    case ModelKind::kLCGR: {
      const auto& p = std::get<MCEMResult>(fitted.model).params;
      if (p.W.cols() != dd || p.b.rows() != nn) fail();
      break;
    }
  }
}

/// iter,objective,primal_residual,dual_residual,seconds; seconds are written
/// as 0 unless `timings` is set so that reruns are byte-identical.
inline std::string format_admm_diagnostics(const std::vector<ADMMIterate>& history, bool timings) {
  std::string out = "iter,objective,primal_residual,dual_residual,seconds\n";
  for (const auto& it : history)
    out += std::to_string(it.iter) + "," + format_double(it.objective) + "," + format_double(it.primal_residual) + "," +
           format_double(it.dual_residual) + "," + format_double(timings ? it.seconds : 0.0) + "\n";
  return out;
}

/// iter,samples,q_before,q,m_step_converged,seconds
inline std::string format_em_diagnostics(const std::vector<EMIterate>& history, bool timings) {
  std::string out = "iter,samples,q_before,q,m_step_converged,seconds\n";
  for (const auto& it : history)
    out += std::to_string(it.iter) + "," + std::to_string(it.samples) + "," + format_double(it.q_before) + "," +
           format_double(it.q) + "," + (it.m_step_converged ? "1" : "0") + "," +
           format_double(timings ? it.seconds : 0.0) + "\n";
  return out;
}

/// node_id,probability,label
inline std::string format_predictions(const std::vector<Prediction>& preds) {
  std::string out = "node_id,probability,label\n";
  for (const auto& p : preds)
    out += std::to_string(p.node) + "," + format_double(p.probability) + "," + std::to_string(int{p.label}) + "\n";
  return out;
}

}  // namespace sdcm
