#pragma once

// Embedded coefficient divergence minimization: a per-query n x n matrix W is
// fitted so that W^T v_q moves toward vectors of positive sample terms and
// away from negative ones; the projected query then scores the feedback
// vocabulary through a (weighted) softmax.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "prf/embeddings.hpp"
#include "prf/feedback_classic.hpp"
#include "prf/index.hpp"
#include "prf/random.hpp"

namespace prf {

enum class NegativeSource {
  FeedbackUnigram,      // p_ml(w|F)^(3/4)
  CollectionOnFeedback  // p(w|C)^(3/4) restricted to the terms of F
};

struct EcdmmParams {
  double alpha_pos = 0.8;
  double lambda_neg = 0.05;
  double beta = 0.01;
  std::size_t n_pos = 40;
  std::size_t n_neg = 100;
  double lambda_mix = 0.9;
  double eta0 = 0.01;
  double eta_decay = 0.01;
  int max_iter = 1000;
  double conv_tol = 1e-6;
  std::uint64_t rng_seed = 0;
  NegativeSource negative_source = NegativeSource::FeedbackUnigram;

  // Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Sample vectors are stored as columns.
template <typename Scalar>
struct SampleSets {
  std::vector<TermId> positive_terms;
  MatrixX<Scalar> positives;
  std::vector<TermId> negative_terms;
  MatrixX<Scalar> negatives;

  bool empty() const { return positives.cols() == 0 && negatives.cols() == 0; }
};

template <typename Scalar>
struct ProjectionMatrix {
  MatrixX<Scalar> W;
  // objective[0] is f(W0); objective[t] and step_norm[t-1] follow update t.
  std::vector<Scalar> objective;
  std::vector<Scalar> step_norm;
  bool converged = false;

  int iterations() const { return static_cast<int>(step_norm.size()); }
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<double> objective, std::vector<double> step_norm)
      : std::runtime_error(what), objective(std::move(objective)), step_norm(std::move(step_norm)) {}

  std::vector<double> objective;
  std::vector<double> step_norm;
};

namespace detail {

template <typename DW, typename DV, typename Scalar>
void check_dims(const Eigen::MatrixBase<DW>& W, const Eigen::MatrixBase<DV>& vq, const SampleSets<Scalar>& s) {
  const auto n = vq.size();
  if (W.rows() != n || W.cols() != n) {
    throw std::invalid_argument(fmt::format("W is {}x{}, query vector has length {}", W.rows(), W.cols(), n));
  }
  if ((s.positives.cols() > 0 && s.positives.rows() != n) || (s.negatives.cols() > 0 && s.negatives.rows() != n)) {
    throw std::invalid_argument("sample vectors do not match the query vector length");
  }
}

// Σ_i ||y - x_i||^2 over the columns of X.
template <typename DY, typename Scalar>
Scalar sum_sq_dist(const Eigen::MatrixBase<DY>& y, const MatrixX<Scalar>& X) {
  if (X.cols() == 0) return Scalar(0);
  return (X.colwise() - y).squaredNorm();
}

}  // namespace detail

// f(W) = Σ+ (a/2)||W^T v_q - v+||^2 - Σ- (l/2)||W^T v_q - v-||^2 - (b/2)||W||_F^2
template <typename DW, typename DV, typename Scalar = typename DW::Scalar>
Scalar ecdmm_objective(const Eigen::MatrixBase<DW>& W, const Eigen::MatrixBase<DV>& vq,
                       const SampleSets<Scalar>& samples, const EcdmmParams& params) {
  detail::check_dims(W, vq, samples);
  const VectorX<Scalar> y = W.transpose() * vq;
  const auto a = static_cast<Scalar>(params.alpha_pos);
  const auto l = static_cast<Scalar>(params.lambda_neg);
  const auto b = static_cast<Scalar>(params.beta);
  return a / 2 * detail::sum_sq_dist(y, samples.positives) - l / 2 * detail::sum_sq_dist(y, samples.negatives) -
         b / 2 * W.squaredNorm();
}

// df/dW = v_q (a Σ+ (W^T v_q - v+) - l Σ- (W^T v_q - v-))^T - b W.
// The residual sits on the right of the outer product because W^T v_q
// indexes W by column.
template <typename DW, typename DV, typename Scalar = typename DW::Scalar>
MatrixX<Scalar> ecdmm_gradient(const Eigen::MatrixBase<DW>& W, const Eigen::MatrixBase<DV>& vq,
                               const SampleSets<Scalar>& samples, const EcdmmParams& params) {
  detail::check_dims(W, vq, samples);
  const VectorX<Scalar> y = W.transpose() * vq;
  VectorX<Scalar> residual = VectorX<Scalar>::Zero(y.size());
  if (samples.positives.cols() > 0) {
    residual += static_cast<Scalar>(params.alpha_pos) *
                (static_cast<Scalar>(samples.positives.cols()) * y - samples.positives.rowwise().sum());
  }
  if (samples.negatives.cols() > 0) {
    residual -= static_cast<Scalar>(params.lambda_neg) *
                (static_cast<Scalar>(samples.negatives.cols()) * y - samples.negatives.rowwise().sum());
  }
  return vq * residual.transpose() - static_cast<Scalar>(params.beta) * W;
}

// Gradient descent from W0 ~ U[-1, 1] (seeded by params.rng_seed) with step
// eta_t = eta0 / (1 + eta_decay t). Stops when ||dW||_F < conv_tol or after
// max_iter updates; throws DivergenceError on a non-finite objective.
template <typename DV, typename Scalar = typename DV::Scalar>
ProjectionMatrix<Scalar> learn_projection(const Eigen::MatrixBase<DV>& vq, const SampleSets<Scalar>& samples,
                                          const EcdmmParams& params) {
  params.validate();
  if (samples.empty()) throw std::invalid_argument("learn_projection: no positive or negative samples");
  const auto n = vq.size();

  Rng rng(params.rng_seed);
  ProjectionMatrix<Scalar> out;
  out.W.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) out.W(i, j) = static_cast<Scalar>(uniform(rng, -1.0, 1.0));

  const auto diverged = [&out](int t) {
    return DivergenceError(fmt::format("projection learning diverged at iteration {}", t),
                           std::vector<double>(out.objective.begin(), out.objective.end()),
                           std::vector<double>(out.step_norm.begin(), out.step_norm.end()));
  };

  out.objective.push_back(ecdmm_objective(out.W, vq, samples, params));
  if (!std::isfinite(static_cast<double>(out.objective.back()))) throw diverged(0);
  for (int t = 0; t < params.max_iter; ++t) {
    const auto eta = static_cast<Scalar>(params.eta0 / (1.0 + params.eta_decay * t));
    const MatrixX<Scalar> step = -eta * ecdmm_gradient(out.W, vq, samples, params);
    out.W += step;
    out.step_norm.push_back(step.norm());
    out.objective.push_back(ecdmm_objective(out.W, vq, samples, params));
    if (!std::isfinite(static_cast<double>(out.objective.back())) || !out.W.allFinite()) throw diverged(t + 1);
    if (out.step_norm.back() < static_cast<Scalar>(params.conv_tol)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// W^T v_q
template <typename DW, typename DV>
VectorX<typename DW::Scalar> project_query(const Eigen::MatrixBase<DW>& W, const Eigen::MatrixBase<DV>& vq) {
  if (W.rows() != vq.size()) {
    throw std::invalid_argument(fmt::format("cannot project a length-{} vector with a {}x{} matrix", vq.size(),
                                            W.rows(), W.cols()));
  }
  return W.transpose() * vq;
}

inline QueryVector project_query(const ProjectionMatrix<double>& W, const QueryVector& vq) {
  return QueryVector{project_query(W.W, vq.values), vq.source_terms};
}

// Predicate selecting terms a sampler may return (e.g. terms with vectors).
using TermFilter = std::function<bool(TermId)>;

// Normalized weights (1-l)p_F / ((1-l)p_F + l p_C) over eligible F terms.
std::map<TermId, double> positive_sampling_weights(const FeedbackSet& fb, const Index& index,
                                                   const EcdmmParams& params, const TermFilter& eligible = {});
// Normalized p^(3/4) weights over eligible F terms.
std::map<TermId, double> negative_sampling_weights(const FeedbackSet& fb, const Index& index,
                                                   const EcdmmParams& params, const TermFilter& eligible = {});

// Distinct terms drawn by weighted sampling without replacement, capped by
// the support size. Throws std::invalid_argument on an empty support.
std::vector<TermId> sample_positive(const FeedbackSet& fb, const Index& index, const EcdmmParams& params, Rng& rng,
                                    const TermFilter& eligible = {});
std::vector<TermId> sample_negative(const FeedbackSet& fb, const Index& index, const EcdmmParams& params, Rng& rng,
                                    const TermFilter& eligible = {});

// Draws both sample sets among F terms present in `table`.
SampleSets<double> draw_samples(const FeedbackSet& fb, const Index& index, const EmbeddingTable& table,
                                const EcdmmParams& params, Rng& rng);

// softmax over sim(v_hat, v_w) for F terms with vectors; when `weighted`,
// each term's mass is scaled by c(w,F).
FeedbackLM ecdmm_feedback_lm(const Eigen::Ref<const Eigen::VectorXd>& vq_hat, const FeedbackSet& fb,
                             const Index& index, const EmbeddingTable& table, Similarity sim, bool weighted);

struct EcdmmExpansion {
  FeedbackLM model;
  QueryVector query;
  QueryVector projected;
  SampleSets<double> samples;
  ProjectionMatrix<double> projection;
};

// Full per-query pipeline. Sampling uses a stream derived from
// params.rng_seed; W initialization uses params.rng_seed directly.
EcdmmExpansion ecdmm_expand(const Index& index, const FeedbackSet& fb, const EmbeddingTable& table,
                            std::span<const std::string> query_terms, const EcdmmParams& params, Similarity sim,
                            bool weighted);

}  // namespace prf
