#pragma once

#include <vector>

#include "vbcp/model.hpp"

namespace vbcp {

/// Posterior of the two-mode (matrix) model: factor U of the rows, factor
/// V of the columns, shared component precisions, noise precision.
struct MatrixState {
  GaussianVecPosterior u_posterior;
  GaussianVecPosterior v_posterior;
  std::vector<GammaPosterior> lambda;
  GammaPosterior tau;
};

/// Literal, unoptimized transcription of the matrix-case update equations,
/// used as a test oracle for the d-dimensional engine at d = 2. Kronecker
/// factors such as (I_k (x) h^T) are materialized densely and the noise
/// rate update keeps its four-term expansion, including the cross term
/// Tr{A_v (I_k (x) h g^T) A_u (I_k (x) g h^T)}. Deliberately shares no
/// kernels with the engine beyond plain matrix arithmetic. Restricted to
/// m * k <= 64 (dense Kronecker memory); test-only.
MatrixState matrix_sweep(const CompletionProblem& problem,
                         const MatrixState& s);

/// The matrix-case Student's-t predictive, in the dimensionally consistent
/// reading: 1/xi = d0/c0 + (M_v^T h)^T (I_k (x) g^T) A_u (I_k (x) g) (M_v^T h)
///                       + (M_u^T g)^T (I_k (x) h^T) A_v (I_k (x) h) (M_u^T g).
PredictiveT matrix_predict(const CompletionProblem& problem,
                           const MatrixState& s, const Index& index);

/// Conversions for cross-checking against the d-dimensional engine.
MatrixState matrix_state_from_posterior(const PosteriorState& state);
PosteriorState posterior_from_matrix_state(const MatrixState& s,
                                           const CompletionProblem& problem,
                                           std::int64_t iteration = 0);

/// Dense Kronecker product (local utility; quadratic memory, oracle use).
Matrix dense_kron(const Matrix& a, const Matrix& b);

}  // namespace vbcp
