#pragma once

#include <span>

#include "tofu/nn/model.hpp"
#include "tofu/nn/tensor.hpp"

namespace tofu::nn {

// Numerically stable log-softmax of each logit row.
TensorBuf log_softmax(const TensorBuf& logits);
TensorBuf softmax(const TensorBuf& logits);

// Per-sample softmax cross-entropy.
LossVector task_loss(const TensorBuf& logits, std::span<const int> labels);

// Per-sample KL(softmax(p_logits) || softmax(q_logits)). The first argument
// is the distribution on the transformed input.
LossVector kl_div(const TensorBuf& p_logits, const TensorBuf& q_logits);

struct LossAndGrad {
  Real loss = 0.0;
  GradVector grad;
};

// mean_i [ CE(f(x*_i), y_i) + gamma * KL(f(x*_i) || f(x_i)) ]
//
// The gradient flows through both logit evaluations. With gamma == 0 the
// clean branch is never evaluated.
LossAndGrad tofu_loss(const ModelSpec& spec, const ParamVector& params, const TensorBuf& orig_batch,
                      const TensorBuf& transformed_batch, std::span<const int> labels, Real gamma);

// Mean cross-entropy and its gradient.
LossAndGrad task_loss_and_grad(const ModelSpec& spec, const ParamVector& params, const TensorBuf& batch,
                               std::span<const int> labels);

// Per-sample losses with no gradient work.
LossVector per_sample_loss(const ModelSpec& spec, const ParamVector& params, const TensorBuf& batch,
                           std::span<const int> labels);

}  // namespace tofu::nn
