#include "tofu/nn/loss.hpp"

#include <cmath>

namespace tofu::nn {

namespace {

void check_logits(const TensorBuf& logits) {
  if (logits.rank() != 2) throw ShapeError("logits must be (batch, classes), got " + shape_to_string(logits.shape()));
}

void check_labels(const TensorBuf& logits, std::span<const int> labels) {
  check_logits(logits);
  if (labels.size() != logits.dim(0))
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(logits.dim(0)));
  const auto classes = static_cast<int>(logits.dim(1));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      throw ArgumentError("label " + std::to_string(labels[i]) + " at position " + std::to_string(i) +
                          " is outside [0, " + std::to_string(classes) + ")");
  }
}

Real row_kl(std::span<const Real> lp, std::span<const Real> lq) {
  Real kl = 0.0;
  for (std::size_t j = 0; j < lp.size(); ++j) kl += std::exp(lp[j]) * (lp[j] - lq[j]);
  // Rounding can leave a tiny negative value when the rows coincide.
  return kl > 0.0 ? kl : 0.0;
}

}  // namespace

TensorBuf log_softmax(const TensorBuf& logits) {
  check_logits(logits);
  TensorBuf out = logits;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    auto r = out.row(i);
    Real mx = r[0];
    for (auto v : r) mx = std::max(mx, v);
    Real s = 0.0;
    for (auto v : r) s += std::exp(v - mx);
    const Real lse = mx + std::log(s);
    for (auto& v : r) v -= lse;
  }
  return out;
}

TensorBuf softmax(const TensorBuf& logits) {
  TensorBuf out = log_softmax(logits);
  for (auto& v : out.data()) v = std::exp(v);
  return out;
}

LossVector task_loss(const TensorBuf& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const TensorBuf lp = log_softmax(logits);
  LossVector loss(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Real l = -lp.row(i)[static_cast<std::size_t>(labels[i])];
    loss[i] = l > 0.0 ? l : 0.0;
  }
  return loss;
}

LossVector kl_div(const TensorBuf& p_logits, const TensorBuf& q_logits) {
  check_logits(p_logits);
  if (p_logits.shape() != q_logits.shape())
    throw ShapeError("kl_div: shapes " + shape_to_string(p_logits.shape()) + " and " +
                     shape_to_string(q_logits.shape()) + " differ");
  const TensorBuf lp = log_softmax(p_logits);
  const TensorBuf lq = log_softmax(q_logits);
  LossVector out(p_logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = row_kl(lp.row(i), lq.row(i));
  return out;
}

LossAndGrad tofu_loss(const ModelSpec& spec, const ParamVector& params, const TensorBuf& orig_batch,
                      const TensorBuf& transformed_batch, std::span<const int> labels, Real gamma) {
  if (orig_batch.shape() != transformed_batch.shape())
    throw ShapeError("tofu_loss: original batch " + shape_to_string(orig_batch.shape()) +
                     " and transformed batch " + shape_to_string(transformed_batch.shape()) + " differ");
  const ForwardTrace aug = forward_trace(spec, params, transformed_batch);
  check_labels(aug.output, labels);
  const std::size_t n = aug.output.dim(0);
  const std::size_t classes = aug.output.dim(1);
  const Real inv_n = 1.0 / static_cast<Real>(n);

  const TensorBuf lp = log_softmax(aug.output);
  TensorBuf d_aug(aug.output.shape());
  Real total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto lpi = lp.row(i);
    auto di = d_aug.row(i);
    const auto y = static_cast<std::size_t>(labels[i]);
    total += -lpi[y];
    for (std::size_t j = 0; j < classes; ++j) di[j] = std::exp(lpi[j]) * inv_n;
    di[y] -= inv_n;
  }

  LossAndGrad result{0.0, GradVector::zeros_like(params)};
  if (gamma != 0.0) {
    const ForwardTrace clean = forward_trace(spec, params, orig_batch);
    const TensorBuf lq = log_softmax(clean.output);
    TensorBuf d_clean(clean.output.shape());
    const Real scale = gamma * inv_n;
    for (std::size_t i = 0; i < n; ++i) {
      auto lpi = lp.row(i);
      auto lqi = lq.row(i);
      auto da = d_aug.row(i);
      auto dc = d_clean.row(i);
      // Unclamped KL here so the gradient is exact for the value it reports.
      Real kl = 0.0;
      for (std::size_t j = 0; j < classes; ++j) kl += std::exp(lpi[j]) * (lpi[j] - lqi[j]);
      total += gamma * kl;
      for (std::size_t j = 0; j < classes; ++j) {
        const Real pj = std::exp(lpi[j]);
        const Real qj = std::exp(lqi[j]);
        da[j] += scale * pj * ((lpi[j] - lqi[j]) - kl);
        dc[j] += scale * (qj - pj);
      }
    }
    backward(spec, params, clean, d_clean, result.grad);
  }
  backward(spec, params, aug, d_aug, result.grad);
  result.loss = total * inv_n;
  return result;
}

LossAndGrad task_loss_and_grad(const ModelSpec& spec, const ParamVector& params, const TensorBuf& batch,
                               std::span<const int> labels) {
  return tofu_loss(spec, params, batch, batch, labels, 0.0);
}

LossVector per_sample_loss(const ModelSpec& spec, const ParamVector& params, const TensorBuf& batch,
                           std::span<const int> labels) {
  return task_loss(forward(spec, params, batch), labels);
}

}  // namespace tofu::nn
