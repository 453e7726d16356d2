#include "tofu/evaluation/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tofu/data/dataset.hpp"
#include "tofu/nn/loss.hpp"

namespace tofu::evaluation {

namespace {

constexpr std::size_t kEvalChunk = 256;

template <class Fn>
void for_chunks(const data::LabeledDataset& ds, Fn&& fn) {
  std::vector<std::size_t> pos;
  for (std::size_t start = 0; start < ds.size(); start += kEvalChunk) {
    pos.resize(std::min(kEvalChunk, ds.size() - start));
    std::iota(pos.begin(), pos.end(), start);
    fn(pos);
  }
}

std::size_t argmax(std::span<const Real> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

Real mean_of(std::span<const Real> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<Real>(v.size()); }

// Population variance.
Real variance_of(std::span<const Real> v, Real mean) {
  Real s = 0;
  for (auto x : v) s += (x - mean) * (x - mean);
  return s / static_cast<Real>(v.size());
}

std::optional<Real> pearson_of(std::span<const Real> x, std::span<const Real> y) {
  const Real mx = mean_of(x), my = mean_of(y);
  Real sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// 1-based ranks, ties get the average of the ranks they span.
std::vector<Real> average_ranks(std::span<const Real> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<Real> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const Real r = (static_cast<Real>(i) + static_cast<Real>(j) + 1) / 2;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

Real entropy(std::span<const Real> p) {
  Real h = 0;
  for (auto x : p)
    if (x > 0) h -= x * std::log(x);
  return h;
}

}  // namespace

Real accuracy_from_logits(const nn::TensorBuf& logits, std::span<const int> labels) {
  if (labels.empty()) throw ArgumentError("accuracy: empty dataset");
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) throw ShapeError("accuracy: logits do not match labels");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += argmax(logits.row(i)) == static_cast<std::size_t>(labels[i]);
  return static_cast<Real>(correct) / static_cast<Real>(labels.size());
}

Real accuracy(const nn::ModelSpec& spec, const nn::ParamVector& params, const data::LabeledDataset& ds) {
  if (ds.empty()) throw ArgumentError("accuracy: empty dataset");
  std::size_t correct = 0;
  for_chunks(ds, [&](const std::vector<std::size_t>& pos) {
    const auto logits = nn::forward(spec, params, ds.gather(pos));
    for (std::size_t i = 0; i < pos.size(); ++i)
      correct += argmax(logits.row(i)) == static_cast<std::size_t>(ds.label(pos[i]));
  });
  return static_cast<Real>(correct) / static_cast<Real>(ds.size());
}

Real retain_accuracy(const nn::ModelSpec& spec, const nn::ParamVector& params,
                     std::span<const data::ClientData> clients) {
  Real sum = 0;
  std::size_t n = 0;
  for (const auto& c : clients) {
    if (c.retain.empty()) continue;
    sum += accuracy(spec, params, c.retain);
    ++n;
  }
  if (n == 0) throw ArgumentError("retain_accuracy: every retain set is empty");
  return sum / static_cast<Real>(n);
}

std::vector<Real> sample_losses(const nn::ModelSpec& spec, const nn::ParamVector& params,
                                const data::LabeledDataset& ds) {
  std::vector<Real> out;
  out.reserve(ds.size());
  for_chunks(ds, [&](const std::vector<std::size_t>& pos) {
    const auto labels = ds.gather_labels(pos);
    const auto l = nn::per_sample_loss(spec, params, ds.gather(pos), labels);
    out.insert(out.end(), l.begin(), l.end());
  });
  return out;
}

Real ks_statistic(std::span<const Real> a, std::span<const Real> b) {
  if (a.empty() || b.empty()) throw ArgumentError("ks_statistic: both samples must be nonempty");
  std::vector<Real> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const Real na = static_cast<Real>(x.size()), nb = static_cast<Real>(y.size());
  std::size_t i = 0, j = 0;
  Real d = 0;
  while (i < x.size() && j < y.size()) {
    const Real v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<Real>(i) / na - static_cast<Real>(j) / nb));
  }
  return d;
}

MiaResult mia_from_losses(std::span<const Real> member, std::span<const Real> nonmember,
                          std::span<const Real> target) {
  if (member.empty() || nonmember.empty()) throw ArgumentError("mia: calibration losses must be nonempty");
  if (target.empty()) throw ArgumentError("mia: no target samples");
  MiaResult r;
  r.member_mean = mean_of(member);
  r.nonmember_mean = mean_of(nonmember);
  const Real vm = variance_of(member, r.member_mean), vn = variance_of(nonmember, r.nonmember_mean);
  r.member_std = std::sqrt(vm);
  r.nonmember_std = std::sqrt(vn);

  // one variance shared by both populations
  const Real nm = static_cast<Real>(member.size()), nn_ = static_cast<Real>(nonmember.size());
  const Real shared = (vm * nm + vn * nn_) / (nm + nn_);
  r.degenerate = shared < 1e-12;
  std::size_t non = 0;
  for (auto l : target) {
    // log N(l; mu_n, s) > log N(l; mu_m, s)  <=>  l is closer to mu_n
    non += std::abs(l - r.nonmember_mean) < std::abs(l - r.member_mean);
  }
  r.efficacy = static_cast<Real>(non) / static_cast<Real>(target.size());
  return r;
}

Real logit_confidence(Real loss) {
  const Real l = std::max(loss, 1e-12);
  return -l - std::log(-std::expm1(-l));
}

MiaResult mia_efficacy(const nn::ModelSpec& spec, const ShadowSet& shadows, const nn::ParamVector& target,
                       const data::LabeledDataset& forget, const data::LabeledDataset& nonmember_calib,
                       const data::LabeledDataset& member_calib) {
  if (shadows.models.empty()) throw ArgumentError("mia: at least one shadow model is required");
  if (member_calib.empty()) throw ArgumentError("mia: member calibration set is empty");
  if (nonmember_calib.empty()) throw ArgumentError("mia: non-member calibration set is empty");
  auto scores = [&](const nn::ParamVector& p, const data::LabeledDataset& ds) {
    auto v = sample_losses(spec, p, ds);
    for (auto& x : v) x = logit_confidence(x);
    return v;
  };
  std::vector<Real> member, nonmember;
  for (const auto& s : shadows.models) {
    const auto m = scores(s, member_calib);
    const auto n = scores(s, nonmember_calib);
    member.insert(member.end(), m.begin(), m.end());
    nonmember.insert(nonmember.end(), n.begin(), n.end());
  }
  return mia_from_losses(member, nonmember, scores(target, forget));
}

Real discrete_mi(std::span<const int> u, std::span<const int> v) {
  if (u.size() != v.size()) throw ArgumentError("discrete_mi: sequences differ in length");
  if (u.empty()) throw ArgumentError("discrete_mi: empty sequences");
  std::map<std::pair<int, int>, std::size_t> joint;
  std::map<int, std::size_t> pu, pv;
  for (std::size_t i = 0; i < u.size(); ++i) {
    ++joint[{u[i], v[i]}];
    ++pu[u[i]];
    ++pv[v[i]];
  }
  const Real n = static_cast<Real>(u.size());
  Real mi = 0;
  for (const auto& [key, c] : joint) {
    const Real pj = static_cast<Real>(c) / n;
    mi += pj * std::log(pj * n * n / (static_cast<Real>(pu[key.first]) * static_cast<Real>(pv[key.second])));
  }
  return std::max(0.0, mi);
}

MIEstimate empirical_mi(const nn::ModelSpec& spec, const nn::ParamVector& a, const nn::ParamVector& b,
                        const data::LabeledDataset& ds, const std::string& dataset_name) {
  if (ds.empty()) throw ArgumentError("empirical_mi: empty dataset");
  std::vector<int> pa, pb;
  for_chunks(ds, [&](const std::vector<std::size_t>& pos) {
    const auto x = ds.gather(pos);
    const auto la = nn::forward(spec, a, x), lb = nn::forward(spec, b, x);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      pa.push_back(static_cast<int>(argmax(la.row(i))));
      pb.push_back(static_cast<int>(argmax(lb.row(i))));
    }
  });
  return {discrete_mi(pa, pb), "plug-in MI of predicted labels", dataset_name};
}

std::vector<Real> chain_mutual_information(std::span<const Real> source, std::span<const Channel> channels) {
  const std::size_t a = source.size();
  if (a == 0) throw ArgumentError("chain_mutual_information: empty source");
  Eigen::MatrixXd cond = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
  std::vector<Real> out;
  for (const auto& ch : channels) {
    if (ch.size() != static_cast<std::size_t>(cond.cols()))
      throw ShapeError("chain_mutual_information: channel input size does not match the previous stage");
    const std::size_t outs = ch.empty() ? 0 : ch[0].size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(ch.size()), static_cast<Eigen::Index>(outs));
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (ch[i].size() != outs) throw ShapeError("chain_mutual_information: ragged channel");
      for (std::size_t j = 0; j < outs; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ch[i][j];
    }
    cond = cond * m;  // P(y_k | x)
    Eigen::VectorXd py = Eigen::VectorXd::Zero(cond.cols());
    for (std::size_t x = 0; x < a; ++x) py += source[x] * cond.row(static_cast<Eigen::Index>(x)).transpose();
    Real mi = 0;
    for (std::size_t x = 0; x < a; ++x)
      for (Eigen::Index y = 0; y < cond.cols(); ++y) {
        const Real pyx = cond(static_cast<Eigen::Index>(x), y);
        if (source[x] > 0 && pyx > 0) mi += source[x] * pyx * std::log(pyx / py(y));
      }
    out.push_back(std::max(0.0, mi));
  }
  return out;
}

DpiReport dpi_monotonicity_check(std::size_t alphabet, std::size_t length, std::size_t trials, std::uint64_t seed) {
  if (alphabet < 2) throw ArgumentError("dpi check: alphabet size must be >= 2");
  if (length < 1) throw ArgumentError("dpi check: chain length must be >= 1");
  DpiReport rep;
  rep.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    auto rng = make_stream(seed, {name_tag("dpi"), t});
    const auto source = dirichlet(rng, alphabet, 1.0);
    std::vector<Channel> chain(length, Channel(alphabet));
    for (auto& ch : chain)
      for (auto& row : ch) row = dirichlet(rng, alphabet, 1.0);
    auto mi = chain_mutual_information(source, chain);
    mi.insert(mi.begin(), entropy(source));  // I(X; X)
    for (std::size_t k = 1; k < mi.size(); ++k) {
      const Real inc = mi[k] - mi[k - 1];
      rep.max_increase = std::max(rep.max_increase, inc);
      if (inc > 1e-9) ++rep.violations;
    }
    rep.chains.push_back(std::move(mi));
  }
  return rep;
}

std::vector<Real> rmd_scores(const nn::TensorBuf& features, std::span<const int> labels) {
  if (features.rank() != 2) throw ShapeError("rmd_scores: features must be (samples, dims)");
  const std::size_t n = features.dim(0), d = features.dim(1);
  if (labels.size() != n) throw ShapeError("rmd_scores: one label per sample is required");
  if (n == 0 || d == 0) throw ArgumentError("rmd_scores: empty features");

  Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      features.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::map<int, std::size_t> counts;
  for (auto y : labels) ++counts[y];
  std::map<int, Eigen::VectorXd> means;
  for (const auto& [c, k] : counts) {
    if (k < 2) throw ArgumentError("rmd_scores: class " + std::to_string(c) + " has fewer than 2 samples");
    means[c] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  }
  for (std::size_t i = 0; i < n; ++i) means[labels[i]] += x.row(static_cast<Eigen::Index>(i)).transpose();
  for (auto& [c, m] : means) m /= static_cast<Real>(counts[c]);
  const Eigen::VectorXd global = x.colwise().mean().transpose();

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd r = x.row(static_cast<Eigen::Index>(i)).transpose() - means[labels[i]];
    cov.noalias() += r * r.transpose();
  }
  cov /= static_cast<Real>(n);
  const Real lambda = 1e-6 * cov.trace() / static_cast<Real>(d);
  cov.diagonal().array() += lambda;
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (cov.trace() <= 0 || llt.info() != Eigen::Success) {
    const int first = counts.begin()->first;
    throw ArgumentError("rmd_scores: covariance is singular after regularization (class " + std::to_string(first) +
                        " and every other class have no within-class spread)");
  }

  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = x.row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::VectorXd dc = xi - means[labels[i]], dg = xi - global;
    out[i] = dc.dot(llt.solve(dc)) - dg.dot(llt.solve(dg));
  }
  return out;
}

CorrelationReport correlation_report(std::span<const Real> x, std::span<const Real> y) {
  if (x.size() != y.size()) throw ArgumentError("correlation_report: vectors differ in length");
  if (x.size() < 3) throw ArgumentError("correlation_report: at least 3 pairs are required");
  CorrelationReport r;
  r.n = x.size();
  r.pearson = pearson_of(x, y);
  const auto rx = average_ranks(x), ry = average_ranks(y);
  r.spearman = pearson_of(rx, ry);
  const Real mx = mean_of(x), my = mean_of(y);
  Real sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx > 0) {
    const Real slope = sxy / sxx, icpt = my - slope * mx;
    Real sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sse += std::pow(y[i] - icpt - slope * x[i], 2);
    r.rmse = std::sqrt(sse / static_cast<Real>(x.size()));
  }
  return r;
}

Real overall_score(Real test_acc, Real retain_acc, Real mia_eff) {
  for (Real v : {test_acc, retain_acc, mia_eff})
    if (!(v >= 0 && v <= 1)) throw ArgumentError("overall_score: metrics must lie in [0, 1]");
  return (test_acc + retain_acc + mia_eff) / 3;
}

}  // namespace tofu::evaluation
