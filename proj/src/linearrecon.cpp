#include "ctrecon/linearrecon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctrecon/util.hpp"

namespace ctrecon {

ResidualSet ResidualSet::complete_rows() const {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    if (values.row(r).allFinite()) keep.push_back(r);
  }
  ResidualSet out;
  out.groups = groups;
  out.values.resize(static_cast<Eigen::Index>(keep.size()), values.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.values.row(static_cast<Eigen::Index>(i)) = values.row(keep[i]);
  return out;
}

std::string to_string(CovarianceKind kind) {
  switch (kind) {
    case CovarianceKind::kIdentity: return "identity";
    case CovarianceKind::kWlsv: return "wlsv";
    case CovarianceKind::kShrinkage: return "shrinkage";
  }
  return "unknown";
}

CovarianceEstimate identity_covariance(Eigen::Index dim) {
  CovarianceEstimate est;
  est.kind = CovarianceKind::kIdentity;
  est.W = Eigen::MatrixXd::Identity(dim, dim);
  return est;
}

namespace {

// replaces non-positive entries by the smallest positive one (1 when none is positive)
bool patch_zero_variances(Eigen::VectorXd& var) {
  double smallest = std::numeric_limits<double>::infinity();
  bool patched = false;
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (var(i) > 0.0) smallest = std::min(smallest, var(i));
  }
  if (!std::isfinite(smallest)) smallest = 1.0;
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (!(var(i) > 0.0)) {
      var(i) = smallest;
      patched = true;
    }
  }
  return patched;
}

}  // namespace

CovarianceEstimate estimate_wlsv(const ResidualSet& residuals) {
  const ResidualSet rs = residuals.complete_rows();
  const auto& x = rs.values;
  if (x.rows() < 2) {
    throw std::invalid_argument("estimate_wlsv: need at least 2 complete residual rows, got " +
                                std::to_string(x.rows()));
  }
  const auto n = static_cast<double>(x.rows());
  Eigen::VectorXd var(x.cols());
  if (!rs.groups.empty()) {
    if (rs.groups.size() != static_cast<std::size_t>(x.cols())) throw std::invalid_argument("estimate_wlsv: bad groups");
    const int max_group = *std::max_element(rs.groups.begin(), rs.groups.end());
    for (int g = 0; g <= max_group; ++g) {
      double sum = 0.0, sumsq = 0.0, count = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (rs.groups[static_cast<std::size_t>(c)] != g) continue;
        sum += x.col(c).sum();
        sumsq += x.col(c).squaredNorm();
        count += n;
      }
      if (count == 0.0) continue;
      const double mean = sum / count;
      const double v = std::max(0.0, sumsq / count - mean * mean);
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (rs.groups[static_cast<std::size_t>(c)] == g) var(c) = v;
      }
    }
  } else {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double mean = x.col(c).mean();
      var(c) = (x.col(c).array() - mean).square().sum() / n;
    }
  }
  CovarianceEstimate est;
  est.kind = CovarianceKind::kWlsv;
  if (patch_zero_variances(var)) est.flags.push_back("zero-variance column replaced");
  est.W = var.asDiagonal();
  return est;
}

CovarianceEstimate estimate_shrinkage(const ResidualSet& residuals) {
  const ResidualSet rs = residuals.complete_rows();
  const auto& x = rs.values;
  const Eigen::Index rows = x.rows(), cols = x.cols();
  CovarianceEstimate est;
  est.kind = CovarianceKind::kShrinkage;
  if (rows < 2) throw std::invalid_argument("estimate_shrinkage: need at least 2 complete residual rows");
  const auto n = static_cast<double>(rows);
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / (n - 1.0);
  Eigen::VectorXd var = cov.diagonal();
  if (patch_zero_variances(var)) est.flags.push_back("zero-variance column replaced");

  if (rows < 3) {
    est.lambda = 1.0;
    est.flags.push_back("fewer than 3 rows: diagonal target only");
    est.W = var.asDiagonal();
    return est;
  }

  // standardised data; zero-variance columns contribute no correlation
  Eigen::MatrixXd z = centred;
  for (Eigen::Index c = 0; c < cols; ++c) {
    const double sd = std::sqrt(cov(c, c));
    z.col(c) = sd > 0.0 ? Eigen::VectorXd(z.col(c) / sd) : Eigen::VectorXd::Zero(rows);
  }
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < cols; ++i) {
    for (Eigen::Index j = i + 1; j < cols; ++j) {
      const Eigen::ArrayXd w = z.col(i).array() * z.col(j).array();
      const double wbar = w.mean();
      const double r = n / (n - 1.0) * wbar;
      num += n / std::pow(n - 1.0, 3) * (w - wbar).square().sum();
      den += r * r;
    }
  }
  est.lambda = den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 1.0;

  est.W = (1.0 - est.lambda) * cov;
  for (Eigen::Index i = 0; i < cols; ++i) {
    est.W(i, i) = var(i);
    if (!(cov(i, i) > 0.0)) {
      est.W.row(i).setZero();
      est.W.col(i).setZero();
      est.W(i, i) = var(i);
    }
  }
  return est;
}

GlsProjector::GlsProjector(const Eigen::MatrixXd& S, const Eigen::MatrixXd& W) : S_(S) {
  if (W.rows() != S.rows() || W.cols() != S.rows()) {
    throw std::invalid_argument("gls: W is " + std::to_string(W.rows()) + "x" + std::to_string(W.cols()) +
                                ", expected " + std::to_string(S.rows()) + " square");
  }
  const bool diagonal = (W - Eigen::MatrixXd(W.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  Eigen::MatrixXd WiS;
  if (diagonal && (W.diagonal().array() > 0.0).all()) {
    WiS = W.diagonal().cwiseInverse().asDiagonal() * S;
  } else {
    Eigen::LLT<Eigen::MatrixXd> llt(W);
    if (llt.info() != Eigen::Success) {
      const double jitter = 1e-8 * std::max(W.trace(), 1e-300) / static_cast<double>(W.rows());
      Eigen::MatrixXd Wj = W;
      Wj.diagonal().array() += jitter;
      llt.compute(Wj);
      jittered_ = true;
      if (llt.info() != Eigen::Success) throw std::runtime_error("gls: covariance not positive definite after jitter");
    }
    WiS = llt.solve(S);
  }
  const Eigen::MatrixXd normal = S.transpose() * WiS;
  Eigen::LLT<Eigen::MatrixXd> nllt(normal);
  if (nllt.info() != Eigen::Success) throw std::runtime_error("gls: singular normal matrix");
  gain_ = nllt.solve(WiS.transpose());
}

Eigen::MatrixXd GlsProjector::bottom(const Eigen::MatrixXd& base) const {
  if (base.rows() != S_.rows()) throw std::invalid_argument("gls: base dimension does not match S");
  return gain_ * base;
}

Eigen::MatrixXd GlsProjector::reconcile(const Eigen::MatrixXd& base) const { return S_ * bottom(base); }

Eigen::VectorXd gls_reconcile(const Eigen::VectorXd& base, const Eigen::MatrixXd& S, const CovarianceEstimate& W) {
  return GlsProjector(S, W.W).reconcile(base);
}

Eigen::MatrixXd cross_temporal_summing_matrix(const Hierarchy& hierarchy, const TemporalScheme& scheme) {
  const Eigen::MatrixXd& Scs = hierarchy.summing_matrix();
  const Eigen::MatrixXd Ste = scheme.summing_matrix();
  Eigen::MatrixXd out(Scs.rows() * Ste.rows(), Scs.cols() * Ste.cols());
  for (Eigen::Index i = 0; i < Scs.rows(); ++i) {
    for (Eigen::Index b = 0; b < Scs.cols(); ++b) {
      out.block(i * Ste.rows(), b * Ste.cols(), Ste.rows(), Ste.cols()) = Scs(i, b) * Ste;
    }
  }
  return out;
}

ResidualSet cross_sectional_residuals(const CrossTemporalForecast& residuals, std::size_t order_index) {
  ResidualSet rs;
  const auto len = static_cast<Eigen::Index>(residuals.length(order_index));
  rs.values.resize(len, static_cast<Eigen::Index>(residuals.nodes.size()));
  for (std::size_t i = 0; i < residuals.nodes.size(); ++i) {
    const auto& v = residuals.at(i, order_index);
    for (Eigen::Index t = 0; t < len; ++t) rs.values(t, static_cast<Eigen::Index>(i)) = v[static_cast<std::size_t>(t)];
  }
  return rs;
}

ResidualSet temporal_residuals(const CrossTemporalForecast& residuals, std::size_t node) {
  ResidualSet rs;
  int per_period = 0;
  for (int k : residuals.orders) per_period += residuals.m / k;
  rs.values.resize(residuals.periods, per_period);
  Eigen::Index col = 0;
  for (std::size_t o = residuals.p(); o-- > 0;) {
    const int mk = residuals.m / residuals.orders[o];
    const auto& v = residuals.at(node, o);
    for (int j = 0; j < mk; ++j) {
      for (int tau = 0; tau < residuals.periods; ++tau) rs.values(tau, col) = v[static_cast<std::size_t>(tau * mk + j)];
      rs.groups.push_back(static_cast<int>(o));
      ++col;
    }
  }
  return rs;
}

ResidualSet cross_temporal_residuals(const CrossTemporalForecast& residuals) {
  ResidualSet rs;
  rs.values = residuals.stacked().transpose();
  return rs;
}

std::string to_string(LinearMethod method) {
  switch (method) {
    case LinearMethod::kBottomUp: return "bu";
    case LinearMethod::kTcs: return "tcs";
    case LinearMethod::kCst: return "cst";
    case LinearMethod::kIte: return "ite";
    case LinearMethod::kOct: return "oct";
  }
  return "unknown";
}

std::optional<LinearMethod> parse_linear_method(const std::string& name) {
  if (name == "bu" || name == "bottom-up") return LinearMethod::kBottomUp;
  if (name == "tcs") return LinearMethod::kTcs;
  if (name == "cst") return LinearMethod::kCst;
  if (name == "ite") return LinearMethod::kIte;
  if (name == "oct") return LinearMethod::kOct;
  return std::nullopt;
}

CrossTemporalForecast round_and_rebuild(const CrossTemporalForecast& coherent, const Hierarchy& hierarchy,
                                        const TemporalScheme& scheme) {
  SeriesMatrix bottom = coherent.bottom_order1(hierarchy);
  bottom = bottom.unaryExpr([](double v) { return round_nonnegative(v); });
  return rebuild_from_bottom(bottom, hierarchy, scheme);
}

ReconciledForecastSet bottom_up(const BaseForecastSet& base, const Hierarchy& hierarchy, const TemporalScheme& scheme) {
  base.forecasts.check_complete();
  ReconciledForecastSet out;
  out.forecasts = round_and_rebuild(base.forecasts, hierarchy, scheme);
  out.unrounded = rebuild_from_bottom(base.forecasts.bottom_order1(hierarchy), hierarchy, scheme);
  out.method = "bu";
  out.base_method = base.method;
  out.window_id = base.window_id;
  return out;
}

namespace {

CovarianceEstimate estimate(CovarianceKind kind, const ResidualSet& rs) {
  switch (kind) {
    case CovarianceKind::kIdentity: return identity_covariance(rs.values.cols());
    case CovarianceKind::kWlsv: return estimate_wlsv(rs);
    case CovarianceKind::kShrinkage: return estimate_shrinkage(rs);
  }
  throw std::logic_error("unknown covariance kind");
}

// Projectors for the two one-dimensional steps, shared across iterations.
struct StepProjectors {
  std::vector<GlsProjector> temporal;         // per node
  std::vector<GlsProjector> cross_sectional;  // per order index
};

StepProjectors make_projectors(const BaseForecastSet& base, const Hierarchy& hierarchy, const TemporalScheme& scheme,
                               const LinearOptions& options, bool need_temporal, bool need_cs,
                               std::vector<std::string>& flags) {
  StepProjectors out;
  if (need_temporal) {
    const Eigen::MatrixXd Ste = scheme.summing_matrix();
    for (std::size_t i = 0; i < hierarchy.size(); ++i) {
      const auto est = estimate(options.temporal, temporal_residuals(base.residuals, i));
      for (const auto& f : est.flags) flags.push_back("temporal " + hierarchy.id(i) + ": " + f);
      out.temporal.emplace_back(Ste, est.W);
    }
  }
  if (need_cs) {
    for (std::size_t o = 0; o < scheme.p(); ++o) {
      const auto est = estimate(options.cross_sectional, cross_sectional_residuals(base.residuals, o));
      for (const auto& f : est.flags) flags.push_back("cross-sectional k=" + std::to_string(scheme.orders()[o]) + ": " + f);
      out.cross_sectional.emplace_back(hierarchy.summing_matrix(), est.W);
    }
  }
  return out;
}

// In-place temporal step on the stacked matrix (node-major blocks of P rows).
void temporal_step(Eigen::MatrixXd& X, const StepProjectors& proj, const TemporalScheme& scheme) {
  const Eigen::Index P = scheme.positions_per_period();
  for (std::size_t i = 0; i < proj.temporal.size(); ++i) {
    const auto rows = Eigen::seqN(static_cast<Eigen::Index>(i) * P, P);
    X(rows, Eigen::all) = proj.temporal[i].reconcile(X(rows, Eigen::all));
  }
}

void cross_sectional_step(Eigen::MatrixXd& X, const StepProjectors& proj, const TemporalScheme& scheme,
                          std::size_t nodes) {
  const Eigen::Index P = scheme.positions_per_period();
  const auto n = static_cast<Eigen::Index>(nodes);
  for (std::size_t o = 0; o < scheme.p(); ++o) {
    const int k = scheme.orders()[o];
    const int offset = scheme.position_offset(k);
    for (int j = 0; j < scheme.steps(k); ++j) {
      const auto rows = Eigen::seqN(static_cast<Eigen::Index>(offset + j), n, P);
      X(rows, Eigen::all) = proj.cross_sectional[o].reconcile(X(rows, Eigen::all));
    }
  }
}

}  // namespace

ReconciledForecastSet reconcile(LinearMethod method, const BaseForecastSet& base, const Hierarchy& hierarchy,
                                const TemporalScheme& scheme, const LinearOptions& options,
                                LinearDiagnostics* diagnostics) {
  if (method == LinearMethod::kBottomUp) return bottom_up(base, hierarchy, scheme);
  base.forecasts.check_complete();
  base.residuals.check_complete();
  if (base.forecasts.nodes != hierarchy.node_ids()) throw std::invalid_argument("reconcile: node order mismatch");

  LinearDiagnostics diag;
  Eigen::MatrixXd X = base.forecasts.stacked();
  CrossTemporalForecast iterate = base.forecasts;

  if (method == LinearMethod::kOct) {
    const auto est = estimate(options.cross_temporal, cross_temporal_residuals(base.residuals));
    for (const auto& f : est.flags) diag.flags.push_back("cross-temporal: " + f);
    const GlsProjector proj(cross_temporal_summing_matrix(hierarchy, scheme), est.W);
    if (proj.jittered()) diag.flags.push_back("cross-temporal: jitter added");
    X = proj.reconcile(X);
  } else {
    const auto proj = make_projectors(base, hierarchy, scheme, options, true, true, diag.flags);
    switch (method) {
      case LinearMethod::kTcs:
        temporal_step(X, proj, scheme);
        cross_sectional_step(X, proj, scheme, hierarchy.size());
        break;
      case LinearMethod::kCst:
        cross_sectional_step(X, proj, scheme, hierarchy.size());
        temporal_step(X, proj, scheme);
        break;
      case LinearMethod::kIte: {
        diag.converged = false;
        for (int it = 1; it <= options.ite_max_iterations; ++it) {
          const Eigen::MatrixXd previous = X;
          cross_sectional_step(X, proj, scheme, hierarchy.size());
          temporal_step(X, proj, scheme);
          diag.iterations = it;
          diag.last_change = (X - previous).cwiseAbs().maxCoeff();
          if (diag.last_change < options.ite_tolerance) {
            diag.converged = true;
            break;
          }
        }
        if (!diag.converged) diag.flags.push_back("ite: iteration cap reached");
        break;
      }
      default: throw std::logic_error("reconcile: unhandled method");
    }
  }
  iterate.set_from_stacked(X);
  diag.raw_incoherence = coherence_error(iterate, hierarchy, scheme).max_rel;

  ReconciledForecastSet out;
  out.method = to_string(method);
  out.base_method = base.method;
  out.window_id = base.window_id;
  out.unrounded = rebuild_from_bottom(iterate.bottom_order1(hierarchy), hierarchy, scheme);
  out.forecasts = round_and_rebuild(iterate, hierarchy, scheme);
  if (diagnostics) *diagnostics = std::move(diag);
  return out;
}

}  // namespace ctrecon
