#include "icsc/losses.hpp"

#include <cmath>
#include <string>

namespace icsc {

PoseVector to_vector(const Pose& pose) {
  const auto& p = pose.position;
  const auto& q = pose.orientation;
  return {p.x, p.y, p.z, q.w, q.x, q.y, q.z};
}

Pose from_vector(const PoseVector& v) {
  return {{v[0], v[1], v[2]}, {v[3], v[4], v[5], v[6]}};
}

NormLoss<3> loss_position(const Vec3& pred_x, const Vec3& truth_x) {
  const Vec3 diff = pred_x - truth_x;
  NormLoss<3> out;
  out.value = norm(diff);
  if (out.value > 0.0) {
    out.grad = {diff.x / out.value, diff.y / out.value, diff.z / out.value};
  }
  return out;
}

NormLoss<4> loss_orientation(const Quat& pred_q, const Quat& truth_q) {
  const std::array<double, 4> diff{pred_q.w - truth_q.w, pred_q.x - truth_q.x,
                                   pred_q.y - truth_q.y, pred_q.z - truth_q.z};
  NormLoss<4> out;
  double s = 0.0;
  for (double d : diff) s += d * d;
  out.value = std::sqrt(s);
  if (out.value > 0.0) {
    for (int i = 0; i < 4; ++i) out.grad[i] = diff[i] / out.value;
  }
  return out;
}

namespace {

struct PoseTerms {
  NormLoss<3> position;
  NormLoss<4> orientation;
};

PoseTerms pose_terms(const LossState& state) {
  const Pose pred = from_vector(state.pred);
  return {loss_position(pred.position, state.truth.position),
          loss_orientation(pred.orientation, state.truth.orientation)};
}

void accumulate_pose_grad(LossBreakdown& out, const PoseTerms& terms, double wx, double wq) {
  for (int i = 0; i < 3; ++i) out.grad_pred[i] += wx * terms.position.grad[i];
  for (int i = 0; i < 4; ++i) out.grad_pred[3 + i] += wq * terms.orientation.grad[i];
}

}  // namespace

LossBreakdown loss_beta(const LossState& state, BetaWeight w) {
  if (!(w.beta > 0.0)) throw UsageError("beta must be positive");
  const PoseTerms terms = pose_terms(state);
  LossBreakdown out;
  out.l_x = terms.position.value;
  out.l_q = terms.orientation.value;
  out.total = out.l_x + w.beta * out.l_q;
  accumulate_pose_grad(out, terms, 1.0, w.beta);
  return out;
}

LossBreakdown loss_learnable(const LossState& state) {
  const PoseTerms terms = pose_terms(state);
  const double wx = std::exp(-state.log_var.s_x);
  const double wq = std::exp(-state.log_var.s_q);
  LossBreakdown out;
  out.l_x = terms.position.value;
  out.l_q = terms.orientation.value;
  out.total = out.l_x * wx + state.log_var.s_x + out.l_q * wq + state.log_var.s_q;
  accumulate_pose_grad(out, terms, wx, wq);
  out.grad_log_var[0] = 1.0 - out.l_x * wx;
  out.grad_log_var[1] = 1.0 - out.l_q * wq;
  return out;
}

ComponentLoss loss_icsc_component(const PoseVector& pred, const Pose& truth,
                                  const CylinderModel& cyl) {
  const Vec3 c_true = icsc_point(truth, cyl);
  ComponentLoss out;
  if (!(norm(from_vector(pred).orientation) > 1e-12)) {
    out.degenerate = true;
    out.branch = IcscBranch::kDegenerate;
    return out;
  }
  const IcscDerivative d = icsc_with_jacobian(from_vector(pred), cyl);
  const Vec3 diff = d.point - c_true;
  out.value = norm(diff);
  out.branch = d.branch;
  if (d.branch == IcscBranch::kDegenerate) {
    out.degenerate = true;
    return out;
  }
  if (out.value > 0.0) {
    const Vec3 unit = diff / out.value;
    for (int k = 0; k < 7; ++k) {
      out.grad[k] = unit.x * d.jacobian[0][k] + unit.y * d.jacobian[1][k] +
                    unit.z * d.jacobian[2][k];
    }
  }
  return out;
}

LossBreakdown loss_icsc_total(const LossState& state, const CylinderModel& cyl) {
  LossBreakdown out = loss_learnable(state);
  const ComponentLoss lc = loss_icsc_component(state.pred, state.truth, cyl);
  const double wc = std::exp(-state.log_var.s_c);
  out.l_c = lc.value;
  out.degenerate = lc.degenerate;
  out.total += out.l_c * wc + state.log_var.s_c;
  for (int k = 0; k < 7; ++k) out.grad_pred[k] += wc * lc.grad[k];
  out.grad_log_var[2] = 1.0 - out.l_c * wc;
  return out;
}

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kBeta: return "beta";
    case LossKind::kLearnable: return "learnable";
    case LossKind::kIcsc: return "icsc";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "beta") return LossKind::kBeta;
  if (name == "learnable") return LossKind::kLearnable;
  if (name == "icsc") return LossKind::kIcsc;
  throw UsageError("unknown loss selector '" + name + "' (expected beta|learnable|icsc)");
}

LossBreakdown evaluate_loss(const LossSpec& spec, const LossState& state) {
  switch (spec.kind) {
    case LossKind::kBeta: return loss_beta(state, spec.beta);
    case LossKind::kLearnable: return loss_learnable(state);
    case LossKind::kIcsc: return loss_icsc_total(state, spec.cylinder);
  }
  throw UsageError("unknown loss kind");
}

}  // namespace icsc
