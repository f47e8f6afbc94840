#pragma once

#include <array>
#include <string>

#include "icsc/geometry.hpp"

namespace icsc {

/// Raw network output: position (3) followed by an unnormalised quaternion (4).
using PoseVector = std::array<double, 7>;

PoseVector to_vector(const Pose& pose);
/// Interprets a raw 7-vector as a pose without normalising the quaternion.
Pose from_vector(const PoseVector& v);

/// Learnable log-variances s = log(sigma^2) for each loss component.
struct LogVariances {
  double s_x = 0.0;
  double s_q = 0.0;
  double s_c = 0.0;
};

struct LossState {
  PoseVector pred{};  // quaternion part NOT normalised
  Pose truth;
  LogVariances log_var;
};

struct BetaWeight {
  double beta = 1.0;
};

/// Norm-type loss value with its gradient w.r.t. the prediction.
template <std::size_t N>
struct NormLoss {
  double value = 0.0;
  std::array<double, N> grad{};
};

struct ComponentLoss {
  double value = 0.0;
  PoseVector grad{};
  bool degenerate = false;  // gradient zeroed because the fallback had no direction
  IcscBranch branch = IcscBranch::kHit;
};

struct LossBreakdown {
  double total = 0.0;
  double l_x = 0.0;
  double l_q = 0.0;
  double l_c = 0.0;
  PoseVector grad_pred{};
  std::array<double, 3> grad_log_var{};  // (s_x, s_q, s_c)
  bool degenerate = false;
};

/// ||x - x_hat||_2. Gradient at zero difference is the zero vector.
NormLoss<3> loss_position(const Vec3& pred_x, const Vec3& truth_x);

/// ||q - q_hat||_2 with the prediction left unnormalised.
NormLoss<4> loss_orientation(const Quat& pred_q, const Quat& truth_q);

/// L_x + beta * L_q.
LossBreakdown loss_beta(const LossState& state, BetaWeight w);

/// L_x exp(-s_x) + s_x + L_q exp(-s_q) + s_q.
LossBreakdown loss_learnable(const LossState& state);

/// ||c - c_hat||_2 between the centre scene coordinates of truth and
/// prediction. The predicted quaternion is normalised inside the rotation.
ComponentLoss loss_icsc_component(const PoseVector& pred, const Pose& truth,
                                  const CylinderModel& cyl);

/// Learnable loss plus L_c exp(-s_c) + s_c.
LossBreakdown loss_icsc_total(const LossState& state, const CylinderModel& cyl);

enum class LossKind { kBeta, kLearnable, kIcsc };

const char* to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct LossSpec {
  LossKind kind = LossKind::kIcsc;
  BetaWeight beta{};
  CylinderModel cylinder{};
};

LossBreakdown evaluate_loss(const LossSpec& spec, const LossState& state);

}  // namespace icsc
