#include "icsc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "icsc/error.hpp"
#include "icsc/geometry.hpp"
#include "icsc/losses.hpp"
#include "icsc/nn/model.hpp"
#include "icsc/nn/ops.hpp"
#include "icsc/random.hpp"

namespace icsc {

namespace {

constexpr double kGeometryTol = 1e-4;
constexpr double kLayerTol = 1e-6;
constexpr double kFaultScale = 1.01;
const char* const kSkipped = "skipped: non-differentiable region";

const std::vector<std::string> kGeometryComponents{"icsc_jacobian", "icsc_jacobian_fallback", "icsc_tangent"};
const std::vector<std::string> kLossComponents{"loss_position", "loss_orientation",    "loss_beta",
                                               "loss_learnable", "loss_icsc_component", "loss_icsc_total"};
const std::vector<std::string> kNnComponents{"conv2d", "relu", "maxpool2", "dense", "flatten", "network"};

using Vec = std::vector<double>;

Vec central_gradient(const std::function<double(const Vec&)>& fn, Vec at, double h) {
  Vec g(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double keep = at[i];
    at[i] = keep + h;
    const double fp = fn(at);
    at[i] = keep - h;
    const double fm = fn(at);
    at[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

class Checker {
 public:
  Checker(const GradcheckOptions& o) : options_(o) {}

  bool wants(GradcheckScope s) const { return options_.scope == GradcheckScope::kAll || options_.scope == s; }

  // Worst error of one analytic/numeric vector pair, with fault injection.
  double compare(const std::string& name, const Vec& analytic, const Vec& numeric) const {
    const double scale = name == options_.inject_fault ? kFaultScale : 1.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      worst = std::max(worst, gradcheck_rel_err(analytic[i] * scale, numeric[i]));
    }
    return worst;
  }

  void add(const std::string& scope, const std::string& name, int points, double worst, double tol) {
    report_.entries.push_back({scope, name, points, worst, tol, worst < tol ? "pass" : "fail"});
  }

  void skip(const std::string& scope, const std::string& name) {
    report_.entries.push_back({scope, name, 1, 0.0, kGeometryTol, kSkipped});
  }

  GradcheckReport take() { return std::move(report_); }

  const GradcheckOptions& options() const { return options_; }

 private:
  const GradcheckOptions& options_;
  GradcheckReport report_;
};

Pose boundary_pose(Rng& rng) {
  const Vec3 p{uniform(rng, 5.0, 9.0), uniform(rng, -9.25, -5.25), uniform(rng, 6.25, 7.25)};
  return {p, quat_from_yaw_tilt(uniform(rng, 10.0, 30.0), uniform(rng, -18.5, -17.5))};
}

Vec pose_vec(const Pose& p) {
  return {p.position.x, p.position.y, p.position.z, p.orientation.w, p.orientation.x, p.orientation.y,
          p.orientation.z};
}

Pose vec_pose(const Vec& v) { return {{v[0], v[1], v[2]}, {v[3], v[4], v[5], v[6]}}; }

// Each Jacobian row is compared against the difference quotient of the
// corresponding coordinate of icsc_point.
double jacobian_error(const Checker& c, const std::string& name, const Pose& pose, const Jacobian3x7& j,
                      bool* unstable, const CylinderModel& cyl) {
  double worst = 0.0;
  for (int r = 0; r < 3; ++r) {
    const Vec fd = central_gradient(
        [&](const Vec& v) {
          const Vec3 p = icsc_point(vec_pose(v), cyl);
          return r == 0 ? p.x : (r == 1 ? p.y : p.z);
        },
        pose_vec(pose), 1e-5);
    for (double d : fd) {
      if (unstable && (!std::isfinite(d) || std::abs(d) > 1e4)) *unstable = true;
    }
    worst = std::max(worst, c.compare(name, Vec(j[r].begin(), j[r].end()), fd));
  }
  return worst;
}

void check_geometry(Checker& c, Rng& rng) {
  const CylinderModel cyl{};
  const int n = c.options().points;

  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const Pose pose = boundary_pose(rng);
    worst = std::max(worst, jacobian_error(c, "icsc_jacobian", pose, icsc_jacobian(pose, cyl), nullptr, cyl));
  }
  c.add("geometry", "icsc_jacobian", n, worst, kGeometryTol);

  // Rays that miss the fuselage, away from the tangent boundary where the
  // fallback point jumps.
  worst = 0.0;
  int checked = 0;
  while (checked < n) {
    const Pose pose{{uniform(rng, 5, 9), uniform(rng, -9, -5), uniform(rng, 6, 9)},
                    quat_normalize({uniform(rng, 0.5, 1), uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3),
                                    uniform(rng, -0.3, 0.3)})};
    const IcscDerivative d = icsc_with_jacobian(pose, cyl);
    if (d.branch != IcscBranch::kFallback) continue;
    bool unstable = false;
    const double e = jacobian_error(c, "icsc_jacobian_fallback", pose, d.jacobian, &unstable, cyl);
    if (unstable) continue;
    worst = std::max(worst, e);
    ++checked;
  }
  c.add("geometry", "icsc_jacobian_fallback", n, worst, kGeometryTol);

  // Level view grazing the top of the fuselage: a double root.
  const Pose tangent{{7.0, -7.0, cyl.h0 + cyl.r0}, {1.0, 0.0, 0.0, 0.0}};
  try {
    const Jacobian3x7 j = icsc_jacobian(tangent, cyl);
    c.add("geometry", "icsc_tangent", 1, jacobian_error(c, "icsc_tangent", tangent, j, nullptr, cyl), kGeometryTol);
  } catch (const NonDifferentiableRegion&) {
    c.skip("geometry", "icsc_tangent");
  }
}

LossState random_state(Rng& rng) {
  LossState s;
  s.truth = boundary_pose(rng);
  s.pred = to_vector(s.truth);
  for (int i = 0; i < 3; ++i) s.pred[i] += uniform(rng, -0.8, 0.8);
  for (int i = 3; i < 7; ++i) s.pred[i] += uniform(rng, -0.05, 0.05);
  s.log_var = {uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2)};
  return s;
}

Vec pack(const LossState& s) {
  Vec v(s.pred.begin(), s.pred.end());
  v.insert(v.end(), {s.log_var.s_x, s.log_var.s_q, s.log_var.s_c});
  return v;
}

LossState unpack(const Vec& v, const Pose& truth) {
  LossState s;
  for (int i = 0; i < 7; ++i) s.pred[i] = v[i];
  s.truth = truth;
  s.log_var = {v[7], v[8], v[9]};
  return s;
}

Vec analytic_of(const LossBreakdown& b, bool with_s) {
  Vec v(b.grad_pred.begin(), b.grad_pred.end());
  if (with_s) v.insert(v.end(), b.grad_log_var.begin(), b.grad_log_var.end());
  return v;
}

void check_losses(Checker& c, Rng& rng) {
  const CylinderModel cyl{};
  const BetaWeight beta{500.0};
  const int n = c.options().points;
  double w_pos = 0, w_ori = 0, w_beta = 0, w_learn = 0, w_comp = 0, w_total = 0;
  const double h = 1e-5;
  for (int i = 0; i < n; ++i) {
    const LossState st = random_state(rng);
    const Vec x = pack(st);
    const Vec pred(st.pred.begin(), st.pred.end());

    const Vec3 tx = st.truth.position;
    const NormLoss<3> lx = loss_position({pred[0], pred[1], pred[2]}, tx);
    w_pos = std::max(w_pos, c.compare("loss_position", Vec(lx.grad.begin(), lx.grad.end()),
                                      central_gradient([&](const Vec& v) { return loss_position({v[0], v[1], v[2]}, tx).value; },
                                                       {pred[0], pred[1], pred[2]}, h)));

    const Quat tq = st.truth.orientation;
    const NormLoss<4> lq = loss_orientation({pred[3], pred[4], pred[5], pred[6]}, tq);
    w_ori = std::max(w_ori, c.compare("loss_orientation", Vec(lq.grad.begin(), lq.grad.end()),
                                      central_gradient([&](const Vec& v) { return loss_orientation({v[0], v[1], v[2], v[3]}, tq).value; },
                                                       {pred[3], pred[4], pred[5], pred[6]}, h)));

    auto total_fd = [&](auto&& fn, const Vec& at) {
      return central_gradient([&](const Vec& v) { return fn(unpack(v, st.truth)).total; }, at, h);
    };
    w_beta = std::max(w_beta, c.compare("loss_beta", analytic_of(loss_beta(st, beta), false),
                                        total_fd([&](const LossState& s) { return loss_beta(s, beta); }, x)));
    w_learn = std::max(w_learn, c.compare("loss_learnable", analytic_of(loss_learnable(st), true),
                                          total_fd([](const LossState& s) { return loss_learnable(s); }, x)));
    w_total = std::max(w_total, c.compare("loss_icsc_total", analytic_of(loss_icsc_total(st, cyl), true),
                                          total_fd([&](const LossState& s) { return loss_icsc_total(s, cyl); }, x)));

    const ComponentLoss comp = loss_icsc_component(st.pred, st.truth, cyl);
    w_comp = std::max(w_comp, c.compare("loss_icsc_component", Vec(comp.grad.begin(), comp.grad.end()),
                                        central_gradient(
                                            [&](const Vec& v) {
                                              PoseVector p{};
                                              std::copy(v.begin(), v.end(), p.begin());
                                              return loss_icsc_component(p, st.truth, cyl).value;
                                            },
                                            pred, h)));
  }
  c.add("losses", "loss_position", n, w_pos, kGeometryTol);
  c.add("losses", "loss_orientation", n, w_ori, kGeometryTol);
  c.add("losses", "loss_beta", n, w_beta, kGeometryTol);
  c.add("losses", "loss_learnable", n, w_learn, kGeometryTol);
  c.add("losses", "loss_icsc_component", n, w_comp, kGeometryTol);
  c.add("losses", "loss_icsc_total", n, w_total, kGeometryTol);
}

using Builder = std::function<nn::Var(nn::Tape&, const std::vector<nn::Var>&)>;

nn::Tensor random_tensor(Rng& rng, nn::Shape shape) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = uniform(rng, -1.0, 1.0);
  return t;
}

// Values in +-[0.05, 1] keep ReLU inputs clear of the kink.
nn::Tensor kink_free_tensor(Rng& rng, nn::Shape shape) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.data()) {
    const double m = uniform(rng, 0.05, 1.0);
    v = uniform01(rng) < 0.5 ? -m : m;
  }
  return t;
}

// Distinct values 0.01 apart so every pooling window has a clear maximum.
nn::Tensor distinct_tensor(Rng& rng, nn::Shape shape) {
  nn::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(i);
  shuffle(t.data(), rng);
  return t;
}

// Gradient of sum(r * f(inputs)) for a random projection r against central
// differences over every input element.
double layer_error(const Checker& c, const std::string& name, const Builder& build, std::vector<nn::Tensor> inputs,
                   Rng& rng) {
  Vec projection;
  std::vector<nn::Tensor> analytic;
  {
    nn::Tape tape;
    std::vector<nn::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    const nn::Var out = build(tape, vars);
    projection.resize(tape.value(out).size());
    for (auto& r : projection) r = uniform(rng, -1.0, 1.0);
    tape.backward(out, projection);
    for (const nn::Var v : vars) analytic.push_back(tape.grad(v));
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Vec fd = central_gradient(
        [&](const Vec& v) {
          nn::Tape tape;
          std::vector<nn::Var> vars;
          for (std::size_t j = 0; j < inputs.size(); ++j) {
            vars.push_back(tape.constant(j == k ? nn::Tensor(inputs[k].shape(), v) : inputs[j]));
          }
          const nn::Tensor& out = tape.value(build(tape, vars));
          double s = 0.0;
          for (std::size_t i = 0; i < out.size(); ++i) s += projection[i] * out[i];
          return s;
        },
        Vec(inputs[k].data().begin(), inputs[k].data().end()), 1e-5);
    worst = std::max(worst, c.compare(name, Vec(analytic[k].data().begin(), analytic[k].data().end()), fd));
  }
  return worst;
}

std::size_t rand_dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

void check_nn(Checker& c, Rng& rng) {
  const int n = c.options().points;
  double w_conv = 0, w_relu = 0, w_pool = 0, w_dense = 0, w_flat = 0;
  for (int i = 0; i < n; ++i) {
    const std::size_t ch = rand_dim(rng, 1, 3), h = rand_dim(rng, 1, 6), w = rand_dim(rng, 1, 6);
    const std::size_t oc = rand_dim(rng, 1, 3), k = 1 + 2 * uniform_index(rng, 3);
    w_conv = std::max(w_conv, layer_error(c, "conv2d",
                                          [](nn::Tape& t, const std::vector<nn::Var>& v) { return nn::conv2d(t, v[0], v[1], v[2]); },
                                          {random_tensor(rng, {ch, h, w}), random_tensor(rng, {oc, ch, k, k}),
                                           random_tensor(rng, {oc})},
                                          rng));
    w_relu = std::max(w_relu, layer_error(c, "relu",
                                          [](nn::Tape& t, const std::vector<nn::Var>& v) { return nn::relu(t, v[0]); },
                                          {kink_free_tensor(rng, {ch, h, w})}, rng));
    const std::size_t ph = rand_dim(rng, 2, 7), pw = rand_dim(rng, 2, 7);
    w_pool = std::max(w_pool, layer_error(c, "maxpool2",
                                          [](nn::Tape& t, const std::vector<nn::Var>& v) { return nn::maxpool2(t, v[0]); },
                                          {distinct_tensor(rng, {ch, ph, pw})}, rng));
    const std::size_t m = rand_dim(rng, 1, 8), len = rand_dim(rng, 1, 12);
    w_dense = std::max(w_dense, layer_error(c, "dense",
                                            [](nn::Tape& t, const std::vector<nn::Var>& v) { return nn::dense(t, v[0], v[1], v[2]); },
                                            {random_tensor(rng, {len}), random_tensor(rng, {m, len}), random_tensor(rng, {m})},
                                            rng));
    w_flat = std::max(w_flat, layer_error(c, "flatten",
                                          [](nn::Tape& t, const std::vector<nn::Var>& v) { return nn::flatten(t, v[0]); },
                                          {random_tensor(rng, {ch, h, w})}, rng));
  }
  c.add("nn", "conv2d", n, w_conv, kLayerTol);
  c.add("nn", "relu", n, w_relu, kLayerTol);
  c.add("nn", "maxpool2", n, w_pool, kLayerTol);
  c.add("nn", "dense", n, w_dense, kLayerTol);
  c.add("nn", "flatten", n, w_flat, kLayerTol);

  // Whole network, one random parameter element per point.
  nn::ModelConfig cfg;
  cfg.input_height = 8;
  cfg.input_width = 8;
  cfg.conv_blocks = {{3, true}, {4, true}};
  cfg.dense_widths = {5};
  nn::Model model = nn::init_parameters(cfg, derive_seed(c.options().seed, 77));
  const nn::Tensor image = random_tensor(rng, {3, 8, 8});
  Vec r(7);
  for (auto& v : r) v = uniform(rng, -1, 1);
  nn::Gradients grads = nn::zero_gradients(model);
  {
    nn::Tape tape;
    const nn::Var out = nn::forward(model, tape, image, &grads);
    tape.backward(out, r);
  }
  auto objective = [&] {
    const PoseVector p = nn::predict(model, image);
    double s = 0.0;
    for (int i = 0; i < 7; ++i) s += r[i] * p[i];
    return s;
  };
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::size_t pi = uniform_index(rng, model.params.size());
    const std::size_t ei = uniform_index(rng, model.params[pi].value.size());
    double& x = model.params[pi].value[ei];
    const double keep = x;
    const double h = 1e-6;
    x = keep + h;
    const double fp = objective();
    x = keep - h;
    const double fm = objective();
    x = keep;
    worst = std::max(worst, c.compare("network", {grads[pi][ei]}, {(fp - fm) / (2 * h)}));
  }
  c.add("nn", "network", n, worst, kLayerTol);
}

}  // namespace

GradcheckScope parse_gradcheck_scope(const std::string& name) {
  if (name == "all") return GradcheckScope::kAll;
  if (name == "geometry") return GradcheckScope::kGeometry;
  if (name == "losses") return GradcheckScope::kLosses;
  if (name == "nn") return GradcheckScope::kNn;
  throw UsageError("unknown gradcheck scope '" + name + "' (expected all, geometry, losses or nn)");
}

double gradcheck_rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

std::vector<std::string> gradcheck_components() {
  std::vector<std::string> all = kGeometryComponents;
  all.insert(all.end(), kLossComponents.begin(), kLossComponents.end());
  all.insert(all.end(), kNnComponents.begin(), kNnComponents.end());
  return all;
}

bool GradcheckReport::passed() const {
  return std::none_of(entries.begin(), entries.end(), [](const GradcheckEntry& e) { return e.status == "fail"; });
}

std::string GradcheckReport::table() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %-24s %7s %12s %10s  %s\n", "scope", "component", "points", "worst_rel",
                "tolerance", "status");
  out += buf;
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-10s %-24s %7d %12.3e %10.0e  %s\n", e.scope.c_str(), e.name.c_str(), e.points,
                  e.worst, e.tolerance, e.status.c_str());
    out += buf;
  }
  return out;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.points < 1) throw UsageError("gradcheck points must be at least 1");
  if (!options.inject_fault.empty()) {
    const auto all = gradcheck_components();
    if (std::find(all.begin(), all.end(), options.inject_fault) == all.end()) {
      throw UsageError("unknown gradcheck component '" + options.inject_fault + "'");
    }
  }
  Checker c(options);
  if (c.wants(GradcheckScope::kGeometry)) {
    Rng rng(derive_seed(options.seed, 1));
    check_geometry(c, rng);
  }
  if (c.wants(GradcheckScope::kLosses)) {
    Rng rng(derive_seed(options.seed, 2));
    check_losses(c, rng);
  }
  if (c.wants(GradcheckScope::kNn)) {
    Rng rng(derive_seed(options.seed, 3));
    check_nn(c, rng);
  }
  return c.take();
}

}  // namespace icsc
