#include "freqact/env.hpp"

#include <algorithm>
#include <cmath>

#include "freqact/errors.hpp"

namespace freqact {

namespace {

constexpr double kDt = 0.1;
constexpr double kReachVelMax = 1.0;
constexpr double kAgentRadius = 0.06;
constexpr double kBlockRadius = 0.18;
constexpr double kContact = kAgentRadius + kBlockRadius;
constexpr double kSpinGain = 0.8;

double clampu(double v) { return std::clamp(v, -1.0, 1.0); }

double norm2(double x, double y) { return std::sqrt(x * x + y * y); }

}  // namespace

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

ToyEnv ToyEnv::reach2d() {
  ToyEnv e;
  e.variant_ = "reach2d";
  e.tolerance_ = 0.05;
  e.max_steps_ = 60;
  e.phys_.assign(6, 0.0);  // px py vx vy gx gy
  e.done_ = true;
  return e;
}

ToyEnv ToyEnv::pusht_lite() {
  ToyEnv e;
  e.variant_ = "pusht_lite";
  e.tolerance_ = 0.08;
  e.angle_tolerance_ = 0.5;
  e.max_steps_ = 80;
  e.phys_.assign(7, 0.0);  // ax ay bx by theta gx gy (goal heading is 0)
  e.done_ = true;
  return e;
}

ToyEnv ToyEnv::by_name(const std::string& name) {
  if (name == "reach2d") return reach2d();
  if (name == "pusht_lite") return pusht_lite();
  throw ConfigError("unknown environment '" + name + "'");
}

int ToyEnv::obs_dim() const { return variant_ == "reach2d" ? 6 : 9; }

std::vector<double> ToyEnv::observe() const {
  if (variant_ == "reach2d") return phys_;
  const double th = phys_[4];
  return {phys_[0], phys_[1], phys_[2],          phys_[3], std::cos(th),
          std::sin(th), phys_[5], phys_[6], wrap_angle(-th)};
}

bool ToyEnv::succeeded() const {
  if (variant_ == "reach2d")
    return norm2(phys_[0] - phys_[4], phys_[1] - phys_[5]) < tolerance_;
  return norm2(phys_[2] - phys_[5], phys_[3] - phys_[6]) < tolerance_ &&
         std::fabs(wrap_angle(phys_[4])) < angle_tolerance_;
}

std::vector<double> ToyEnv::reset(Rng& rng) {
  steps_ = 0;
  done_ = false;
  if (variant_ == "reach2d") {
    phys_[0] = rng.uniform(-1.0, 1.0);
    phys_[1] = rng.uniform(-1.0, 1.0);
    phys_[2] = phys_[3] = 0.0;
    do {
      phys_[4] = rng.uniform(-1.0, 1.0);
      phys_[5] = rng.uniform(-1.0, 1.0);
    } while (norm2(phys_[0] - phys_[4], phys_[1] - phys_[5]) < 0.3);
    return observe();
  }
  // Block, then a goal at a pushable distance, then the agent behind the
  // block relative to the goal.
  phys_[2] = rng.uniform(-0.3, 0.3);
  phys_[3] = rng.uniform(-0.3, 0.3);
  phys_[4] = rng.uniform(-0.15, 0.15);
  double dist;
  do {
    phys_[5] = rng.uniform(-0.75, 0.75);
    phys_[6] = rng.uniform(-0.75, 0.75);
    dist = norm2(phys_[5] - phys_[2], phys_[6] - phys_[3]);
  } while (dist < 0.4 || dist > 1.0);
  const double dx = (phys_[5] - phys_[2]) / dist;
  const double dy = (phys_[6] - phys_[3]) / dist;
  phys_[0] = phys_[2] - dx * (kContact + 0.08) + rng.uniform(-0.03, 0.03);
  phys_[1] = phys_[3] - dy * (kContact + 0.08) + rng.uniform(-0.03, 0.03);
  return observe();
}

ToyEnv::StepResult ToyEnv::step(const std::vector<double>& action) {
  if (done_) throw DataError("step called on a finished episode");
  if ((int)action.size() != action_dim())
    throw ShapeError("action has " + std::to_string(action.size()) +
                     " dims, expected " + std::to_string(action_dim()));
  const double a0 = clampu(action[0]), a1 = clampu(action[1]);
  if (variant_ == "reach2d") {
    phys_[2] += a0 * kDt;
    phys_[3] += a1 * kDt;
    const double sp = norm2(phys_[2], phys_[3]);
    if (sp > kReachVelMax) {
      phys_[2] *= kReachVelMax / sp;
      phys_[3] *= kReachVelMax / sp;
    }
    phys_[0] += phys_[2] * kDt;
    phys_[1] += phys_[3] * kDt;
  } else {
    const double mx = a0 * kDt, my = a1 * kDt;
    phys_[0] += mx;
    phys_[1] += my;
    double nx = phys_[2] - phys_[0], ny = phys_[3] - phys_[1];
    double d = norm2(nx, ny);
    if (d < kContact) {
      if (d < 1e-12) {
        nx = 1.0;
        ny = 0.0;
        d = 1.0;
      }
      nx /= d;
      ny /= d;
      const double pen = kContact - d;
      phys_[2] += nx * pen;
      phys_[3] += ny * pen;
      // Tangential rubbing twists the block; radial pushes do not.
      phys_[4] = wrap_angle(phys_[4] + kSpinGain * (nx * my - ny * mx));
    }
  }
  ++steps_;
  StepResult r;
  r.success = succeeded();
  r.done = r.success || steps_ >= max_steps_;
  done_ = r.done;
  r.obs = observe();
  return r;
}

std::vector<double> expert_action(const ToyEnv& env,
                                  const std::vector<double>& obs) {
  if (env.variant() == "reach2d") {
    const double kp = 4.0, kd = 2.5;
    return {clampu(kp * (obs[4] - obs[0]) - kd * obs[2]),
            clampu(kp * (obs[5] - obs[1]) - kd * obs[3])};
  }
  // Aim the agent at a contact point behind the block along the goal line.
  const double bx = obs[2], by = obs[3], gx = obs[6], gy = obs[7];
  double dx = gx - bx, dy = gy - by;
  const double d = std::max(norm2(dx, dy), 1e-9);
  dx /= d;
  dy /= d;
  const double px = bx - dx * (kContact - 0.02);
  const double py = by - dy * (kContact - 0.02);
  const double kp = 6.0;
  return {clampu(kp * (px - obs[0])), clampu(kp * (py - obs[1]))};
}

}  // namespace freqact
