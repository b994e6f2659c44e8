#pragma once

#include <string>
#include <vector>

#include "freqact/rng.hpp"

namespace freqact {

// Point-mass and planar-pushing toy tasks. Dynamics are pure functions of
// (state, action); all randomness enters through reset.
//
// reach2d: a velocity-clamped double integrator. Observation is
// (agent xy, velocity xy, goal xy); the action is an acceleration in
// [-1,1]^2; success once the agent is within the goal tolerance.
//
// pusht_lite: a point agent quasi-statically pushing a disc toward a goal
// pose. Observation is (agent xy, block xy, cos heading, sin heading,
// goal xy, heading error); the action is an agent velocity command in
// [-1,1]^2. Overlap is resolved by translating the block along the contact
// normal; tangential rubbing twists the heading. Success requires the block
// within the position tolerance and the heading within the angle tolerance.
class ToyEnv {
 public:
  static ToyEnv reach2d();
  static ToyEnv pusht_lite();
  static ToyEnv by_name(const std::string& name);

  const std::string& variant() const { return variant_; }
  int obs_dim() const;
  int action_dim() const { return 2; }
  int max_steps() const { return max_steps_; }
  double tolerance() const { return tolerance_; }

  struct StepResult {
    std::vector<double> obs;
    bool done = false;
    bool success = false;
  };

  std::vector<double> reset(Rng& rng);
  StepResult step(const std::vector<double>& action);

  int steps_taken() const { return steps_; }

 private:
  std::string variant_;
  double tolerance_ = 0.0;
  double angle_tolerance_ = 0.0;
  int max_steps_ = 0;
  int steps_ = 0;
  bool done_ = false;
  std::vector<double> phys_;  // environment-specific physical state

  std::vector<double> observe() const;
  bool succeeded() const;
};

// Scripted controllers used to produce demonstrations. Both hold no state.
std::vector<double> expert_action(const ToyEnv& env,
                                  const std::vector<double>& obs);

double wrap_angle(double a);

}  // namespace freqact
