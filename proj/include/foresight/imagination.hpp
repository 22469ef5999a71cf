#pragma once

#include <utility>
#include <vector>

#include "foresight/cells.hpp"

// Step-wise future feature generation. One step advances the generator cell
// on the previous frame feature and projects the hidden state back to feature
// space; residual mode adds the previous feature, so a multi-step rollout
// telescopes the per-step increments onto the last observed frame.
namespace foresight {

struct ImaginationConfig {
  bool residual = true;
  int steps = 1;
};

struct ImaginedTrajectory {
  std::vector<Var> features;
  std::vector<CellState> states;
};

// project maps the new hidden state to feature space (affine by default, but
// the pipeline may wrap a nonlinearity around it).
template <typename Project>
std::pair<Var, CellState> imagine_step_with(const BoundCell& cell,
                                            Project&& project, Var f_prev,
                                            const CellState& state,
                                            bool residual) {
  CellState next = cell_step(cell, f_prev, state);
  Var out = project(next.h);
  if (residual) out = ad::add(out, f_prev);
  return {out, next};
}

inline std::pair<Var, CellState> imagine_step(const BoundCell& cell,
                                              const BoundLinear& phi,
                                              Var f_prev,
                                              const CellState& state,
                                              bool residual) {
  return imagine_step_with(
      cell, [&](Var h) { return linear_forward(phi, h); }, f_prev, state,
      residual);
}

// Auto-regressive rollout: the input at step 1 is the last observed frame,
// at step k > 1 the model's own previous output. When teacher_inputs is
// given (size steps - 1), those ground-truth frames are fed instead of the
// fed-back outputs (training-time ablation).
template <typename Project>
ImaginedTrajectory rollout_with(const BoundCell& cell, Project&& project,
                                Var f_last_observed, const CellState& state,
                                int steps, bool residual,
                                const std::vector<Var>* teacher_inputs = nullptr) {
  if (steps < 1) throw ContractError("rollout requires steps >= 1");
  if (teacher_inputs && static_cast<int>(teacher_inputs->size()) != steps - 1)
    throw ContractError("rollout: teacher_inputs must hold steps - 1 frames");
  ImaginedTrajectory traj;
  traj.features.reserve(static_cast<std::size_t>(steps));
  traj.states.reserve(static_cast<std::size_t>(steps));
  Var input = f_last_observed;
  CellState s = state;
  for (int k = 0; k < steps; ++k) {
    auto [f_hat, next] = imagine_step_with(cell, project, input, s, residual);
    traj.features.push_back(f_hat);
    traj.states.push_back(next);
    s = next;
    if (k + 1 < steps)
      input = teacher_inputs ? (*teacher_inputs)[static_cast<std::size_t>(k)]
                             : f_hat;
  }
  return traj;
}

inline ImaginedTrajectory rollout(const BoundCell& cell,
                                  const BoundLinear& phi, Var f_last_observed,
                                  const CellState& state, int steps,
                                  bool residual,
                                  const std::vector<Var>* teacher_inputs = nullptr) {
  return rollout_with(
      cell, [&](Var h) { return linear_forward(phi, h); }, f_last_observed,
      state, steps, residual, teacher_inputs);
}

}  // namespace foresight
