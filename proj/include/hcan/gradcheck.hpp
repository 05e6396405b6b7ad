#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hcan/model.hpp"

namespace hcan {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// Finite-difference verification of every primitive op and of the full
// model loss (d_u=8, n=5, 2 speakers, all loss terms active). `full_size`
// adds extra random instances per primitive.
std::vector<GradCheckEntry> run_gradcheck(bool full_size, std::uint64_t seed = 42);

// FGV noise for a conversation at the model's current parameters
// (clean forward, CE backward w.r.t. input features).
std::vector<double> compute_fgv_noise(HcanModel& model, const Conversation& conv,
                                      const LossConfig& loss_cfg);

}  // namespace hcan
