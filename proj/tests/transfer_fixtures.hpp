#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "melstream/transfer.hpp"

namespace fixtures {

struct LabeledTable {
  melstream::EmbeddingTable table;
  std::map<std::string, std::string> labels;
};

// Gaussian clusters around +-2 along a random unit direction per class,
// three patches per track.
LabeledTable separable_embeddings(std::size_t n_tracks, std::size_t dim, std::size_t n_classes,
                                  std::uint64_t seed);

// Relative error ||g - fd|| / max(||g||, ||fd||, 1e-8) with h = 1e-4 on a
// random small head and batch.
double gradient_check_error(melstream::HeadVariant variant, std::uint64_t seed);

// lr(e+1) is lr(e) or lr(e) * factor, and a drop needs a best validation
// loss at least `patience` epochs old.
bool lr_schedule_ok(const std::vector<melstream::EpochLog>& log, std::size_t patience, double factor);

}  // namespace fixtures
