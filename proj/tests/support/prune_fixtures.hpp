#pragma once

#include <string>

#include "fastpose/pruner.hpp"
#include "fastpose/rng.hpp"
#include "fastpose/toy_gdrn.hpp"

namespace fixtures {

// Zeroes every parameter that touches a channel the plan removes: the
// producer's filter rows and biases, GroupNorm γ/β, and the matching input
// slices of Conv2D and Dense consumers.
void zero_pruned_paths(fastpose::LayerGraph& g, const fastpose::PrunePlan& plan);

struct PruneCase {
  fastpose::ToyGdrnConfig model;
  fastpose::PruneConfig prune;
};

// A small toy pipeline with random widths, region count and input size,
// and a random legal pruning configuration for it.
PruneCase random_prune_case(fastpose::Rng& rng);

// Checks that `pruned` is a sound application of `plan` to `original`:
// graph invariants hold, each pruned conv lost exactly the planned filters,
// and FLOP/parameter counts agree with the naive oracles. Returns an empty
// string on success, otherwise a description of the first problem.
std::string prune_soundness(const fastpose::LayerGraph& original, const fastpose::PrunePlan& plan,
                            const fastpose::LayerGraph& pruned);

}  // namespace fixtures
