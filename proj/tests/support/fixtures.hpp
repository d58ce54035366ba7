#pragma once

#include <vector>

#include "fastpose/geomcore.hpp"
#include "fastpose/rng.hpp"

namespace fixtures {

// Side-1 cube centered at the origin, 12 outward-facing triangles.
fastpose::ObjectModel unit_cube(double side = 1.0);

// Random closed-ish mesh: `vertices` points in a ball of `radius`, and
// `triangles` random index triples.
fastpose::ObjectModel random_model(fastpose::Rng& rng, int vertices, int triangles, double radius);

// Random rotation about a random axis, translation (±xy, z in [z_lo, z_hi]).
fastpose::Pose random_pose(fastpose::Rng& rng, double xy, double z_lo, double z_hi);

// Small perturbation of `p`: rotation by up to `angle` rad, shift by up to `shift` mm.
fastpose::Pose perturb(fastpose::Rng& rng, const fastpose::Pose& p, double angle, double shift);

// Identity plus `count` - 1 random rotations about the z axis (translation 0).
std::vector<fastpose::Pose> random_symmetries(fastpose::Rng& rng, int count);

fastpose::Mat3 rz(double deg);

}  // namespace fixtures
