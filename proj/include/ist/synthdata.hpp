#pragma once

// Procedural stand-in for a real capture benchmark: parametric category
// shapes with known canonical frames, posed/partial/noisy camera-space
// observations, training augmentations and a binary snapshot format.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ist/geometry.hpp"

namespace ist::synth {

enum class Category : std::uint32_t {
  Box = 0,
  Cylinder = 1,   // can-analog, continuous y symmetry
  BowlLike = 2,   // continuous y symmetry
  MugLike = 3,    // cylinder + handle lobe, symmetry broken
};

constexpr std::uint32_t kNumCategories = 4;

const char* category_name(Category c);
Category category_from_name(const std::string& name);  // UnknownCategory
geo::SymmetrySpec symmetry_for(Category c);

struct CanonicalShape {
  Category category;
  std::uint64_t shape_seed;
  geo::Points points;    // M x 3, tight box centered, diagonal = 1
  geo::Vec3 extents;     // per-axis tight box sizes, |extents| = 1
};

struct Instance {
  geo::Points P_o;       // N_o x 3 camera-space points, meters
  geo::Points C_o;       // N_o x 3 per-point appearance in [0, 1]
  geo::Points Q_o;       // N_o x 3 ground-truth canonical coordinates
  geo::Pose pose;        // ground truth
  Category category;
  geo::Points model;     // canonical model points (not serialized)
};

struct SampleConfig {
  std::size_t n_points = 256;
  double noise_sigma = 0.0;
  bool partial = false;
  // workspace for the translation draw
  geo::Vec3 t_min{-0.3, -0.3, 0.6};
  geo::Vec3 t_max{0.3, 0.3, 1.2};
  double scale_min = 0.1;  // |s| range, meters
  double scale_max = 0.5;
};

struct AugmentConfig {
  double uniform_noise = 0.0;   // amplitude, meters, per coordinate
  double rot_max_deg = 0.0;
  double trans_max = 0.0;       // meters, per coordinate
  double scale_jitter = 0.0;    // per-axis factor in [1 - g, 1 + g]
};

struct GenConfig {
  std::vector<Category> categories{Category::Box, Category::Cylinder,
                                   Category::BowlLike, Category::MugLike};
  std::size_t count = 1000;
  std::size_t n_points = 256;
  std::size_t model_points = 512;
  double noise_sigma = 0.0;
  bool partial = false;
  std::uint64_t seed = 0;
};

// Deterministic per (category, shape_seed); point indices are aligned
// across seeds of a category (same surface parameterization, varying
// aspect), which is what the category-mean prior relies on.
CanonicalShape generate_shape(Category category, std::uint64_t shape_seed,
                              std::size_t model_points = 512);

Instance sample_instance(const CanonicalShape& shape, std::mt19937_64& rng,
                         const SampleConfig& cfg);

Instance augment(const Instance& inst, std::mt19937_64& rng,
                 const AugmentConfig& cfg);

// Pure function of (config); categories balanced to within one instance.
std::vector<Instance> generate_dataset(const GenConfig& cfg);

// Little-endian binary snapshot: header {magic "ISTD", version, count, N_o},
// fixed-size f32 records, trailing CRC32 over everything before it.
void write_snapshot(const std::vector<Instance>& instances,
                    const std::string& path);
std::vector<Instance> read_snapshot(const std::string& path);

}  // namespace ist::synth
