#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "autohead/tensor.hpp"

namespace autohead::data {

inline constexpr int kNoDefect = 0;
inline constexpr int kDefect = 1;

const char* label_name(int label);

/// Grayscale image stored as a 1 x H x W tensor with pixels in [0, 1].
struct LabeledImage {
  std::string id;  // "<class folder>/<file stem>", unique within a dataset
  Tensor pixels;
  int label = kNoDefect;
};

struct ProblemDataset {
  std::string name;
  std::vector<LabeledImage> images;

  std::size_t count(int label) const;
};

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

/// Indices into ProblemDataset::images, each list ascending.
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  SplitFractions fractions;
  std::uint64_t seed = 0;
};

// Per class: shuffle with the seed, give floor(train * n) to train, floor(val * n)
// to validation and the remainder to test. Each class needs at least 3 images.
DatasetSplit stratified_split(const ProblemDataset& dataset, SplitFractions fractions, std::uint64_t seed);

/// Split serialized by image ids, so it can be re-applied to a reloaded dataset.
nlohmann::json split_to_json(const DatasetSplit& split, const ProblemDataset& dataset);
DatasetSplit split_from_json(const nlohmann::json& j, const ProblemDataset& dataset);

enum class DefectKind { kBlob, kScratch };

const char* defect_kind_name(DefectKind kind);
DefectKind parse_defect_kind(const std::string& name);

struct SyntheticProblemSpec {
  std::string name = "synthetic";
  std::size_t image_size = 32;
  // Grating wave vector, snapped to whole cycles per image along each axis so the
  // texture tiles and its mean does not depend on phase.
  double grating_frequency = 4.0;    // cycles per image
  double grating_orientation = 0.0;  // radians
  double grating_amplitude = 0.2;
  double noise = 0.1;  // stddev of additive Gaussian noise
  DefectKind defect = DefectKind::kBlob;
  double contrast = 0.6;
  double defect_size = 2.0;  // blob sigma, or scratch length / 6, in pixels
  std::size_t negatives = 1000;
  std::size_t positives = 150;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticProblemSpec& s);
void from_json(const nlohmann::json& j, SyntheticProblemSpec& s);

/// Deterministic per seed; defect images are listed first, then no_defect, each in id order.
ProblemDataset generate_synthetic_problem(const SyntheticProblemSpec& spec);

/// Six problems with distinct textures, alternating blob and scratch defects.
std::vector<SyntheticProblemSpec> synthetic_suite(double contrast, double noise, std::size_t image_size,
                                                  std::size_t negatives, std::size_t positives, std::uint64_t seed);

/// Reads `<problem>/{defect,no_defect}/*.png` (8-bit grayscale), sorted by file name bytes,
/// scaling pixels to [0, 1] and resizing bilinearly to image_size x image_size.
ProblemDataset load_problem_directory(const std::filesystem::path& problem_dir, std::size_t image_size);

/// Writes the directory layout read by load_problem_directory and returns a manifest entry
/// (problem name, ids, labels, per-file checksums).
nlohmann::json write_problem_directory(const ProblemDataset& dataset, const std::filesystem::path& problem_dir);

/// Seeded shuffle of [0, n) cut into batches; the last batch may be partial.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t epoch_seed);

// PNG helpers (8-bit grayscale).
Tensor read_png_gray(const std::filesystem::path& path);  // 1 x H x W in [0, 1]
void write_png_gray(const std::filesystem::path& path, const Tensor& image);
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

}  // namespace autohead::data
