#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "autohead/data.hpp"
#include "autohead/network.hpp"
#include "autohead/training.hpp"

namespace autohead::cnn {

/// Network prefix that maps an image to a length-d feature vector.
struct FeatureExtractor {
  std::string network_id;
  LayerStack stack;  // eval mode only; contains no softmax or dropout
  std::size_t dim = 0;
  std::vector<std::string> warnings;

  const Shape& input_shape() const noexcept { return stack.input_shape(); }
  std::vector<double> extract(const Tensor& image) const;
};

// Keeps every layer up to the first fully connected layer of the classification
// component plus the activation right after it; dropout layers are removed.
// When that component holds a single fully connected layer the extractor ends
// at its input (the flattened feature maps) and a warning is recorded.
FeatureExtractor truncate_head(const TrainedNetwork& trained);

struct FeatureProvenance {
  std::string network_id;
  std::string dataset_id;
  std::string split;
  friend bool operator==(const FeatureProvenance&, const FeatureProvenance&) = default;
};

/// N x d row-major feature matrix with aligned labels and ids.
struct FeatureTable {
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<int> labels;
  std::vector<std::string> ids;
  FeatureProvenance provenance;

  std::size_t rows() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  /// Throws DataError if sizes disagree.
  void validate() const;

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

/// Row i = extractor(samples.inputs[i]); labels are 1 for `positive_class`, else 0.
FeatureTable extract_features(const FeatureExtractor& extractor, const SampleSet& samples,
                              const FeatureProvenance& provenance, std::size_t positive_class = 1);

/// Rows selected by index, in the given order.
FeatureTable select_rows(const FeatureTable& table, std::span<const std::size_t> rows);

/// Images, labels and ids for the given dataset indices.
SampleSet samples_from_indices(const data::ProblemDataset& dataset, std::span<const std::size_t> indices);

inline constexpr char kFeatureTableMagic[] = "AFTB";
inline constexpr std::uint32_t kFeatureTableFormatVersion = 1;

void save_feature_table(const std::filesystem::path& path, const FeatureTable& table);
/// Throws DataError on a magic or version mismatch.
FeatureTable load_feature_table(const std::filesystem::path& path);

void save_extractor(std::ostream& out, const FeatureExtractor& extractor);
FeatureExtractor load_extractor(std::istream& in);

}  // namespace autohead::cnn
