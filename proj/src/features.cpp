#include "autohead/features.hpp"

#include <istream>
#include <ostream>
#include <variant>

#include <nlohmann/json.hpp>

#include "autohead/container.hpp"
#include "autohead/error.hpp"

namespace autohead::cnn {

std::vector<double> FeatureExtractor::extract(const Tensor& image) const { return stack.forward(image).values(); }

FeatureExtractor truncate_head(const TrainedNetwork& trained) {
  const NetworkSpec& spec = trained.network.spec();
  const LayerStack& full = trained.network.stack();
  const std::size_t start = spec.classification_start();

  std::size_t first_fc = spec.layers.size();
  std::size_t fc_count = 0;
  for (std::size_t i = start; i < spec.layers.size(); ++i) {
    if (std::holds_alternative<FullyConnected>(spec.layers[i])) {
      if (fc_count == 0) first_fc = i;
      ++fc_count;
    }
  }
  if (fc_count == 0) throw ConfigError("network '" + spec.name + "' has no fully connected layer to truncate at");

  FeatureExtractor ex;
  ex.network_id = spec.name;
  std::size_t end = first_fc;  // exclusive
  if (fc_count >= 2) {
    end = first_fc + 1;
    if (end < spec.layers.size() && std::holds_alternative<Relu>(spec.layers[end])) ++end;
  } else {
    ex.warnings.push_back("network '" + spec.name +
                          "' has a single fully connected layer; features are the flattened feature maps");
  }

  std::vector<LayerKind> layers;
  std::vector<Tensor> params;
  for (std::size_t i = 0; i < end; ++i) {
    if (std::holds_alternative<Dropout>(spec.layers[i])) continue;
    layers.push_back(spec.layers[i]);
    const std::size_t slot = full.param_slot(i);
    if (slot != LayerStack::npos) {
      params.push_back(full.params()[slot]);
      params.push_back(full.params()[slot + 1]);
    }
  }
  if (layers.empty() || infer_shapes(spec.input_shape, layers).back().size() != 1) layers.push_back(Flatten{});
  ex.stack = LayerStack(spec.input_shape, std::move(layers), std::move(params));
  ex.dim = ex.stack.output_shape()[0];
  return ex;
}

void FeatureTable::validate() const {
  if (values.size() != labels.size() * dim) {
    throw DataError("feature table has " + std::to_string(values.size()) + " values for " +
                    std::to_string(labels.size()) + " rows of dimension " + std::to_string(dim));
  }
  if (ids.size() != labels.size()) throw DataError("feature table ids and labels differ in length");
}

FeatureTable extract_features(const FeatureExtractor& extractor, const SampleSet& samples,
                              const FeatureProvenance& provenance, std::size_t positive_class) {
  if (samples.inputs.size() != samples.labels.size()) throw ShapeError("samples have mismatched inputs and labels");
  FeatureTable t;
  t.dim = extractor.dim;
  t.provenance = provenance;
  t.values.reserve(samples.size() * t.dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto row = extractor.extract(samples.inputs[i]);
    t.values.insert(t.values.end(), row.begin(), row.end());
    t.labels.push_back(samples.labels[i] == positive_class ? 1 : 0);
    t.ids.push_back(i < samples.ids.size() ? samples.ids[i] : std::to_string(i));
  }
  return t;
}

FeatureTable select_rows(const FeatureTable& table, std::span<const std::size_t> rows) {
  FeatureTable t;
  t.dim = table.dim;
  t.provenance = table.provenance;
  t.values.reserve(rows.size() * t.dim);
  for (auto r : rows) {
    if (r >= table.rows()) throw ShapeError("row " + std::to_string(r) + " out of range");
    const auto src = table.row(r);
    t.values.insert(t.values.end(), src.begin(), src.end());
    t.labels.push_back(table.labels[r]);
    t.ids.push_back(table.ids[r]);
  }
  return t;
}

SampleSet samples_from_indices(const data::ProblemDataset& dataset, std::span<const std::size_t> indices) {
  SampleSet s;
  for (auto i : indices) {
    const auto& img = dataset.images.at(i);
    s.inputs.push_back(img.pixels);
    s.labels.push_back(static_cast<std::size_t>(img.label));
    s.ids.push_back(img.id);
  }
  return s;
}

void save_feature_table(const std::filesystem::path& path, const FeatureTable& table) {
  table.validate();
  const nlohmann::json meta = {{"dim", table.dim},
                               {"labels", table.labels},
                               {"ids", table.ids},
                               {"network_id", table.provenance.network_id},
                               {"dataset_id", table.provenance.dataset_id},
                               {"split", table.provenance.split}};
  io::write_container_file(path, {kFeatureTableMagic, kFeatureTableFormatVersion, meta.dump(), table.values});
}

FeatureTable load_feature_table(const std::filesystem::path& path) {
  auto c = io::read_container_file(path, kFeatureTableMagic, kFeatureTableFormatVersion);
  FeatureTable t;
  try {
    const auto meta = nlohmann::json::parse(c.text);
    t.dim = meta.at("dim").get<std::size_t>();
    t.labels = meta.at("labels").get<std::vector<int>>();
    t.ids = meta.at("ids").get<std::vector<std::string>>();
    t.provenance = {meta.at("network_id").get<std::string>(), meta.at("dataset_id").get<std::string>(),
                    meta.at("split").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed feature table " + path.string() + ": " + e.what());
  }
  t.values = std::move(c.payload);
  t.validate();
  return t;
}

namespace {
inline constexpr char kExtractorMagic[] = "ACNN";
inline constexpr std::uint32_t kExtractorFormatVersion = 1;
}  // namespace

void save_extractor(std::ostream& out, const FeatureExtractor& extractor) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : extractor.stack.layers()) layers.push_back(l);
  const nlohmann::json meta = {{"kind", "feature_extractor"},
                               {"network_id", extractor.network_id},
                               {"input_shape", extractor.input_shape()},
                               {"layers", layers},
                               {"dim", extractor.dim},
                               {"warnings", extractor.warnings}};
  io::Container c{kExtractorMagic, kExtractorFormatVersion, meta.dump(), {}};
  for (const auto& p : extractor.stack.params()) c.payload.insert(c.payload.end(), p.data().begin(), p.data().end());
  io::write_container(out, c);
}

FeatureExtractor load_extractor(std::istream& in) {
  const auto c = io::read_container(in, kExtractorMagic, kExtractorFormatVersion);
  FeatureExtractor ex;
  try {
    const auto meta = nlohmann::json::parse(c.text);
    if (meta.at("kind").get<std::string>() != "feature_extractor") throw DataError("container is not a feature extractor");
    ex.network_id = meta.at("network_id").get<std::string>();
    const auto input_shape = meta.at("input_shape").get<Shape>();
    const auto layers = meta.at("layers").get<std::vector<LayerKind>>();
    ex.warnings = meta.at("warnings").get<std::vector<std::string>>();
    auto params = LayerStack::initialize(input_shape, layers, 0).params();
    io::PayloadReader reader(c.payload);
    for (auto& p : params) {
      const auto v = reader.take(p.size());
      std::copy(v.begin(), v.end(), p.data().begin());
    }
    if (!reader.done()) throw DataError("trailing extractor parameters");
    ex.stack = LayerStack(input_shape, layers, std::move(params));
    ex.dim = ex.stack.output_shape()[0];
    if (ex.dim != meta.at("dim").get<std::size_t>()) throw DataError("extractor dimension mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed feature extractor: ") + e.what());
  }
  return ex;
}

}  // namespace autohead::cnn
