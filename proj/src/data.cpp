#include "autohead/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "autohead/container.hpp"
#include "autohead/error.hpp"
#include "autohead/random.hpp"

namespace autohead::data {

namespace fs = std::filesystem;

const char* label_name(int label) { return label == kDefect ? "defect" : "no_defect"; }

std::size_t ProblemDataset::count(int label) const {
  return static_cast<std::size_t>(
      std::count_if(images.begin(), images.end(), [&](const LabeledImage& im) { return im.label == label; }));
}

DatasetSplit stratified_split(const ProblemDataset& dataset, SplitFractions fractions, std::uint64_t seed) {
  const double sum = fractions.train + fractions.val + fractions.test;
  if (fractions.train < 0.0 || fractions.val < 0.0 || fractions.test < 0.0 || std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  DatasetSplit split;
  split.fractions = fractions;
  split.seed = seed;
  for (int label : {kNoDefect, kDefect}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.images.size(); ++i) {
      if (dataset.images[i].label == label) members.push_back(i);
    }
    if (members.size() < 3) {
      throw DataError("class '" + std::string(label_name(label)) + "' of problem '" + dataset.name + "' has " +
                      std::to_string(members.size()) + " images, at least 3 are needed for a split");
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(label)}));
    rng.shuffle(std::span<std::size_t>(members));
    const auto n = static_cast<double>(members.size());
    // The epsilon absorbs representation error, e.g. 0.7 * 150 = 104.99999999999999.
    const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * n + 1e-9));
    const auto n_val = std::min(members.size() - n_train,
                                static_cast<std::size_t>(std::floor(fractions.val * n + 1e-9)));
    split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.insert(split.val.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                     members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                      members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

nlohmann::json split_to_json(const DatasetSplit& split, const ProblemDataset& dataset) {
  auto ids = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(dataset.images.at(i).id);
    return out;
  };
  return {{"problem", dataset.name},
          {"seed", split.seed},
          {"fractions", {split.fractions.train, split.fractions.val, split.fractions.test}},
          {"train", ids(split.train)},
          {"val", ids(split.val)},
          {"test", ids(split.test)}};
}

DatasetSplit split_from_json(const nlohmann::json& j, const ProblemDataset& dataset) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < dataset.images.size(); ++i) index.emplace(dataset.images[i].id, i);
  auto resolve = [&](const nlohmann::json& list) {
    std::vector<std::size_t> out;
    for (const auto& id : list) {
      auto it = index.find(id.get<std::string>());
      if (it == index.end()) {
        throw DataError("split refers to image '" + id.get<std::string>() + "' missing from problem '" +
                        dataset.name + "'");
      }
      out.push_back(it->second);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  DatasetSplit split;
  split.seed = j.at("seed").get<std::uint64_t>();
  const auto f = j.at("fractions");
  split.fractions = {f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>()};
  split.train = resolve(j.at("train"));
  split.val = resolve(j.at("val"));
  split.test = resolve(j.at("test"));
  return split;
}

const char* defect_kind_name(DefectKind kind) { return kind == DefectKind::kBlob ? "blob" : "scratch"; }

DefectKind parse_defect_kind(const std::string& name) {
  if (name == "blob") return DefectKind::kBlob;
  if (name == "scratch") return DefectKind::kScratch;
  throw ConfigError("unknown defect kind '" + name + "' (expected blob or scratch)");
}

void SyntheticProblemSpec::validate() const {
  if (image_size < 4) throw ConfigError("synthetic image size must be at least 4");
  if (!(contrast >= 0.0)) throw ConfigError("defect contrast must be non-negative");
  if (!(noise >= 0.0)) throw ConfigError("noise amplitude must be non-negative");
  if (!(defect_size > 0.0)) throw ConfigError("defect size must be positive");
  if (negatives < 1 || positives < 1) throw ConfigError("each class needs at least one image");
  const double extent = 6.0 * defect_size;  // blob: +-3 sigma; scratch: full length
  if (extent > static_cast<double>(image_size)) {
    throw ConfigError("defect extent " + std::to_string(extent) + " px is larger than the " +
                      std::to_string(image_size) + " px image");
  }
}

void to_json(nlohmann::json& j, const SyntheticProblemSpec& s) {
  j = {{"name", s.name},
       {"image_size", s.image_size},
       {"grating_frequency", s.grating_frequency},
       {"grating_orientation", s.grating_orientation},
       {"grating_amplitude", s.grating_amplitude},
       {"noise", s.noise},
       {"defect", defect_kind_name(s.defect)},
       {"contrast", s.contrast},
       {"defect_size", s.defect_size},
       {"negatives", s.negatives},
       {"positives", s.positives},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticProblemSpec& s) {
  s.name = j.at("name").get<std::string>();
  s.image_size = j.at("image_size").get<std::size_t>();
  s.grating_frequency = j.at("grating_frequency").get<double>();
  s.grating_orientation = j.at("grating_orientation").get<double>();
  s.grating_amplitude = j.at("grating_amplitude").get<double>();
  s.noise = j.at("noise").get<double>();
  s.defect = parse_defect_kind(j.at("defect").get<std::string>());
  s.contrast = j.at("contrast").get<double>();
  s.defect_size = j.at("defect_size").get<double>();
  s.negatives = j.at("negatives").get<std::size_t>();
  s.positives = j.at("positives").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
}

namespace {

double distance_to_segment(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = ax + t * dx - px, cy = ay + t * dy - py;
  return std::sqrt(cx * cx + cy * cy);
}

LabeledImage render_image(const SyntheticProblemSpec& spec, int label, std::size_t index) {
  const std::size_t n = spec.image_size;
  const double size = static_cast<double>(n);
  Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(label), index}));

  const double kx = std::round(spec.grating_frequency * std::cos(spec.grating_orientation));
  const double ky = std::round(spec.grating_frequency * std::sin(spec.grating_orientation));
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  Tensor img({1, n, n});
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double arg = 2.0 * std::numbers::pi * (kx * static_cast<double>(x) + ky * static_cast<double>(y)) / size;
      img.at(0, y, x) = 0.5 + spec.grating_amplitude * std::sin(arg + phase) + spec.noise * rng.normal();
    }
  }

  if (label == kDefect) {
    const double s = spec.defect_size;
    if (spec.defect == DefectKind::kBlob) {
      const double margin = 3.0 * s;
      const double cx = rng.uniform(margin, size - margin), cy = rng.uniform(margin, size - margin);
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
          img.at(0, y, x) += spec.contrast * std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
        }
      }
    } else {
      const double half = 3.0 * s;
      const double cx = rng.uniform(half, size - half), cy = rng.uniform(half, size - half);
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const double ax = cx - half * std::cos(angle), ay = cy - half * std::sin(angle);
      const double bx = cx + half * std::cos(angle), by = cy + half * std::sin(angle);
      constexpr double kHalfWidth = 0.75;
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double d = distance_to_segment(static_cast<double>(x), static_cast<double>(y), ax, ay, bx, by);
          const double coverage = std::clamp(kHalfWidth + 0.5 - d, 0.0, 1.0);
          img.at(0, y, x) += spec.contrast * coverage;
        }
      }
    }
  }
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);

  char stem[32];
  std::snprintf(stem, sizeof stem, "img_%05zu", index);
  return {std::string(label_name(label)) + "/" + stem, std::move(img), label};
}

}  // namespace

ProblemDataset generate_synthetic_problem(const SyntheticProblemSpec& spec) {
  spec.validate();
  ProblemDataset ds;
  ds.name = spec.name;
  ds.images.reserve(spec.negatives + spec.positives);
  for (std::size_t i = 0; i < spec.positives; ++i) ds.images.push_back(render_image(spec, kDefect, i));
  for (std::size_t i = 0; i < spec.negatives; ++i) ds.images.push_back(render_image(spec, kNoDefect, i));
  return ds;
}

std::vector<SyntheticProblemSpec> synthetic_suite(double contrast, double noise, std::size_t image_size,
                                                  std::size_t negatives, std::size_t positives, std::uint64_t seed) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double frequencies[6] = {3.0, 4.0, 5.0, 3.0, 4.0, 6.0};
  const double orientations[6] = {0.0, 45.0 * kDeg, 90.0 * kDeg, 135.0 * kDeg, 30.0 * kDeg, 60.0 * kDeg};
  std::vector<SyntheticProblemSpec> suite;
  for (std::size_t p = 0; p < 6; ++p) {
    SyntheticProblemSpec s;
    s.name = "problem" + std::to_string(p + 1);
    s.image_size = image_size;
    s.grating_frequency = frequencies[p];
    s.grating_orientation = orientations[p];
    s.noise = noise;
    s.contrast = contrast;
    s.defect = p % 2 == 0 ? DefectKind::kBlob : DefectKind::kScratch;
    s.defect_size = std::min(2.0, static_cast<double>(image_size) / 6.0);
    s.negatives = negatives;
    s.positives = positives;
    s.seed = derive_seed(seed, {p});
    suite.push_back(s);
  }
  return suite;
}

Tensor read_png_gray(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  Tensor out({1, image.height, image.width});
  for (std::size_t i = 0; i < buffer.size(); ++i) out[i] = static_cast<double>(buffer[i]) / 255.0;
  return out;
}

void write_png_gray(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 1) throw ShapeError("PNG export expects a 1 x H x W image");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.dim(2));
  png.height = static_cast<png_uint_32>(image.dim(1));
  png.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(image.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<png_byte>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  }
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) throw ShapeError("resize expects a C x H x W image");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == height && w == width) return image;
  Tensor out({c, height, width});
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < height; ++y) {
      const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
      const auto y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const double ty = fy - static_cast<double>(y0);
      for (std::size_t x = 0; x < width; ++x) {
        const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
        const auto x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const double tx = fx - static_cast<double>(x0);
        const double top = image.at(ch, y0, x0) * (1 - tx) + image.at(ch, y0, x1) * tx;
        const double bottom = image.at(ch, y1, x0) * (1 - tx) + image.at(ch, y1, x1) * tx;
        out.at(ch, y, x) = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

ProblemDataset load_problem_directory(const fs::path& problem_dir, std::size_t image_size) {
  if (!fs::is_directory(problem_dir)) throw DataError("problem directory " + problem_dir.string() + " does not exist");
  ProblemDataset ds;
  ds.name = problem_dir.filename().string();
  for (int label : {kDefect, kNoDefect}) {  // lexicographic: "defect" < "no_defect"
    const fs::path folder = problem_dir / label_name(label);
    if (!fs::is_directory(folder)) throw DataError("missing class folder " + folder.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(folder)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    if (files.empty()) throw DataError("class folder " + folder.string() + " contains no PNG images");
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    for (const auto& file : files) {
      Tensor pixels = resize_bilinear(read_png_gray(file), image_size, image_size);
      ds.images.push_back({std::string(label_name(label)) + "/" + file.stem().string(), std::move(pixels), label});
    }
  }
  return ds;
}

nlohmann::json write_problem_directory(const ProblemDataset& dataset, const fs::path& problem_dir) {
  for (int label : {kDefect, kNoDefect}) fs::create_directories(problem_dir / label_name(label));
  nlohmann::json images = nlohmann::json::array();
  for (const auto& im : dataset.images) {
    const fs::path file = problem_dir / (im.id + ".png");
    write_png_gray(file, im.pixels);
    std::ifstream in(file, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    images.push_back({{"id", im.id}, {"label", label_name(im.label)}, {"checksum", io::hex64(io::fnv1a64(bytes))}});
  }
  return {{"name", dataset.name},
          {"counts", {{"defect", dataset.count(kDefect)}, {"no_defect", dataset.count(kNoDefect)}}},
          {"images", std::move(images)}};
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t epoch_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(epoch_seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace autohead::data
