#include "boostnet/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "boostnet/errors.hpp"

namespace boostnet {

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::TwoMoons: return "two-moons";
    case DatasetKind::GaussianBlobs: return "gaussian-blobs";
    case DatasetKind::SmallImageGrid: return "small-image-grid";
    case DatasetKind::ExternalDirectory: return "external-directory";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(const std::string& name) {
  if (name == "two-moons") return DatasetKind::TwoMoons;
  if (name == "gaussian-blobs") return DatasetKind::GaussianBlobs;
  if (name == "small-image-grid") return DatasetKind::SmallImageGrid;
  if (name == "external-directory") return DatasetKind::ExternalDirectory;
  throw ConfigError("unknown dataset kind: " + name);
}

Dataset two_moons(int samples, double noise, std::uint64_t seed) {
  if (samples < 1) throw ConfigError("dataset size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, noise);
  std::bernoulli_distribution coin(0.5);

  Dataset d;
  d.num_classes = 2;
  d.features = Matrix(samples, 2);
  d.labels.resize(samples);
  for (int i = 0; i < samples; ++i) {
    int label = coin(rng) ? 1 : 0;
    double a = angle(rng);
    double x = std::cos(a), y = std::sin(a);
    if (label == 1) {
      x = 1.0 - x;
      y = 0.5 - y;
    }
    d.features(i, 0) = x + jitter(rng);
    d.features(i, 1) = y + jitter(rng);
    d.labels[i] = label;
  }
  return d;
}

Dataset gaussian_blobs(int samples, int num_classes, int dim, double noise, std::uint64_t seed) {
  if (samples < 1 || num_classes < 2 || dim < 1) throw ConfigError("invalid blob dataset shape");
  std::mt19937_64 rng(seed);
  // Class centers on a ring in the first two dims, fixed offsets elsewhere.
  Matrix centers(num_classes, dim);
  for (int c = 0; c < num_classes; ++c) {
    double a = 2.0 * std::numbers::pi * c / num_classes;
    centers(c, 0) = 2.0 * std::cos(a);
    if (dim > 1) centers(c, 1) = 2.0 * std::sin(a);
    for (int k = 2; k < dim; ++k) centers(c, k) = ((c + k) % 2 == 0) ? 0.5 : -0.5;
  }
  std::normal_distribution<double> jitter(0.0, noise);
  std::uniform_int_distribution<int> cls(0, num_classes - 1);

  Dataset d;
  d.num_classes = num_classes;
  d.features = Matrix(samples, dim);
  d.labels.resize(samples);
  for (int i = 0; i < samples; ++i) {
    int label = cls(rng);
    for (int k = 0; k < dim; ++k) d.features(i, k) = centers(label, k) + jitter(rng);
    d.labels[i] = label;
  }
  return d;
}

Dataset small_image_grid(int samples, int num_classes, double noise, std::uint64_t seed) {
  constexpr int kSide = 8;
  if (samples < 1 || num_classes < 2 || num_classes > 10)
    throw ConfigError("small-image-grid supports 2..10 classes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, noise);
  std::uniform_int_distribution<int> cls(0, num_classes - 1);

  // Deterministic per-class binary template: oriented stripe patterns of
  // varying frequency, distinct for each class index.
  auto template_value = [](int label, int y, int x) {
    int freq = 1 + label / 2;
    int coord = (label % 2 == 0) ? y + x : y - x + kSide;
    return ((coord * freq / 2) % 2 == 0) ? 1.0 : 0.0;
  };

  Dataset d;
  d.num_classes = num_classes;
  d.features = Matrix(samples, kSide * kSide);
  d.labels.resize(samples);
  for (int i = 0; i < samples; ++i) {
    int label = cls(rng);
    for (int y = 0; y < kSide; ++y)
      for (int x = 0; x < kSide; ++x)
        d.features(i, y * kSide + x) = template_value(label, y, x) + jitter(rng);
    d.labels[i] = label;
  }
  return d;
}

Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  int max_label = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("bad numeric cell in " + path + ": " + cell);
      }
    }
    if (values.size() < 2) throw ConfigError("dataset rows need a label plus features: " + path);
    int label = static_cast<int>(values[0]);
    if (label < 0 || static_cast<double>(label) != values[0])
      throw ConfigError("labels must be nonnegative integers: " + path);
    labels.push_back(label);
    max_label = std::max(max_label, label);
    rows.push_back({values.begin() + 1, values.end()});
  }
  if (rows.empty()) throw ConfigError("empty dataset file: " + path);
  const std::size_t dim = rows.front().size();
  Dataset d;
  d.num_classes = max_label + 1;
  d.features = Matrix(static_cast<int>(rows.size()), static_cast<int>(dim));
  d.labels = std::move(labels);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) throw ConfigError("ragged dataset rows in " + path);
    for (std::size_t k = 0; k < dim; ++k) d.features(static_cast<int>(i), static_cast<int>(k)) = rows[i][k];
  }
  if (d.num_classes < 2) throw ConfigError("dataset needs at least 2 classes: " + path);
  return d;
}

namespace {

Dataset slice(const Dataset& d, int begin, int end) {
  Dataset out;
  out.num_classes = d.num_classes;
  out.features = Matrix(end - begin, d.features.cols);
  out.labels.assign(d.labels.begin() + begin, d.labels.begin() + end);
  for (int i = begin; i < end; ++i)
    for (int c = 0; c < d.features.cols; ++c) out.features(i - begin, c) = d.features(i, c);
  return out;
}

Dataset generate(const DatasetSpec& spec, int samples, std::uint64_t seed) {
  switch (spec.kind) {
    case DatasetKind::TwoMoons:
      return two_moons(samples, spec.noise, seed);
    case DatasetKind::GaussianBlobs:
      return gaussian_blobs(samples, spec.num_classes, spec.feature_dim, spec.noise, seed);
    case DatasetKind::SmallImageGrid:
      return small_image_grid(samples, spec.num_classes, spec.noise, seed);
    case DatasetKind::ExternalDirectory:
      break;
  }
  throw ConfigError("external-directory datasets are loaded, not generated");
}

}  // namespace

DataSplits make_splits(const DatasetSpec& spec, double holdout_fraction, std::uint64_t seed) {
  if (holdout_fraction <= 0.0 || holdout_fraction > 0.5)
    throw ConfigError("holdout_fraction must be in (0, 0.5]");
  DataSplits splits;
  if (spec.kind == DatasetKind::ExternalDirectory) {
    if (spec.data_dir.empty()) throw ConfigError("external-directory dataset needs data_dir");
    Dataset pool = load_csv_dataset(spec.data_dir + "/train.csv");
    splits.test = load_csv_dataset(spec.data_dir + "/test.csv");
    int holdout = std::max(1, static_cast<int>(std::lround(holdout_fraction * pool.size())));
    if (holdout >= pool.size()) throw ConfigError("holdout would consume the whole train set");
    splits.train = slice(pool, 0, pool.size() - holdout);
    splits.holdout = slice(pool, pool.size() - holdout, pool.size());
  } else {
    Dataset pool = generate(spec, spec.train_size, seed);
    int holdout = std::max(1, static_cast<int>(std::lround(holdout_fraction * pool.size())));
    if (holdout >= pool.size()) throw ConfigError("holdout would consume the whole train set");
    splits.train = slice(pool, 0, pool.size() - holdout);
    splits.holdout = slice(pool, pool.size() - holdout, pool.size());
    splits.test = generate(spec, spec.test_size, seed + 0x9e3779b97f4a7c15ULL);
  }
  return splits;
}

}  // namespace boostnet
