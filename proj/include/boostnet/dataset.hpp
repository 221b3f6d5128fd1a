#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "boostnet/matrix.hpp"

namespace boostnet {

struct Dataset {
  Matrix features;  // [samples x dim]; cnn images flattened channel-major
  std::vector<int> labels;
  int num_classes = 2;

  int size() const { return features.rows; }
};

enum class DatasetKind { TwoMoons, GaussianBlobs, SmallImageGrid, ExternalDirectory };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& name);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::TwoMoons;
  int train_size = 512;
  int test_size = 256;
  double noise = 0.1;
  int num_classes = 2;     // gaussian-blobs / small-image-grid
  int feature_dim = 2;     // gaussian-blobs
  std::string data_dir;    // external-directory
};

Dataset two_moons(int samples, double noise, std::uint64_t seed);
Dataset gaussian_blobs(int samples, int num_classes, int dim, double noise, std::uint64_t seed);
// 8x8 single-channel class-template images with additive gaussian noise.
Dataset small_image_grid(int samples, int num_classes, double noise, std::uint64_t seed);
// CSV with label in the first column, features after; one sample per line.
Dataset load_csv_dataset(const std::string& path);

struct DataSplits {
  Dataset train;
  Dataset holdout;
  Dataset test;
};

// Train/holdout come from one generator stream (holdout is a disjoint tail
// slice), test from an offset stream. External directories must provide
// train.csv and test.csv.
DataSplits make_splits(const DatasetSpec& spec, double holdout_fraction, std::uint64_t seed);

}  // namespace boostnet
