#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "data_model.hpp"

namespace fvslide {

struct ClassMetrics {
  int label = 0;
  std::size_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::string split;
  std::size_t n = 0;
  double accuracy = 0.0;
  double auc = 0.0;
  // Macro averages over classes present in the split; f1 is the harmonic
  // mean of the macro precision and macro recall.
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::string> warnings;
};

// Probability that a random positive outscores a random negative, ties 0.5.
// NaN when either group is empty.
double binary_auc(std::span<const double> scores, std::span<const int> is_positive);

// probabilities: n x n_classes, rows are class distributions.
MetricsReport compute_metrics(const Matrix& probabilities, std::span<const int> labels,
                              int n_classes, const std::string& split);

inline constexpr char kMetricsHeader[] = "split,accuracy,auc,precision,recall,f1";

std::string format_metrics_csv(const std::vector<MetricsReport>& reports);
void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& path);
std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path);

}  // namespace fvslide
