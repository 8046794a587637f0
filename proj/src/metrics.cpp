#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "error.hpp"
#include "log.hpp"

namespace fvslide {

double binary_auc(std::span<const double> scores, std::span<const int> is_positive) {
  if (scores.size() != is_positive.size()) fail("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk tie groups in ascending score: each positive beats every negative
  // in lower groups and ties with negatives in its own group. Counts are
  // kept in doubled units so the result is exact up to the final division.
  double doubled_wins = 0.0;
  double negatives_below = 0.0;
  double n_pos = 0.0;
  double n_neg = 0.0;
  for (std::size_t g = 0; g < order.size();) {
    std::size_t end = g;
    double pos = 0.0;
    double neg = 0.0;
    while (end < order.size() && scores[order[end]] == scores[order[g]]) {
      (is_positive[order[end]] ? pos : neg) += 1.0;
      ++end;
    }
    doubled_wins += pos * (2.0 * negatives_below + neg);
    negatives_below += neg;
    n_pos += pos;
    n_neg += neg;
    g = end;
  }
  if (n_pos == 0.0 || n_neg == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return doubled_wins / (2.0 * n_pos * n_neg);
}

MetricsReport compute_metrics(const Matrix& probabilities, std::span<const int> labels,
                              int n_classes, const std::string& split) {
  const auto n = labels.size();
  if (n == 0) fail("metrics: split '" + split + "' is empty");
  if (probabilities.rows() != static_cast<Eigen::Index>(n) || probabilities.cols() != n_classes)
    fail("metrics: probability matrix shape mismatch");

  MetricsReport r;
  r.split = split;
  r.n = n;
  const auto C = static_cast<std::size_t>(n_classes);
  r.confusion.assign(C, std::vector<std::size_t>(C, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index pred = 0;
    probabilities.row(static_cast<Eigen::Index>(i)).maxCoeff(&pred);
    ++r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(pred)];
    if (pred == labels[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);

  double sum_p = 0.0;
  double sum_r = 0.0;
  double sum_auc = 0.0;
  int present = 0;
  int auc_classes = 0;
  for (std::size_t c = 0; c < C; ++c) {
    ClassMetrics cm;
    cm.label = static_cast<int>(c);
    std::size_t predicted = 0;
    for (std::size_t t = 0; t < C; ++t) {
      cm.support += r.confusion[c][t];
      predicted += r.confusion[t][c];
    }
    const double tp = static_cast<double>(r.confusion[c][c]);
    cm.precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
    cm.recall = cm.support > 0 ? tp / static_cast<double>(cm.support) : 0.0;
    cm.f1 = cm.precision + cm.recall > 0 ? 2 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
    r.per_class.push_back(cm);
    if (cm.support == 0) {
      r.warnings.push_back("class " + std::to_string(c) + " absent from split '" + split +
                           "', excluded from macro averages");
      continue;
    }
    ++present;
    sum_p += cm.precision;
    sum_r += cm.recall;
  }

  if (n_classes == 2) {
    std::vector<double> scores(n);
    std::vector<int> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = probabilities(static_cast<Eigen::Index>(i), 1);
      pos[i] = labels[i] == 1;
    }
    r.auc = binary_auc(scores, pos);
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      std::vector<double> scores(n);
      std::vector<int> pos(n);
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = probabilities(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        pos[i] = labels[i] == static_cast<int>(c);
      }
      const double a = binary_auc(scores, pos);
      if (std::isnan(a)) continue;
      sum_auc += a;
      ++auc_classes;
    }
    r.auc = auc_classes > 0 ? sum_auc / auc_classes : std::numeric_limits<double>::quiet_NaN();
  }
  if (std::isnan(r.auc)) r.warnings.push_back("auc undefined on split '" + split + "' (single class)");

  r.precision = present > 0 ? sum_p / present : 0.0;
  r.recall = present > 0 ? sum_r / present : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  for (const auto& w : r.warnings) log::warn(w);
  return r;
}

std::string format_metrics_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << kMetricsHeader << '\n';
  auto field = [](double v) {
    if (std::isnan(v)) return std::string("nan");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : reports)
    out << r.split << ',' << field(r.accuracy) << ',' << field(r.auc) << ',' << field(r.precision) << ','
        << field(r.recall) << ',' << field(r.f1) << '\n';
  return out.str();
}

void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& path) {
  binio::write_file(path, format_metrics_csv(reports));
}

std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_io(path.string() + ": cannot open metrics");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) fail(path.string() + ": bad metrics header");
  std::vector<MetricsReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    MetricsReport r;
    std::string field;
    std::getline(ss, r.split, ',');
    double* targets[] = {&r.accuracy, &r.auc, &r.precision, &r.recall, &r.f1};
    for (double* t : targets) {
      if (!std::getline(ss, field, ',')) fail(path.string() + ": short metrics row");
      *t = std::strtod(field.c_str(), nullptr);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fvslide
