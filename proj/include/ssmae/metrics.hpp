#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ssmae {

/// counts[t·L + p]: rows are truth, columns prediction.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t l = 0) : classes(l), counts(l * l, 0) {}
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes + pred]; }
  std::uint64_t total() const;
};

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> truths, std::size_t classes);

struct Scores {
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
  std::vector<double> recall;  // per class; NaN for classes without truth samples
  std::size_t skipped_classes = 0;
};

Scores score(const ConfusionMatrix& cm);

/// Per-class accuracy table followed by OA, AA and Kappa.
std::string format_report(const ConfusionMatrix& cm, const Scores& s);
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace ssmae
