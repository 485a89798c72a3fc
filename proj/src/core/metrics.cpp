#include "ssmae/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "ssmae/error.hpp"

namespace ssmae {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> truths, std::size_t classes) {
  if (preds.size() != truths.size()) {
    fail(Errc::dimension, "confusion: " + std::to_string(preds.size()) + " predictions for " +
                              std::to_string(truths.size()) + " truths");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= classes || truths[i] >= classes) {
      fail(Errc::label, "confusion: class index out of range at pair " + std::to_string(i));
    }
    ++cm.counts[truths[i] * classes + preds[i]];
  }
  return cm;
}

Scores score(const ConfusionMatrix& cm) {
  const auto l = cm.classes;
  const std::uint64_t total = cm.total();
  if (total == 0) fail(Errc::metric, "metrics of an empty confusion matrix");

  std::vector<std::uint64_t> rows(l, 0), cols(l, 0);
  std::uint64_t trace = 0;
  for (std::size_t t = 0; t < l; ++t) {
    for (std::size_t p = 0; p < l; ++p) {
      rows[t] += cm.at(t, p);
      cols[p] += cm.at(t, p);
    }
    trace += cm.at(t, t);
  }

  Scores s;
  const double n = static_cast<double>(total);
  s.oa = static_cast<double>(trace) / n;
  s.recall.assign(l, std::numeric_limits<double>::quiet_NaN());
  double recall_sum = 0.0;
  std::size_t populated = 0;
  for (std::size_t k = 0; k < l; ++k) {
    if (rows[k] == 0) {
      ++s.skipped_classes;
      continue;
    }
    s.recall[k] = static_cast<double>(cm.at(k, k)) / static_cast<double>(rows[k]);
    recall_sum += s.recall[k];
    ++populated;
  }
  s.aa = recall_sum / static_cast<double>(populated);

  // Σ row·col in integers, so the chance-agreement case is exact.
  long double chance = 0.0L;
  for (std::size_t k = 0; k < l; ++k) chance += static_cast<long double>(rows[k]) * static_cast<long double>(cols[k]);
  const double pe = static_cast<double>(chance / (static_cast<long double>(total) * static_cast<long double>(total)));
  if (pe == 1.0) {
    if (trace != total) fail(Errc::metric, "kappa undefined: chance agreement is 1 but accuracy is not");
    s.kappa = 1.0;
  } else {
    s.kappa = (s.oa - pe) / (1.0 - pe);
  }
  return s;
}

std::string format_report(const ConfusionMatrix& cm, const Scores& s) {
  std::ostringstream os;
  char line[128];
  os << "class  samples  accuracy\n";
  for (std::size_t k = 0; k < cm.classes; ++k) {
    std::uint64_t n = 0;
    for (std::size_t p = 0; p < cm.classes; ++p) n += cm.at(k, p);
    if (std::isnan(s.recall[k])) {
      std::snprintf(line, sizeof line, "%5zu  %7llu  %8s\n", k + 1, static_cast<unsigned long long>(n), "-");
    } else {
      std::snprintf(line, sizeof line, "%5zu  %7llu  %8.4f\n", k + 1, static_cast<unsigned long long>(n), s.recall[k]);
    }
    os << line;
  }
  std::snprintf(line, sizeof line, "OA     %.6f\nAA     %.6f\nKappa  %.6f\n", s.oa, s.aa, s.kappa);
  os << line;
  if (s.skipped_classes > 0) os << "AA skipped " << s.skipped_classes << " classes without test samples\n";
  return os.str();
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "truth\\pred";
  for (std::size_t p = 0; p < cm.classes; ++p) os << ',' << p + 1;
  os << '\n';
  for (std::size_t t = 0; t < cm.classes; ++t) {
    os << t + 1;
    for (std::size_t p = 0; p < cm.classes; ++p) os << ',' << cm.at(t, p);
    os << '\n';
  }
  return os.str();
}

}  // namespace ssmae
