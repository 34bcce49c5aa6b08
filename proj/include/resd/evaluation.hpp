#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <vector>

#include "resd/errors.hpp"

// Precision/recall/F1 scoring of detections against labelled ground truth.
// A detection within `tolerance` of a point label, or within a range label
// widened by the tolerance, is a true positive; each label is creditable by
// at most one detection (the earliest one).

namespace resd {

struct Label {
  std::int64_t start = 0;
  std::int64_t end = 0;  // == start for point labels
};

struct EvalReport {
  Eigen::Index true_positives = 0;
  Eigen::Index false_positives = 0;
  Eigen::Index false_negatives = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  // detection timestamp credited to each label, -1 where unmatched
  std::vector<std::int64_t> matched_detection;
};

inline EvalReport score(std::vector<std::int64_t> detections,
                        std::vector<Label> labels, std::int64_t tolerance) {
  if (tolerance < 0) throw config_error("score: tolerance must be non-negative");
  for (const Label& l : labels)
    if (l.end < l.start) throw config_error("score: label range end precedes start");

  std::sort(detections.begin(), detections.end());
  std::sort(labels.begin(), labels.end(),
            [](const Label& a, const Label& b) { return a.start < b.start; });

  EvalReport rep;
  rep.matched_detection.assign(labels.size(), -1);
  std::vector<char> credited(labels.size(), 0);

  for (const std::int64_t det : detections) {
    bool matched = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (credited[i]) continue;
      if (det >= labels[i].start - tolerance && det <= labels[i].end + tolerance) {
        credited[i] = 1;
        rep.matched_detection[i] = det;
        matched = true;
        break;
      }
    }
    if (matched)
      ++rep.true_positives;
    else
      ++rep.false_positives;
  }
  rep.false_negatives =
      Eigen::Index(labels.size()) - rep.true_positives;

  const auto tp = double(rep.true_positives);
  rep.precision = rep.true_positives + rep.false_positives > 0
                      ? tp / double(rep.true_positives + rep.false_positives)
                      : 0;
  rep.recall = rep.true_positives + rep.false_negatives > 0
                   ? tp / double(rep.true_positives + rep.false_negatives)
                   : 0;
  rep.f1 = rep.precision + rep.recall > 0
               ? 2 * rep.precision * rep.recall / (rep.precision + rep.recall)
               : 0;
  return rep;
}

}  // namespace resd
