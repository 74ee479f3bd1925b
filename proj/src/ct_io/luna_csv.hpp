#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ct_io/ct_volume.hpp"

namespace nodulekit::ct {

struct NoduleAnnotation {
  std::string scan_id;
  Vec3 world_center{};
  double diameter_mm = 0.0;
};

struct Candidate {
  std::string scan_id;
  Vec3 world_center{};
  int label = 0;
};

/// `seriesuid,coordX,coordY,coordZ,diameter_mm`; coordinates are world mm.
std::vector<NoduleAnnotation> load_annotations(std::string_view csv_text);

/// `seriesuid,coordX,coordY,coordZ,class`.
std::vector<Candidate> load_candidates(std::string_view csv_text);

std::string write_annotations_csv(const std::vector<NoduleAnnotation>& rows);
std::string write_candidates_csv(const std::vector<Candidate>& rows);

}  // namespace nodulekit::ct
