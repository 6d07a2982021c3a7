#pragma once

#include "detal/core.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace detal {

/// Raised for malformed or missing data files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Video {
  std::string id;
  std::string split = "train";
  FeatureSequence rgb, flow;
  std::vector<LabeledSegment> gt;

  int length() const { return static_cast<int>(rgb.rows()); }
};

struct Dataset {
  int num_classes = 0;
  int feature_dim = 0;
  int U = 0;  // stage-1 expansion bound published with the data
  std::vector<Video> videos;
  std::vector<SingleFrameAnnotation> annotations;

  std::vector<SingleFrameAnnotation> annotations_for(const std::string& video_id) const {
    std::vector<SingleFrameAnnotation> out;
    for (const auto& a : annotations)
      if (a.video_id == video_id) out.push_back(a);
    return out;
  }

  std::vector<const Video*> split(const std::string& name) const {
    std::vector<const Video*> out;
    for (const auto& v : videos)
      if (v.split == name) out.push_back(&v);
    return out;
  }
};

}  // namespace detal
