#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "tdm/skeleton.hpp"

namespace tdm {

struct PlotError : std::runtime_error {
  explicit PlotError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PlotResult {
  std::vector<std::string> svg_files;  // one per valid frame
  std::vector<int> skipped_frames;     // masked frames, reported not drawn
  std::string csv_file;
};

// Orthographic x/y projection (z dropped): joints as circles, bones as
// lines, face-touching bones dashed. Writes frame_%04d.svg plus poses.csv
// into out_dir.
PlotResult plot_pose_sequence(const PoseSequence& pose, const SkeletonTopology& topo,
                              const std::string& out_dir);

}  // namespace tdm
