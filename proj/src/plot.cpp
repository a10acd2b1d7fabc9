#include "tdm/plot.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tdm {

namespace fs = std::filesystem;

PlotResult plot_pose_sequence(const PoseSequence& pose, const SkeletonTopology& topo,
                              const std::string& out_dir) {
  pose.validate(topo);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw PlotError("cannot create '" + out_dir + "': " + ec.message());

  // shared bounds across frames so the figure does not jitter
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (int f = 0; f < pose.frames; ++f) {
    if (!pose.mask[static_cast<size_t>(f)]) continue;
    for (int j = 0; j < pose.joints; ++j) {
      min_x = std::min(min_x, pose.at(f, j, 0));
      max_x = std::max(max_x, pose.at(f, j, 0));
      min_y = std::min(min_y, pose.at(f, j, 1));
      max_y = std::max(max_y, pose.at(f, j, 1));
    }
  }
  if (min_x > max_x) throw PlotError("no valid frames to plot");
  const double span = std::max({max_x - min_x, max_y - min_y, 1e-6});
  const double view = 400.0, margin = 30.0;
  auto sx = [&](double x) { return margin + (x - min_x) / span * view; };
  // SVG y grows downward
  auto sy = [&](double y) { return margin + view - (y - min_y) / span * view; };

  const std::vector<int> body = body_bones(topo);
  auto is_body = [&](int b) { return std::find(body.begin(), body.end(), b) != body.end(); };

  PlotResult result;
  for (int f = 0; f < pose.frames; ++f) {
    if (!pose.mask[static_cast<size_t>(f)]) {
      result.skipped_frames.push_back(f);
      continue;
    }
    std::ostringstream name;
    name << "frame_" << std::setw(4) << std::setfill('0') << f << ".svg";
    const std::string path = (fs::path(out_dir) / name.str()).string();
    std::ofstream svg(path);
    if (!svg) throw PlotError("cannot write '" + path + "'");
    const double wh = view + 2 * margin;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << wh << "\" height=\""
        << wh << "\" viewBox=\"0 0 " << wh << " " << wh << "\">\n";
    svg << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int b = 0; b < topo.bone_count(); ++b) {
      const auto& [p, c] = topo.bones[static_cast<size_t>(b)];
      svg << "  <line x1=\"" << sx(pose.at(f, p, 0)) << "\" y1=\"" << sy(pose.at(f, p, 1))
          << "\" x2=\"" << sx(pose.at(f, c, 0)) << "\" y2=\"" << sy(pose.at(f, c, 1))
          << "\" stroke=\"" << (is_body(b) ? "#1f4e79" : "#999999") << "\" stroke-width=\"2\"";
      if (!is_body(b)) svg << " stroke-dasharray=\"4 3\"";
      svg << "/>\n";
    }
    for (int j = 0; j < pose.joints; ++j) {
      svg << "  <circle cx=\"" << sx(pose.at(f, j, 0)) << "\" cy=\"" << sy(pose.at(f, j, 1))
          << "\" r=\"4\" fill=\"" << (topo.is_face_joint(j) ? "#cc6633" : "#1f4e79")
          << "\"/>\n";
    }
    svg << "</svg>\n";
    result.svg_files.push_back(path);
  }

  const std::string csv_path = (fs::path(out_dir) / "poses.csv").string();
  std::ofstream csv(csv_path);
  if (!csv) throw PlotError("cannot write '" + csv_path + "'");
  csv << "frame,joint,name,x,y,z\n";
  csv << std::setprecision(17);
  for (int f = 0; f < pose.frames; ++f) {
    if (!pose.mask[static_cast<size_t>(f)]) continue;
    for (int j = 0; j < pose.joints; ++j)
      csv << f << "," << j << "," << topo.joint_names[static_cast<size_t>(j)] << ","
          << pose.at(f, j, 0) << "," << pose.at(f, j, 1) << "," << pose.at(f, j, 2) << "\n";
  }
  result.csv_file = csv_path;
  return result;
}

}  // namespace tdm
