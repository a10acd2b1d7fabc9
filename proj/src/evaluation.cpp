#include "tdm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace tdm {

namespace {

std::vector<int> valid_frames(const PoseSequence& p) {
  std::vector<int> idx;
  for (int f = 0; f < p.frames; ++f)
    if (p.mask[static_cast<size_t>(f)]) idx.push_back(f);
  return idx;
}

double frame_cost(const PoseSequence& a, int fa, const PoseSequence& b, int fb) {
  double acc = 0.0;
  for (int j = 0; j < a.joints; ++j) {
    double d2 = 0.0;
    for (int ax = 0; ax < 3; ++ax) {
      const double d = a.at(fa, j, ax) - b.at(fb, j, ax);
      d2 += d * d;
    }
    acc += std::sqrt(d2);
  }
  return acc / a.joints;
}

struct Cell {
  double sum = std::numeric_limits<double>::infinity();
  int len = 0;
  signed char move = -1;  // 0 diag, 1 up (i-1), 2 left (j-1)
};

bool better(double sum, int len, const Cell& c) {
  if (sum < c.sum) return true;
  if (sum > c.sum) return false;
  return len < c.len;
}

}  // namespace

DtwResult dtw_distance(const PoseSequence& a, const PoseSequence& b) {
  if (a.joints != b.joints)
    throw EvaluationError("dtw: sequences have different joint counts (" +
                          std::to_string(a.joints) + " vs " + std::to_string(b.joints) + ")");
  const std::vector<int> ia = valid_frames(a);
  const std::vector<int> ib = valid_frames(b);
  const int n = static_cast<int>(ia.size());
  const int m = static_cast<int>(ib.size());
  if (n == 0 || m == 0) throw EvaluationError("dtw: empty sequence");

  std::vector<Cell> dp(static_cast<size_t>(n) * m);
  auto cell = [&](int i, int j) -> Cell& { return dp[static_cast<size_t>(i) * m + j]; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double c = frame_cost(a, ia[static_cast<size_t>(i)], b, ib[static_cast<size_t>(j)]);
      Cell& here = cell(i, j);
      if (i == 0 && j == 0) {
        here = Cell{c, 1, -1};
        continue;
      }
      // preference order on exact ties: diagonal, then up, then left
      if (i > 0 && j > 0) {
        const Cell& p = cell(i - 1, j - 1);
        if (better(p.sum + c, p.len + 1, here)) here = Cell{p.sum + c, p.len + 1, 0};
      }
      if (i > 0) {
        const Cell& p = cell(i - 1, j);
        if (better(p.sum + c, p.len + 1, here)) here = Cell{p.sum + c, p.len + 1, 1};
      }
      if (j > 0) {
        const Cell& p = cell(i, j - 1);
        if (better(p.sum + c, p.len + 1, here)) here = Cell{p.sum + c, p.len + 1, 2};
      }
    }
  }

  DtwResult r;
  const Cell& last = cell(n - 1, m - 1);
  r.path_cost = last.sum;
  r.cost = last.sum / last.len;
  int i = n - 1, j = m - 1;
  while (true) {
    r.path.emplace_back(ia[static_cast<size_t>(i)], ib[static_cast<size_t>(j)]);
    const signed char mv = cell(i, j).move;
    if (mv < 0) break;
    if (mv == 0) { --i; --j; }
    else if (mv == 1) { --i; }
    else { --j; }
  }
  std::reverse(r.path.begin(), r.path.end());
  return r;
}

EvalReport evaluate_pairs(const GenerateFn& generate, const Dataset& dataset) {
  if (dataset.empty()) throw EvaluationError("evaluation dataset is empty");
  EvalReport report;
  std::vector<double> costs;
  for (const auto& sample : dataset.samples) {
    EvalRow row;
    row.id = sample.id;
    row.frames = sample.pose.frames;
    try {
      const PoseSequence gen = generate(sample);
      row.dtw = dtw_distance(gen, sample.pose).cost;
      row.ok = true;
      costs.push_back(row.dtw);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      ++report.failed;
    }
    report.rows.push_back(std::move(row));
  }
  report.count = static_cast<int>(costs.size());
  if (!costs.empty()) {
    std::vector<double> sorted = costs;
    std::sort(sorted.begin(), sorted.end());
    double acc = 0.0;
    for (double c : costs) acc += c;
    report.mean = acc / static_cast<double>(costs.size());
    const size_t mid = sorted.size() / 2;
    report.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    report.worst = sorted.back();
  }
  return report;
}

void write_report(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw EvaluationError("cannot write report '" + path + "'");
  out << "report tdm-eval v1\n";
  out.precision(17);
  for (const auto& row : report.rows) {
    if (row.ok) {
      out << "sample id=" << row.id << " frames=" << row.frames << " dtw=" << row.dtw << "\n";
    } else {
      std::string msg = row.error;
      for (char& c : msg)
        if (c == '\n' || c == ' ') c = '_';
      out << "sample id=" << row.id << " frames=" << row.frames << " error=" << msg << "\n";
    }
  }
  out << "summary count=" << report.count << " failed=" << report.failed
      << " mean=" << report.mean << " median=" << report.median
      << " worst=" << report.worst << "\n";
  if (!out) throw EvaluationError("write failure on report '" + path + "'");
}

}  // namespace tdm
