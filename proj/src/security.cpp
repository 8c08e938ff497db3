#include "rted/security.hpp"

#include <algorithm>

namespace rted {

std::string to_string(ConstraintRef::Kind k) { return k == ConstraintRef::Kind::kPre ? "pre" : "post"; }
std::string to_string(ConstraintRef::Bound b) { return b == ConstraintRef::Bound::kUpper ? "upper" : "lower"; }

std::string ConstraintRef::label() const {
  std::string s = "line" + std::to_string(line_id);
  if (kind == Kind::kPost) s += "_out" + std::to_string(outage_id);
  return s + (bound == Bound::kUpper ? "_up" : "_lo");
}

SecurityModel::SecurityModel(const SystemCase& sc, SensitivitySet sens) : case_(&sc), sens_(std::move(sens)) {
  vulnerable_slot_.assign(sc.lines.size(), -1);
  for (std::size_t k = 0; k < sens_.vulnerable_index.size(); ++k)
    vulnerable_slot_[sens_.vulnerable_index[k]] = static_cast<int>(k);
  for (std::size_t l = 0; l < sc.lines.size(); ++l)
    if (sc.lines[l].limited()) limited_.push_back(l);
}

std::size_t SecurityModel::line_pos(int line_id) const {
  const auto& lines = case_->lines;
  // Line ids are usually 1..n in order; fall back to a scan.
  if (line_id >= 1 && static_cast<std::size_t>(line_id) <= lines.size() &&
      lines[static_cast<std::size_t>(line_id) - 1].id == line_id)
    return static_cast<std::size_t>(line_id) - 1;
  for (std::size_t l = 0; l < lines.size(); ++l)
    if (lines[l].id == line_id) return l;
  throw std::invalid_argument("unknown line " + std::to_string(line_id));
}

void SecurityModel::check(const ConstraintRef& ref) const {
  const auto l = line_pos(ref.line_id);
  if (!case_->lines[l].limited()) throw std::invalid_argument("line " + std::to_string(ref.line_id) + " has no limit");
  if (ref.kind == ConstraintRef::Kind::kPost) {
    if (ref.outage_id == ref.line_id) throw std::invalid_argument("outage of the monitored line itself");
    if (vulnerable_slot_[line_pos(ref.outage_id)] < 0)
      throw std::invalid_argument("line " + std::to_string(ref.outage_id) + " is not a vulnerable line");
  }
}

Eigen::RowVectorXd SecurityModel::coefficients(const ConstraintRef& ref) const {
  const auto l = static_cast<Eigen::Index>(line_pos(ref.line_id));
  Eigen::RowVectorXd c = sens_.isf.row(l);
  if (ref.kind == ConstraintRef::Kind::kPost) {
    const auto m = line_pos(ref.outage_id);
    const int slot = vulnerable_slot_[m];
    if (slot < 0) throw std::invalid_argument("line " + std::to_string(ref.outage_id) + " is not a vulnerable line");
    c += sens_.lodf(l, slot) * sens_.isf.row(static_cast<Eigen::Index>(m));
  }
  return c;
}

double SecurityModel::limit(const ConstraintRef& ref) const {
  const auto& line = case_->lines[line_pos(ref.line_id)];
  return ref.bound == ConstraintRef::Bound::kUpper ? line.flow_max : line.flow_min;
}

std::vector<ConstraintRef> SecurityModel::all_candidates() const {
  std::vector<ConstraintRef> out;
  for (auto l : limited_) {
    const int id = case_->lines[l].id;
    out.push_back({ConstraintRef::Kind::kPre, id, -1, ConstraintRef::Bound::kUpper});
    out.push_back({ConstraintRef::Kind::kPre, id, -1, ConstraintRef::Bound::kLower});
    for (int m : sens_.vulnerable_lines) {
      if (m == id) continue;
      out.push_back({ConstraintRef::Kind::kPost, id, m, ConstraintRef::Bound::kUpper});
      out.push_back({ConstraintRef::Kind::kPost, id, m, ConstraintRef::Bound::kLower});
    }
  }
  return out;
}

std::size_t SecurityModel::num_candidate_lines() const {
  std::size_t n = 0;
  for (auto l : limited_) {
    n += 1 + sens_.vulnerable_lines.size();
    if (vulnerable_slot_[l] >= 0) --n;
  }
  return n;
}

Eigen::VectorXd SecurityModel::flows(const Eigen::VectorXd& injection) const { return sens_.isf * injection; }

std::vector<Violation> SecurityModel::violations(const Eigen::VectorXd& injection, double tol) const {
  const Eigen::VectorXd f = flows(injection);
  std::vector<Violation> out;
  auto push = [&](ConstraintRef::Kind kind, int line, int outage, double flow, const Line& spec) {
    if (flow > spec.flow_max + tol)
      out.push_back({{kind, line, outage, ConstraintRef::Bound::kUpper}, flow - spec.flow_max});
    else if (flow < spec.flow_min - tol)
      out.push_back({{kind, line, outage, ConstraintRef::Bound::kLower}, spec.flow_min - flow});
  };
  for (auto l : limited_) {
    const auto& line = case_->lines[l];
    push(ConstraintRef::Kind::kPre, line.id, -1, f(static_cast<Eigen::Index>(l)), line);
    for (std::size_t k = 0; k < sens_.vulnerable_lines.size(); ++k) {
      if (sens_.vulnerable_index[k] == l) continue;
      push(ConstraintRef::Kind::kPost, line.id, sens_.vulnerable_lines[k], post_contingency_flow(sens_, f, l, k), line);
    }
  }
  return out;
}

double SecurityModel::max_violation(const Eigen::VectorXd& injection) const {
  double worst = 0.0;
  for (const auto& v : violations(injection, 0.0)) worst = std::max(worst, v.zeta);
  return worst;
}

double SecurityModel::total_violation(const Eigen::VectorXd& injection, double tol) const {
  double sum = 0.0;
  for (const auto& v : violations(injection, tol)) sum += v.zeta;
  return sum;
}

}  // namespace rted
