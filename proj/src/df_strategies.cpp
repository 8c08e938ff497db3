#include "rted/df_strategies.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <spdlog/spdlog.h>
#include <zlib.h>

namespace rted {

namespace {

std::string digest(const std::vector<double>& values) {
  uLong c = crc32(0L, Z_NULL, 0);
  if (!values.empty())
    c = crc32(c, reinterpret_cast<const Bytef*>(values.data()), static_cast<uInt>(values.size() * sizeof(double)));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(c));
  return buf;
}

std::vector<double> flatten(const DfVector& d) {
  std::vector<double> out;
  for (const auto& row : d.phi) out.insert(out.end(), row.begin(), row.end());
  return out;
}

}  // namespace

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kConst: return "const";
    case Strategy::kMer: return "mer";
    case Strategy::kKnn: return "knn";
    case Strategy::kStgcn: return "stgcn";
    case Strategy::kOracle: return "oracle";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  for (auto s : {Strategy::kConst, Strategy::kMer, Strategy::kKnn, Strategy::kStgcn, Strategy::kOracle})
    if (name == to_string(s)) return s;
  throw std::invalid_argument("unknown DF strategy '" + name + "'");
}

DfVector project_to_simplex(const SystemCase& sc, const Eigen::VectorXd& scores) {
  const auto total = static_cast<Eigen::Index>(sc.num_tders());
  if (scores.size() != total)
    throw stgcn::ShapeError("expected " + std::to_string(total) + " T-DER scores, got " + std::to_string(scores.size()));
  DfVector d;
  Eigen::Index k = 0;
  for (const auto& a : sc.deras) {
    std::vector<double> row(a.tders.size());
    double sum = 0.0;
    for (auto& x : row) {
      const double s = scores(k++);
      x = std::isfinite(s) ? std::max(0.0, s) : 0.0;
      sum += x;
    }
    if (sum > 0.0) {
      for (auto& x : row) x /= sum;
    } else {
      std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(row.size()));
    }
    d.phi.push_back(std::move(row));
  }
  return d;
}

DfPrediction predict_const(const SystemCase& sc) {
  DfPrediction p{DfVector::uniform(sc), Strategy::kConst, {}};
  p.features_digest = digest({});
  return p;
}

DfPrediction predict_mer(const SystemCase& sc, const DfHistory& history) {
  if (history.empty()) {
    spdlog::warn("MER strategy has no history; falling back to constant DFs");
    auto p = predict_const(sc);
    p.strategy = Strategy::kMer;
    return p;
  }
  DfPrediction p{history.back().realized_df, Strategy::kMer, {}};
  p.features_digest = digest(flatten(p.dfs));
  return p;
}

DfPrediction predict_knn(const SystemCase& sc, const DfHistory& history, const std::vector<double>& current_loads,
                         int k) {
  const std::size_t n = history.size();
  if (k < 1) throw std::invalid_argument("KNN needs k >= 1");
  if (n < static_cast<std::size_t>(k))
    throw std::invalid_argument("KNN needs at least k=" + std::to_string(k) + " history records, have " +
                                std::to_string(n));
  auto feature = [&](const std::vector<double>& loads, const std::vector<double>& dispatch) {
    std::vector<double> f(loads);
    f.insert(f.end(), dispatch.begin(), dispatch.end());
    return f;
  };
  std::vector<std::vector<double>> feats;
  for (std::size_t j = 0; j < n; ++j)
    feats.push_back(feature(history.at(j).loads, history.at(j == 0 ? 0 : j - 1).dera_dispatch));
  const auto query = feature(current_loads, history.back().dera_dispatch);
  const std::size_t dim = query.size();
  for (const auto& f : feats)
    if (f.size() != dim) throw std::invalid_argument("KNN history records differ in feature width");

  std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
  for (const auto& f : feats)
    for (std::size_t c = 0; c < dim; ++c) mean[c] += f[c];
  for (auto& m : mean) m /= static_cast<double>(n);
  for (const auto& f : feats)
    for (std::size_t c = 0; c < dim; ++c) sd[c] += (f[c] - mean[c]) * (f[c] - mean[c]);
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < dim; ++c) {
    sd[c] = std::sqrt(sd[c] / static_cast<double>(n));
    if (sd[c] > 1e-12 * std::max(1.0, std::abs(mean[c]))) keep.push_back(c);
  }
  std::vector<std::pair<double, std::size_t>> dist;
  for (std::size_t j = 0; j < n; ++j) {
    double d2 = 0.0;
    for (auto c : keep) {
      const double z = (feats[j][c] - query[c]) / sd[c];
      d2 += z * z;
    }
    dist.emplace_back(d2, j);
  }
  std::stable_sort(dist.begin(), dist.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;
  });

  Eigen::VectorXd mean_df = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sc.num_tders()));
  for (int i = 0; i < k; ++i) {
    const auto& rec = history.at(dist[static_cast<std::size_t>(i)].second);
    Eigen::Index pos = 0;
    for (const auto& row : rec.realized_df.phi)
      for (double phi : row) mean_df(pos++) += phi / k;
  }
  DfPrediction p{project_to_simplex(sc, mean_df), Strategy::kKnn, {}};
  std::vector<double> audit(query);
  for (int i = 0; i < k; ++i) audit.push_back(static_cast<double>(dist[static_cast<std::size_t>(i)].second));
  p.features_digest = digest(audit);
  return p;
}

DfPrediction predict_stgcn(const SystemCase& sc, const stgcn::Model& model, const stgcn::Window& window) {
  const auto scores = stgcn::forward(model, window);
  DfPrediction p{project_to_simplex(sc, scores), Strategy::kStgcn, {}};
  std::vector<double> raw(scores.data(), scores.data() + scores.size());
  p.features_digest = digest(raw);
  return p;
}

double df_accuracy(const DfVector& predicted, const DfVector& oracle) {
  if (predicted.phi.size() != oracle.phi.size()) throw std::invalid_argument("DF vectors differ in DERA count");
  if (predicted.phi.empty()) return 100.0;
  double tv = 0.0;
  for (std::size_t a = 0; a < predicted.phi.size(); ++a) {
    if (predicted.phi[a].size() != oracle.phi[a].size())
      throw std::invalid_argument("DF vectors differ in members of DERA " + std::to_string(a));
    double s = 0.0;
    for (std::size_t e = 0; e < predicted.phi[a].size(); ++e) s += std::abs(predicted.phi[a][e] - oracle.phi[a][e]);
    tv += 0.5 * s;
  }
  const double acc = 100.0 * (1.0 - tv / static_cast<double>(predicted.phi.size()));
  return std::clamp(acc, 0.0, 100.0);
}

}  // namespace rted
