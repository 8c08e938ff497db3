#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rted/case.hpp"
#include "rted/dispatch.hpp"
#include "rted/history.hpp"
#include "rted/stgcn.hpp"

namespace rted {

enum class Strategy { kConst, kMer, kKnn, kStgcn, kOracle };

const char* to_string(Strategy s);
// "const", "mer", "knn", "stgcn", "oracle"; throws std::invalid_argument.
Strategy parse_strategy(const std::string& name);

struct DfPrediction {
  DfVector dfs;
  Strategy strategy = Strategy::kConst;
  std::string features_digest;  // CRC-32 of the predictor inputs, hex
};

// Clamps negatives to zero and renormalizes each DERA; an all-zero DERA
// becomes uniform. `scores` follows DERA-major T-DER order.
DfVector project_to_simplex(const SystemCase& sc, const Eigen::VectorXd& scores);

DfPrediction predict_const(const SystemCase& sc);
// Last realized DFs; CONST with a warning when the history is empty.
DfPrediction predict_mer(const SystemCase& sc, const DfHistory& history);

// Feature of record j: (loads_j, dispatch_{j-1}); record 0 uses its own
// dispatch. The query pairs current loads with the newest dispatch. Every
// dimension is z-scored over the history and zero-variance dimensions are
// dropped. Ties in distance go to the more recent record.
DfPrediction predict_knn(const SystemCase& sc, const DfHistory& history, const std::vector<double>& current_loads,
                         int k = 5);

DfPrediction predict_stgcn(const SystemCase& sc, const stgcn::Model& model, const stgcn::Window& window);

// 100 * (1 - 0.5 * mean over DERAs of sum_e |predicted - oracle|).
double df_accuracy(const DfVector& predicted, const DfVector& oracle);

}  // namespace rted
