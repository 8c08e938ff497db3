#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rted/case.hpp"
#include "rted/history.hpp"

namespace rted::stgcn {

using Mat = Eigen::MatrixXd;       // [nodes x channels]
using Seq = std::vector<Mat>;      // one Mat per time step
using RowVec = Eigen::RowVectorXd;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Hyperparameters {
  int window = 12;       // M
  int kernel = 3;        // temporal kernel K
  int st_blocks = 2;
  std::vector<int> st_channels{64, 16, 64};  // GLU out, GCN out, GLU out
  int st_out = 32;       // FC bridge after the ST-Conv blocks
  int ec_layers = 2;
  int ec_channels = 32;
  int edge_hidden = 32;  // hidden width of h_Theta
  int ec_out = 32;
  int fa_hidden = 32;
  int cheb_k = 2;
  int bid_segments = 5;
  int tder_slots = 1;    // T-DER outputs per bus in the load-DER features
  int gen_slots = 1;     // generators per bus in the generator features
  int dera_slots = 1;    // DERA bids per bus in the generator features
  int edge_width = 4;

  int load_width() const { return 1 + tder_slots; }
  int gen_width() const { return gen_slots * (2 * bid_segments + 5) + dera_slots * 2 * bid_segments; }
  // Time steps left after the ST-Conv blocks.
  int st_steps() const { return window - 2 * st_blocks * (kernel - 1); }
  void validate() const;
};

// Slot counts sized to the case; other fields keep their defaults.
Hyperparameters hyperparameters_for(const SystemCase& sc);

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> std;

  static FeatureStats identity(int width);
  // (x - mean) / std, treating non-positive std as 1.
  double apply(std::size_t k, double x) const;
};

struct Normalization {
  FeatureStats load_der;
  FeatureStats gen;
  FeatureStats edge;

  static Normalization identity(const Hyperparameters& h);
};

// Row-major tensor.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t size() const;
};

// Tensor names and shapes in canonical (payload) order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> tensor_specs(const Hyperparameters& h);

class Model {
 public:
  Hyperparameters hyper;
  Normalization norm;
  std::map<std::string, Tensor> tensors;

  const Tensor& tensor(const std::string& name) const;
  // 2-D tensor as [rows x cols].
  Mat matrix(const std::string& name) const;
  RowVec vector(const std::string& name) const;
  // Slice k of a 3-D tensor [K x rows x cols].
  Mat slice(const std::string& name, std::size_t k) const;

  // Every spec tensor present with the expected shape; throws ShapeError.
  void check() const;
};

// Weights drawn uniformly from [-scale, scale]; a zero scale gives zeros.
Model random_model(const Hyperparameters& h, std::uint64_t seed, double scale = 0.1);

// Weight file: JSON manifest plus a little-endian float32 payload stored
// next to it. Format and version fields are mandatory.
Model load_model(const std::string& manifest_path);
void save_model(const Model& m, const std::string& manifest_path, const std::string& payload_name = "");
// Rounds every weight to float32, as a save/load round trip would.
Model round_to_f32(Model m);

// Standardized inputs of one forward pass.
struct Window {
  Seq load_der;                          // window x [nodes x load_width]
  Mat gen;                               // [nodes x gen_width]
  std::vector<std::pair<int, int>> edges;  // node index pairs, one per line
  Mat edge_attr;                         // [edges x edge_width]
  std::vector<int> tder_node;            // node of each T-DER, DERA-major order

  int nodes() const { return static_cast<int>(gen.rows()); }
};

// Window fixture for forward-pass parity. model_path is resolved against
// the fixture's directory; expected is empty when the file has none.
struct ParityFixture {
  Window window;
  std::string model_path;
  std::vector<double> expected;
  double tolerance = 1e-5;
};

ParityFixture load_parity_fixture(const std::string& path);

// Assembles the dual-graph window ending at interval t. `history` must hold
// at least `window` records, the newest being interval t-1.
Window build_window(const SystemCase& sc, const Model& m, const DfHistory& history,
                    const std::vector<double>& loads_t, std::size_t t, const std::vector<double>& prev_gen);

// Raw (unstandardized) per-bus features, exposed for tests and tooling.
Mat raw_load_der_features(const SystemCase& sc, const Hyperparameters& h, const std::vector<double>& loads,
                          const std::vector<std::vector<double>>& prev_tder);
Mat raw_gen_features(const SystemCase& sc, const Hyperparameters& h, std::size_t t,
                     const std::vector<double>& prev_gen);
Mat raw_edge_features(const SystemCase& sc);

// Column statistics of the raw features over every node and `samples`
// intervals spread across the profile. Previous outputs are taken as half of
// each unit's limit, since no dispatch history exists yet.
Normalization fit_normalization(const SystemCase& sc, const Hyperparameters& h, const LoadProfile& profile,
                                std::size_t samples = 48);

// Layers -------------------------------------------------------------------

// out[t] = (sum_k H[t+k] W_k + bw) .* sigmoid(sum_k H[t+k] V_k + bv)
Seq temporal_gated_conv(const Seq& h, const std::vector<Mat>& w, const RowVec& bw, const std::vector<Mat>& v,
                        const RowVec& bv);

// D^-1/2 (A + I) D^-1/2 for the undirected 0/1 adjacency of `edges`.
Mat normalized_adjacency(int nodes, const std::vector<std::pair<int, int>>& edges);
// 2 L_norm / lambda_max - I with lambda_max = 2.
Mat scaled_laplacian(int nodes, const std::vector<std::pair<int, int>>& edges);
Mat adjacency(int nodes, const std::vector<std::pair<int, int>>& edges);

Mat gcn_layer(const Mat& h, const Mat& a_norm, const Mat& w);

// h_Theta: affine -> ReLU -> affine, output reshaped row-major to [C x C'].
struct EdgeNetwork {
  Mat w1;
  RowVec b1;
  Mat w2;
  RowVec b2;

  Mat operator()(const RowVec& attr, int c_in, int c_out) const;
};

// H'_i = H_i W + sum_{j in N(i)} H_j h_Theta(e_ij), each edge used both ways.
Mat ec_conv_layer(const Mat& h, const std::vector<std::pair<int, int>>& edges, const Mat& edge_attr, const Mat& w,
                  const EdgeNetwork& net);

// sum_k Z_k W_k with Z_1 = H, Z_2 = L H, Z_k = 2 L Z_{k-1} - Z_{k-2}.
Mat chebyshev_layer(const Mat& h, const Mat& lhat, const std::vector<Mat>& w);

Mat relu(Mat x);

// Full network: one raw score per T-DER, in window.tder_node order.
Eigen::VectorXd forward(const Model& m, const Window& w);

// exp(lambda * cost) * ||pred - target||^2
double eval_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target, double dera_cost, double lambda);
double batch_loss(const std::vector<Eigen::VectorXd>& pred, const std::vector<Eigen::VectorXd>& target,
                  const std::vector<double>& dera_cost, double lambda);

}  // namespace rted::stgcn
