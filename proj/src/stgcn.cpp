#include "rted/stgcn.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace rted::stgcn {

namespace {

std::string str(std::size_t v) { return std::to_string(v); }

void expect_width(const char* layer, Eigen::Index expected, Eigen::Index got) {
  if (expected != got)
    throw ShapeError(std::string("layer ") + layer + ": expected input width " + std::to_string(expected) +
                     ", got " + std::to_string(got));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void Hyperparameters::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ShapeError(std::string("hyperparameter ") + what + " must be positive");
  };
  positive(window, "window");
  positive(kernel, "kernel");
  positive(st_blocks, "st_blocks");
  positive(st_out, "st_out");
  positive(ec_layers, "ec_layers");
  positive(ec_channels, "ec_channels");
  positive(edge_hidden, "edge_hidden");
  positive(ec_out, "ec_out");
  positive(fa_hidden, "fa_hidden");
  positive(bid_segments, "bid_segments");
  positive(tder_slots, "tder_slots");
  positive(gen_slots, "gen_slots");
  positive(dera_slots, "dera_slots");
  positive(edge_width, "edge_width");
  if (st_channels.size() != 3) throw ShapeError("st_channels needs three widths");
  for (int c : st_channels) positive(c, "st_channels");
  if (cheb_k != 2) throw ShapeError("cheb_k must be 2");
  if (st_steps() < 1)
    throw ShapeError("window " + std::to_string(window) + " too short for " + std::to_string(st_blocks) +
                     " blocks of kernel " + std::to_string(kernel));
}

Hyperparameters hyperparameters_for(const SystemCase& sc) {
  Hyperparameters h;
  std::vector<int> tders(sc.buses.size(), 0), gens(sc.buses.size(), 0), deras(sc.buses.size(), 0);
  for (const auto& g : sc.generators) ++gens[sc.bus_index(g.bus_id)];
  for (const auto& a : sc.deras) {
    std::set<std::size_t> at;
    for (const auto& e : a.tders) {
      ++tders[sc.bus_index(e.bus_id)];
      at.insert(sc.bus_index(e.bus_id));
    }
    for (auto i : at) ++deras[i];
  }
  auto mx = [](const std::vector<int>& v) { return std::max(1, v.empty() ? 1 : *std::max_element(v.begin(), v.end())); };
  h.tder_slots = mx(tders);
  h.gen_slots = mx(gens);
  h.dera_slots = mx(deras);
  return h;
}

FeatureStats FeatureStats::identity(int width) {
  FeatureStats s;
  s.mean.assign(static_cast<std::size_t>(width), 0.0);
  s.std.assign(static_cast<std::size_t>(width), 1.0);
  return s;
}

double FeatureStats::apply(std::size_t k, double x) const {
  const double sd = std.at(k);
  return (x - mean.at(k)) / (sd > 0.0 ? sd : 1.0);
}

Normalization Normalization::identity(const Hyperparameters& h) {
  return {FeatureStats::identity(h.load_width()), FeatureStats::identity(h.gen_width()),
          FeatureStats::identity(h.edge_width)};
}

std::size_t Tensor::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> tensor_specs(const Hyperparameters& h) {
  h.validate();
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  auto u = [](int v) { return static_cast<std::size_t>(v); };
  const std::size_t k = u(h.kernel);
  std::size_t c_in = u(h.load_width());
  const std::size_t c0 = u(h.st_channels[0]), c1 = u(h.st_channels[1]), c2 = u(h.st_channels[2]);
  for (int b = 0; b < h.st_blocks; ++b) {
    const std::string p = "st" + std::to_string(b) + ".";
    out.push_back({p + "t1.w", {k, c_in, c0}});
    out.push_back({p + "t1.bw", {c0}});
    out.push_back({p + "t1.v", {k, c_in, c0}});
    out.push_back({p + "t1.bv", {c0}});
    out.push_back({p + "gcn.w", {c0, c1}});
    out.push_back({p + "t2.w", {k, c1, c2}});
    out.push_back({p + "t2.bw", {c2}});
    out.push_back({p + "t2.v", {k, c1, c2}});
    out.push_back({p + "t2.bv", {c2}});
    c_in = c2;
  }
  out.push_back({"st.fc.w", {u(h.st_steps()) * c2, u(h.st_out)}});
  out.push_back({"st.fc.b", {u(h.st_out)}});
  std::size_t e_in = u(h.gen_width());
  const std::size_t ec = u(h.ec_channels), eh = u(h.edge_hidden);
  for (int l = 0; l < h.ec_layers; ++l) {
    const std::string p = "ec" + std::to_string(l) + ".";
    out.push_back({p + "w", {e_in, ec}});
    out.push_back({p + "h1.w", {u(h.edge_width), eh}});
    out.push_back({p + "h1.b", {eh}});
    out.push_back({p + "h2.w", {eh, e_in * ec}});
    out.push_back({p + "h2.b", {e_in * ec}});
    e_in = ec;
  }
  out.push_back({"ec.fc.w", {ec, u(h.ec_out)}});
  out.push_back({"ec.fc.b", {u(h.ec_out)}});
  for (int j = 1; j <= h.cheb_k; ++j)
    out.push_back({"fa.cheb.w" + std::to_string(j), {u(h.st_out + h.ec_out), u(h.fa_hidden)}});
  out.push_back({"fa.fc.w", {u(h.fa_hidden), 1}});
  out.push_back({"fa.fc.b", {1}});
  return out;
}

const Tensor& Model::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ShapeError("missing tensor " + name);
  return it->second;
}

Mat Model::matrix(const std::string& name) const {
  const auto& t = tensor(name);
  if (t.shape.size() != 2) throw ShapeError("tensor " + name + " is not 2-D");
  Mat m(static_cast<Eigen::Index>(t.shape[0]), static_cast<Eigen::Index>(t.shape[1]));
  for (std::size_t r = 0; r < t.shape[0]; ++r)
    for (std::size_t c = 0; c < t.shape[1]; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.data[r * t.shape[1] + c];
  return m;
}

RowVec Model::vector(const std::string& name) const {
  const auto& t = tensor(name);
  if (t.shape.size() != 1) throw ShapeError("tensor " + name + " is not 1-D");
  RowVec v(static_cast<Eigen::Index>(t.shape[0]));
  for (std::size_t i = 0; i < t.shape[0]; ++i) v(static_cast<Eigen::Index>(i)) = t.data[i];
  return v;
}

Mat Model::slice(const std::string& name, std::size_t k) const {
  const auto& t = tensor(name);
  if (t.shape.size() != 3) throw ShapeError("tensor " + name + " is not 3-D");
  const std::size_t rows = t.shape[1], cols = t.shape[2];
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const std::size_t base = k * rows * cols;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.data[base + r * cols + c];
  return m;
}

void Model::check() const {
  hyper.validate();
  for (const auto& [name, shape] : tensor_specs(hyper)) {
    const auto& t = tensor(name);
    if (t.shape != shape) {
      std::string want, got;
      for (auto d : shape) want += (want.empty() ? "" : "x") + str(d);
      for (auto d : t.shape) got += (got.empty() ? "" : "x") + str(d);
      throw ShapeError("tensor " + name + ": expected shape " + want + ", got " + got);
    }
    if (t.data.size() != t.size()) throw ShapeError("tensor " + name + ": data size does not match shape");
  }
  if (norm.load_der.mean.size() != static_cast<std::size_t>(hyper.load_width()) ||
      norm.load_der.std.size() != norm.load_der.mean.size())
    throw ShapeError("load-DER normalization width does not match the model");
  if (norm.gen.mean.size() != static_cast<std::size_t>(hyper.gen_width()) || norm.gen.std.size() != norm.gen.mean.size())
    throw ShapeError("generator normalization width does not match the model");
  if (norm.edge.mean.size() != static_cast<std::size_t>(hyper.edge_width) || norm.edge.std.size() != norm.edge.mean.size())
    throw ShapeError("edge normalization width does not match the model");
}

Model random_model(const Hyperparameters& h, std::uint64_t seed, double scale) {
  Model m;
  m.hyper = h;
  m.norm = Normalization::identity(h);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto& [name, shape] : tensor_specs(h)) {
    Tensor t{shape, {}};
    t.data.resize(t.size());
    for (auto& x : t.data) x = scale * u(rng);
    m.tensors[name] = std::move(t);
  }
  return m;
}

Model round_to_f32(Model m) {
  for (auto& [name, t] : m.tensors)
    for (auto& x : t.data) x = static_cast<double>(static_cast<float>(x));
  return m;
}

// Features -----------------------------------------------------------------

Mat raw_load_der_features(const SystemCase& sc, const Hyperparameters& h, const std::vector<double>& loads,
                          const std::vector<std::vector<double>>& prev_tder) {
  const auto n = static_cast<Eigen::Index>(sc.buses.size());
  if (loads.size() != sc.buses.size())
    throw ShapeError("load vector has " + str(loads.size()) + " entries for " + str(sc.buses.size()) + " buses");
  Mat f = Mat::Zero(n, h.load_width());
  std::vector<int> used(sc.buses.size(), 0);
  for (Eigen::Index i = 0; i < n; ++i) f(i, 0) = loads[static_cast<std::size_t>(i)];
  for (std::size_t a = 0; a < sc.deras.size(); ++a)
    for (std::size_t e = 0; e < sc.deras[a].tders.size(); ++e) {
      const auto i = sc.bus_index(sc.deras[a].tders[e].bus_id);
      if (used[i] >= h.tder_slots)
        throw ShapeError("bus " + std::to_string(sc.buses[i].id) + " hosts more T-DERs than tder_slots");
      const double p = a < prev_tder.size() && e < prev_tder[a].size() ? prev_tder[a][e] : 0.0;
      f(static_cast<Eigen::Index>(i), 1 + used[i]++) = p;
    }
  return f;
}

Mat raw_gen_features(const SystemCase& sc, const Hyperparameters& h, std::size_t t,
                     const std::vector<double>& prev_gen) {
  const auto n = static_cast<Eigen::Index>(sc.buses.size());
  const int seg = h.bid_segments;
  const int gen_block = 2 * seg + 5;
  Mat f = Mat::Zero(n, h.gen_width());
  auto put_curve = [&](Eigen::Index row, int col, const BidCurve& c) {
    if (static_cast<int>(c.size()) > seg)
      throw ShapeError("bid curve with " + str(c.size()) + " segments exceeds bid_segments");
    for (std::size_t s = 0; s < c.size(); ++s) {
      f(row, col + 2 * static_cast<int>(s)) = c.segments()[s].kappa;
      f(row, col + 2 * static_cast<int>(s) + 1) = c.segments()[s].beta;
    }
  };
  std::vector<int> used(sc.buses.size(), 0);
  for (std::size_t g = 0; g < sc.generators.size(); ++g) {
    const auto& gen = sc.generators[g];
    const auto i = sc.bus_index(gen.bus_id);
    if (used[i] >= h.gen_slots)
      throw ShapeError("bus " + std::to_string(gen.bus_id) + " hosts more generators than gen_slots");
    const auto row = static_cast<Eigen::Index>(i);
    const int col = gen_block * used[i]++;
    put_curve(row, col, gen.bid_curve_t.at(t));
    const double pmax = gen.p_max_t.at(t);
    f(row, col + 2 * seg + 0) = std::isfinite(gen.ramp_down) ? gen.ramp_down : pmax;
    f(row, col + 2 * seg + 1) = std::isfinite(gen.ramp_up) ? gen.ramp_up : pmax;
    f(row, col + 2 * seg + 2) = pmax;
    f(row, col + 2 * seg + 3) = gen.p_min_t.at(t);
    f(row, col + 2 * seg + 4) = g < prev_gen.size() ? prev_gen[g] : gen.p_prev;
  }
  std::vector<int> dused(sc.buses.size(), 0);
  for (const auto& a : sc.deras) {
    std::set<std::size_t> at;
    for (const auto& e : a.tders) at.insert(sc.bus_index(e.bus_id));
    for (auto i : at) {
      if (dused[i] >= h.dera_slots)
        throw ShapeError("bus " + std::to_string(sc.buses[i].id) + " hosts more DERAs than dera_slots");
      put_curve(static_cast<Eigen::Index>(i), gen_block * h.gen_slots + 2 * seg * dused[i]++, a.bid_curve_t.at(t));
    }
  }
  return f;
}

Mat raw_edge_features(const SystemCase& sc) {
  Mat f(static_cast<Eigen::Index>(sc.lines.size()), 4);
  for (std::size_t l = 0; l < sc.lines.size(); ++l) {
    const auto& line = sc.lines[l];
    const auto r = static_cast<Eigen::Index>(l);
    f(r, 0) = line.limited() ? line.flow_max : 0.0;
    f(r, 1) = line.limited() ? line.flow_min : 0.0;
    f(r, 2) = line.reactance_pu;
    f(r, 3) = line.susceptance_pu;
  }
  return f;
}

Normalization fit_normalization(const SystemCase& sc, const Hyperparameters& h, const LoadProfile& profile,
                                std::size_t samples) {
  auto stats = [](const std::vector<Mat>& blocks) {
    FeatureStats f = FeatureStats::identity(static_cast<int>(blocks.front().cols()));
    Eigen::Index rows = 0;
    for (const auto& b : blocks) rows += b.rows();
    Mat all(rows, blocks.front().cols());
    Eigen::Index r = 0;
    for (const auto& b : blocks) {
      all.middleRows(r, b.rows()) = b;
      r += b.rows();
    }
    for (Eigen::Index c = 0; c < all.cols(); ++c) {
      const double mean = all.col(c).mean();
      const double var = (all.col(c).array() - mean).square().mean();
      f.mean[static_cast<std::size_t>(c)] = mean;
      f.std[static_cast<std::size_t>(c)] = std::sqrt(var);
    }
    return f;
  };
  const std::size_t horizon = std::max<std::size_t>(profile.horizon(), 1);
  const std::size_t n = std::max<std::size_t>(std::min(samples, horizon), 1);
  std::vector<Mat> load_der, gen;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = k * horizon / n;
    std::vector<std::vector<double>> prev_tder;
    for (const auto& a : sc.deras) {
      prev_tder.emplace_back();
      for (const auto& e : a.tders) prev_tder.back().push_back(0.5 * e.p_max_t.at(t));
    }
    std::vector<double> prev_gen;
    for (const auto& g : sc.generators) prev_gen.push_back(0.5 * g.p_max_t.at(t));
    load_der.push_back(raw_load_der_features(sc, h, nodal_demand(sc, profile, t), prev_tder));
    gen.push_back(raw_gen_features(sc, h, t, prev_gen));
  }
  Normalization out;
  out.load_der = stats(load_der);
  out.gen = stats(gen);
  out.edge = stats({raw_edge_features(sc)});
  return out;
}

namespace {

Mat standardize(Mat x, const FeatureStats& s, const char* what) {
  if (static_cast<std::size_t>(x.cols()) != s.mean.size())
    throw ShapeError(std::string(what) + " features have width " + std::to_string(x.cols()) + ", statistics " +
                     str(s.mean.size()));
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) = s.apply(static_cast<std::size_t>(c), x(r, c));
  return x;
}

}  // namespace

Window build_window(const SystemCase& sc, const Model& m, const DfHistory& history,
                    const std::vector<double>& loads_t, std::size_t t, const std::vector<double>& prev_gen) {
  const auto M = static_cast<std::size_t>(m.hyper.window);
  if (history.size() < M)
    throw std::invalid_argument("insufficient history: window needs " + str(M) + " records, have " +
                                str(history.size()));
  const std::size_t first = history.size() - M;
  Window w;
  for (std::size_t j = 0; j < M; ++j) {
    const auto& rec = history.at(first + j);
    const auto& loads = j + 1 < M ? history.at(first + j + 1).loads : loads_t;
    w.load_der.push_back(
        standardize(raw_load_der_features(sc, m.hyper, loads, tder_outputs(rec)), m.norm.load_der, "load-DER"));
  }
  w.gen = standardize(raw_gen_features(sc, m.hyper, t, prev_gen), m.norm.gen, "generator");
  for (const auto& line : sc.lines)
    w.edges.emplace_back(static_cast<int>(sc.bus_index(line.from_bus)), static_cast<int>(sc.bus_index(line.to_bus)));
  w.edge_attr = standardize(raw_edge_features(sc), m.norm.edge, "edge");
  for (const auto& a : sc.deras)
    for (const auto& e : a.tders) w.tder_node.push_back(static_cast<int>(sc.bus_index(e.bus_id)));
  return w;
}

// Layers -------------------------------------------------------------------

Seq temporal_gated_conv(const Seq& h, const std::vector<Mat>& w, const RowVec& bw, const std::vector<Mat>& v,
                        const RowVec& bv) {
  const std::size_t k = w.size();
  if (k == 0 || v.size() != k) throw ShapeError("temporal kernels W and V must have the same nonzero width");
  if (h.size() < k) throw ShapeError("temporal convolution needs T >= K (T=" + str(h.size()) + ", K=" + str(k) + ")");
  Seq out;
  for (std::size_t t = 0; t + k <= h.size(); ++t) {
    Mat p = bw.replicate(h[t].rows(), 1);
    Mat q = bv.replicate(h[t].rows(), 1);
    for (std::size_t j = 0; j < k; ++j) {
      p.noalias() += h[t + j] * w[j];
      q.noalias() += h[t + j] * v[j];
    }
    out.push_back(p.cwiseProduct(q.unaryExpr([](double x) { return sigmoid(x); })));
  }
  return out;
}

Mat adjacency(int nodes, const std::vector<std::pair<int, int>>& edges) {
  Mat a = Mat::Zero(nodes, nodes);
  for (auto [i, j] : edges) {
    if (i < 0 || j < 0 || i >= nodes || j >= nodes) throw ShapeError("edge endpoint out of range");
    if (i == j) continue;
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

Mat normalized_adjacency(int nodes, const std::vector<std::pair<int, int>>& edges) {
  Mat a = adjacency(nodes, edges) + Mat::Identity(nodes, nodes);
  const Eigen::VectorXd d = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * a * d.asDiagonal();
}

Mat scaled_laplacian(int nodes, const std::vector<std::pair<int, int>>& edges) {
  const Mat a = adjacency(nodes, edges);
  Eigen::VectorXd d = a.rowwise().sum();
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = d(i) > 0.0 ? 1.0 / std::sqrt(d(i)) : 0.0;
  const Mat l_norm = Mat::Identity(nodes, nodes) - d.asDiagonal() * a * d.asDiagonal();
  constexpr double kLambdaMax = 2.0;
  return 2.0 * l_norm / kLambdaMax - Mat::Identity(nodes, nodes);
}

Mat gcn_layer(const Mat& h, const Mat& a_norm, const Mat& w) {
  expect_width("gcn", w.rows(), h.cols());
  if (a_norm.rows() != h.rows()) throw ShapeError("layer gcn: adjacency size does not match node count");
  return a_norm * (h * w);
}

Mat EdgeNetwork::operator()(const RowVec& attr, int c_in, int c_out) const {
  expect_width("edge network", w1.rows(), attr.size());
  const RowVec hidden = (attr * w1 + b1).cwiseMax(0.0);
  const RowVec flat = hidden * w2 + b2;
  if (flat.size() != static_cast<Eigen::Index>(c_in) * c_out) throw ShapeError("edge network output width mismatch");
  Mat theta(c_in, c_out);
  for (int r = 0; r < c_in; ++r)
    for (int c = 0; c < c_out; ++c) theta(r, c) = flat(r * c_out + c);
  return theta;
}

Mat ec_conv_layer(const Mat& h, const std::vector<std::pair<int, int>>& edges, const Mat& edge_attr, const Mat& w,
                  const EdgeNetwork& net) {
  expect_width("ec-conv", w.rows(), h.cols());
  if (edge_attr.rows() != static_cast<Eigen::Index>(edges.size()))
    throw ShapeError("layer ec-conv: one attribute row per edge expected");
  const auto c_in = static_cast<int>(w.rows()), c_out = static_cast<int>(w.cols());
  Mat out = h * w;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [i, j] = edges[k];
    if (i == j) continue;
    const Mat theta = net(edge_attr.row(static_cast<Eigen::Index>(k)), c_in, c_out);
    out.row(i).noalias() += h.row(j) * theta;
    out.row(j).noalias() += h.row(i) * theta;
  }
  return out;
}

Mat chebyshev_layer(const Mat& h, const Mat& lhat, const std::vector<Mat>& w) {
  if (w.empty()) throw ShapeError("layer chebyshev: no weights");
  expect_width("chebyshev", w[0].rows(), h.cols());
  if (lhat.rows() != h.rows()) throw ShapeError("layer chebyshev: Laplacian size does not match node count");
  Mat z_prev = h;
  Mat out = h * w[0];
  if (w.size() == 1) return out;
  Mat z = lhat * h;
  out += z * w[1];
  for (std::size_t k = 2; k < w.size(); ++k) {
    Mat z_next = 2.0 * lhat * z - z_prev;
    z_prev = std::move(z);
    z = std::move(z_next);
    out += z * w[k];
  }
  return out;
}

Mat relu(Mat x) { return x.cwiseMax(0.0); }

Eigen::VectorXd forward(const Model& m, const Window& win) {
  const auto& h = m.hyper;
  const int n = win.nodes();
  if (win.load_der.size() != static_cast<std::size_t>(h.window))
    throw ShapeError("window has " + str(win.load_der.size()) + " steps, model expects " + std::to_string(h.window));
  for (const auto& x : win.load_der) {
    if (x.rows() != n) throw ShapeError("load-DER and generator graphs disagree on node count");
    expect_width("st0.t1", h.load_width(), x.cols());
  }
  expect_width("ec0", h.gen_width(), win.gen.cols());
  expect_width("edge network", h.edge_width, win.edge_attr.cols());

  const Mat a_norm = normalized_adjacency(n, win.edges);
  Seq x = win.load_der;
  auto kernels = [&](const std::string& name) {
    std::vector<Mat> out;
    for (int k = 0; k < h.kernel; ++k) out.push_back(m.slice(name, static_cast<std::size_t>(k)));
    return out;
  };
  for (int b = 0; b < h.st_blocks; ++b) {
    const std::string p = "st" + std::to_string(b) + ".";
    const auto w1 = kernels(p + "t1.w");
    expect_width((p + "t1").c_str(), w1[0].rows(), x[0].cols());
    x = temporal_gated_conv(x, w1, m.vector(p + "t1.bw"), kernels(p + "t1.v"), m.vector(p + "t1.bv"));
    const Mat g = m.matrix(p + "gcn.w");
    for (auto& xt : x) xt = relu(gcn_layer(xt, a_norm, g));
    x = temporal_gated_conv(x, kernels(p + "t2.w"), m.vector(p + "t2.bw"), kernels(p + "t2.v"),
                            m.vector(p + "t2.bv"));
  }
  const auto c2 = x[0].cols();
  Mat flat(n, static_cast<Eigen::Index>(x.size()) * c2);
  for (std::size_t t = 0; t < x.size(); ++t) flat.middleCols(static_cast<Eigen::Index>(t) * c2, c2) = x[t];
  const Mat fc = m.matrix("st.fc.w");
  expect_width("st.fc", fc.rows(), flat.cols());
  const Mat s = relu((flat * fc).rowwise() + m.vector("st.fc.b"));

  Mat e = win.gen;
  for (int l = 0; l < h.ec_layers; ++l) {
    const std::string p = "ec" + std::to_string(l) + ".";
    EdgeNetwork net{m.matrix(p + "h1.w"), m.vector(p + "h1.b"), m.matrix(p + "h2.w"), m.vector(p + "h2.b")};
    e = relu(ec_conv_layer(e, win.edges, win.edge_attr, m.matrix(p + "w"), net));
  }
  const Mat efc = m.matrix("ec.fc.w");
  expect_width("ec.fc", efc.rows(), e.cols());
  e = relu((e * efc).rowwise() + m.vector("ec.fc.b"));

  Mat z(n, s.cols() + e.cols());
  z << s, e;
  std::vector<Mat> cheb;
  for (int k = 1; k <= h.cheb_k; ++k) cheb.push_back(m.matrix("fa.cheb.w" + std::to_string(k)));
  expect_width("fa.cheb", cheb[0].rows(), z.cols());
  const Mat fa = relu(chebyshev_layer(z, scaled_laplacian(n, win.edges), cheb));
  const Mat head = m.matrix("fa.fc.w");
  expect_width("fa.fc", head.rows(), fa.cols());
  const Eigen::VectorXd node_score = ((fa * head).rowwise() + m.vector("fa.fc.b")).col(0);

  Eigen::VectorXd out(static_cast<Eigen::Index>(win.tder_node.size()));
  for (std::size_t k = 0; k < win.tder_node.size(); ++k) {
    const int i = win.tder_node[k];
    if (i < 0 || i >= n) throw ShapeError("T-DER node index out of range");
    out(static_cast<Eigen::Index>(k)) = node_score(i);
  }
  return out;
}

double eval_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target, double dera_cost, double lambda) {
  if (pred.size() != target.size()) throw ShapeError("prediction and target differ in length");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
  return std::exp(lambda * dera_cost) * (pred - target).squaredNorm();
}

double batch_loss(const std::vector<Eigen::VectorXd>& pred, const std::vector<Eigen::VectorXd>& target,
                  const std::vector<double>& dera_cost, double lambda) {
  if (pred.size() != target.size() || pred.size() != dera_cost.size())
    throw ShapeError("batch members disagree in count");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t n = 0; n < pred.size(); ++n) sum += eval_loss(pred[n], target[n], dera_cost[n], lambda);
  return sum / static_cast<double>(pred.size());
}

}  // namespace rted::stgcn
