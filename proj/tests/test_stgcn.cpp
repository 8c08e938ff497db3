#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles/stgcn_loops.hpp"
#include "rted/stgcn.hpp"
#include "support/dispatch_cases.hpp"

using namespace rted;
using namespace rted::stgcn;

namespace {

std::string fixture(const std::string& name) { return std::string(RTED_FIXTURE_DIR) + "/stgcn/" + name; }

Mat to_mat(const oracle::Grid& g) {
  Mat m(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g[0].size()));
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g[i][j];
  return m;
}

RowVec to_row(const std::vector<double>& v) { return Eigen::Map<const RowVec>(v.data(), static_cast<Eigen::Index>(v.size())); }

oracle::Grid random_grid(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  oracle::Grid g(r, std::vector<double>(c));
  for (auto& row : g)
    for (auto& x : row) x = nd(rng);
  return g;
}

double max_diff(const Mat& a, const oracle::Grid& b) {
  REQUIRE(a.rows() == static_cast<Eigen::Index>(b.size()));
  REQUIRE(a.cols() == static_cast<Eigen::Index>(b[0].size()));
  double d = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b[i].size(); ++j)
      d = std::max(d, std::abs(a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - b[i][j]));
  return d;
}

std::vector<std::pair<int, int>> random_edges(int n, std::mt19937_64& rng) {
  std::vector<std::pair<int, int>> e;
  for (int i = 1; i < n; ++i) e.emplace_back(static_cast<int>(rng() % static_cast<unsigned>(i)), i);
  for (int k = 0; k < n / 2; ++k) e.emplace_back(static_cast<int>(rng() % static_cast<unsigned>(n)),
                                                 static_cast<int>(rng() % static_cast<unsigned>(n)));
  return e;
}

Hyperparameters small_hyper() {
  Hyperparameters h;
  h.window = 7;
  h.kernel = 2;
  h.st_channels = {5, 3, 4};
  h.st_out = 4;
  h.ec_channels = 3;
  h.edge_hidden = 4;
  h.ec_out = 3;
  h.fa_hidden = 4;
  h.gen_slots = 2;
  return h;
}

Window random_window(const Hyperparameters& h, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Window w;
  for (int t = 0; t < h.window; ++t) w.load_der.push_back(Mat::NullaryExpr(n, h.load_width(), [&] { return nd(rng); }));
  w.gen = Mat::NullaryExpr(n, h.gen_width(), [&] { return nd(rng); });
  w.edges = random_edges(n, rng);
  w.edge_attr = Mat::NullaryExpr(static_cast<Eigen::Index>(w.edges.size()), h.edge_width, [&] { return nd(rng); });
  for (int i = 0; i < n; i += 2) w.tder_node.push_back(i);
  return w;
}

}  // namespace

TEST_CASE("temporal gated convolution") {
  std::mt19937_64 rng(1);
  SUBCASE("zero input and zero bias give zero") {
    Seq h(5, Mat::Zero(3, 2));
    std::vector<Mat> w(3, Mat::Random(2, 4)), v(3, Mat::Random(2, 4));
    const auto out = temporal_gated_conv(h, w, RowVec::Zero(4), v, RowVec::Zero(4));
    REQUIRE(out.size() == 3);
    for (const auto& o : out) CHECK(o.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("saturated gate passes the input through") {
    Seq h;
    for (int t = 0; t < 4; ++t) h.push_back(Mat::Random(3, 2));
    const auto out = temporal_gated_conv(h, {Mat::Identity(2, 2)}, RowVec::Zero(2), {Mat::Zero(2, 2)},
                                         RowVec::Constant(2, 60.0));
    REQUIRE(out.size() == 4);
    for (int t = 0; t < 4; ++t) CHECK((out[static_cast<std::size_t>(t)] - h[static_cast<std::size_t>(t)]).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("matches the loop oracle") {
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t T = 4 + rng() % 5, N = 1 + rng() % 6, C = 1 + rng() % 4, O = 1 + rng() % 5, K = 1 + rng() % 3;
      oracle::Cube h, w, v;
      for (std::size_t t = 0; t < T; ++t) h.push_back(random_grid(N, C, rng));
      for (std::size_t k = 0; k < K; ++k) {
        w.push_back(random_grid(C, O, rng));
        v.push_back(random_grid(C, O, rng));
      }
      const auto bw = random_grid(1, O, rng)[0], bv = random_grid(1, O, rng)[0];
      Seq hm;
      std::vector<Mat> wm, vm;
      for (const auto& g : h) hm.push_back(to_mat(g));
      for (std::size_t k = 0; k < K; ++k) {
        wm.push_back(to_mat(w[k]));
        vm.push_back(to_mat(v[k]));
      }
      const auto got = temporal_gated_conv(hm, wm, to_row(bw), vm, to_row(bv));
      const auto want = oracle::glu(h, w, bw, v, bv);
      REQUIRE(got.size() == want.size());
      for (std::size_t t = 0; t < got.size(); ++t) CHECK(max_diff(got[t], want[t]) < 1e-10);
    }
  }
  SUBCASE("window shorter than the kernel") {
    Seq h(2, Mat::Zero(1, 1));
    CHECK_THROWS_AS(temporal_gated_conv(h, std::vector<Mat>(3, Mat::Ones(1, 1)), RowVec::Zero(1),
                                        std::vector<Mat>(3, Mat::Ones(1, 1)), RowVec::Zero(1)),
                    ShapeError);
  }
}

TEST_CASE("graph convolution") {
  std::mt19937_64 rng(2);
  SUBCASE("single node with identity weight") {
    const Mat h = Mat::Random(1, 3);
    CHECK((gcn_layer(h, normalized_adjacency(1, {}), Mat::Identity(3, 3)) - h).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("two connected nodes average") {
    Mat h(2, 1);
    h << 1, 0;
    const Mat out = gcn_layer(h, normalized_adjacency(2, {{0, 1}}), Mat::Identity(1, 1));
    CHECK(out(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("regular graph rows sum to one") {
    for (int n : {4, 7, 10}) {
      std::vector<std::pair<int, int>> ring;
      for (int i = 0; i < n; ++i) ring.emplace_back(i, (i + 1) % n);
      const Mat a = normalized_adjacency(n, ring);
      for (Eigen::Index i = 0; i < n; ++i) CHECK(a.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
  SUBCASE("matches the loop oracle") {
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 1 + static_cast<int>(rng() % 8);
      const auto edges = random_edges(n, rng);
      const auto h = random_grid(static_cast<std::size_t>(n), 3, rng);
      const auto w = random_grid(3, 4, rng);
      CHECK(max_diff(gcn_layer(to_mat(h), normalized_adjacency(n, edges), to_mat(w)), oracle::gcn(h, n, edges, w)) <
            1e-10);
    }
  }
}

TEST_CASE("edge-conditioned convolution") {
  std::mt19937_64 rng(3);
  EdgeNetwork zero{Mat::Random(4, 3), RowVec::Random(3), Mat::Zero(3, 6), RowVec::Zero(6)};
  const Mat h = Mat::Random(3, 2), w = Mat::Random(2, 3);
  SUBCASE("no edges") { CHECK((ec_conv_layer(h, {}, Mat(0, 4), w, zero) - h * w).cwiseAbs().maxCoeff() == 0.0); }
  SUBCASE("zero edge network") {
    CHECK((ec_conv_layer(h, {{0, 1}, {1, 2}}, Mat::Random(2, 4), w, zero) - h * w).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("two nodes by hand") {
    // hidden = relu(2 * 1 - 0.5) = 1.5, theta = 3 * 1.5 + 1 = 5.5
    EdgeNetwork net{Mat::Zero(4, 1), RowVec::Constant(1, -0.5), Mat::Constant(1, 1, 3.0), RowVec::Constant(1, 1.0)};
    net.w1(0, 0) = 2.0;
    Mat attr = Mat::Zero(1, 4);
    attr(0, 0) = 1.0;
    Mat x(2, 1);
    x << 1, 4;
    const Mat out = ec_conv_layer(x, {{0, 1}}, attr, Mat::Constant(1, 1, 2.0), net);
    CHECK(out(0, 0) == doctest::Approx(24.0));
    CHECK(out(1, 0) == doctest::Approx(13.5));
  }
  SUBCASE("attribute width mismatch") {
    CHECK_THROWS_AS(ec_conv_layer(h, {{0, 1}}, Mat::Random(1, 3), w, zero), ShapeError);
  }
  SUBCASE("matches the loop oracle") {
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 2 + static_cast<int>(rng() % 7);
      const auto edges = random_edges(n, rng);
      const std::size_t c = 1 + rng() % 4, o = 1 + rng() % 4, hid = 1 + rng() % 5;
      const auto hg = random_grid(static_cast<std::size_t>(n), c, rng);
      const auto attr = random_grid(edges.size(), 4, rng);
      const auto wg = random_grid(c, o, rng);
      oracle::EdgeNet on{random_grid(4, hid, rng), random_grid(1, hid, rng)[0], random_grid(hid, c * o, rng),
                         random_grid(1, c * o, rng)[0]};
      EdgeNetwork net{to_mat(on.w1), to_row(on.b1), to_mat(on.w2), to_row(on.b2)};
      CHECK(max_diff(ec_conv_layer(to_mat(hg), edges, to_mat(attr), to_mat(wg), net), oracle::ec(hg, edges, attr, wg, on)) <
            1e-10);
    }
  }
}

TEST_CASE("Chebyshev convolution") {
  std::mt19937_64 rng(4);
  SUBCASE("identity weights") {
    const Mat h = Mat::Random(5, 3);
    const auto l = scaled_laplacian(5, {{0, 1}, {1, 2}, {3, 4}});
    CHECK((chebyshev_layer(h, l, {Mat::Identity(3, 3), Mat::Zero(3, 3)}) - h).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("constant signal on a regular graph maps to its negative") {
    std::vector<std::pair<int, int>> ring;
    for (int i = 0; i < 6; ++i) ring.emplace_back(i, (i + 1) % 6);
    const Mat h = Mat::Constant(6, 2, 3.5);
    const Mat z2 = chebyshev_layer(h, scaled_laplacian(6, ring), {Mat::Zero(2, 2), Mat::Identity(2, 2)});
    CHECK((z2 + h).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("third order follows the matrix polynomial") {
    for (int trial = 0; trial < 5; ++trial) {
      const auto edges = random_edges(4, rng);
      const Mat l = scaled_laplacian(4, edges);
      const Mat h = Mat::Random(4, 2);
      const std::vector<Mat> w{Mat::Random(2, 3), Mat::Random(2, 3), Mat::Random(2, 3)};
      const Mat direct = h * w[0] + l * h * w[1] + (2.0 * l * l - Mat::Identity(4, 4)) * h * w[2];
      CHECK((chebyshev_layer(h, l, w) - direct).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("matches the loop oracle") {
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 1 + static_cast<int>(rng() % 8);
      const auto edges = random_edges(n, rng);
      const auto h = random_grid(static_cast<std::size_t>(n), 3, rng);
      const std::vector<oracle::Grid> w{random_grid(3, 2, rng), random_grid(3, 2, rng)};
      CHECK(max_diff(chebyshev_layer(to_mat(h), scaled_laplacian(n, edges), {to_mat(w[0]), to_mat(w[1])}),
                     oracle::cheb(h, oracle::lhat(n, edges), w)) < 1e-10);
    }
  }
}

TEST_CASE("shared layer vectors") {
  std::ifstream in(fixture("layers.json"));
  REQUIRE(in);
  const auto j = nlohmann::json::parse(in);
  REQUIRE(j.at("format") == "rted-stgcn-layers");
  const auto& L = j.at("layers");
  auto grid = [](const nlohmann::json& x) { return x.get<oracle::Grid>(); };
  auto edges_of = [](const nlohmann::json& x) {
    std::vector<std::pair<int, int>> e;
    for (const auto& p : x) e.emplace_back(p[0].get<int>(), p[1].get<int>());
    return e;
  };

  const auto& g = L.at("glu");
  Seq h;
  for (const auto& t : g.at("h")) h.push_back(to_mat(grid(t)));
  std::vector<Mat> w, v;
  for (const auto& k : g.at("w")) w.push_back(to_mat(grid(k)));
  for (const auto& k : g.at("v")) v.push_back(to_mat(grid(k)));
  const auto out = temporal_gated_conv(h, w, to_row(g.at("bw").get<std::vector<double>>()), v,
                                       to_row(g.at("bv").get<std::vector<double>>()));
  const auto want = g.at("out");
  REQUIRE(out.size() == want.size());
  for (std::size_t t = 0; t < out.size(); ++t) CHECK(max_diff(out[t], grid(want[t])) < 1e-10);

  const auto& c = L.at("gcn");
  const int n = c.at("nodes").get<int>();
  CHECK(max_diff(gcn_layer(to_mat(grid(c.at("h"))), normalized_adjacency(n, edges_of(c.at("edges"))),
                           to_mat(grid(c.at("w")))),
                 grid(c.at("out"))) < 1e-10);

  const auto& e = L.at("ec");
  EdgeNetwork net{to_mat(grid(e.at("w1"))), to_row(e.at("b1").get<std::vector<double>>()), to_mat(grid(e.at("w2"))),
                  to_row(e.at("b2").get<std::vector<double>>())};
  CHECK(max_diff(ec_conv_layer(to_mat(grid(e.at("h"))), edges_of(e.at("edges")), to_mat(grid(e.at("attr"))),
                               to_mat(grid(e.at("w"))), net),
                 grid(e.at("out"))) < 1e-10);

  const auto& ch = L.at("cheb");
  std::vector<Mat> cw;
  for (const auto& k : ch.at("w")) cw.push_back(to_mat(grid(k)));
  const Mat lh = scaled_laplacian(ch.at("nodes").get<int>(), edges_of(ch.at("edges")));
  const Mat hh = to_mat(grid(ch.at("h")));
  CHECK(max_diff(chebyshev_layer(hh, lh, {cw[0], cw[1]}), grid(ch.at("out_k2"))) < 1e-10);
  CHECK(max_diff(chebyshev_layer(hh, lh, cw), grid(ch.at("out_k3"))) < 1e-10);
}

TEST_CASE("forward pass reproduces the parity fixtures") {
  for (const char* name : {"small", "default"}) {
    CAPTURE(name);
    const auto fx = load_parity_fixture(fixture(std::string(name) + "_window.json"));
    const auto out = forward(load_model(fx.model_path), fx.window);
    REQUIRE(out.size() == static_cast<Eigen::Index>(fx.expected.size()));
    double d = 0.0;
    for (std::size_t k = 0; k < fx.expected.size(); ++k)
      d = std::max(d, std::abs(out(static_cast<Eigen::Index>(k)) - fx.expected[k]));
    CHECK(d <= fx.tolerance);
  }
  CHECK_THROWS_AS(load_parity_fixture(fixture("layers.json")), FormatError);
}

TEST_CASE("forward pass properties") {
  std::mt19937_64 rng(8);
  const auto h = small_hyper();
  const auto model = random_model(h, 3, 0.5);
  const auto win = random_window(h, 9, rng);

  SUBCASE("zero weights give zero scores") {
    const auto zero = random_model(h, 3, 0.0);
    CHECK(forward(zero, win).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("pure function") {
    const auto a = forward(model, win), b = forward(model, win);
    CHECK(std::equal(a.data(), a.data() + a.size(), b.data()));
  }
  SUBCASE("node relabeling leaves the T-DER scores unchanged") {
    std::vector<int> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);  // old node i becomes perm[i]
    Window p = win;
    for (std::size_t t = 0; t < win.load_der.size(); ++t)
      for (int i = 0; i < 9; ++i) p.load_der[t].row(perm[static_cast<std::size_t>(i)]) = win.load_der[t].row(i);
    for (int i = 0; i < 9; ++i) p.gen.row(perm[static_cast<std::size_t>(i)]) = win.gen.row(i);
    for (auto& [a, b] : p.edges) {
      a = perm[static_cast<std::size_t>(a)];
      b = perm[static_cast<std::size_t>(b)];
    }
    for (auto& k : p.tder_node) k = perm[static_cast<std::size_t>(k)];
    CHECK((forward(model, p) - forward(model, win)).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("shape errors name the layer") {
    Window bad = win;
    bad.gen = Mat::Zero(9, h.gen_width() + 1);
    try {
      forward(model, bad);
      FAIL("expected a shape error");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("ec0") != std::string::npos);
    }
    bad = win;
    bad.load_der.pop_back();
    CHECK_THROWS_AS(forward(model, bad), ShapeError);
  }
}

TEST_CASE("weight file round trip and rejection") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "rted_weights_test";
  fs::create_directories(dir);
  const auto manifest = (dir / "m.json").string();
  auto model = random_model(small_hyper(), 5, 0.7);
  model.norm.load_der.mean = {1.5, -2.0};
  model.norm.load_der.std = {3.0, 0.5};
  save_model(model, manifest);
  const auto back = load_model(manifest);
  const auto rounded = round_to_f32(model);
  for (const auto& [name, t] : rounded.tensors) CHECK(back.tensor(name).data == t.data);
  CHECK(back.norm.load_der.mean == model.norm.load_der.mean);
  CHECK(back.hyper.st_channels == model.hyper.st_channels);

  auto rewrite = [&](const std::function<void(nlohmann::json&)>& edit) {
    std::ifstream in(manifest);
    auto j = nlohmann::json::parse(in);
    edit(j);
    const auto p = (dir / "edited.json").string();
    std::ofstream(p) << j.dump();
    return p;
  };
  CHECK_THROWS_AS(load_model(rewrite([](auto& j) { j["version"] = 2; })), FormatError);
  CHECK_THROWS_AS(load_model(rewrite([](auto& j) { j.erase("version"); })), FormatError);
  CHECK_THROWS_AS(load_model(rewrite([](auto& j) { j["tensors"][0]["crc32"] = 12345; })), FormatError);
  CHECK_THROWS_AS(load_model(rewrite([](auto& j) { j["tensors"][0]["dtype"] = "f64"; })), FormatError);
  CHECK_THROWS(load_model(rewrite([](auto& j) { j["hyperparameters"]["st_out"] = 5; })));
  CHECK_THROWS(load_model(rewrite([](auto& j) { j["hyperparameters"]["cheb_k"] = 3; })));
  CHECK_THROWS(load_model((dir / "missing.json").string()));

  // A flipped payload byte is caught by the checksum.
  {
    std::fstream f((dir / "m.bin").string(), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_model(manifest), FormatError);
  fs::remove_all(dir);
}

namespace {

// Five-bus ring with generators at buses 1 and 2 and one DERA over the load buses 3, 4 and 5.
SystemCase window_case() {
  auto sc = toy::random_network(5, 0, 3);
  sc.lines.clear();
  for (int i = 1; i <= 5; ++i) sc.lines.push_back({i, i, i % 5 + 1, 0.1, 0.02, 100.0, -100.0});
  sc.lines[2].flow_max = std::numeric_limits<double>::infinity();
  sc.lines[2].flow_min = -std::numeric_limits<double>::infinity();
  sc.generators.push_back(toy::make_gen(1, 1, 80, toy::linear_curve(10, 80)));
  sc.generators.push_back(toy::make_gen(2, 2, 60, BidCurve::from_prices(std::vector<double>{12, 14, 19}, 0, 60)));
  sc.generators[1].ramp_up = 7.0;
  sc.loads = {{3, 30.0}, {4, 20.0}, {5, 40.0}};
  sc.index_buses();
  sc = build_deras(sc, {0.5, 10, 15.0, 1});
  std::mt19937_64 rng(2);
  toy::price_deras(sc, rng);
  return sc;
}

}  // namespace

TEST_CASE("window assembly") {
  const auto sc = window_case();
  REQUIRE(sc.deras.size() == 1);
  const auto h = hyperparameters_for(sc);
  auto model = random_model(h, 1, 0.1);
  DfHistory hist(20);
  for (int t = 0; t < 12; ++t) {
    HistoryRecord r;
    r.loads = {0.0, 0.0, 30.0 + t, 20.0, 40.0};
    r.dera_dispatch = {10.0 + t};
    r.realized_df = DfVector::uniform(sc);
    hist.push(r);
  }
  const std::vector<double> loads_now{0.0, 0.0, 99.0, 21.0, 41.0};
  const auto w = build_window(sc, model, hist, loads_now, 12, {50.0, 20.0});

  CHECK(w.load_der.size() == 12);
  for (const auto& x : w.load_der) {
    CHECK(x.rows() == 5);
    CHECK(x.cols() == h.load_width());
  }
  // Bus 2 (index 1): no load, no T-DER.
  for (const auto& x : w.load_der) CHECK(x.row(1).cwiseAbs().maxCoeff() == 0.0);
  // Newest step: current loads with the outputs of t-1.
  const auto& last = w.load_der.back();
  CHECK(last(2, 0) == 99.0);
  const double n_members = static_cast<double>(sc.deras[0].tders.size());
  const int member_bus = static_cast<int>(sc.bus_index(sc.deras[0].tders[0].bus_id));
  CHECK(last(member_bus, 1) == doctest::Approx(21.0 / n_members));
  // Oldest step: loads of history record 1, outputs of record 0.
  CHECK(w.load_der.front()(2, 0) == 31.0);
  CHECK(w.load_der.front()(member_bus, 1) == doctest::Approx(10.0 / n_members));

  // DERA bids identical on every member bus.
  const int bid_col = h.gen_slots * (2 * h.bid_segments + 5);
  std::vector<int> rows;
  for (const auto& e : sc.deras[0].tders) rows.push_back(static_cast<int>(sc.bus_index(e.bus_id)));
  REQUIRE(rows.size() >= 2);
  for (int r : rows) {
    CHECK(w.gen.row(r).segment(bid_col, 2 * h.bid_segments) == w.gen.row(rows[0]).segment(bid_col, 2 * h.bid_segments));
    CHECK(w.gen(r, bid_col) == doctest::Approx(sc.deras[0].bid_curve_t.at(0).segments()[0].kappa));
  }
  // Generator block: infinite ramp falls back to p_max; finite ramp kept; previous output.
  const int s2 = 2 * h.bid_segments;
  CHECK(w.gen(0, s2 + 0) == 80.0);
  CHECK(w.gen(1, s2 + 1) == 7.0);
  CHECK(w.gen(1, s2 + 4) == 20.0);
  CHECK(w.gen(1, 4) == 19.0);
  CHECK(w.gen(1, 6) == 0.0);  // third segment only
  // Unlimited line has zero limit features.
  CHECK(w.edge_attr(2, 0) == 0.0);
  CHECK(w.edge_attr(0, 0) == 100.0);
  CHECK(w.tder_node.size() == sc.num_tders());
  for (const auto& m : w.load_der) CHECK(m.allFinite());
  CHECK(w.gen.allFinite());

  // Standardization uses the stored statistics.
  model.norm.load_der.mean[0] = 9.0;
  model.norm.load_der.std[0] = 2.0;
  const auto ws = build_window(sc, model, hist, loads_now, 12, {50.0, 20.0});
  CHECK(ws.load_der.back()(2, 0) == doctest::Approx((99.0 - 9.0) / 2.0));

  DfHistory short_hist(20);
  short_hist.push(hist.back());
  CHECK_THROWS_AS(build_window(sc, model, short_hist, loads_now, 12, {}), std::invalid_argument);
}

TEST_CASE("window of the three-bus case has the documented shape") {
  auto sc = parse_case(toy::triangle_text(50.0));
  sc = build_deras(sc, {0.5, 1, 0.0, 1});
  std::mt19937_64 rng(1);
  toy::price_deras(sc, rng);
  const auto model = random_model(hyperparameters_for(sc), 1, 0.1);
  DfHistory hist(12);
  for (int t = 0; t < 12; ++t) hist.push({DfVector::uniform(sc), {0.0, 0.0, 90.0}, {5.0}});
  const auto w = build_window(sc, model, hist, {0.0, 0.0, 90.0}, 12, {});
  CHECK(w.load_der.size() == 12);
  CHECK(w.load_der[0].rows() == 3);
  CHECK(w.load_der[0].cols() == 2);
  CHECK(w.load_der[0].row(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loss") {
  Eigen::VectorXd a(2), b(2);
  a << 0.6, 0.4;
  CHECK(eval_loss(a, a, 123.0, 0.01) == 0.0);
  b << 0.5, 0.5;
  CHECK(eval_loss(a, b, 100.0, 0.0) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(eval_loss(a, b, 100.0, 0.01) == doctest::Approx(std::exp(1.0) * 0.02).epsilon(1e-12));
  CHECK(eval_loss(a, b, 100.0, 0.01) == doctest::Approx(0.05437).epsilon(1e-4));
  CHECK(batch_loss({a, a}, {b, a}, {100.0, 5.0}, 0.0) == doctest::Approx(0.01));
  CHECK_THROWS(eval_loss(a, Eigen::VectorXd::Zero(3), 0.0, 0.0));
  CHECK_THROWS(eval_loss(a, b, 0.0, -1.0));
}
