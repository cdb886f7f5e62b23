#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "ddr/discrete.hpp"
#include "oracles.hpp"

using namespace ddr;

TEST_CASE("control grid counts and edges") {
  const ControlGrid g2 = build_control_grid(2, 100.0);
  CHECK(g2.n_points == 162u);
  CHECK(g2.edges.size() == 480u);  // 3(V-2) for a closed triangulation

  const ControlGrid g0 = build_control_grid(0, 100.0);
  CHECK(g0.n_points == 12u);
  CHECK(g0.edges.size() == 30u);

  CHECK(build_control_grid(4, 100.0).n_points == 2562u);

  // Each unordered pair appears exactly once.
  std::set<std::pair<int, int>> seen;
  for (const auto& e : g2.edges) {
    CHECK(e[0] < e[1]);
    CHECK(seen.insert({e[0], e[1]}).second);
  }
}

TEST_CASE("label space construction") {
  const ControlGrid grid = build_control_grid(1, 100.0);
  const Icosphere lmesh = build_icosphere(3, 100.0);

  // A single label per control point is its nearest label-mesh vertex, which
  // for nested orders is the control point itself.
  const LabelSpace one = build_label_space(grid, lmesh, 1);
  for (std::size_t c = 0; c < grid.n_points; ++c) {
    CHECK(one.label_vertex[c] == int(c));
    CHECK((one.coord(c, 0) - grid.positions[c]).norm() <= 1e-12);
  }

  // Lists are sorted by distance with index tie-breaks, deterministically.
  const LabelSpace a = build_label_space(grid, lmesh, 40);
  const LabelSpace b = build_label_space(grid, lmesh, 40);
  CHECK(a.label_vertex == b.label_vertex);
  for (std::size_t c = 0; c < grid.n_points; ++c)
    for (std::size_t l = 1; l < 40; ++l) {
      const double d0 = angle_between(grid.positions[c], a.coord(c, l - 1));
      const double d1 = angle_between(grid.positions[c], a.coord(c, l));
      CHECK(d0 <= d1 + 1e-12);
    }

  CHECK_THROWS_AS(build_label_space(grid, lmesh, 1000), ConfigError);
  CHECK_THROWS_AS(build_label_space(grid, build_icosphere(1, 100.0), 5), ConfigError);
  CHECK_THROWS_AS(build_label_space(grid, build_icosphere(3, 50.0), 5), ConfigError);
}

TEST_CASE("label covering radius matches the cap-area estimate") {
  // 600 nearest order-5 vertices around an order-2 control point cover a cap
  // whose area is 600 vertex cells; the max label displacement must match the
  // cap radius derived from that area.
  const ControlGrid grid = build_control_grid(2, 100.0);
  const Icosphere lmesh = build_icosphere(5, 100.0);
  const LabelSpace ls = build_label_space(grid, lmesh, 600);
  double max_disp = 0.0;
  for (std::size_t c = 0; c < grid.n_points; ++c)
    max_disp = std::max(max_disp, (ls.coord(c, 599) - grid.positions[c]).norm());

  const double frac = 600.0 / double(lmesh.vertex_count());
  const double cap_angle = std::acos(1.0 - 2.0 * frac);
  const double cap_chord = 2.0 * 100.0 * std::sin(cap_angle / 2.0);
  CHECK(max_disp == doctest::Approx(cap_chord).epsilon(0.10));
}

TEST_CASE("pairwise kernel values") {
  // Antipodal pair on unit-radius coordinates: chord 2, gamma 0.7.
  const double v = pairwise_kernel_value({0, 0, 1}, {0, 0, -1}, 1.0, 2.0, 0.7,
                                         {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(v == doctest::Approx(2.0 * std::exp(-4.0 / (2.0 * 0.49))).epsilon(1e-12));

  const ControlGrid grid = build_control_grid(1, 100.0);
  const Icosphere lmesh = build_icosphere(3, 100.0);
  const LabelSpace ls = build_label_space(grid, lmesh, 12);

  CrfParams params = make_crf_params(12, 0.7, 3);
  const KernelTables kt = build_kernel_tables(grid, ls, params);
  CHECK(kt.edges.size() == grid.edges.size());

  // Coincident label positions give exactly omega: with 40 labels the sets of
  // adjacent control points overlap on shared label-mesh vertices.
  const LabelSpace wide_ls = build_label_space(grid, lmesh, 40);
  const KernelTables wide_kt = build_kernel_tables(grid, wide_ls, params);
  bool found_coincident = false;
  for (std::size_t e = 0; e < wide_kt.edges.size() && !found_coincident; ++e) {
    const auto [i, j] = wide_kt.edges[e];
    for (std::size_t a = 0; a < 40 && !found_coincident; ++a)
      for (std::size_t b = 0; b < 40; ++b)
        if (wide_ls.label_vertex[i * 40 + a] == wide_ls.label_vertex[j * 40 + b]) {
          CHECK(kernel_entry(wide_kt, e, a, b, 1.5) == 1.5);
          found_coincident = true;
          break;
        }
  }
  CHECK(found_coincident);
  for (std::size_t a = 0; a < 12; ++a)
    for (std::size_t b = 0; b < 12; ++b) {
      const double k = kernel_entry(kt, 0, a, b, 1.0);
      CHECK(k > 0.0);
      CHECK(k <= 1.0);
    }

  // Tables match the closed form within float storage precision.
  for (std::size_t e = 0; e < 3; ++e) {
    const auto [i, j] = kt.edges[e];
    for (std::size_t a = 0; a < 12; a += 3)
      for (std::size_t b = 0; b < 12; b += 5) {
        const double expect = pairwise_kernel_value(ls.coord(i, a), ls.coord(j, b), 100.0,
                                                    1.0, 0.7, params.lambda);
        CHECK(kernel_entry(kt, e, a, b, 1.0) == doctest::Approx(expect).epsilon(1e-6));
      }
  }

  // gamma -> infinity sends every entry to omega.
  CrfParams wide = make_crf_params(12, 1e9, 3);
  const KernelTables kw = build_kernel_tables(grid, ls, wide);
  for (std::size_t a = 0; a < 12; ++a)
    for (std::size_t b = 0; b < 12; ++b)
      CHECK(kernel_entry(kw, 0, a, b, 0.75) == doctest::Approx(0.75).epsilon(1e-9));

  CHECK_THROWS_AS(make_crf_params(12, 0.0, 3), ConfigError);
  CrfParams bad = make_crf_params(12, 0.7, 3);
  bad.lambda = {1, 0, 0, 0, -1, 0, 0, 0, 1};
  CHECK_THROWS_AS(build_kernel_tables(grid, ls, bad), ConfigError);
}

namespace {

struct SmallCrf {
  ControlGrid grid = build_control_grid(0, 100.0);
  LabelSpace labels;
  CrfParams params;
  std::shared_ptr<const KernelTables> tables;

  explicit SmallCrf(double gamma = 0.5, int iters = 3)
      : labels(build_label_space(grid, build_icosphere(1, 100.0), 3)),
        params(make_crf_params(3, gamma, iters)),
        tables(std::make_shared<const KernelTables>(
            build_kernel_tables(grid, labels, params))) {}
};

Tensor random_unary(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::vector<double> u(rows * cols);
  for (double& x : u) x = rng.normal() * scale;
  return Tensor::constant(rows, cols, u);
}

double max_row_change(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("degenerate CRF identities") {
  SmallCrf crf;
  Rng rng(4);
  const Tensor unary = random_unary(rng, 12, 3);
  const Tensor reference = softmax_rows(unary);

  // omega = 0: the pairwise term vanishes exactly for any T.
  crf.params.omega = Tensor::param(1, 1, {0.0});
  for (int t : {1, 4}) {
    crf.params.iterations = t;
    const Tensor q = crf_rnn_forward(unary, crf.tables, crf.params);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(q.data()[i] == reference.data()[i]);
  }

  // mu = 0 behaves identically.
  crf.params.omega = Tensor::param(1, 1, {1.0});
  crf.params.mu = Tensor::param(3, 3, std::vector<double>(9, 0.0));
  const Tensor q = crf_rnn_forward(unary, crf.tables, crf.params);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(q.data()[i] == reference.data()[i]);
}

TEST_CASE("mean-field step: stochasticity, shift invariance, agreement") {
  SmallCrf crf;
  Rng rng(9);
  const Tensor unary = random_unary(rng, 12, 3, 2.0);
  Tensor q = softmax_rows(unary);

  for (int t = 0; t < 4; ++t) {
    q = mean_field_step(q, unary, crf.tables, crf.params);
    for (std::size_t i = 0; i < 12; ++i) {
      double row = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double p = q.data()[i * 3 + a];
        CHECK(p >= 0.0);
        row += p;
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  // Adding a per-row constant to the unary leaves every iterate unchanged.
  std::vector<double> shifted(unary.data(), unary.data() + 36);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t a = 0; a < 3; ++a) shifted[i * 3 + a] += double(i) - 4.0;
  const Tensor unary2 = Tensor::constant(12, 3, shifted);
  crf.params.iterations = 3;
  const Tensor qa = crf_rnn_forward(unary, crf.tables, crf.params);
  const Tensor qb = crf_rnn_forward(unary2, crf.tables, crf.params);
  CHECK(max_row_change(qa, qb) <= 1e-9);

  // Potts compatibility with strong label-discriminating kernels pulls
  // conflicting neighbors together: the summed KL between adjacent rows
  // decreases after one step. (A flat kernel would only shift logits.)
  CrfParams strong = make_crf_params(3, 0.35, 1);
  strong.omega = Tensor::param(1, 1, {3.0});
  auto diag_tables = std::make_shared<KernelTables>();
  diag_tables->n_labels = 3;
  diag_tables->n_points = 12;
  diag_tables->edges = crf.grid.edges;
  for (std::size_t e = 0; e < diag_tables->edges.size(); ++e) {
    std::vector<float> t(9, 0.05f);
    for (int a = 0; a < 3; ++a) t[a * 3 + a] = 1.0f;
    diag_tables->tables.push_back(std::move(t));
  }
  const std::shared_ptr<const KernelTables> strong_tables = diag_tables;
  Rng rng2(1234);
  const Tensor u2 = random_unary(rng2, 12, 3, 3.0);
  const Tensor q0 = softmax_rows(u2);
  const Tensor q1 = mean_field_step(q0, u2, strong_tables, strong);
  auto neighbor_kl = [&](const Tensor& dist) {
    double acc = 0.0;
    for (const auto& e : crf.grid.edges)
      for (std::size_t a = 0; a < 3; ++a) {
        const double p = dist.data()[e[0] * 3 + a], r = dist.data()[e[1] * 3 + a];
        acc += p * std::log(std::max(p, 1e-300) / std::max(r, 1e-300));
      }
    return acc;
  };
  CHECK(neighbor_kl(q1) < neighbor_kl(q0));
}

TEST_CASE("crf_rnn fixed point and T=1 equivalence") {
  SmallCrf crf;
  Rng rng(21);
  const Tensor unary = random_unary(rng, 12, 3);

  crf.params.iterations = 1;
  const Tensor one = crf_rnn_forward(unary, crf.tables, crf.params);
  const Tensor manual = mean_field_step(softmax_rows(unary), unary, crf.tables, crf.params);
  CHECK(max_row_change(one, manual) == 0.0);

  // Run to convergence; one more step changes rows by <= 1e-9.
  Tensor q = softmax_rows(unary);
  for (int t = 0; t < 200; ++t) {
    const Tensor next = mean_field_step(q, unary, crf.tables, crf.params);
    const double change = max_row_change(next, q);
    q = next;
    if (change < 1e-12) break;
  }
  const Tensor once_more = mean_field_step(q, unary, crf.tables, crf.params);
  CHECK(max_row_change(once_more, q) <= 1e-9);
}

TEST_CASE("mean-field convergence on random instances") {
  Rng rng(77);
  for (int seed = 0; seed < 10; ++seed) {
    SmallCrf crf(0.4 + 0.1 * (seed % 5), 1);
    const Tensor unary = random_unary(rng, 12, 3, 1.5);
    Tensor q = softmax_rows(unary);
    bool converged = false;
    for (int t = 0; t < 50; ++t) {
      const Tensor next = mean_field_step(q, unary, crf.tables, crf.params);
      const double change = max_row_change(next, q);
      q = next;
      if (change < 1e-6) {
        converged = true;
        break;
      }
    }
    CHECK(converged);
  }
}

TEST_CASE("crf energy oracle on the icosahedron test bed") {
  Rng rng(501);
  int good = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    SmallCrf crf(0.35 + 0.1 * (seed % 4), 1);
    const double omega = 0.4 + 0.2 * (seed % 3);
    crf.params.omega = Tensor::param(1, 1, {omega});
    const Tensor unary = random_unary(rng, 12, 3, 1.5);

    // Log-likelihood unaries keep the energy nonnegative.
    const Tensor q0 = softmax_rows(unary);
    std::vector<double> logp(36);
    for (std::size_t i = 0; i < 36; ++i) logp[i] = std::log(q0.data()[i]);
    const std::vector<double> mu(crf.params.mu.data(), crf.params.mu.data() + 9);

    double best_energy = 0.0;
    const std::vector<int> best =
        test_oracle::brute_force_min_labeling(*crf.tables, logp, mu, omega, &best_energy);
    CHECK(best_energy > 0.0);

    // Converged mean-field argmax decode.
    Tensor q = q0;
    for (int t = 0; t < 50; ++t) {
      const Tensor next = mean_field_step(q, unary, crf.tables, crf.params);
      const double change = max_row_change(next, q);
      q = next;
      if (change < 1e-6) break;
    }
    std::vector<int> decode(12);
    for (int i = 0; i < 12; ++i) {
      const double* row = q.data() + i * 3;
      decode[i] = int(std::max_element(row, row + 3) - row);
    }
    const double e = crf_energy(decode, logp, *crf.tables, mu, omega);
    CHECK(e >= best_energy - 1e-12);
    if (e <= 1.10 * best_energy) ++good;
  }
  CHECK(good >= int(0.8 * seeds));
}

TEST_CASE("crf energy special cases") {
  SmallCrf crf;
  Rng rng(31);
  const Tensor unary = random_unary(rng, 12, 3);
  const Tensor q0 = softmax_rows(unary);
  std::vector<double> logp(36);
  for (std::size_t i = 0; i < 36; ++i) logp[i] = std::log(q0.data()[i]);
  const std::vector<double> mu(crf.params.mu.data(), crf.params.mu.data() + 9);

  // omega = 0 leaves only the unary sum.
  std::vector<int> lab(12);
  for (int i = 0; i < 12; ++i) lab[i] = i % 3;
  double expect = 0.0;
  for (int i = 0; i < 12; ++i) expect -= logp[i * 3 + lab[i]];
  CHECK(crf_energy(lab, logp, *crf.tables, mu, 0.0) == doctest::Approx(expect).epsilon(1e-12));

  // Single control point without edges: the argmin is the max-likelihood label.
  KernelTables single;
  single.n_labels = 3;
  single.n_points = 1;
  const std::vector<double> lone{-0.2, -2.0, -1.0};
  double best = 1e300;
  int arg = -1;
  for (int a = 0; a < 3; ++a) {
    const double e = crf_energy({a}, lone, single, mu, 1.0);
    if (e < best) {
      best = e;
      arg = a;
    }
  }
  CHECK(arg == 0);

  CHECK_THROWS_AS(crf_energy({0, 1}, logp, *crf.tables, mu, 1.0), ShapeError);
  CHECK_THROWS_AS(crf_energy(std::vector<int>(12, 7), logp, *crf.tables, mu, 1.0), IndexError);
}

TEST_CASE("unary softmax rows") {
  const Tensor z = unary_softmax(Tensor::constant(1, 4, 0.0));
  for (int j = 0; j < 4; ++j) CHECK(z.data()[j] == doctest::Approx(0.25).epsilon(1e-15));

  const Tensor r = unary_softmax(Tensor::constant(1, 3, {std::log(2.0), 0.0, 0.0}));
  CHECK(r.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.data()[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r.data()[2] == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(3);
  const Tensor u = random_unary(rng, 5, 4);
  std::vector<double> shifted(u.data(), u.data() + 20);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) shifted[i * 4 + j] += 3.7 * i;
  const Tensor a = unary_softmax(u);
  const Tensor b = unary_softmax(Tensor::constant(5, 4, shifted));
  CHECK(max_row_change(a, b) <= 1e-12);
}

TEST_CASE("downsample_logits composes pooling maps") {
  const auto stack = MeshStack::build(2, 100.0);
  Rng rng(8);
  const Tensor logits = random_unary(rng, 162, 5);

  const Tensor down = downsample_logits(logits, 2, 1, *stack);
  CHECK(down.rows() == 42u);

  // Manual two-step pooling oracle: 162 -> 42 -> 12, row by row.
  const PoolingMap p21 = pooling_map(stack->mesh(2));
  std::vector<double> mid(42 * 5, 0.0);
  for (std::size_t i = 0; i < 42; ++i) {
    for (int e = p21.offsets[i]; e < p21.offsets[i + 1]; ++e)
      for (int c = 0; c < 5; ++c)
        mid[i * 5 + c] += logits.data()[std::size_t(p21.fine_indices[e]) * 5 + c];
    for (int c = 0; c < 5; ++c) mid[i * 5 + c] /= double(p21.offsets[i + 1] - p21.offsets[i]);
  }
  for (std::size_t i = 0; i < 42 * 5; ++i)
    CHECK(down.data()[i] == doctest::Approx(mid[i]).epsilon(1e-12));

  const Tensor constant = downsample_logits(Tensor::constant(162, 3, 2.5), 2, 1, *stack);
  for (std::size_t i = 0; i < constant.size(); ++i) CHECK(constant.data()[i] == 2.5);

  const Tensor two = downsample_logits(logits, 2, 0, *stack);
  CHECK(two.rows() == 12u);
  const PoolingMap p10 = pooling_map(stack->mesh(1));
  for (std::size_t i = 0; i < 12; ++i)
    for (int c = 0; c < 5; ++c) {
      double acc = 0.0;
      for (int e = p10.offsets[i]; e < p10.offsets[i + 1]; ++e)
        acc += mid[std::size_t(p10.fine_indices[e]) * 5 + c];
      acc /= double(p10.offsets[i + 1] - p10.offsets[i]);
      CHECK(two.data()[i * 5 + c] == doctest::Approx(acc).epsilon(1e-12));
    }

  // Gradients flow through the pooling chain.
  Rng grng(12);
  auto make = [&]() {
    std::vector<double> u(162 * 2);
    for (double& x : u) x = grng.normal();
    return std::vector<Tensor>{Tensor::param(162, 2, u)};
  };
  auto fn = [&](const std::vector<Tensor>& v) {
    const Tensor d = downsample_logits(v[0], 2, 0, *stack);
    Rng wrng(3);
    std::vector<double> w(d.size());
    for (double& x : w) x = wrng.normal();
    return mean_all(mul(d, Tensor::constant(d.rows(), d.cols(), w)));
  };
  const auto report = check_gradient(fn, make(), 1e-6, 1e-4, 60, &grng, make);
  CHECK(report.pass);

  CHECK_THROWS_AS(downsample_logits(logits, 1, 2, *stack), ConfigError);
}

TEST_CASE("expected and map deformation") {
  const ControlGrid grid = build_control_grid(0, 100.0);
  const LabelSpace real = build_label_space(grid, build_icosphere(2, 100.0), 20);

  // One-hot rows return the selected label exactly.
  std::vector<double> onehot(12 * 20, 0.0);
  for (int i = 0; i < 12; ++i) onehot[i * 20 + (i % 20)] = 1.0;
  const Tensor q1 = Tensor::constant(12, 20, onehot);
  const Tensor soft = expected_deformation(q1, real);
  const auto hard = map_deformation(q1, real);
  for (int i = 0; i < 12; ++i) {
    const Vec3 expect = real.coord(i, i % 20);
    const Vec3 got{soft.data()[i * 3], soft.data()[i * 3 + 1], soft.data()[i * 3 + 2]};
    CHECK((got - expect).norm() <= 1e-9 * 100.0);
    CHECK((hard[i] - expect).norm() == 0.0);
  }

  // Uniform rows over a constructed symmetric label set return the control
  // point itself.
  LabelSpace sym;
  sym.label_order = 2;
  sym.n_points = 12;
  sym.n_labels = 2;
  sym.radius = 100.0;
  sym.label_vertex.assign(24, 0);
  sym.label_coord.resize(24);
  for (int i = 0; i < 12; ++i) {
    const Vec3 c = grid.positions[i];
    Vec3 t = c.cross(Vec3{1.0, 0.2, -0.4});
    t = t.normalized() * 20.0;
    sym.label_coord[i * 2 + 0] = (c + t).normalized() * 100.0;
    sym.label_coord[i * 2 + 1] = (c - t).normalized() * 100.0;
  }
  const Tensor uq = Tensor::constant(12, 2, 0.5);
  const Tensor centers = expected_deformation(uq, sym);
  for (int i = 0; i < 12; ++i) {
    const Vec3 got{centers.data()[i * 3], centers.data()[i * 3 + 1],
                   centers.data()[i * 3 + 2]};
    CHECK((got - grid.positions[i]).norm() <= 1e-9 * 100.0);
  }

  // Two labels at weights (0.5, 0.5): re-projected midpoint, and for the
  // equidistant construction that is the geodesic midpoint.
  const Vec3 mid = ((sym.label_coord[0] + sym.label_coord[1]) * 0.5).normalized() * 100.0;
  const Vec3 got{centers.data()[0], centers.data()[1], centers.data()[2]};
  CHECK((got - mid).norm() <= 1e-9);

  // Uniform rows pick label 0 under the hard tie-break.
  const auto ties = map_deformation(Tensor::constant(12, 20, 1.0 / 20), real);
  for (int i = 0; i < 12; ++i) CHECK((ties[i] - real.coord(i, 0)).norm() == 0.0);

  // Peaked rows: hard and soft decodes agree within one label spacing.
  const double spacing = mean_edge_length(build_icosphere(2, 100.0));
  std::vector<double> peaked(12 * 20, 0.08 / 19.0);
  for (int i = 0; i < 12; ++i) peaked[i * 20 + 3] = 0.92;
  const Tensor qp = Tensor::constant(12, 20, peaked);
  const Tensor sp = expected_deformation(qp, real);
  const auto hp = map_deformation(qp, real);
  for (int i = 0; i < 12; ++i) {
    const Vec3 got_soft{sp.data()[i * 3], sp.data()[i * 3 + 1], sp.data()[i * 3 + 2]};
    CHECK((got_soft - hp[i]).norm() <= spacing);
  }

  // Antipodal cancellation trips the numeric guard.
  LabelSpace anti = sym;
  for (int i = 0; i < 12; ++i) {
    anti.label_coord[i * 2 + 0] = grid.positions[i];
    anti.label_coord[i * 2 + 1] = grid.positions[i] * -1.0;
  }
  CHECK_THROWS_AS(expected_deformation(Tensor::constant(12, 2, 0.5), anti), NumericError);
}

TEST_CASE("expected_deformation stays on the sphere and is differentiable") {
  const ControlGrid grid = build_control_grid(0, 100.0);
  const LabelSpace ls = build_label_space(grid, build_icosphere(2, 100.0), 8);
  Rng rng(13);

  auto make = [&]() {
    std::vector<double> u(12 * 8);
    for (double& x : u) x = rng.normal();
    return std::vector<Tensor>{Tensor::param(12, 8, u)};
  };
  auto fn = [&](const std::vector<Tensor>& v) {
    const Tensor q = softmax_rows(v[0]);
    const Tensor pos = expected_deformation(q, ls);
    Rng wrng(5);
    std::vector<double> w(36);
    for (double& x : w) x = wrng.normal();
    return mean_all(mul(pos, Tensor::constant(12, 3, w)));
  };
  const auto report = check_gradient(fn, make(), 1e-6, 1e-4);
  INFO("max rel err ", report.max_rel_err);
  CHECK(report.pass);

  const Tensor q = softmax_rows(random_unary(rng, 12, 8, 2.0));
  const Tensor pos = expected_deformation(q, ls);
  for (int i = 0; i < 12; ++i) {
    const Vec3 p{pos.data()[i * 3], pos.data()[i * 3 + 1], pos.data()[i * 3 + 2]};
    CHECK(std::fabs(p.norm() - 100.0) <= 1e-9 * 100.0);
  }
}

TEST_CASE("mean-field step is differentiable in unary, mu, omega") {
  SmallCrf crf(0.5, 2);
  Rng rng(99);
  auto make = [&]() {
    std::vector<double> u(36), m(9);
    for (double& x : u) x = rng.normal();
    for (double& x : m) x = rng.uniform(0.0, 1.0);
    return std::vector<Tensor>{Tensor::param(12, 3, u), Tensor::param(3, 3, m),
                               Tensor::param(1, 1, {rng.uniform(0.5, 1.5)})};
  };
  auto fn = [&](const std::vector<Tensor>& v) {
    CrfParams p = crf.params;
    p.mu = v[1];
    p.omega = v[2];
    p.iterations = 2;
    const Tensor q = crf_rnn_forward(v[0], crf.tables, p);
    Rng wrng(17);
    std::vector<double> w(36);
    for (double& x : w) x = wrng.normal();
    return mean_all(mul(q, Tensor::constant(12, 3, w)));
  };
  const auto report = check_gradient(fn, make(), 1e-6, 1e-4);
  INFO("max rel err ", report.max_rel_err);
  CHECK(report.pass);
}
