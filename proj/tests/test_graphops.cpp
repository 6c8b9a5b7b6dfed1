#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ast/gradcheck.hpp"
#include "ast/graphops.hpp"

using namespace ast;
using Var = Tape<double>::Var;

TEST_CASE("message passing with injected counting functions") {
  // f_e == 1, f_v = v + agg
  auto fe_one = [](const double*, const double*, const double*, double* out) { out[0] = 1.0; };
  auto fv_add = [](const double* v, const double* agg, double* out) { out[0] = v[0] + agg[0]; };

  Tensor<double> v_send = Tensor<double>::zeros({3, 1});
  Tensor<double> v_recv({2, 1});
  v_recv.at(0, 0) = 3.0;
  v_recv.at(1, 0) = 3.0;

  // receiver 0 has two in-edges, receiver 1 has none
  std::vector<int32_t> send{0, 1};
  std::vector<int32_t> recv{0, 0};
  Tensor<double> out = message_pass_with<double>(fe_one, fv_add, 1, 1, send, recv, nullptr, v_send,
                                                 v_recv);
  CHECK(out.at(0, 0) == 5.0);  // 3 + two unit messages
  CHECK(out.at(1, 0) == 3.0);  // zero aggregate
}

namespace {

// random linear update functions and a dense adjacency-matrix oracle
struct LinearMp {
  Tensor<double> A;  // (e|vs|vr) -> d
  Tensor<double> B;  // (vr|agg) -> d
  int64_t d;
};

Tensor<double> dense_oracle(const LinearMp& f, const std::vector<int32_t>& send,
                            const std::vector<int32_t>& recv, const Tensor<double>& e,
                            const Tensor<double>& vs, const Tensor<double>& vr) {
  const int64_t E = static_cast<int64_t>(send.size());
  Tensor<double> cat({E, e.cols() + vs.cols() + vr.cols()});
  for (int64_t k = 0; k < E; ++k) {
    int64_t c = 0;
    for (int64_t j = 0; j < e.cols(); ++j) cat.at(k, c++) = e.at(k, j);
    for (int64_t j = 0; j < vs.cols(); ++j) cat.at(k, c++) = vs.at(send[k], j);
    for (int64_t j = 0; j < vr.cols(); ++j) cat.at(k, c++) = vr.at(recv[k], j);
  }
  Tensor<double> e_out = ref::matmul(cat, f.A);
  // adjacency matrix [n_recv x E]
  Tensor<double> adj = Tensor<double>::zeros({vr.rows(), E});
  for (int64_t k = 0; k < E; ++k) adj.at(recv[k], k) = 1.0;
  Tensor<double> agg = ref::matmul(adj, e_out);
  Tensor<double> cat2({vr.rows(), vr.cols() + f.d});
  for (int64_t i = 0; i < vr.rows(); ++i) {
    int64_t c = 0;
    for (int64_t j = 0; j < vr.cols(); ++j) cat2.at(i, c++) = vr.at(i, j);
    for (int64_t j = 0; j < f.d; ++j) cat2.at(i, c++) = agg.at(i, j);
  }
  return ref::matmul(cat2, f.B);
}

}  // namespace

TEST_CASE("random linear message passing equals the dense adjacency oracle") {
  Rng rng(51);
  const int64_t n = 5, d = 4, E = 9;
  LinearMp f{normal_tensor<double>(rng, {2 + d + d, d}, 1.0),
             normal_tensor<double>(rng, {d + d, d}, 1.0), d};
  Tensor<double> e = normal_tensor<double>(rng, {E, 2}, 1.0);
  Tensor<double> vs = normal_tensor<double>(rng, {n, d}, 1.0);
  Tensor<double> vr = normal_tensor<double>(rng, {n, d}, 1.0);
  std::vector<int32_t> send, recv;
  for (int64_t k = 0; k < E; ++k) {
    send.push_back(static_cast<int32_t>(rng.uniform_index(n)));
    recv.push_back(static_cast<int32_t>(rng.uniform_index(n)));
  }

  auto fe = [&](const double* er, const double* vsr, const double* vrr, double* out) {
    for (int64_t j = 0; j < d; ++j) {
      out[j] = 0;
      for (int64_t c = 0; c < 2; ++c) out[j] += er[c] * f.A.at(c, j);
      for (int64_t c = 0; c < d; ++c) out[j] += vsr[c] * f.A.at(2 + c, j);
      for (int64_t c = 0; c < d; ++c) out[j] += vrr[c] * f.A.at(2 + d + c, j);
    }
  };
  auto fv = [&](const double* vrr, const double* agg, double* out) {
    for (int64_t j = 0; j < d; ++j) {
      out[j] = 0;
      for (int64_t c = 0; c < d; ++c) out[j] += vrr[c] * f.B.at(c, j);
      for (int64_t c = 0; c < d; ++c) out[j] += agg[c] * f.B.at(d + c, j);
    }
  };
  Tensor<double> got = message_pass_with<double>(fe, fv, d, d, send, recv, &e, vs, vr);
  CHECK(max_abs_diff(got, dense_oracle(f, send, recv, e, vs, vr)) < 1e-12);
}

TEST_CASE("parameterized message passing: tape matches eval and grad_check passes") {
  Rng rng(52);
  ParamStore<double> store;
  ParamBuilder<double> b{store, rng};
  MessagePassP p = message_pass_params(b, "mp", 3, 4, 4, 8, 4);

  const int64_t n = 6;
  std::vector<int32_t> send{0, 1, 2, 3, 4, 5, 0, 2};
  std::vector<int32_t> recv{1, 0, 1, 4, 4, 4, 3, 3};
  Csr csr = group_by(recv, n);
  Tensor<double> e = normal_tensor<double>(rng, {8, 3}, 1.0);
  Tensor<double> vs = normal_tensor<double>(rng, {n, 4}, 1.0);
  Tensor<double> vr = normal_tensor<double>(rng, {n, 4}, 1.0);

  Tape<double> tp;
  auto bp = bind_params(tp, store, false);
  auto out = message_pass(tp, bp, p, send, recv, csr, tp.constant(e), tp.constant(vs),
                          tp.constant(vr));
  Tensor<double> eval = message_pass_fwd(store, p, send, recv, &e, vs, vr, /*block=*/3);
  CHECK(max_abs_diff(tp.val(out), eval) < 1e-13);

  Tensor<double> r = normal_tensor<double>(rng, {n, 4}, 1.0);
  std::vector<Tensor<double>> inputs{e, vs, vr};
  for (const auto& v : store.values) inputs.push_back(v);
  auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& xs) {
        BoundParams<double> bpv;
        for (size_t i = 3; i < xs.size(); ++i) bpv.vars.push_back(xs[i]);
        auto o = message_pass(t, bpv, p, send, recv, csr, xs[0], xs[1], xs[2]);
        return t.sum_all(t.mul(o, t.constant(r)));
      },
      inputs);
  CHECK(report.max_rel_err < 1e-5);

  // permuting the edge list leaves aggregation unchanged (order independence)
  const int perm[8] = {7, 6, 0, 1, 3, 5, 4, 2};
  std::vector<int32_t> send_p(8), recv_p(8);
  Tensor<double> e_p({8, 3});
  for (int64_t k = 0; k < 8; ++k) {
    send_p[static_cast<size_t>(k)] = send[static_cast<size_t>(perm[k])];
    recv_p[static_cast<size_t>(k)] = recv[static_cast<size_t>(perm[k])];
    for (int64_t j = 0; j < 3; ++j) e_p.at(k, j) = e.at(perm[k], j);
  }
  Tensor<double> eval_p = message_pass_fwd(store, p, send_p, recv_p, &e_p, vs, vr);
  CHECK(max_abs_diff(eval, eval_p) < 1e-12);
}

TEST_CASE("mesh_to_cell_init: copy for singleton cells, mean for shared ones") {
  // two points in one leaf cell, one alone
  Tensor<double> pts({3, 3});
  pts.at(0, 0) = -0.9;
  pts.at(1, 0) = -0.9;
  pts.at(2, 0) = 0.9;
  CellSet cs = build_cell_set(pts, 2, 2);
  REQUIRE(cs.leaf().size() == 2);
  Tensor<double> feats({3, 2});
  feats.at(0, 0) = 1.0;
  feats.at(1, 0) = 3.0;
  feats.at(2, 0) = 7.0;
  Tensor<double> cells = mesh_to_cell_init_fwd(cs, feats);
  const int32_t shared = cs.node_to_cell[0];
  const int32_t lone = cs.node_to_cell[2];
  CHECK(cells.at(shared, 0) == 2.0);  // (1+3)/2
  CHECK(cells.at(lone, 0) == 7.0);

  // random fixture vs scatter-mean oracle, exact
  Rng rng(53);
  Tensor<double> rnd_pts({50, 3});
  for (auto& v : rnd_pts.data) v = rng.uniform(-1, 1);
  CellSet cs2 = build_cell_set(rnd_pts, 2, 2);
  Tensor<double> rnd_feats = normal_tensor<double>(rng, {50, 4}, 1.0);
  Tensor<double> got = mesh_to_cell_init_fwd(cs2, rnd_feats);
  Tensor<double> want = ref::segment_sum(rnd_feats, cs2.cell_to_nodes, true);
  CHECK(got == want);
}

TEST_CASE("c2m single-sender semantics") {
  Rng rng(54);
  ParamStore<double> store;
  ParamBuilder<double> b{store, rng};
  MessagePassP p = message_pass_params(b, "c2m", 0, 4, 4, 8, 4);

  // two mesh nodes owned by the same cell receive identical aggregates but
  // differ through their own receiver features
  std::vector<int32_t> send{0, 0};  // both nodes gather from cell 0
  std::vector<int32_t> recv{0, 1};
  Tensor<double> v_cell = normal_tensor<double>(rng, {1, 4}, 1.0);
  Tensor<double> v_mesh = normal_tensor<double>(rng, {2, 4}, 1.0);
  Tensor<double> out = message_pass_fwd<double>(store, p, send, recv, nullptr, v_cell, v_mesh);

  // aggregate equals the single e' exactly: replicate via the injected path
  Tensor<double> same_vr = v_mesh;
  for (int64_t j = 0; j < 4; ++j) same_vr.at(1, j) = v_mesh.at(0, j);
  Tensor<double> out_same = message_pass_fwd<double>(store, p, send, recv, nullptr, v_cell, same_vr);
  CHECK(max_abs_diff(Tensor<double>({1, 4}, {out_same.at(0, 0), out_same.at(0, 1), out_same.at(0, 2),
                                             out_same.at(0, 3)}),
                     Tensor<double>({1, 4}, {out_same.at(1, 0), out_same.at(1, 1), out_same.at(1, 2),
                                             out_same.at(1, 3)})) == 0.0);
  // with distinct receiver features the rows differ
  CHECK(max_abs_diff(out, out_same) > 0.0);
}

namespace {

struct ConvFixture {
  ParamStore<double> store;
  SparseConvP p;
  CellSet cs;
  ConvPlan plan;
  Tensor<double> feats;
};

// fully dense 4^3 grid at level 2
ConvFixture dense_grid_fixture(uint64_t seed, int64_t c_in, int64_t c_out) {
  ConvFixture f;
  Rng rng(seed);
  ParamBuilder<double> b{f.store, rng};
  f.p = sparse_conv_params(b, "conv", c_in, c_out);
  Tensor<double> pts({64, 3});
  int64_t r = 0;
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y)
      for (int z = 0; z < 4; ++z, ++r) {
        pts.at(r, 0) = -1 + (x + 0.5) * 0.5;
        pts.at(r, 1) = -1 + (y + 0.5) * 0.5;
        pts.at(r, 2) = -1 + (z + 0.5) * 0.5;
      }
  f.cs = build_cell_set(pts, 2, 1);
  f.plan = build_conv_plan(f.cs, 2, 2);  // stride 0 levels apart: same-level 3x3x3
  f.feats = normal_tensor<double>(rng, {64, c_in}, 1.0);
  return f;
}

// dense zero-padded 3x3x3 convolution oracle on the 4^3 grid
Tensor<double> dense_conv_oracle(const ConvFixture& f, int64_t c_in, int64_t c_out) {
  Tensor<double> out = Tensor<double>::zeros({64, c_out});
  const Tensor<double>& w = f.store.values[f.p.w];
  const Tensor<double>& bias = f.store.values[f.p.b];
  auto cell_at = [&](int x, int y, int z) -> int32_t {
    if (x < 0 || y < 0 || z < 0 || x >= 4 || y >= 4 || z >= 4) return -1;
    const uint64_t key = morton_encode({2, x, y, z});
    return f.cs.leaf().key_to_index.at(key);
  };
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y)
      for (int z = 0; z < 4; ++z) {
        const int32_t i = cell_at(x, y, z);
        int32_t k = 0;
        for (int dx = -1; dx <= 1; ++dx)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dz = -1; dz <= 1; ++dz, ++k) {
              const int32_t src = cell_at(x + dx, y + dy, z + dz);
              if (src < 0) continue;
              for (int64_t co = 0; co < c_out; ++co) {
                double acc = 0;
                for (int64_t ci = 0; ci < c_in; ++ci)
                  acc += f.feats.at(src, ci) * w.at(k * c_in + ci, co);
                out.at(i, co) += acc;
              }
            }
        for (int64_t co = 0; co < c_out; ++co) out.at(i, co) += bias[co];
      }
  return out;
}

}  // namespace

TEST_CASE("sparse_conv: identity kernel, single cell, dense oracle") {
  // identity through the center offset
  {
    ConvFixture f = dense_grid_fixture(61, 3, 3);
    f.store.values[f.p.w] = Tensor<double>::zeros({27 * 3, 3});
    for (int64_t j = 0; j < 3; ++j) f.store.values[f.p.w].at(13 * 3 + j, j) = 1.0;  // center block
    Tensor<double> out = sparse_conv_fwd(f.store, f.p, f.plan, f.feats);
    CHECK(max_abs_diff(out, f.feats) == 0.0);
  }

  // single non-empty cell: w_center * c + b
  {
    Rng rng(62);
    ParamStore<double> store;
    ParamBuilder<double> b{store, rng};
    SparseConvP p = sparse_conv_params(b, "conv", 2, 2);
    Tensor<double> pt({1, 3});
    CellSet cs = build_cell_set(pt, 3, 3);
    ConvPlan plan = build_conv_plan(cs, 3, 3);
    Tensor<double> c = normal_tensor<double>(rng, {1, 2}, 1.0);
    Tensor<double> out = sparse_conv_fwd(store, p, plan, c);
    for (int64_t co = 0; co < 2; ++co) {
      double want = store.values[p.b][co];
      for (int64_t ci = 0; ci < 2; ++ci) want += c.at(0, ci) * store.values[p.w].at(13 * 2 + ci, co);
      CHECK(out.at(0, co) == doctest::Approx(want).epsilon(1e-14));
    }
  }

  // full 4^3 grid vs the dense zero-padded convolution oracle
  {
    ConvFixture f = dense_grid_fixture(63, 3, 5);
    Tensor<double> got = sparse_conv_fwd(f.store, f.p, f.plan, f.feats);
    CHECK(max_abs_diff(got, dense_conv_oracle(f, 3, 5)) < 1e-10);

    // tape path agrees with eval path
    Tape<double> tp;
    auto bp = bind_params(tp, f.store, false);
    auto out = sparse_conv(tp, bp, f.p, f.plan, tp.constant(f.feats));
    CHECK(max_abs_diff(tp.val(out), got) < 1e-13);
  }
}

TEST_CASE("sparse_conv gradient") {
  ConvFixture f = dense_grid_fixture(64, 2, 3);
  Rng rng(65);
  Tensor<double> r = normal_tensor<double>(rng, {64, 3}, 1.0);
  std::vector<Tensor<double>> inputs{f.feats, f.store.values[f.p.w], f.store.values[f.p.b]};
  auto report = grad_check(
      [&](Tape<double>& tp, const std::vector<Var>& xs) {
        BoundParams<double> bp;
        bp.vars = {xs[1], xs[2]};
        SparseConvP p2 = f.p;
        p2.w = 0;
        p2.b = 1;
        auto out = sparse_conv(tp, bp, p2, f.plan, xs[0]);
        return tp.sum_all(tp.mul(out, tp.constant(r)));
      },
      inputs, 1e-5, 60);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("ocnn: stride-2 layer mixes children per kernel weights") {
  Rng rng(66);
  ParamStore<double> store;
  ParamBuilder<double> b{store, rng};
  SparseConvP p = sparse_conv_params(b, "conv", 2, 2);

  // two points in sibling leaf cells (0,0,0) and (1,0,0) at level 1
  Tensor<double> pts({2, 3});
  pts.at(0, 0) = -0.5; pts.at(0, 1) = -0.5; pts.at(0, 2) = -0.5;
  pts.at(1, 0) = 0.5;  pts.at(1, 1) = -0.5; pts.at(1, 2) = -0.5;
  CellSet cs = build_cell_set(pts, 1, 0);
  REQUIRE(cs.cells_at(1) == 2);
  REQUIRE(cs.cells_at(0) == 1);
  ConvPlan plan = build_conv_plan(cs, 1, 0);
  Tensor<double> feats = normal_tensor<double>(rng, {2, 2}, 1.0);
  Tensor<double> out = ocnn_fwd(store, {p}, {plan}, feats);
  REQUIRE(out.rows() == 1);

  // hand expansion: anchor (0,0,0); child (0,0,0) sits at offset k=13,
  // child (1,0,0) at offset k=22
  const Tensor<double>& w = store.values[p.w];
  const int32_t c0 = cs.leaf().key_to_index.at(morton_encode({1, 0, 0, 0}));
  const int32_t c1 = cs.leaf().key_to_index.at(morton_encode({1, 1, 0, 0}));
  for (int64_t co = 0; co < 2; ++co) {
    double want = store.values[p.b][co];
    for (int64_t ci = 0; ci < 2; ++ci) {
      want += feats.at(c0, ci) * w.at(13 * 2 + ci, co);
      want += feats.at(c1, ci) * w.at(22 * 2 + ci, co);
    }
    CHECK(out.at(0, co) == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("ocnn output lands on the target level; zero layers is identity") {
  Rng rng(67);
  Tensor<double> pts({100, 3});
  for (auto& v : pts.data) v = rng.uniform(-1, 1);
  CellSet cs = build_cell_set(pts, 3, 1);
  ParamStore<double> store;
  ParamBuilder<double> b{store, rng};
  std::vector<SparseConvP> layers{sparse_conv_params(b, "l0", 4, 6),
                                  sparse_conv_params(b, "l1", 6, 6)};
  std::vector<ConvPlan> plans{build_conv_plan(cs, 3, 2), build_conv_plan(cs, 2, 1)};
  Tensor<double> feats = normal_tensor<double>(rng, {cs.cells_at(3), 4}, 1.0);
  Tensor<double> out = ocnn_fwd(store, layers, plans, feats);
  CHECK(out.rows() == cs.cells_at(1));
  CHECK(out.cols() == 6);

  Tensor<double> same = ocnn_fwd(store, {}, {}, feats);
  CHECK(same == feats);
}

TEST_CASE("transposed conv: linearity and adjoint identity") {
  Rng rng(68);
  Tensor<double> pts({120, 3});
  for (auto& v : pts.data) v = rng.uniform(-1, 1);
  CellSet cs = build_cell_set(pts, 3, 2);
  ConvPlan fwd_plan = build_conv_plan(cs, 3, 2);
  ConvPlan t_plan = build_transposed_plan(cs, 2, 3);

  const int64_t c_in = 3, c_out = 4;
  ParamStore<double> store;
  ParamBuilder<double> b{store, rng};
  SparseConvP p = sparse_conv_params(b, "conv", c_in, c_out);
  store.values[p.b] = Tensor<double>::zeros({c_out});

  // W' with blocks transposed: W'_k = W_k^T
  ParamStore<double> store_t;
  ParamBuilder<double> bt{store_t, rng};
  SparseConvP pt = sparse_conv_params(bt, "convT", c_out, c_in);
  store_t.values[pt.b] = Tensor<double>::zeros({c_in});
  for (int32_t k = 0; k < 27; ++k)
    for (int64_t i = 0; i < c_in; ++i)
      for (int64_t j = 0; j < c_out; ++j)
        store_t.values[pt.w].at(k * c_out + j, i) = store.values[p.w].at(k * c_in + i, j);

  Tensor<double> x = normal_tensor<double>(rng, {cs.cells_at(3), c_in}, 1.0);
  Tensor<double> y = normal_tensor<double>(rng, {cs.cells_at(2), c_out}, 1.0);
  Tensor<double> cx = sparse_conv_fwd(store, p, fwd_plan, x);
  Tensor<double> cty = sparse_conv_fwd(store_t, pt, t_plan, y);

  double lhs = 0, rhs = 0;
  for (int64_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * y[i];
  for (int64_t i = 0; i < cty.numel(); ++i) rhs += cty[i] * x[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));

  // linearity with a power-of-two scale is bit exact
  Tensor<double> y2 = y;
  for (auto& v : y2.data) v *= 2.0;
  Tensor<double> cty2 = sparse_conv_fwd(store_t, pt, t_plan, y2);
  Tensor<double> doubled = cty;
  for (auto& v : doubled.data) v *= 2.0;
  CHECK(cty2 == doubled);
}
