#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ast/fps.hpp"
#include "ast/framepair.hpp"
#include "ast/graphops.hpp"
#include "ast/octree.hpp"

namespace ast {

// Model hyperparameters. Defaults follow the small-dataset setting
// (L_cell 5, l_ocnn 0, d_token 256, L_SA 12); token width must be a
// multiple of the 64-wide head dimension.
struct AstConfig {
  int32_t L_cell = 5;
  int32_t l_ocnn = 0;
  int64_t d_token = 256;
  int32_t L_SA = 12;
  int64_t n_tokens = 256;
  int64_t hidden = 128;      // node/edge/message-passing latent width
  int64_t mp_hidden = 128;   // hidden layer of input and message-passing MLPs
  int64_t out_hidden = 32;   // hidden layer of output MLPs
  int64_t ffn_hidden = 512;  // GEGLU hidden width
  int32_t head_dim = 64;
  double dropout = 0.1;
  double noise_scale = 0.003;
  double w_mesh = 1.0;   // loss weight, mesh head
  double w_elem = 0.01;  // loss weight, element head

  int32_t heads() const { return static_cast<int32_t>(d_token / head_dim); }
  int32_t token_level() const { return L_cell - l_ocnn; }

  void validate() const {
    require(l_ocnn >= 0 && l_ocnn <= L_cell, "config", "need 0 <= l_ocnn <= L_cell");
    require(n_tokens >= 1, "config", "n_tokens must be >= 1");
    require(d_token % head_dim == 0, "config", "d_token must be divisible by the head dim");
    require(L_cell >= 0 && L_cell <= 21, "config", "L_cell out of range");
    require(L_SA >= 0, "config", "negative L_SA");
    require(hidden > 0 && mp_hidden > 0 && out_hidden > 0 && ffn_hidden > 0, "config",
            "widths must be positive");
  }
};

// Parameter ids for every module in the pipeline.
struct AstLayout {
  MlpP mesh_enc, elem_enc, m2m_enc, e2m_enc;
  bool has_elem_enc = false;
  bool has_elem_nodes = false;
  bool has_elem_head = false;
  MessagePassP e2m_pass, m2m_pass, m2c_pass, c2m_pass, m2e_pass;
  LinearP lift, lower;  // hidden <-> d_token when l_ocnn == 0
  std::vector<SparseConvP> enc_ocnn, dec_ocnn;
  PosEmbP pos;
  CrossBlockP enc_cross, dec_cross;
  std::vector<SelfBlockP> sa;
  MlpP mesh_out, elem_out;
  int64_t mesh_in_w = 0, elem_in_w = 0, mesh_out_w = 0, elem_out_w = 0;
};

template <class T>
struct AstParams {
  AstConfig cfg;
  Schema schema;
  AstLayout layout;
  ParamStore<T> store;

  template <class U>
  AstParams<U> cast() const {
    AstParams<U> out;
    out.cfg = cfg;
    out.schema = schema;
    out.layout = layout;
    out.store = store.template cast<U>();
    return out;
  }
};

template <class T>
AstParams<T> init_params(const AstConfig& cfg, const Schema& schema, uint64_t seed) {
  cfg.validate();
  AstParams<T> P;
  P.cfg = cfg;
  P.schema = schema;
  Rng rng(derive_seed(seed, 0xA57));
  ParamBuilder<T> b{P.store, rng};
  AstLayout& L = P.layout;

  L.mesh_in_w = schema.mesh_input_width();
  L.elem_in_w = schema.elem_input_width();
  L.mesh_out_w = schema.mesh_target_width();
  L.elem_out_w = schema.elem_target_width();
  require(L.mesh_in_w > 0, "init_params", "schema has no mesh input fields");
  require(L.mesh_out_w > 0, "init_params", "schema has no mesh target fields");
  L.has_elem_nodes = !schema.elem_input.empty() || schema.has_elem_head();
  L.has_elem_enc = L.elem_in_w > 0;
  L.has_elem_head = schema.has_elem_head();

  const int64_t h = cfg.hidden;
  L.mesh_enc = b.mlp("mesh_enc", L.mesh_in_w, cfg.mp_hidden, h);
  if (L.has_elem_enc) L.elem_enc = b.mlp("elem_enc", L.elem_in_w, cfg.mp_hidden, h);
  L.m2m_enc = b.mlp("m2m_enc", 8, cfg.mp_hidden, h);
  if (L.has_elem_nodes) {
    L.e2m_enc = b.mlp("e2m_enc", 8, cfg.mp_hidden, h);
    L.e2m_pass = message_pass_params(b, "e2m_pass", h, h, h, cfg.mp_hidden, h);
  }
  L.m2m_pass = message_pass_params(b, "m2m_pass", h, h, h, cfg.mp_hidden, h);
  L.m2c_pass = message_pass_params(b, "m2c_pass", 0, h, h, cfg.mp_hidden, h);

  if (cfg.l_ocnn == 0) {
    L.lift = b.linear("cell_lift", h, cfg.d_token, true);
    L.lower = b.linear("cell_lower", cfg.d_token, h, true);
  } else {
    for (int32_t i = 0; i < cfg.l_ocnn; ++i) {
      L.enc_ocnn.push_back(sparse_conv_params(b, "enc_ocnn." + std::to_string(i),
                                              i == 0 ? h : cfg.d_token, cfg.d_token));
    }
    for (int32_t i = 0; i < cfg.l_ocnn; ++i) {
      L.dec_ocnn.push_back(sparse_conv_params(b, "dec_ocnn." + std::to_string(i), cfg.d_token,
                                              i == cfg.l_ocnn - 1 ? h : cfg.d_token));
    }
  }

  L.pos = b.pos_emb("pos_emb", nn::fourier_width(3), cfg.d_token);
  L.enc_cross = b.cross_block("enc_cross", cfg.d_token, cfg.heads(), cfg.head_dim, cfg.ffn_hidden);
  for (int32_t i = 0; i < cfg.L_SA; ++i)
    L.sa.push_back(b.self_block("sa." + std::to_string(i), cfg.d_token, cfg.heads(), cfg.head_dim,
                                cfg.ffn_hidden));
  L.dec_cross = b.cross_block("dec_cross", cfg.d_token, cfg.heads(), cfg.head_dim, cfg.ffn_hidden);

  L.mesh_out = b.mlp("mesh_out", 2 * h, cfg.out_hidden, L.mesh_out_w);
  if (L.has_elem_head) {
    L.m2e_pass = message_pass_params(b, "m2e_pass", 0, 2 * h, h, cfg.mp_hidden, h);
    L.elem_out = b.mlp("elem_out", h, cfg.out_hidden, L.elem_out_w);
  }
  return P;
}

// Per-frame index structures: the octree, conv plans, receiver groupings and
// the FPS-selected token queries. Everything here depends only on positions
// and topology, never on features.
struct FrameCtx {
  CellSet cells;
  std::vector<ConvPlan> enc_plans, dec_plans;
  std::vector<int32_t> token_queries;  // length n_tokens, wrapped FPS order
  Csr m2m_csr, e2m_csr, m2e_csr, node_csr;
  int64_t n_mesh = 0, n_elem = 0;
};

template <class T>
FrameCtx build_frame_ctx(const AstConfig& cfg, const HeteroGraph<T>& g) {
  cfg.validate();
  FrameCtx ctx;
  ctx.n_mesh = g.n_mesh();
  ctx.n_elem = g.n_elem();
  ctx.cells = build_cell_set(g.mesh_pos, cfg.L_cell, cfg.token_level());
  for (int32_t i = 0; i < cfg.l_ocnn; ++i)
    ctx.enc_plans.push_back(build_conv_plan(ctx.cells, cfg.L_cell - i, cfg.L_cell - i - 1));
  for (int32_t i = 0; i < cfg.l_ocnn; ++i)
    ctx.dec_plans.push_back(
        build_transposed_plan(ctx.cells, cfg.token_level() + i, cfg.token_level() + i + 1));

  const CellSet::Level& tok = ctx.cells.level(cfg.token_level());
  const int64_t k = std::min<int64_t>(cfg.n_tokens, tok.size());
  const int64_t start = fps_start_by_key(tok.keys);
  std::vector<int32_t> order = fps(tok.centers, k, start);
  ctx.token_queries.resize(static_cast<size_t>(cfg.n_tokens));
  for (int64_t i = 0; i < cfg.n_tokens; ++i)
    ctx.token_queries[static_cast<size_t>(i)] = order[static_cast<size_t>(i % k)];

  ctx.m2m_csr = group_by(g.m2m_recv, ctx.n_mesh);
  if (ctx.n_elem > 0) {
    ctx.e2m_csr = group_by(g.e2m_recv, ctx.n_mesh);
    ctx.m2e_csr = group_by(g.m2e_recv, ctx.n_elem);
  }
  ctx.node_csr = identity_csr(ctx.n_mesh);
  return ctx;
}

// ---- spec-facing stages (tape) ---------------------------------------------

// PosEmb then CrossAttn(FPS queries, embedded cells). Returns the tokens and
// exposes the positionally-embedded cell features (reused by detokenize).
template <class T>
typename Tape<T>::Var tokenize(Tape<T>& tp, const AstParams<T>& P, const BoundParams<T>& bp,
                               const FrameCtx& ctx, typename Tape<T>::Var v_cell,
                               typename Tape<T>::Var* vtilde_out, double dropout = 0,
                               Rng* rng = nullptr) {
  require(tp.val(v_cell).rows() == ctx.cells.cells_at(P.cfg.token_level()), "tokenize",
          "cell feature count mismatch (empty cell set?)");
  auto vtilde = nn::pos_emb(tp, bp, P.layout.pos, v_cell, ctx.cells.level(P.cfg.token_level()).centers);
  if (vtilde_out) *vtilde_out = vtilde;
  auto queries = tp.gather_rows(vtilde, ctx.token_queries);
  return nn::cross_block(tp, bp, P.layout.enc_cross, queries, vtilde, static_cast<T>(dropout), rng);
}

template <class T>
typename Tape<T>::Var process_tokens(Tape<T>& tp, const AstParams<T>& P, const BoundParams<T>& bp,
                                     typename Tape<T>::Var h, double dropout = 0,
                                     Rng* rng = nullptr) {
  for (const auto& block : P.layout.sa)
    h = nn::self_block(tp, bp, block, h, static_cast<T>(dropout), rng);
  return h;
}

template <class T>
typename Tape<T>::Var detokenize(Tape<T>& tp, const AstParams<T>& P, const BoundParams<T>& bp,
                                 typename Tape<T>::Var vtilde, typename Tape<T>::Var h,
                                 double dropout = 0, Rng* rng = nullptr) {
  return nn::cross_block(tp, bp, P.layout.dec_cross, vtilde, h, static_cast<T>(dropout), rng);
}

// ---- full forward (tape) -----------------------------------------------------

template <class T>
struct GraphVars {
  typename Tape<T>::Var mesh_feats, elem_feats, m2m_feats, e2m_feats;
};

template <class T>
GraphVars<T> bind_graph(Tape<T>& tp, const HeteroGraph<T>& g, bool needs_grad = false) {
  GraphVars<T> gv;
  gv.mesh_feats = tp.leaf(g.mesh_feats, needs_grad);
  if (g.elem_feats.numel() > 0) gv.elem_feats = tp.leaf(g.elem_feats, needs_grad);
  gv.m2m_feats = tp.leaf(g.m2m_feats, needs_grad);
  if (g.e2m_feats.rows() > 0) gv.e2m_feats = tp.leaf(g.e2m_feats, needs_grad);
  return gv;
}

template <class T>
struct ForwardVars {
  typename Tape<T>::Var mesh_pred;
  typename Tape<T>::Var elem_pred;  // invalid without an element head
  typename Tape<T>::Var tokens;     // n_tokens x d_token
};

template <class T>
ForwardVars<T> forward(Tape<T>& tp, const AstParams<T>& P, const BoundParams<T>& bp,
                       const FrameCtx& ctx, const HeteroGraph<T>& g, const GraphVars<T>& gv,
                       double dropout = 0, Rng* rng = nullptr) {
  const AstLayout& L = P.layout;
  auto stage = [](const char* name, auto fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(std::string("forward/") + name, e.what());
    }
  };

  auto mesh_emb0 =
      stage("encode_graph", [&] { return nn::mlp(tp, bp, L.mesh_enc, gv.mesh_feats); });
  auto v_m = mesh_emb0;

  typename Tape<T>::Var elem_emb;
  if (ctx.n_elem > 0 && L.has_elem_nodes) {
    elem_emb = L.has_elem_enc
                   ? nn::mlp(tp, bp, L.elem_enc, gv.elem_feats)
                   : tp.constant(Tensor<T>::zeros({ctx.n_elem, P.cfg.hidden}));
    v_m = stage("e2m_pass", [&] {
      auto e_emb = nn::mlp(tp, bp, L.e2m_enc, gv.e2m_feats);
      return message_pass(tp, bp, L.e2m_pass, g.e2m_send, g.e2m_recv, ctx.e2m_csr, e_emb, elem_emb,
                          v_m);
    });
  }
  if (!g.m2m_send.empty()) {
    v_m = stage("m2m_pass", [&] {
      auto e_emb = nn::mlp(tp, bp, L.m2m_enc, gv.m2m_feats);
      return message_pass(tp, bp, L.m2m_pass, g.m2m_send, g.m2m_recv, ctx.m2m_csr, e_emb, v_m, v_m);
    });
  }

  auto v_c = stage("mesh_to_cell", [&] {
    auto cell0 = mesh_to_cell_init(tp, ctx.cells, v_m);
    typename Tape<T>::Var none;
    return message_pass(tp, bp, L.m2c_pass, identity_csr(ctx.n_mesh).perm, ctx.cells.node_to_cell,
                        ctx.cells.cell_to_nodes, none, v_m, cell0);
  });

  typename Tape<T>::Var v_tok = stage("ocnn", [&] {
    if (P.cfg.l_ocnn == 0) return nn::linear(tp, bp, L.lift, v_c);
    return ocnn(tp, bp, L.enc_ocnn, ctx.enc_plans, v_c);
  });

  typename Tape<T>::Var vtilde;
  auto tokens = stage("tokenize", [&] { return tokenize(tp, P, bp, ctx, v_tok, &vtilde, dropout, rng); });
  auto h = stage("process", [&] { return process_tokens(tp, P, bp, tokens, dropout, rng); });
  auto dec = stage("detokenize", [&] { return detokenize(tp, P, bp, vtilde, h, dropout, rng); });

  auto cells_back = stage("ocnn_transposed", [&] {
    if (P.cfg.l_ocnn == 0) return nn::linear(tp, bp, L.lower, dec);
    return ocnn(tp, bp, L.dec_ocnn, ctx.dec_plans, dec);
  });

  auto v_m2 = stage("c2m_pass", [&] {
    typename Tape<T>::Var none;
    std::vector<int32_t> recv_idx(static_cast<size_t>(ctx.n_mesh));
    for (int64_t i = 0; i < ctx.n_mesh; ++i) recv_idx[static_cast<size_t>(i)] = static_cast<int32_t>(i);
    return message_pass(tp, bp, L.c2m_pass, ctx.cells.node_to_cell, recv_idx, ctx.node_csr, none,
                        cells_back, v_m);
  });

  ForwardVars<T> out;
  out.tokens = tokens;
  auto cat = tp.concat_cols(v_m2, mesh_emb0);
  out.mesh_pred = stage("mesh_head", [&] { return nn::mlp(tp, bp, L.mesh_out, cat); });

  if (L.has_elem_head) {
    require(ctx.n_elem > 0, "forward/elem_head", "schema has an element head but no elements");
    out.elem_pred = stage("elem_head", [&] {
      typename Tape<T>::Var none;
      auto v_e = message_pass(tp, bp, L.m2e_pass, g.m2e_send, g.m2e_recv, ctx.m2e_csr, none, cat,
                              elem_emb);
      return nn::mlp(tp, bp, L.elem_out, v_e);
    });
  }
  return out;
}

// ---- full forward (eval; plain tensors, blocked kernels, no dropout) --------

template <class T>
struct ForwardOut {
  Tensor<T> mesh_pred, elem_pred, tokens;
};

template <class T>
ForwardOut<T> forward_eval(const AstParams<T>& P, const FrameCtx& ctx, const HeteroGraph<T>& g) {
  const AstLayout& L = P.layout;
  const ParamStore<T>& ps = P.store;

  Tensor<T> mesh_emb0 = nn::mlp_fwd(ps, L.mesh_enc, g.mesh_feats);
  Tensor<T> v_m = mesh_emb0;
  Tensor<T> elem_emb;
  if (ctx.n_elem > 0 && L.has_elem_nodes) {
    elem_emb = L.has_elem_enc ? nn::mlp_fwd(ps, L.elem_enc, g.elem_feats)
                              : Tensor<T>::zeros({ctx.n_elem, P.cfg.hidden});
    Tensor<T> e_emb = nn::mlp_fwd(ps, L.e2m_enc, g.e2m_feats);
    v_m = message_pass_fwd(ps, L.e2m_pass, g.e2m_send, g.e2m_recv, &e_emb, elem_emb, v_m);
  }
  if (!g.m2m_send.empty()) {
    Tensor<T> e_emb = nn::mlp_fwd(ps, L.m2m_enc, g.m2m_feats);
    v_m = message_pass_fwd(ps, L.m2m_pass, g.m2m_send, g.m2m_recv, &e_emb, v_m, v_m);
  }

  Tensor<T> cell0 = mesh_to_cell_init_fwd(ctx.cells, v_m);
  std::vector<int32_t> node_idx(static_cast<size_t>(ctx.n_mesh));
  for (int64_t i = 0; i < ctx.n_mesh; ++i) node_idx[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  Tensor<T> v_c =
      message_pass_fwd<T>(ps, L.m2c_pass, node_idx, ctx.cells.node_to_cell, nullptr, v_m, cell0);

  Tensor<T> v_tok = P.cfg.l_ocnn == 0 ? nn::linear_fwd(ps, L.lift, v_c)
                                      : ocnn_fwd(ps, L.enc_ocnn, ctx.enc_plans, std::move(v_c));

  Tensor<T> vtilde =
      nn::pos_emb_fwd(ps, L.pos, v_tok, ctx.cells.level(P.cfg.token_level()).centers);
  Tensor<T> queries;
  kern::gather_rows(vtilde, ctx.token_queries, queries);
  Tensor<T> tokens = nn::cross_block_fwd(ps, L.enc_cross, queries, vtilde);
  for (const auto& block : L.sa) tokens = nn::self_block_fwd(ps, block, tokens);
  Tensor<T> dec = nn::cross_block_fwd(ps, L.dec_cross, vtilde, tokens);

  Tensor<T> cells_back = P.cfg.l_ocnn == 0
                             ? nn::linear_fwd(ps, L.lower, dec)
                             : ocnn_fwd(ps, L.dec_ocnn, ctx.dec_plans, std::move(dec));

  Tensor<T> v_m2 = message_pass_fwd<T>(ps, L.c2m_pass, ctx.cells.node_to_cell, node_idx, nullptr,
                                    cells_back, v_m);

  Tensor<T> cat({ctx.n_mesh, 2 * P.cfg.hidden});
  parallel_for(ctx.n_mesh, [&](int64_t i) {
    T* row = cat.row_ptr(i);
    const T* a = v_m2.row_ptr(i);
    const T* b = mesh_emb0.row_ptr(i);
    for (int64_t j = 0; j < P.cfg.hidden; ++j) row[j] = a[j];
    for (int64_t j = 0; j < P.cfg.hidden; ++j) row[P.cfg.hidden + j] = b[j];
  });

  ForwardOut<T> out;
  out.tokens = std::move(tokens);
  out.mesh_pred = nn::mlp_fwd(ps, L.mesh_out, cat);
  if (L.has_elem_head) {
    Tensor<T> v_e =
        message_pass_fwd<T>(ps, L.m2e_pass, g.m2e_send, g.m2e_recv, nullptr, cat, elem_emb);
    out.elem_pred = nn::mlp_fwd(ps, L.elem_out, v_e);
  }
  return out;
}

}  // namespace ast
