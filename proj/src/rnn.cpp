#include "advdrop/rnn.hpp"

#include <cmath>
#include <limits>

namespace advdrop {

static Tensor glorot(int rows, int cols, Rng& rng) {
  Tensor t({rows, cols});
  const double r = std::sqrt(6.0 / (rows + cols));
  for (double& v : t.values) v = rng.uniform(-r, r);
  return t;
}

RnnParams RnnParams::init(CellKind kind, int input_dim, int hidden, int output_dim,
                          Rng& rng) {
  if (input_dim < 1 || hidden < 1 || output_dim < 1)
    fail("RnnParams::init: dimensions must be positive");
  RnnParams p;
  p.kind = kind;
  p.input_dim = input_dim;
  p.hidden = hidden;
  p.output_dim = output_dim;
  auto push = [&](const std::string& name, Tensor t) {
    p.names.push_back(name);
    p.tensors.push_back(std::move(t));
  };
  if (kind == CellKind::simple) {
    push("W_h", glorot(input_dim, hidden, rng));
    push("U_h", glorot(hidden, hidden, rng));
    push("b_h", Tensor::zeros({hidden}));
  } else {
    static const char* gate[] = {"i", "f", "g", "o"};
    for (int gi = 0; gi < 4; ++gi) {
      push(std::string("W_") + gate[gi], glorot(input_dim, hidden, rng));
      push(std::string("U_") + gate[gi], glorot(hidden, hidden, rng));
      // forget-gate bias starts at 1 so early cells remember
      push(std::string("b_") + gate[gi],
           gi == 1 ? Tensor::full({hidden}, 1.0) : Tensor::zeros({hidden}));
    }
  }
  push("W_out", glorot(hidden, output_dim, rng));
  push("b_out", Tensor::zeros({output_dim}));
  return p;
}

ParamNodeIds insert_params(TapeGraph& g, const RnnParams& params) {
  ParamNodeIds pn;
  pn.ids.reserve(params.tensors.size());
  for (const Tensor& t : params.tensors) pn.ids.push_back(g.leaf(t));
  return pn;
}

int dropped_hidden(TapeGraph& g, int h_prev, int mask_node, double p, int batch_rows) {
  if (1.0 - p <= std::numeric_limits<double>::epsilon())
    fail("dropped_hidden: keep probability 1-p vanishes (p = " + std::to_string(p) + ")");
  int masked = g.mul(h_prev, g.broadcast_row(mask_node, batch_rows));
  if (p != 0.0) masked = g.scale(masked, 1.0 / (1.0 - p));
  return masked;
}

// x W + h U + broadcast(b)
static int affine(TapeGraph& g, int x, int w, int h, int u, int b, int rows) {
  const int xw = g.matmul(x, w);
  const int hu = g.matmul(h, u);
  return g.add(g.add(xw, hu), g.broadcast_row(b, rows));
}

int rnn_step(TapeGraph& g, int x_t, int h_prev, int mask_node, const ParamNodeIds& pn,
             const RnnParams& params, double p) {
  (void)params;
  const int rows = g.value(x_t).rows();
  const int hd = dropped_hidden(g, h_prev, mask_node, p, rows);
  return g.tanh(affine(g, x_t, pn.ids[0], hd, pn.ids[1], pn.ids[2], rows));
}

LstmStepOut lstm_step(TapeGraph& g, int x_t, int h_prev, int c_prev, int mask_node,
                      const ParamNodeIds& pn, const RnnParams& params, double p) {
  const int rows = g.value(x_t).rows();
  const int hd = dropped_hidden(g, h_prev, mask_node, p, rows);
  auto gate_pre = [&](int gate) {
    return affine(g, x_t, pn.ids[params.gate_index(gate, 0)], hd,
                  pn.ids[params.gate_index(gate, 1)],
                  pn.ids[params.gate_index(gate, 2)], rows);
  };
  const int i = g.sigmoid(gate_pre(0));
  const int f = g.sigmoid(gate_pre(1));
  const int cand = g.tanh(gate_pre(2));
  const int o = g.sigmoid(gate_pre(3));
  LstmStepOut out;
  out.c = g.add(g.mul(i, cand), g.mul(f, c_prev));
  out.h = g.mul(o, g.tanh(out.c));
  return out;
}

ForwardTrace forward_sequence(TapeGraph& g, const ParamNodeIds& pn,
                              const RnnParams& params, const SequenceBatch& batch,
                              int mask_node, double p) {
  if (batch.steps() < 1) fail("forward_sequence: empty sequence");
  const int rows = batch.batch();

  ForwardTrace trace;
  trace.mask_id = mask_node;
  int h = g.leaf(Tensor::zeros({rows, params.hidden}));
  int c = params.kind == CellKind::lstm ? g.leaf(Tensor::zeros({rows, params.hidden})) : -1;

  const int w_out = pn.ids[params.w_out_index()];
  const int b_out = pn.ids[params.b_out_index()];
  for (int t = 0; t < batch.steps(); ++t) {
    const int x_t = g.leaf(batch.inputs[static_cast<size_t>(t)]);
    if (params.kind == CellKind::simple) {
      h = rnn_step(g, x_t, h, mask_node, pn, params, p);
    } else {
      const LstmStepOut s = lstm_step(g, x_t, h, c, mask_node, pn, params, p);
      h = s.h;
      c = s.c;
    }
    trace.hidden_ids.push_back(h);
    const int logits = g.add(g.matmul(h, w_out), g.broadcast_row(b_out, rows));
    trace.pred_ids.push_back(g.softmax(logits));
  }
  return trace;
}

}  // namespace advdrop
