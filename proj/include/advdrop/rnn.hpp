#pragma once

#include <string>
#include <vector>

#include "advdrop/rng.hpp"
#include "advdrop/tape.hpp"
#include "advdrop/tensor.hpp"

namespace advdrop {

enum class CellKind { simple, lstm };

// Parameter bundle for one recurrent model plus its softmax readout.
// `tensors`/`names` run in a fixed order so optimizers and checkpoints can
// treat parameters uniformly.
//   simple: W_h, U_h, b_h, W_out, b_out
//   lstm:   (W, U, b) per gate in order input, forget, cell, output,
//           then W_out, b_out
struct RnnParams {
  CellKind kind = CellKind::simple;
  int input_dim = 0;
  int hidden = 0;
  int output_dim = 0;
  std::vector<Tensor> tensors;
  std::vector<std::string> names;

  static RnnParams init(CellKind kind, int input_dim, int hidden, int output_dim,
                        Rng& rng);

  int w_out_index() const { return kind == CellKind::simple ? 3 : 12; }
  int b_out_index() const { return kind == CellKind::simple ? 4 : 13; }
  // gate: 0=input, 1=forget, 2=cell, 3=output; part: 0=W, 1=U, 2=b
  int gate_index(int gate, int part) const { return 3 * gate + part; }
};

enum class TaskKind { final_step_classification, per_step_prediction };

struct SequenceBatch {
  std::vector<Tensor> inputs;                // T tensors of shape [B x D_in]
  std::vector<int> final_labels;             // [B] for final-step tasks
  std::vector<std::vector<int>> step_labels; // T x [B] for per-step tasks
  TaskKind task = TaskKind::final_step_classification;

  int steps() const { return static_cast<int>(inputs.size()); }
  int batch() const { return inputs.empty() ? 0 : inputs[0].shape[0]; }
};

// Node ids of the parameter leaves, parallel to RnnParams::tensors.
struct ParamNodeIds {
  std::vector<int> ids;
};

ParamNodeIds insert_params(TapeGraph& g, const RnnParams& params);

// Hidden states and softmax predictions of one unrolled pass, as node ids
// into the graph that produced them. The mask leaf is shared by every step.
struct ForwardTrace {
  std::vector<int> hidden_ids;  // h_1..h_T, each [B x H]
  std::vector<int> pred_ids;    // p_1..p_T, each [B x M]
  int mask_id = -1;
};

// d(h, eps) = h * eps / (1 - p); p = 0 leaves the activations unscaled.
int dropped_hidden(TapeGraph& g, int h_prev, int mask_node, double p, int batch_rows);

// h_t = tanh(x_t W_h + d(h_{t-1}, eps) U_h + b_h)
int rnn_step(TapeGraph& g, int x_t, int h_prev, int mask_node, const ParamNodeIds& pn,
             const RnnParams& params, double p);

// Standard LSTM gates; the dropped h_{t-1} feeds all four gate matmuls.
struct LstmStepOut {
  int h = -1;
  int c = -1;
};
LstmStepOut lstm_step(TapeGraph& g, int x_t, int h_prev, int c_prev, int mask_node,
                      const ParamNodeIds& pn, const RnnParams& params, double p);

// Unrolls the batch from h_0 = c_0 = 0, consuming the same mask leaf at
// every step, and emits softmax predictions at every step.
ForwardTrace forward_sequence(TapeGraph& g, const ParamNodeIds& pn,
                              const RnnParams& params, const SequenceBatch& batch,
                              int mask_node, double p);

}  // namespace advdrop
