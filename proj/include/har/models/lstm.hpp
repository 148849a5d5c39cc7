// SPDX-License-Identifier: Apache-2.0
//
// Vanilla LSTM (no peepholes), stacked forward or bidirectional, with a
// softmax group shared across timesteps and exact backpropagation through
// time inside a window.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "har/models/parameters.hpp"
#include "har/tensor.hpp"

namespace har {

enum class Direction { forward, bidirectional };

/// Row blocks of the stacked gate matrix, in storage order.
enum class Gate : std::size_t { input = 0, forget = 1, output = 2, candidate = 3 };

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// Parameters of one LSTM track.
///
/// `weights` is 4H×(in+H): for each gate a block of H rows whose first `in`
/// columns act on x_t and last H columns on h_{t-1}. Row i of the matrix is
/// the full incoming weight vector of one gate unit.
template <typename T>
struct LstmCellParams {
  const Tensor<T>& weights;
  std::span<const T> bias;

  std::size_t units() const { return weights.extent(0) / 4; }
  std::size_t input_size() const { return weights.extent(1) - units(); }
};

/// Optional scratch output of a cell step: z = [x; h_prev] and the activated
/// gates (i, f, o, g).
template <typename T>
struct LstmStepRecord {
  T* z = nullptr;
  T* gates = nullptr;
};

/// One vanilla LSTM step:
///   i=σ(W_i x+U_i h+b_i)  f=σ(W_f x+U_f h+b_f)  o=σ(W_o x+U_o h+b_o)
///   g=tanh(W_g x+U_g h+b_g)  c=f⊙c_prev+i⊙g  h=o⊙tanh(c)
template <typename T>
void lstm_cell_step(const LstmCellParams<T>& p, std::span<const T> x,
                    std::span<const T> h_prev, std::span<const T> c_prev,
                    std::span<T> h, std::span<T> c,
                    LstmStepRecord<T> record = {}) {
  const std::size_t units = p.units(), in = p.input_size();
  if (x.size() != in || h_prev.size() != units || c_prev.size() != units ||
      h.size() != units || c.size() != units || p.bias.size() != 4 * units) {
    throw InvalidInput("lstm_cell_step: width mismatch");
  }
  const std::size_t zn = in + units;
  std::vector<T> z_local, gates_local;
  T* z = record.z;
  T* gates = record.gates;
  if (!z) {
    z_local.resize(zn);
    z = z_local.data();
  }
  if (!gates) {
    gates_local.resize(4 * units);
    gates = gates_local.data();
  }
  std::copy(x.begin(), x.end(), z);
  std::copy(h_prev.begin(), h_prev.end(), z + in);
  const T* w = p.weights.data();
  for (std::size_t r = 0; r < 4 * units; ++r) {
    const T* wr = w + r * zn;
    T acc = p.bias[r];
    for (std::size_t j = 0; j < zn; ++j) acc += wr[j] * z[j];
    gates[r] = acc;
  }
  for (std::size_t k = 0; k < units; ++k) {
    const T ig = sigmoid(gates[k]);
    const T fg = sigmoid(gates[units + k]);
    const T og = sigmoid(gates[2 * units + k]);
    const T gg = std::tanh(gates[3 * units + k]);
    gates[k] = ig;
    gates[units + k] = fg;
    gates[2 * units + k] = og;
    gates[3 * units + k] = gg;
    const T ck = fg * c_prev[k] + ig * gg;
    c[k] = ck;
    h[k] = og * std::tanh(ck);
  }
}

/// Carried (h, c) for every layer of a forward model.
template <typename T>
struct LstmState {
  std::vector<std::vector<T>> h;
  std::vector<std::vector<T>> c;

  void zero() {
    for (auto& v : h) std::fill(v.begin(), v.end(), T(0));
    for (auto& v : c) std::fill(v.begin(), v.end(), T(0));
  }

  bool is_zero() const {
    for (const auto* set : {&h, &c})
      for (const auto& v : *set)
        for (T x : v)
          if (x != T(0)) return false;
    return true;
  }

  friend bool operator==(const LstmState&, const LstmState&) = default;
};

/// Per-timestep intermediates of one track, indexed by time (not by
/// processing order).
template <typename T>
struct LstmTrackTrace {
  std::size_t steps = 0;
  std::vector<T> z;       // steps × (in+H)
  std::vector<T> gates;   // steps × 4H, activated
  std::vector<T> c_prev;  // steps × H
  std::vector<T> c;       // steps × H
  std::vector<std::uint8_t> reset_before;
};

template <typename T>
struct LstmTrace {
  std::vector<std::vector<LstmTrackTrace<T>>> layers;  // [layer][track]
  Tensor<T> top;            // steps × width of the top layer
  Tensor<T> probabilities;  // steps × classes
};

template <typename T>
class LstmModel {
 public:
  LstmModel(std::size_t input_size, std::size_t classes, std::size_t layers,
            std::size_t units, Direction direction, Rng& init_rng)
      : input_size_(input_size),
        classes_(classes),
        layers_(layers),
        units_(units),
        direction_(direction) {
    if (layers < 1 || units == 0 || input_size == 0 || classes < 2) {
      throw ConfigError("lstm: needs ≥1 layer, ≥1 unit, inputs and ≥2 classes");
    }
    const std::size_t tracks = track_count();
    std::size_t in = input_size;
    for (std::size_t l = 0; l < layers; ++l) {
      for (std::size_t k = 0; k < tracks; ++k) {
        const std::string n = "layer" + std::to_string(l) +
                              (k == 0 ? ".fwd" : ".bwd");
        const std::size_t w = params_.add(n + ".weight", {4 * units, in + units},
                                          true);
        const std::size_t b = params_.add(n + ".bias", {4 * units}, false);
        glorot_uniform(params_[w], init_rng);
        // Forget gate starts open.
        for (std::size_t u = 0; u < units; ++u) params_[b].value[units + u] = T(1);
        weights_.push_back(w);
        biases_.push_back(b);
      }
      in = units * tracks;
    }
    out_weight_ = params_.add("softmax.weight", {classes, in}, true);
    out_bias_ = params_.add("softmax.bias", {classes}, false);
    glorot_uniform(params_[out_weight_], init_rng);
  }

  std::size_t input_size() const noexcept { return input_size_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t layers() const noexcept { return layers_; }
  std::size_t units() const noexcept { return units_; }
  Direction direction() const noexcept { return direction_; }
  std::size_t track_count() const noexcept {
    return direction_ == Direction::bidirectional ? 2 : 1;
  }

  ParameterSet<T>& parameters() noexcept { return params_; }
  const ParameterSet<T>& parameters() const noexcept { return params_; }

  LstmCellParams<T> cell(std::size_t layer, std::size_t track = 0) const {
    const std::size_t k = layer * track_count() + track;
    return {params_[weights_[k]].value, params_[biases_[k]].value.values()};
  }

  LstmState<T> zero_state() const {
    LstmState<T> s;
    s.h.assign(layers_, std::vector<T>(units_, T(0)));
    s.c.assign(layers_, std::vector<T>(units_, T(0)));
    return s;
  }

  /// Runs a forward-direction model over `inputs` (steps×input_size) starting
  /// from `state`, which is left holding the final (h, c) of every layer.
  /// `boundaries[t] != 0` marks t as the first sample of a recording: the
  /// state is zeroed before that step. Returns steps×classes probabilities.
  Tensor<T> forward_sequence(const Tensor<T>& inputs, LstmState<T>& state,
                             std::span<const std::uint8_t> boundaries = {},
                             LstmTrace<T>* trace = nullptr) const {
    if (direction_ != Direction::forward) {
      throw InvalidInput("forward_sequence: model is bidirectional");
    }
    check_inputs(inputs, boundaries);
    if (state.h.size() != layers_ || state.c.size() != layers_) {
      throw InvalidInput("forward_sequence: state has wrong layer count");
    }
    const std::size_t steps = inputs.extent(0);
    if (trace) trace->layers.assign(layers_, std::vector<LstmTrackTrace<T>>(1));
    Tensor<T> layer_in = inputs;
    for (std::size_t l = 0; l < layers_; ++l) {
      Tensor<T> layer_out({steps, units_});
      run_track(l, 0, layer_in, boundaries, false, state.h[l], state.c[l],
                layer_out, 0, trace ? &trace->layers[l][0] : nullptr);
      layer_in = std::move(layer_out);
    }
    return emit(layer_in, trace);
  }

  /// Bidirectional pass over a complete segment; both tracks start from zero.
  Tensor<T> forward_bidirectional(const Tensor<T>& inputs,
                                  std::span<const std::uint8_t> boundaries = {},
                                  LstmTrace<T>* trace = nullptr) const {
    if (direction_ != Direction::bidirectional) {
      throw InvalidInput("forward_bidirectional: model is forward-only");
    }
    check_inputs(inputs, boundaries);
    const std::size_t steps = inputs.extent(0);
    if (trace) trace->layers.assign(layers_, std::vector<LstmTrackTrace<T>>(2));
    Tensor<T> layer_in = inputs;
    for (std::size_t l = 0; l < layers_; ++l) {
      Tensor<T> layer_out({steps, 2 * units_});
      for (std::size_t k = 0; k < 2; ++k) {
        std::vector<T> h(units_, T(0)), c(units_, T(0));
        run_track(l, k, layer_in, boundaries, k == 1, h, c, layer_out,
                  k * units_, trace ? &trace->layers[l][k] : nullptr);
      }
      layer_in = std::move(layer_out);
    }
    return emit(layer_in, trace);
  }

  /// Accumulates scale·∂(Σ_t NLL_t)/∂θ for a recorded pass. Gradients stop
  /// at the start of the window and at every state reset inside it.
  void backward(const LstmTrace<T>& trace, std::span<const std::size_t> targets,
                T scale) {
    const std::size_t steps = trace.probabilities.extent(0);
    if (targets.size() != steps) {
      throw InvalidInput("lstm backward: target count mismatch");
    }
    const std::size_t top_width = trace.top.extent(1);
    Tensor<T> d_out({steps, top_width});
    auto& wy = params_[out_weight_];
    auto& by = params_[out_bias_];
    std::vector<T> dlogit(classes_);
    for (std::size_t t = 0; t < steps; ++t) {
      if (targets[t] >= classes_) {
        throw InvalidInput("lstm backward: label out of range");
      }
      for (std::size_t k = 0; k < classes_; ++k)
        dlogit[k] = trace.probabilities(t, k) * scale;
      dlogit[targets[t]] -= scale;
      kernels::affine_backward(wy.value, trace.top.row(t),
                               std::span<const T>(dlogit), wy.grad,
                               by.grad.values(), d_out.row(t));
    }
    const std::size_t tracks = track_count();
    for (std::size_t l = layers_; l-- > 0;) {
      const std::size_t in = l == 0 ? input_size_ : units_ * tracks;
      Tensor<T> d_in;
      if (l > 0) d_in = Tensor<T>({steps, in});
      for (std::size_t k = 0; k < tracks; ++k) {
        backward_track(l, k, trace.layers[l][k], d_out, k * units_, k == 1,
                       l > 0 ? &d_in : nullptr);
      }
      if (l > 0) d_out = std::move(d_in);
    }
  }

 private:
  void check_inputs(const Tensor<T>& inputs,
                    std::span<const std::uint8_t> boundaries) const {
    if (inputs.rank() != 2 || inputs.extent(1) != input_size_) {
      throw InvalidInput("lstm: expected steps×" + std::to_string(input_size_) +
                         " inputs, got " + inputs.shape_string());
    }
    if (!boundaries.empty() && boundaries.size() != inputs.extent(0)) {
      throw InvalidInput("lstm: boundary mask length mismatch");
    }
  }

  void run_track(std::size_t layer, std::size_t track, const Tensor<T>& in,
                 std::span<const std::uint8_t> boundaries, bool reverse,
                 std::vector<T>& h, std::vector<T>& c, Tensor<T>& out,
                 std::size_t out_offset, LstmTrackTrace<T>* trace) const {
    const LstmCellParams<T> p = cell(layer, track);
    const std::size_t steps = in.extent(0), H = units_;
    const std::size_t zn = p.weights.extent(1);
    std::vector<T> z(zn), gates(4 * H), h_new(H), c_new(H);
    if (trace) {
      trace->steps = steps;
      trace->z.assign(steps * zn, T(0));
      trace->gates.assign(steps * 4 * H, T(0));
      trace->c_prev.assign(steps * H, T(0));
      trace->c.assign(steps * H, T(0));
      trace->reset_before.assign(steps, 0);
    }
    for (std::size_t i = 0; i < steps; ++i) {
      const std::size_t t = reverse ? steps - 1 - i : i;
      bool reset = false;
      if (!boundaries.empty()) {
        reset = reverse ? (t + 1 < steps && boundaries[t + 1] != 0)
                        : boundaries[t] != 0;
      }
      if (reset) {
        std::fill(h.begin(), h.end(), T(0));
        std::fill(c.begin(), c.end(), T(0));
      }
      LstmStepRecord<T> rec{trace ? trace->z.data() + t * zn : z.data(),
                            trace ? trace->gates.data() + t * 4 * H
                                  : gates.data()};
      if (trace) {
        trace->reset_before[t] = reset ? 1 : 0;
        std::copy(c.begin(), c.end(), trace->c_prev.begin() + t * H);
      }
      lstm_cell_step(p, in.row(t), std::span<const T>(h), std::span<const T>(c),
                     std::span<T>(h_new), std::span<T>(c_new), rec);
      h.swap(h_new);
      c.swap(c_new);
      if (trace) std::copy(c.begin(), c.end(), trace->c.begin() + t * H);
      std::copy(h.begin(), h.end(), out.data() + t * out.extent(1) + out_offset);
    }
  }

  void backward_track(std::size_t layer, std::size_t track,
                      const LstmTrackTrace<T>& tr, const Tensor<T>& d_out,
                      std::size_t out_offset, bool reverse, Tensor<T>* d_in) {
    const std::size_t k = layer * track_count() + track;
    auto& w = params_[weights_[k]];
    auto& b = params_[biases_[k]];
    const std::size_t steps = tr.steps, H = units_;
    const std::size_t zn = w.value.extent(1), in = zn - H;
    std::vector<T> dh_carry(H, T(0)), dc_carry(H, T(0)), dpre(4 * H), dz(zn);
    for (std::size_t i = 0; i < steps; ++i) {
      // Reverse processing order.
      const std::size_t t = reverse ? i : steps - 1 - i;
      const T* g = tr.gates.data() + t * 4 * H;
      const T* cp = tr.c_prev.data() + t * H;
      const T* cc = tr.c.data() + t * H;
      const T* dout = d_out.data() + t * d_out.extent(1) + out_offset;
      for (std::size_t u = 0; u < H; ++u) {
        const T ig = g[u], fg = g[H + u], og = g[2 * H + u], gg = g[3 * H + u];
        const T tc = std::tanh(cc[u]);
        const T dh = dout[u] + dh_carry[u];
        const T dc = dc_carry[u] + dh * og * (T(1) - tc * tc);
        dpre[u] = dc * gg * ig * (T(1) - ig);
        dpre[H + u] = dc * cp[u] * fg * (T(1) - fg);
        dpre[2 * H + u] = dh * tc * og * (T(1) - og);
        dpre[3 * H + u] = dc * ig * (T(1) - gg * gg);
        dc_carry[u] = dc * fg;
      }
      const T* z = tr.z.data() + t * zn;
      std::fill(dz.begin(), dz.end(), T(0));
      const std::size_t dz_from = d_in ? 0 : in;
      for (std::size_t r = 0; r < 4 * H; ++r) {
        const T gr = dpre[r];
        if (gr == T(0)) continue;
        b.grad[r] += gr;
        T* dwr = w.grad.data() + r * zn;
        const T* wr = w.value.data() + r * zn;
        for (std::size_t j = 0; j < zn; ++j) dwr[j] += gr * z[j];
        for (std::size_t j = dz_from; j < zn; ++j) dz[j] += gr * wr[j];
      }
      if (d_in) {
        T* di = d_in->data() + t * in;
        for (std::size_t j = 0; j < in; ++j) di[j] += dz[j];
      }
      if (tr.reset_before[t]) {
        std::fill(dh_carry.begin(), dh_carry.end(), T(0));
        std::fill(dc_carry.begin(), dc_carry.end(), T(0));
      } else {
        std::copy(dz.begin() + in, dz.end(), dh_carry.begin());
      }
    }
  }

  Tensor<T> emit(const Tensor<T>& top, LstmTrace<T>* trace) const {
    const std::size_t steps = top.extent(0);
    Tensor<T> probs({steps, classes_});
    const auto& wy = params_[out_weight_].value;
    const auto by = params_[out_bias_].value.values();
    for (std::size_t t = 0; t < steps; ++t) {
      kernels::affine(wy, by, top.row(t), probs.row(t));
      softmax_inplace(probs.row(t));
    }
    if (trace) {
      trace->top = top;
      trace->probabilities = probs;
    }
    return probs;
  }

  std::size_t input_size_;
  std::size_t classes_;
  std::size_t layers_;
  std::size_t units_;
  Direction direction_;
  ParameterSet<T> params_;
  std::vector<std::size_t> weights_;  // [layer * tracks + track]
  std::vector<std::size_t> biases_;
  std::size_t out_weight_ = 0;
  std::size_t out_bias_ = 0;
};

}  // namespace har
