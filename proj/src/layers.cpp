#include "csasr/layers.hpp"

#include <cmath>

namespace csasr::nn {

using ag::Tape;
using ag::Tensor;

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv1d: return "conv1d";
        case LayerKind::Blstm: return "blstm";
        case LayerKind::Fc: return "fc";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "conv1d") return LayerKind::Conv1d;
    if (name == "blstm") return LayerKind::Blstm;
    if (name == "fc") return LayerKind::Fc;
    throw ConfigError("unknown layer kind '" + name + "'");
}

void LayerSpec::validate() const {
    if (input_dim <= 0 || output_dim <= 0) {
        throw ConfigError(std::string(layer_kind_name(kind)) + " layer dims must be positive, got " +
                          std::to_string(input_dim) + " -> " + std::to_string(output_dim));
    }
    if (kind == LayerKind::Conv1d) {
        if (kernel_width <= 0 || kernel_width % 2 == 0) {
            throw ConfigError("conv kernel_width must be odd and positive, got " +
                              std::to_string(kernel_width));
        }
        if (stride <= 0) throw ConfigError("conv stride must be positive");
    }
}

std::string LayerSpec::describe() const {
    std::string s = std::string(layer_kind_name(kind)) + "(" + std::to_string(input_dim) + "->" +
                    std::to_string(output_dim);
    if (kind == LayerKind::Conv1d) {
        s += ",k" + std::to_string(kernel_width) + ",s" + std::to_string(stride);
    }
    s += ")";
    return s;
}

namespace {
Tensor init_weight(int fan_in, int fan_out, rng::Rng& rng) {
    const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform({fan_in, fan_out}, k, rng, true);
}
}  // namespace

// ---------------------------------------------------------------------------
// Conv1d

Conv1d::Conv1d(const LayerSpec& s, rng::Rng& rng) : spec(s) {
    spec.validate();
    weight = init_weight(spec.kernel_width * spec.input_dim, spec.output_dim, rng);
    bias = Tensor::zeros({1, spec.output_dim}, true);
}

int Conv1d::output_length(int t, const LayerSpec& s) {
    if (t < s.kernel_width) {
        throw DimensionError("sequence too short for convolution: T=" + std::to_string(t) +
                             " < kernel_width=" + std::to_string(s.kernel_width));
    }
    return (t - s.kernel_width) / s.stride + 1;
}

Tensor Conv1d::forward(Tape& tape, const Tensor& x) const {
    ag::check_2d(x, "conv1d input");
    if (ag::cols(x) != spec.input_dim) {
        throw DimensionError("conv1d: input dim " + std::to_string(ag::cols(x)) +
                             " != layer input_dim " + std::to_string(spec.input_dim));
    }
    const int t_out = output_length(ag::rows(x), spec);
    std::vector<Tensor> rows_out;
    rows_out.reserve(static_cast<std::size_t>(t_out));
    for (int i = 0; i < t_out; ++i) {
        Tensor window = tape.slice_rows(x, i * spec.stride, spec.kernel_width);
        Tensor flat = tape.reshape(window, {1, spec.kernel_width * spec.input_dim});
        rows_out.push_back(tape.add(tape.matmul(flat, weight), bias));
    }
    Tensor pre = tape.concat_rows(rows_out);
    return apply_tanh ? tape.tanh(pre) : pre;
}

void Conv1d::collect(const std::string& prefix, std::map<std::string, Tensor>& out) const {
    out.emplace(prefix + ".weight", weight);
    out.emplace(prefix + ".bias", bias);
}

// ---------------------------------------------------------------------------
// Blstm

namespace {
LstmDirection init_direction(const LayerSpec& s, rng::Rng& rng) {
    LstmDirection d;
    const int h = s.output_dim;
    d.wx = init_weight(s.input_dim, 4 * h, rng);
    d.wh = init_weight(h, 4 * h, rng);
    std::vector<double> b(static_cast<std::size_t>(4 * h), 0.0);
    for (int j = h; j < 2 * h; ++j) b[static_cast<std::size_t>(j)] = 1.0;  // forget gate
    d.b = Tensor({1, 4 * h}, std::move(b), true);
    return d;
}

// One directional pass; writes hidden rows into `out` at their output index.
void run_lstm(Tape& tape, const Tensor& x, const LstmDirection& d, int hidden, bool reverse,
              std::vector<Tensor>& out) {
    const int t_len = ag::rows(x);
    Tensor h = Tensor::zeros({1, hidden});
    Tensor c = Tensor::zeros({1, hidden});
    for (int step = 0; step < t_len; ++step) {
        const int ti = reverse ? t_len - 1 - step : step;
        Tensor xt = tape.row(x, ti);
        Tensor gates = tape.add(tape.add(tape.matmul(xt, d.wx), tape.matmul(h, d.wh)), d.b);
        Tensor ig = tape.sigmoid(tape.slice_cols(gates, 0, hidden));
        Tensor fg = tape.sigmoid(tape.slice_cols(gates, hidden, hidden));
        Tensor gg = tape.tanh(tape.slice_cols(gates, 2 * hidden, hidden));
        Tensor og = tape.sigmoid(tape.slice_cols(gates, 3 * hidden, hidden));
        c = tape.add(tape.mul(fg, c), tape.mul(ig, gg));
        h = tape.mul(og, tape.tanh(c));
        out[static_cast<std::size_t>(ti)] = h;
    }
}
}  // namespace

Blstm::Blstm(const LayerSpec& s, rng::Rng& rng) : spec(s) {
    spec.validate();
    fwd = init_direction(spec, rng);
    bwd = init_direction(spec, rng);
}

Tensor Blstm::forward(Tape& tape, const Tensor& x) const {
    ag::check_2d(x, "blstm input");
    if (ag::cols(x) != spec.input_dim) {
        throw DimensionError("blstm: input dim " + std::to_string(ag::cols(x)) +
                             " != layer input_dim " + std::to_string(spec.input_dim));
    }
    const int t_len = ag::rows(x);
    const int h = spec.output_dim;
    std::vector<Tensor> hf(static_cast<std::size_t>(t_len)), hb(static_cast<std::size_t>(t_len));
    run_lstm(tape, x, fwd, h, false, hf);
    run_lstm(tape, x, bwd, h, true, hb);
    std::vector<Tensor> rows_out;
    rows_out.reserve(static_cast<std::size_t>(t_len));
    for (int i = 0; i < t_len; ++i) {
        rows_out.push_back(tape.concat_cols(hf[static_cast<std::size_t>(i)],
                                            hb[static_cast<std::size_t>(i)]));
    }
    return tape.concat_rows(rows_out);
}

void Blstm::collect(const std::string& prefix, std::map<std::string, Tensor>& out) const {
    out.emplace(prefix + ".fwd.wx", fwd.wx);
    out.emplace(prefix + ".fwd.wh", fwd.wh);
    out.emplace(prefix + ".fwd.b", fwd.b);
    out.emplace(prefix + ".bwd.wx", bwd.wx);
    out.emplace(prefix + ".bwd.wh", bwd.wh);
    out.emplace(prefix + ".bwd.b", bwd.b);
}

// ---------------------------------------------------------------------------
// Fc

Fc::Fc(const LayerSpec& s, rng::Rng& rng) : spec(s) {
    spec.validate();
    weight = init_weight(spec.input_dim, spec.output_dim, rng);
    bias = Tensor::zeros({1, spec.output_dim}, true);
}

Tensor Fc::forward(Tape& tape, const Tensor& x) const {
    ag::check_2d(x, "fc input");
    if (ag::cols(x) != spec.input_dim) {
        throw DimensionError("fc: input dim " + std::to_string(ag::cols(x)) +
                             " != layer input_dim " + std::to_string(spec.input_dim));
    }
    return tape.add_rowvec(tape.matmul(x, weight), bias);
}

void Fc::collect(const std::string& prefix, std::map<std::string, Tensor>& out) const {
    out.emplace(prefix + ".weight", weight);
    out.emplace(prefix + ".bias", bias);
}

// ---------------------------------------------------------------------------
// Encoder

void EncoderSpec::validate() const {
    if (layers.empty()) throw ConfigError("encoder needs at least one layer");
    bool seen_blstm = false;
    int prev = layers.front().input_dim;
    for (const LayerSpec& l : layers) {
        l.validate();
        if (l.kind == LayerKind::Fc) throw ConfigError("encoder cannot contain fc layers");
        if (l.kind == LayerKind::Blstm) seen_blstm = true;
        if (l.kind == LayerKind::Conv1d && seen_blstm) {
            throw ConfigError("encoder conv layers must precede blstm layers");
        }
        if (l.input_dim != prev) {
            throw ConfigError("encoder layer " + l.describe() + " expects input dim " +
                              std::to_string(l.input_dim) + " but previous layer emits " +
                              std::to_string(prev));
        }
        prev = l.kind == LayerKind::Blstm ? 2 * l.output_dim : l.output_dim;
    }
    if (!seen_blstm) throw ConfigError("encoder needs at least one blstm layer");
}

int EncoderSpec::output_dim() const {
    const LayerSpec& last = layers.back();
    return last.kind == LayerKind::Blstm ? 2 * last.output_dim : last.output_dim;
}

int EncoderSpec::output_length(int t) const {
    for (const LayerSpec& l : layers) {
        if (l.kind == LayerKind::Conv1d) t = Conv1d::output_length(t, l);
    }
    return t;
}

int EncoderSpec::min_input_length() const {
    // smallest T whose every conv stage sees at least kernel_width frames
    int t = 1;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        if (it->kind != LayerKind::Conv1d) continue;
        t = (t - 1) * it->stride + it->kernel_width;
    }
    return t;
}

EncoderSpec EncoderSpec::desk(int feature_dim) {
    EncoderSpec s;
    s.layers = {
        {LayerKind::Conv1d, feature_dim, 32, 3, 2},
        {LayerKind::Conv1d, 32, 32, 3, 1},
        {LayerKind::Blstm, 32, 64, 0, 1},
        {LayerKind::Blstm, 128, 64, 0, 1},
    };
    return s;
}

EncoderSpec EncoderSpec::paper(int feature_dim) {
    EncoderSpec s;
    s.layers = {
        {LayerKind::Conv1d, feature_dim, 256, 3, 2},
        {LayerKind::Conv1d, 256, 256, 3, 1},
    };
    for (int i = 0; i < 5; ++i) {
        s.layers.push_back({LayerKind::Blstm, i == 0 ? 256 : 2048, 1024, 0, 1});
    }
    return s;
}

SharedEncoder::SharedEncoder(const EncoderSpec& spec, rng::Rng& rng) : spec_(spec) {
    spec_.validate();
    for (const LayerSpec& l : spec_.layers) {
        if (l.kind == LayerKind::Conv1d) {
            convs_.emplace_back(l, rng);
        } else {
            blstms_.emplace_back(l, rng);
        }
    }
}

Tensor SharedEncoder::forward(Tape& tape, const Tensor& x) const {
    Tensor h = x;
    for (const Conv1d& c : convs_) h = c.forward(tape, h);
    for (const Blstm& b : blstms_) h = b.forward(tape, h);
    return h;
}

void SharedEncoder::collect(const std::string& prefix, std::map<std::string, Tensor>& out) const {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].collect(prefix + "conv" + std::to_string(i), out);
    }
    for (std::size_t i = 0; i < blstms_.size(); ++i) {
        blstms_[i].collect(prefix + "blstm" + std::to_string(i), out);
    }
}

}  // namespace csasr::nn
