#pragma once

#include <map>
#include <string>
#include <vector>

#include "csasr/tape.hpp"

namespace csasr::nn {

enum class LayerKind { Conv1d, Blstm, Fc };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::Fc;
    int input_dim = 0;
    int output_dim = 0;    // conv: channels, blstm: hidden per direction, fc: classes
    int kernel_width = 0;  // conv only
    int stride = 1;        // conv only

    void validate() const;
    std::string describe() const;
    bool operator==(const LayerSpec&) const = default;
};

// Temporal convolution over feature rows, tanh nonlinearity.
// T' = floor((T - kernel_width) / stride) + 1.
struct Conv1d {
    LayerSpec spec;
    ag::Tensor weight;  // [kernel_width * input_dim, output_dim]
    ag::Tensor bias;    // [1, output_dim]
    bool apply_tanh = true;  // test hook: expose the pre-activation

    Conv1d(const LayerSpec& s, rng::Rng& rng);
    static int output_length(int t, const LayerSpec& s);
    ag::Tensor forward(ag::Tape& tape, const ag::Tensor& x) const;
    void collect(const std::string& prefix, std::map<std::string, ag::Tensor>& out) const;
};

struct LstmDirection {
    ag::Tensor wx;  // [input_dim, 4H], gates ordered (input, forget, candidate, output)
    ag::Tensor wh;  // [H, 4H]
    ag::Tensor b;   // [1, 4H], forget slice initialized to +1
};

// Bidirectional LSTM; output row t is [h_fwd_t | h_bwd_t], zero initial states.
struct Blstm {
    LayerSpec spec;
    LstmDirection fwd, bwd;

    Blstm(const LayerSpec& s, rng::Rng& rng);
    ag::Tensor forward(ag::Tape& tape, const ag::Tensor& x) const;
    void collect(const std::string& prefix, std::map<std::string, ag::Tensor>& out) const;
};

// Per-frame affine map; softmax/sigmoid applied by the caller.
struct Fc {
    LayerSpec spec;
    ag::Tensor weight;  // [input_dim, output_dim]
    ag::Tensor bias;    // [1, output_dim]

    Fc(const LayerSpec& s, rng::Rng& rng);
    ag::Tensor forward(ag::Tape& tape, const ag::Tensor& x) const;
    void collect(const std::string& prefix, std::map<std::string, ag::Tensor>& out) const;
};

// Identity forward; backward multiplies upstream gradients by -scale.
// Owns zero trainable parameters.
struct GradientReversal {
    double scale = 1.0;
    ag::Tensor apply(ag::Tape& tape, const ag::Tensor& x) const { return tape.grl(x, scale); }
};

struct EncoderSpec {
    std::vector<LayerSpec> layers;  // conv layers first, then blstm layers

    void validate() const;
    int input_dim() const { return layers.front().input_dim; }
    int output_dim() const;
    // Output time length is a pure function of input length and the conv
    // geometry; throws when t is too short for the kernels.
    int output_length(int t) const;
    int min_input_length() const;

    static EncoderSpec desk(int feature_dim);
    static EncoderSpec paper(int feature_dim);
    bool operator==(const EncoderSpec&) const = default;
};

// The shared theta_s stack: conv front-end plus BLSTM layers.
class SharedEncoder {
public:
    SharedEncoder(const EncoderSpec& spec, rng::Rng& rng);

    ag::Tensor forward(ag::Tape& tape, const ag::Tensor& x) const;
    const EncoderSpec& spec() const { return spec_; }
    int output_dim() const { return spec_.output_dim(); }
    void collect(const std::string& prefix, std::map<std::string, ag::Tensor>& out) const;

private:
    EncoderSpec spec_;
    std::vector<Conv1d> convs_;
    std::vector<Blstm> blstms_;
};

}  // namespace csasr::nn
