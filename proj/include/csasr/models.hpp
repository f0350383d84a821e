#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csasr/data.hpp"
#include "csasr/layers.hpp"

namespace csasr {

// Exp1 / Exp2 / Exp3 / Exp5 / Exp6
enum class ModelKind { BaselineMono, BaselineCs, Pooled, AdvPooled, MultitaskAdv };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);
bool kind_has_discriminator(ModelKind k);
bool kind_is_multitask(ModelKind k);
// task stream(s) a kind trains on; BaselineMono rejects CS and vice versa
bool kind_trains_task(ModelKind k, data::Task t);

// Named parameter sets theta_s / theta_m / theta_c / theta_T / theta_a.
// Names are globally unique via group prefixes; partition membership decides
// which update rule reaches a tensor.
struct ParameterPartition {
    std::map<std::string, ag::Tensor> shared;         // theta_s
    std::map<std::string, ag::Tensor> head_mono;      // theta_m
    std::map<std::string, ag::Tensor> head_cs;        // theta_c
    std::map<std::string, ag::Tensor> head_pooled;    // theta_T
    std::map<std::string, ag::Tensor> discriminator;  // theta_a

    // fixed group order, name-sorted within each group
    std::vector<std::pair<std::string, ag::Tensor>> all() const;
    std::size_t tensor_count() const;
    void zero_grad();
    void check_disjoint() const;
};

// Mean pooling over time, GRL, then an FC layer to one logit.
struct Discriminator {
    nn::GradientReversal grl;
    nn::Fc fc;

    Discriminator(int input_dim, rng::Rng& rng);
    ag::Tensor logit(ag::Tape& tape, const ag::Tensor& encoded, bool use_grl) const;
};

struct ModelOptions {
    // Reading Eq. 9 exactly as printed (CS task gradient reversed into
    // theta_s). Off by default; kept for experimentation.
    bool reverse_cs_shared_gradient = false;
    bool operator==(const ModelOptions&) const = default;
};

// Per-batch loss terms; total lives on the tape, the doubles are reports.
struct BatchLoss {
    ag::Tensor total;
    double task_mono = 0.0;  // summed CTC loss over MONO utterances
    double task_cs = 0.0;    // summed CTC loss over CS utterances
    double adversarial = 0.0;
    int n_mono = 0;
    int n_cs = 0;
};

class Model {
public:
    Model(ModelKind kind, nn::EncoderSpec enc_spec, int alphabet_size, std::uint64_t seed,
          ModelOptions options = {});

    ModelKind kind() const { return kind_; }
    const nn::EncoderSpec& encoder_spec() const { return enc_spec_; }
    int alphabet_size() const { return alphabet_size_; }
    std::uint64_t seed() const { return seed_; }
    const ModelOptions& options() const { return options_; }
    const std::string& provenance() const { return provenance_; }
    void set_provenance(std::string p) { provenance_ = std::move(p); }

    ParameterPartition& params() { return params_; }
    const ParameterPartition& params() const { return params_; }
    void zero_grad() { params_.zero_grad(); }

    ag::Tensor encode(ag::Tape& tape, const ag::Tensor& features) const;
    // encoder -> task-routed head -> log-softmax; enforces the kind's task
    // contract (training path)
    ag::Tensor forward_task(ag::Tape& tape, const data::Utterance& utt) const;
    // evaluation path: single-head kinds decode any utterance, multitask
    // routes by the ground-truth task label
    ag::Tensor forward_decode(ag::Tape& tape, const data::Utterance& utt) const;

    ag::Tensor discriminator_logit(ag::Tape& tape, const ag::Tensor& encoded,
                                   bool use_grl = true) const;

    // L_A = -sum_u log P(T_u | X_u); CS=1, MONO=0. use_grl=false is the
    // sign-separated probe used by tests and Eq. 5/9 oracles.
    ag::Tensor adversarial_loss(ag::Tape& tape, std::span<const data::Utterance> batch,
                                bool use_grl = true) const;

    // L_AP = L_T + L_A (Pooled/Baseline kinds: L_T alone). include_adversarial
    // is the discriminator-detached test hook.
    BatchLoss composite_loss(ag::Tape& tape, std::span<const data::Utterance> batch,
                             bool include_adversarial = true) const;

private:
    friend Model transfer_shared(const Model&, ModelKind, const nn::EncoderSpec&, int,
                                 std::uint64_t, ModelOptions);
    Model(ModelKind kind, nn::EncoderSpec enc_spec, int alphabet_size, std::uint64_t seed,
          ModelOptions options, std::uint64_t init_stream);

    const nn::Fc& head_for(data::Task t) const;

    ModelKind kind_;
    nn::EncoderSpec enc_spec_;
    int alphabet_size_;
    std::uint64_t seed_;
    ModelOptions options_;
    std::string provenance_;

    std::optional<nn::SharedEncoder> encoder_;
    std::optional<nn::Fc> head_pooled_, head_mono_, head_cs_;
    std::optional<Discriminator> disc_;
    ParameterPartition params_;
};

// theta_s copied verbatim from the donor; heads and discriminator freshly
// initialized (a different stream than plain construction, so they never
// coincide with the donor's even under the same seed). The recipient
// architecture must equal the donor's; differing layers are listed.
Model transfer_shared(const Model& donor, ModelKind kind, const nn::EncoderSpec& recipient_spec,
                      int alphabet_size, std::uint64_t seed, ModelOptions options = {});
// convenience: recipient inherits the donor's architecture
Model transfer_shared(const Model& donor, ModelKind kind, std::uint64_t seed,
                      ModelOptions options = {});

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);
Model load_checkpoint(const std::string& path, ModelKind required);

}  // namespace csasr
