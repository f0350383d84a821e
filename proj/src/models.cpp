#include "csasr/models.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

namespace csasr {

using ag::Tape;
using ag::Tensor;
using data::Task;
using data::Utterance;
using nlohmann::json;

const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::BaselineMono: return "baseline_mono";
        case ModelKind::BaselineCs: return "baseline_cs";
        case ModelKind::Pooled: return "pooled";
        case ModelKind::AdvPooled: return "adv_pooled";
        case ModelKind::MultitaskAdv: return "multitask_adv";
    }
    return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
    for (ModelKind k : {ModelKind::BaselineMono, ModelKind::BaselineCs, ModelKind::Pooled,
                        ModelKind::AdvPooled, ModelKind::MultitaskAdv}) {
        if (name == model_kind_name(k)) return k;
    }
    throw ConfigError("unknown model kind '" + name + "'");
}

bool kind_has_discriminator(ModelKind k) {
    return k == ModelKind::AdvPooled || k == ModelKind::MultitaskAdv;
}

bool kind_is_multitask(ModelKind k) { return k == ModelKind::MultitaskAdv; }

bool kind_trains_task(ModelKind k, Task t) {
    if (k == ModelKind::BaselineMono) return t == Task::Mono;
    if (k == ModelKind::BaselineCs) return t == Task::Cs;
    return true;
}

// ---------------------------------------------------------------------------
// ParameterPartition

std::vector<std::pair<std::string, Tensor>> ParameterPartition::all() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(tensor_count());
    for (const auto* group : {&shared, &head_mono, &head_cs, &head_pooled, &discriminator}) {
        for (const auto& [name, t] : *group) out.emplace_back(name, t);
    }
    return out;
}

std::size_t ParameterPartition::tensor_count() const {
    return shared.size() + head_mono.size() + head_cs.size() + head_pooled.size() +
           discriminator.size();
}

void ParameterPartition::zero_grad() {
    for (auto& [name, t] : all()) {
        (void)name;
        const_cast<Tensor&>(t).zero_grad();
    }
}

void ParameterPartition::check_disjoint() const {
    std::set<std::string> names;
    std::set<const void*> storages;
    for (const auto& [name, t] : all()) {
        if (!names.insert(name).second) {
            throw ContractError("parameter name '" + name + "' appears in two partitions");
        }
        if (!storages.insert(t.id()).second) {
            throw ContractError("parameter storage of '" + name + "' appears in two partitions");
        }
    }
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(int input_dim, rng::Rng& rng)
    : fc(nn::LayerSpec{nn::LayerKind::Fc, input_dim, 1, 0, 1}, rng) {}

Tensor Discriminator::logit(Tape& tape, const Tensor& encoded, bool use_grl) const {
    Tensor pooled = tape.mean_rows(encoded);
    if (use_grl) pooled = grl.apply(tape, pooled);
    return fc.forward(tape, pooled);
}

// ---------------------------------------------------------------------------
// Model

namespace {
constexpr std::uint64_t kInitStream = 0x11;
constexpr std::uint64_t kTransferStream = 0x22;
}  // namespace

Model::Model(ModelKind kind, nn::EncoderSpec enc_spec, int alphabet_size, std::uint64_t seed,
             ModelOptions options)
    : Model(kind, std::move(enc_spec), alphabet_size, seed, options, kInitStream) {}

Model::Model(ModelKind kind, nn::EncoderSpec enc_spec, int alphabet_size, std::uint64_t seed,
             ModelOptions options, std::uint64_t init_stream)
    : kind_(kind),
      enc_spec_(std::move(enc_spec)),
      alphabet_size_(alphabet_size),
      seed_(seed),
      options_(options),
      provenance_("fresh") {
    if (alphabet_size_ < 2) throw ConfigError("alphabet_size must be >= 2");
    enc_spec_.validate();
    rng::Rng rng(rng::derive(seed_, init_stream));

    encoder_.emplace(enc_spec_, rng);
    encoder_->collect("shared/", params_.shared);

    const nn::LayerSpec head_spec{nn::LayerKind::Fc, enc_spec_.output_dim(), alphabet_size_, 0, 1};
    if (kind_is_multitask(kind_)) {
        head_mono_.emplace(head_spec, rng);
        head_mono_->collect("head_mono/fc", params_.head_mono);
        head_cs_.emplace(head_spec, rng);
        head_cs_->collect("head_cs/fc", params_.head_cs);
    } else {
        head_pooled_.emplace(head_spec, rng);
        head_pooled_->collect("head_pooled/fc", params_.head_pooled);
    }
    if (kind_has_discriminator(kind_)) {
        disc_.emplace(enc_spec_.output_dim(), rng);
        disc_->fc.collect("disc/fc", params_.discriminator);
    }
    params_.check_disjoint();
}

Tensor Model::encode(Tape& tape, const Tensor& features) const {
    return encoder_->forward(tape, features);
}

const nn::Fc& Model::head_for(Task t) const {
    if (kind_is_multitask(kind_)) return t == Task::Mono ? *head_mono_ : *head_cs_;
    return *head_pooled_;
}

Tensor Model::forward_task(Tape& tape, const Utterance& utt) const {
    if (!kind_trains_task(kind_, utt.task)) {
        throw RoutingError(std::string(model_kind_name(kind_)) + " does not accept " +
                           data::task_name(utt.task) + " utterance '" + utt.id + "'");
    }
    Tensor enc = encode(tape, utt.features);
    return tape.log_softmax(head_for(utt.task).forward(tape, enc));
}

Tensor Model::forward_decode(Tape& tape, const Utterance& utt) const {
    Tensor enc = encode(tape, utt.features);
    return tape.log_softmax(head_for(utt.task).forward(tape, enc));
}

Tensor Model::discriminator_logit(Tape& tape, const Tensor& encoded, bool use_grl) const {
    if (!disc_) {
        throw ContractError(std::string(model_kind_name(kind_)) + " has no discriminator");
    }
    return disc_->logit(tape, encoded, use_grl);
}

Tensor Model::adversarial_loss(Tape& tape, std::span<const Utterance> batch, bool use_grl) const {
    if (!kind_has_discriminator(kind_)) {
        throw ContractError("adversarial_loss requires adv_pooled or multitask_adv, got " +
                            std::string(model_kind_name(kind_)));
    }
    if (batch.empty()) throw ContractError("adversarial_loss: empty batch");
    Tensor total;
    for (const Utterance& utt : batch) {
        Tensor enc = encode(tape, utt.features);
        Tensor logit = discriminator_logit(tape, enc, use_grl);
        Tensor term = tape.bce_with_logits(logit, utt.task == Task::Cs ? 1.0 : 0.0);
        total = total.defined() ? tape.add(total, term) : term;
    }
    return total;
}

BatchLoss Model::composite_loss(Tape& tape, std::span<const Utterance> batch,
                                bool include_adversarial) const {
    if (batch.empty()) throw ContractError("composite_loss: empty batch");
    const bool adversarial = include_adversarial && kind_has_discriminator(kind_);

    BatchLoss out;
    Tensor loss_mono, loss_cs, loss_adv;
    for (const Utterance& utt : batch) {
        if (!kind_trains_task(kind_, utt.task)) {
            throw RoutingError(std::string(model_kind_name(kind_)) + " does not accept " +
                               data::task_name(utt.task) + " utterance '" + utt.id + "'");
        }
        Tensor enc = encode(tape, utt.features);
        Tensor head_in = enc;
        if (kind_is_multitask(kind_) && utt.task == Task::Cs &&
            options_.reverse_cs_shared_gradient) {
            head_in = tape.grl(enc, 1.0);  // Eq. 9 printed-sign variant
        }
        Tensor lp = tape.log_softmax(head_for(utt.task).forward(tape, head_in));
        Tensor task_term = ctc::ctc_loss(tape, lp, utt.transcript);
        if (utt.task == Task::Mono) {
            loss_mono = loss_mono.defined() ? tape.add(loss_mono, task_term) : task_term;
            out.task_mono += task_term.value();
            ++out.n_mono;
        } else {
            loss_cs = loss_cs.defined() ? tape.add(loss_cs, task_term) : task_term;
            out.task_cs += task_term.value();
            ++out.n_cs;
        }
        if (adversarial) {
            Tensor logit = discriminator_logit(tape, enc, /*use_grl=*/true);
            Tensor adv_term = tape.bce_with_logits(logit, utt.task == Task::Cs ? 1.0 : 0.0);
            loss_adv = loss_adv.defined() ? tape.add(loss_adv, adv_term) : adv_term;
            out.adversarial += adv_term.value();
        }
    }

    Tensor total;
    for (const Tensor& term : {loss_mono, loss_cs, loss_adv}) {
        if (!term.defined()) continue;
        total = total.defined() ? tape.add(total, term) : term;
    }
    out.total = total;
    return out;
}

// ---------------------------------------------------------------------------
// transfer

namespace {
// Reports every differing layer between donor and requested recipient.
void check_transfer_compatible(const nn::EncoderSpec& donor, const nn::EncoderSpec& recipient) {
    if (donor == recipient) return;
    std::string detail = "transfer_shared: encoder architectures differ:";
    const std::size_t n = std::max(donor.layers.size(), recipient.layers.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::string d = i < donor.layers.size() ? donor.layers[i].describe() : "(none)";
        const std::string r =
            i < recipient.layers.size() ? recipient.layers[i].describe() : "(none)";
        if (d != r) {
            detail += " layer" + std::to_string(i) + ": donor " + d + " vs recipient " + r + ";";
        }
    }
    throw TransferError(detail);
}
}  // namespace

Model transfer_shared(const Model& donor, ModelKind kind, const nn::EncoderSpec& recipient_spec,
                      int alphabet_size, std::uint64_t seed, ModelOptions options) {
    check_transfer_compatible(donor.encoder_spec(), recipient_spec);
    if (alphabet_size != donor.alphabet_size()) {
        throw TransferError("transfer_shared: alphabet_size " + std::to_string(alphabet_size) +
                            " vs donor's " + std::to_string(donor.alphabet_size()));
    }
    Model out(kind, recipient_spec, alphabet_size, seed, options, kTransferStream);
    for (auto& [name, tensor] : out.params_.shared) {
        const auto it = donor.params().shared.find(name);
        if (it == donor.params().shared.end()) {
            throw TransferError("donor lacks shared parameter '" + name + "'");
        }
        if (it->second.shape() != tensor.shape()) {
            throw TransferError("shared parameter '" + name + "' shape " +
                                it->second.shape_str() + " vs " + tensor.shape_str());
        }
        std::copy(it->second.data().begin(), it->second.data().end(),
                  tensor.mutable_data().begin());
    }
    out.set_provenance(std::string("transfer_shared from ") + model_kind_name(donor.kind()) +
                       " (" + donor.provenance() + ")");
    return out;
}

Model transfer_shared(const Model& donor, ModelKind kind, std::uint64_t seed,
                      ModelOptions options) {
    return transfer_shared(donor, kind, donor.encoder_spec(), donor.alphabet_size(), seed,
                           options);
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {

constexpr char kCkptMagic[8] = {'C', 'S', 'A', 'S', 'R', 'C', 'K', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw FormatError(std::string("truncated checkpoint reading ") + what);
    return v;
}

json spec_to_json(const nn::EncoderSpec& spec) {
    json layers = json::array();
    for (const nn::LayerSpec& l : spec.layers) {
        layers.push_back({{"kind", nn::layer_kind_name(l.kind)},
                          {"input_dim", l.input_dim},
                          {"output_dim", l.output_dim},
                          {"kernel_width", l.kernel_width},
                          {"stride", l.stride}});
    }
    return layers;
}

nn::EncoderSpec spec_from_json(const json& j) {
    nn::EncoderSpec spec;
    for (const json& l : j) {
        spec.layers.push_back({nn::layer_kind_from_name(l.at("kind").get<std::string>()),
                               l.at("input_dim").get<int>(), l.at("output_dim").get<int>(),
                               l.at("kernel_width").get<int>(), l.at("stride").get<int>()});
    }
    return spec;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
    out.write(kCkptMagic, sizeof kCkptMagic);
    write_u32(out, kCkptVersion);

    const json header = {
        {"kind", model_kind_name(model.kind())},
        {"alphabet_size", model.alphabet_size()},
        {"seed", model.seed()},
        {"encoder", spec_to_json(model.encoder_spec())},
        {"options", {{"reverse_cs_shared_gradient", model.options().reverse_cs_shared_gradient}}},
        {"provenance", model.provenance()},
        {"blank_id", ctc::kBlank},
        {"init", "uniform(1/sqrt(fan_in)), zero bias, forget-gate bias +1, gates ifgo"},
        {"float_format", "little-endian f64"},
    };
    const std::string htext = header.dump();
    write_u32(out, static_cast<std::uint32_t>(htext.size()));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));

    const auto tensors = model.params().all();
    write_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) {
            const std::int64_t v = d;
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!out) throw FormatError("failed writing checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kCkptMagic, sizeof kCkptMagic) != 0) {
        throw FormatError("not a checkpoint file: " + path);
    }
    const std::uint32_t version = read_u32(in, "version");
    if (version != kCkptVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t hlen = read_u32(in, "header length");
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw FormatError("truncated checkpoint header: " + path);
    json header;
    try {
        header = json::parse(htext);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad checkpoint header json: ") + e.what());
    }

    ModelOptions options;
    options.reverse_cs_shared_gradient =
        header.at("options").at("reverse_cs_shared_gradient").get<bool>();
    Model model(model_kind_from_name(header.at("kind").get<std::string>()),
                spec_from_json(header.at("encoder")), header.at("alphabet_size").get<int>(),
                header.at("seed").get<std::uint64_t>(), options);
    model.set_provenance(header.at("provenance").get<std::string>());

    auto tensors = model.params().all();
    std::map<std::string, Tensor> by_name(tensors.begin(), tensors.end());
    const std::uint32_t count = read_u32(in, "tensor count");
    if (count != by_name.size()) {
        throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model needs " +
                          std::to_string(by_name.size()));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t nlen = read_u32(in, "tensor name length");
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        const std::uint32_t rank = read_u32(in, "tensor rank");
        std::vector<int> shape(rank);
        for (auto& d : shape) {
            std::int64_t v = 0;
            in.read(reinterpret_cast<char*>(&v), sizeof v);
            d = static_cast<int>(v);
        }
        if (!in) throw FormatError("truncated checkpoint tensor header: " + path);
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw FormatError("checkpoint tensor '" + name + "' unknown to a " +
                              model_kind_name(model.kind()) + " model");
        }
        if (it->second.shape() != shape) {
            throw FormatError("checkpoint tensor '" + name + "' has mismatched shape");
        }
        in.read(reinterpret_cast<char*>(it->second.mutable_data().data()),
                static_cast<std::streamsize>(it->second.numel() * sizeof(double)));
        if (!in) throw FormatError("truncated checkpoint payload for '" + name + "'");
    }
    return model;
}

Model load_checkpoint(const std::string& path, ModelKind required) {
    Model model = load_checkpoint(path);
    if (model.kind() != required) {
        throw FormatError("checkpoint at " + path + " holds a " +
                          std::string(model_kind_name(model.kind())) + " model, expected " +
                          model_kind_name(required) + "; use transfer_shared to move theta_s");
    }
    return model;
}

}  // namespace csasr
