#include "csasr/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "csasr/rng.hpp"

namespace csasr::data {

using ag::Tensor;
using nlohmann::json;

const char* task_name(Task t) { return t == Task::Mono ? "mono" : "cs"; }

Task task_from_name(const std::string& name) {
    if (name == "mono") return Task::Mono;
    if (name == "cs") return Task::Cs;
    throw ConfigError("unknown task '" + name + "'");
}

void SynthConfig::validate() const {
    if (n_train_per_task < 1 || n_dev_per_task < 1 || n_test_per_task < 1) {
        throw ConfigError("split sizes must be positive");
    }
    if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
    if (l1_symbols < 1 || l2_symbols < 1) throw ConfigError("alphabet sizes must be positive");
    if (min_tokens < 1 || max_tokens < min_tokens) {
        throw ConfigError("tokens_per_utterance range [" + std::to_string(min_tokens) + ", " +
                          std::to_string(max_tokens) + "] is empty");
    }
    if (min_frames_per_token < 1 || max_frames_per_token < min_frames_per_token) {
        throw ConfigError("frames_per_token range is empty");
    }
    if (switch_probability < 0.0 || switch_probability > 1.0) {
        throw ConfigError("switch_probability must lie in [0, 1]");
    }
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
    if (enc_kernel_widths.size() != enc_strides.size()) {
        throw ConfigError("enc_kernel_widths and enc_strides must have equal length");
    }
    // CS utterances must be able to hold one token of each language
    if (max_tokens < 2) throw ConfigError("max_tokens must be >= 2 for code-switching");
}

int SynthConfig::reduced_length(int t) const {
    for (std::size_t i = 0; i < enc_kernel_widths.size(); ++i) {
        if (t < enc_kernel_widths[i]) return 0;
        t = (t - enc_kernel_widths[i]) / enc_strides[i] + 1;
    }
    return t;
}

int SynthConfig::language_of_symbol(int sym) const {
    if (sym >= 1 && sym <= l1_symbols) return kLang1;
    if (sym > l1_symbols && sym < alphabet_size()) return kLang2;
    throw ContractError("symbol " + std::to_string(sym) + " outside both language alphabets");
}

double compute_cmi(const Utterance& utt) {
    const std::size_t n = utt.language_tags.size();
    if (n == 0) return 0.0;
    std::size_t u = 0, w1 = 0, w2 = 0;
    for (int tag : utt.language_tags) {
        if (tag == kLangNone) ++u;
        else if (tag == kLang1) ++w1;
        else ++w2;
    }
    if (n == u) return 0.0;
    const double max_w = static_cast<double>(std::max(w1, w2));
    return 100.0 * (1.0 - max_w / static_cast<double>(n - u));
}

CorpusStats corpus_stats(std::span<const Utterance> split) {
    CorpusStats s;
    s.utterance_count = split.size();
    double cmi_sum = 0.0;
    std::size_t cs = 0;
    for (const Utterance& u : split) {
        s.total_tokens += u.language_tags.size();
        cmi_sum += compute_cmi(u);
        if (u.task == Task::Cs) ++cs;
    }
    if (!split.empty()) {
        s.mean_cmi = cmi_sum / static_cast<double>(split.size());
        s.cs_fraction = static_cast<double>(cs) / static_cast<double>(split.size());
    }
    return s;
}

char symbol_char(int sym, const SynthConfig& cfg) {
    if (sym >= 1 && sym <= cfg.l1_symbols) return static_cast<char>('a' + sym - 1);
    if (sym > cfg.l1_symbols && sym < cfg.alphabet_size()) {
        return static_cast<char>('A' + sym - cfg.l1_symbols - 1);
    }
    return '?';
}

std::string render_transcript(const Utterance& utt, const SynthConfig& cfg) {
    std::string out;
    for (int s : utt.transcript.symbols) out.push_back(symbol_char(s, cfg));
    return out;
}

// ---------------------------------------------------------------------------
// generation

namespace {

constexpr std::uint64_t kProtoStream = 0xA17E;

std::vector<std::vector<double>> symbol_prototypes(const SynthConfig& cfg) {
    rng::Rng proto_rng(rng::derive(cfg.seed, kProtoStream));
    std::vector<std::vector<double>> protos(static_cast<std::size_t>(cfg.alphabet_size()));
    for (int s = 1; s < cfg.alphabet_size(); ++s) {
        auto& p = protos[static_cast<std::size_t>(s)];
        p.resize(static_cast<std::size_t>(cfg.feature_dim));
        for (auto& v : p) v = proto_rng.normal();
    }
    return protos;
}

int draw_symbol(const SynthConfig& cfg, int lang, rng::Rng& rng) {
    if (lang == kLang1) return static_cast<int>(rng.range(1, cfg.l1_symbols));
    return static_cast<int>(rng.range(cfg.l1_symbols + 1, cfg.alphabet_size() - 1));
}

Utterance make_utterance(const SynthConfig& cfg,
                         const std::vector<std::vector<double>>& protos, Task task,
                         const std::string& split, int index, rng::Rng& rng) {
    Utterance utt;
    utt.task = task;
    {
        std::ostringstream id;
        id << split << "-" << task_name(task) << "-";
        id.width(4);
        id.fill('0');
        id << index;
        utt.id = id.str();
    }

    const int n_tokens = static_cast<int>(rng.range(cfg.min_tokens, cfg.max_tokens));
    const int start_lang = index % 2 == 0 ? kLang1 : kLang2;
    utt.language_tags.assign(static_cast<std::size_t>(n_tokens), start_lang);
    if (task == Task::Cs) {
        int lang = start_lang;
        for (int i = 1; i < n_tokens; ++i) {
            if (rng.uniform() < cfg.switch_probability) lang = lang == kLang1 ? kLang2 : kLang1;
            utt.language_tags[static_cast<std::size_t>(i)] = lang;
        }
        // a code-switched utterance must contain both languages; flipping the
        // last token is the smallest intervention
        const bool mixed = std::any_of(utt.language_tags.begin(), utt.language_tags.end(),
                                       [&](int l) { return l != start_lang; });
        if (!mixed) {
            utt.language_tags.back() = start_lang == kLang1 ? kLang2 : kLang1;
        }
    }

    utt.transcript.alphabet_size = cfg.alphabet_size();
    std::vector<int> frames_per_token(static_cast<std::size_t>(n_tokens));
    for (int i = 0; i < n_tokens; ++i) {
        utt.transcript.symbols.push_back(
            draw_symbol(cfg, utt.language_tags[static_cast<std::size_t>(i)], rng));
        frames_per_token[static_cast<std::size_t>(i)] =
            static_cast<int>(rng.range(cfg.min_frames_per_token, cfg.max_frames_per_token));
    }

    // pad the last token until the encoder-reduced length can emit the
    // transcript, with one spare frame
    const int required = ctc::required_frames(utt.transcript);
    int total = 0;
    for (int f : frames_per_token) total += f;
    while (cfg.reduced_length(total) < required + 1) {
        ++frames_per_token.back();
        ++total;
    }

    std::vector<double> feat;
    feat.reserve(static_cast<std::size_t>(total) * static_cast<std::size_t>(cfg.feature_dim));
    for (int i = 0; i < n_tokens; ++i) {
        const auto& proto = protos[static_cast<std::size_t>(utt.transcript.symbols[static_cast<std::size_t>(i)])];
        for (int f = 0; f < frames_per_token[static_cast<std::size_t>(i)]; ++f) {
            for (int d = 0; d < cfg.feature_dim; ++d) {
                feat.push_back(proto[static_cast<std::size_t>(d)] + cfg.noise_sigma * rng.normal());
            }
        }
    }
    utt.features = Tensor({total, cfg.feature_dim}, std::move(feat));
    return utt;
}

std::vector<Utterance> make_split(const SynthConfig& cfg,
                                  const std::vector<std::vector<double>>& protos,
                                  const std::string& split, int split_tag, int n_per_task) {
    std::vector<Utterance> out;
    out.reserve(static_cast<std::size_t>(2 * n_per_task));
    for (Task task : {Task::Mono, Task::Cs}) {
        const int task_tag = task == Task::Mono ? 0 : 1;
        for (int i = 0; i < n_per_task; ++i) {
            rng::Rng rng(rng::derive(rng::derive(cfg.seed, static_cast<std::uint64_t>(split_tag * 2 + task_tag) + 0x50), static_cast<std::uint64_t>(i)));
            out.push_back(make_utterance(cfg, protos, task, split, i, rng));
        }
    }
    return out;
}

}  // namespace

Corpus generate_corpus(const SynthConfig& cfg) {
    cfg.validate();
    const auto protos = symbol_prototypes(cfg);
    Corpus corpus;
    corpus.config = cfg;
    corpus.train = make_split(cfg, protos, "train", 0, cfg.n_train_per_task);
    corpus.dev = make_split(cfg, protos, "dev", 1, cfg.n_dev_per_task);
    corpus.test = make_split(cfg, protos, "test", 2, cfg.n_test_per_task);
    return corpus;
}

// ---------------------------------------------------------------------------
// container io

namespace {

constexpr char kMagic[8] = {'C', 'S', 'A', 'S', 'R', 'C', 'O', 'R'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw FormatError(std::string("truncated corpus file reading ") + what);
    return v;
}

json config_to_json(const SynthConfig& c) {
    return json{{"seed", c.seed},
                {"n_train_per_task", c.n_train_per_task},
                {"n_dev_per_task", c.n_dev_per_task},
                {"n_test_per_task", c.n_test_per_task},
                {"feature_dim", c.feature_dim},
                {"l1_symbols", c.l1_symbols},
                {"l2_symbols", c.l2_symbols},
                {"min_tokens", c.min_tokens},
                {"max_tokens", c.max_tokens},
                {"min_frames_per_token", c.min_frames_per_token},
                {"max_frames_per_token", c.max_frames_per_token},
                {"switch_probability", c.switch_probability},
                {"noise_sigma", c.noise_sigma},
                {"enc_kernel_widths", c.enc_kernel_widths},
                {"enc_strides", c.enc_strides}};
}

SynthConfig config_from_json(const json& j) {
    SynthConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.n_train_per_task = j.at("n_train_per_task").get<int>();
    c.n_dev_per_task = j.at("n_dev_per_task").get<int>();
    c.n_test_per_task = j.at("n_test_per_task").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.l1_symbols = j.at("l1_symbols").get<int>();
    c.l2_symbols = j.at("l2_symbols").get<int>();
    c.min_tokens = j.at("min_tokens").get<int>();
    c.max_tokens = j.at("max_tokens").get<int>();
    c.min_frames_per_token = j.at("min_frames_per_token").get<int>();
    c.max_frames_per_token = j.at("max_frames_per_token").get<int>();
    c.switch_probability = j.at("switch_probability").get<double>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    c.enc_kernel_widths = j.at("enc_kernel_widths").get<std::vector<int>>();
    c.enc_strides = j.at("enc_strides").get<std::vector<int>>();
    return c;
}

}  // namespace

void save_split(std::span<const Utterance> split, const SynthConfig& cfg, const std::string& name,
                const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open corpus file for writing: " + path);
    out.write(kMagic, sizeof kMagic);
    write_u32(out, kVersion);

    json header = {{"config", config_to_json(cfg)}, {"split", name}};
    json alphabet = json::object();
    for (int s = 1; s < cfg.alphabet_size(); ++s) {
        alphabet[std::to_string(s)] = std::string(1, symbol_char(s, cfg));
    }
    header["alphabet"] = alphabet;
    const std::string htext = header.dump();
    write_u32(out, static_cast<std::uint32_t>(htext.size()));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));

    write_u32(out, static_cast<std::uint32_t>(split.size()));
    for (const Utterance& u : split) {
        write_u32(out, static_cast<std::uint32_t>(u.id.size()));
        out.write(u.id.data(), static_cast<std::streamsize>(u.id.size()));
        const std::uint8_t task = u.task == Task::Cs ? 1 : 0;
        out.write(reinterpret_cast<const char*>(&task), 1);
        write_u32(out, static_cast<std::uint32_t>(u.transcript.symbols.size()));
        for (int s : u.transcript.symbols) {
            const std::int32_t v = s;
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
        for (int tag : u.language_tags) {
            const std::uint8_t v = static_cast<std::uint8_t>(tag);
            out.write(reinterpret_cast<const char*>(&v), 1);
        }
        write_u32(out, static_cast<std::uint32_t>(ag::rows(u.features)));
        write_u32(out, static_cast<std::uint32_t>(ag::cols(u.features)));
        out.write(reinterpret_cast<const char*>(u.features.data().data()),
                  static_cast<std::streamsize>(u.features.numel() * sizeof(double)));
    }
    if (!out) throw FormatError("failed writing corpus file: " + path);
}

LoadedSplit load_split(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open corpus file: " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw FormatError("not a corpus file: " + path);
    }
    const std::uint32_t version = read_u32(in, "version");
    if (version != kVersion) {
        throw FormatError("unsupported corpus version " + std::to_string(version));
    }
    const std::uint32_t hlen = read_u32(in, "header length");
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw FormatError("truncated corpus header: " + path);
    json header;
    try {
        header = json::parse(htext);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad corpus header json: ") + e.what());
    }

    LoadedSplit out;
    out.config = config_from_json(header.at("config"));
    out.name = header.at("split").get<std::string>();

    const std::uint32_t count = read_u32(in, "utterance count");
    out.utterances.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Utterance u;
        const std::uint32_t idlen = read_u32(in, "id length");
        u.id.resize(idlen);
        in.read(u.id.data(), idlen);
        std::uint8_t task = 0;
        in.read(reinterpret_cast<char*>(&task), 1);
        u.task = task == 1 ? Task::Cs : Task::Mono;
        const std::uint32_t n_tokens = read_u32(in, "token count");
        u.transcript.symbols.resize(n_tokens);
        u.transcript.alphabet_size = out.config.alphabet_size();
        for (auto& s : u.transcript.symbols) {
            std::int32_t v = 0;
            in.read(reinterpret_cast<char*>(&v), sizeof v);
            s = v;
        }
        u.language_tags.resize(n_tokens);
        for (auto& tag : u.language_tags) {
            std::uint8_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 1);
            tag = v;
        }
        const std::uint32_t t = read_u32(in, "frame count");
        const std::uint32_t d = read_u32(in, "feature dim");
        if (static_cast<int>(d) != out.config.feature_dim) {
            throw FormatError("corpus record feature dim " + std::to_string(d) +
                              " disagrees with header feature_dim " +
                              std::to_string(out.config.feature_dim));
        }
        std::vector<double> feat(static_cast<std::size_t>(t) * d);
        in.read(reinterpret_cast<char*>(feat.data()),
                static_cast<std::streamsize>(feat.size() * sizeof(double)));
        if (!in) throw FormatError("truncated corpus record in " + path);
        u.features = Tensor({static_cast<int>(t), static_cast<int>(d)}, std::move(feat));
        out.utterances.push_back(std::move(u));
    }
    return out;
}

void write_manifest(std::span<const Utterance> split, const SynthConfig& cfg,
                    const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open manifest for writing: " + path);
    out << "# id\ttask\ttranscript\tcmi\n";
    char buf[32];
    for (const Utterance& u : split) {
        std::snprintf(buf, sizeof buf, "%.2f", compute_cmi(u));
        out << u.id << "\t" << task_name(u.task) << "\t" << render_transcript(u, cfg) << "\t"
            << buf << "\n";
    }
}

}  // namespace csasr::data
