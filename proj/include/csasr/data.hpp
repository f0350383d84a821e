#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csasr/ctc.hpp"
#include "csasr/tensor.hpp"

namespace csasr::data {

enum class Task { Mono, Cs };
const char* task_name(Task t);
Task task_from_name(const std::string& name);

// Language ids for per-token tags; 0 is reserved for language-independent
// tokens, which the generator never emits but the CMI formula must handle.
inline constexpr int kLangNone = 0;
inline constexpr int kLang1 = 1;
inline constexpr int kLang2 = 2;

struct Utterance {
    std::string id;
    ag::Tensor features;  // [T, D] synthetic acoustic frames, no gradient
    ctc::LabelSequence transcript;
    Task task = Task::Mono;
    std::vector<int> language_tags;  // one per token
};

struct SynthConfig {
    std::uint64_t seed = 1234;
    int n_train_per_task = 48;
    int n_dev_per_task = 16;
    int n_test_per_task = 16;
    int feature_dim = 16;
    int l1_symbols = 6;
    int l2_symbols = 6;
    int min_tokens = 3;
    int max_tokens = 6;
    int min_frames_per_token = 3;
    int max_frames_per_token = 5;
    double switch_probability = 0.5;
    double noise_sigma = 0.35;
    // conv geometry of the consuming encoder; utterances are padded until
    // the reduced length can emit the transcript
    std::vector<int> enc_kernel_widths = {3, 3};
    std::vector<int> enc_strides = {2, 1};

    void validate() const;
    int alphabet_size() const { return 1 + l1_symbols + l2_symbols; }
    int reduced_length(int t) const;
    int language_of_symbol(int sym) const;  // kLang1 or kLang2
};

struct CorpusStats {
    std::size_t utterance_count = 0;
    std::size_t total_tokens = 0;
    double mean_cmi = 0.0;
    double cs_fraction = 0.0;
};

struct Corpus {
    SynthConfig config;
    std::vector<Utterance> train, dev, test;
};

// Deterministic given config.seed; each split mixes both tasks.
Corpus generate_corpus(const SynthConfig& cfg);

// 100 * (1 - max_i w_i / (n - u)) for n > u, else 0; w_i are per-language
// token counts and u counts language-independent tokens.
double compute_cmi(const Utterance& utt);

CorpusStats corpus_stats(std::span<const Utterance> split);

// id="train-mono-0001" style; symbol rendering: L1 -> a.., L2 -> A..
char symbol_char(int sym, const SynthConfig& cfg);
std::string render_transcript(const Utterance& utt, const SynthConfig& cfg);

// Versioned binary container per split plus a human-readable manifest.
void save_split(std::span<const Utterance> split, const SynthConfig& cfg,
                const std::string& name, const std::string& path);
struct LoadedSplit {
    SynthConfig config;
    std::string name;
    std::vector<Utterance> utterances;
};
LoadedSplit load_split(const std::string& path);
void write_manifest(std::span<const Utterance> split, const SynthConfig& cfg,
                    const std::string& path);

}  // namespace csasr::data
