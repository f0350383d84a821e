#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csasr/tape.hpp"

namespace csasr::ctc {

inline constexpr int kBlank = 0;
inline constexpr double kLogFloor = -1e30;  // stands in for -inf in the recursions

// log(exp(a) + exp(b)) with the floor acting as zero probability
double logadd(double a, double b);

struct LabelSequence {
    std::vector<int> symbols;  // grapheme ids, blank excluded
    int alphabet_size = 0;     // includes blank at index 0

    void validate() const;
    bool operator==(const LabelSequence&) const = default;
};

// Frames needed to emit the target: length plus one blank per adjacent repeat.
int required_frames(const LabelSequence& target);

// Exact log P(target | log_probs) by the alpha recursion over the
// blank-interleaved target; kLogFloor when no alignment fits.
double log_marginal(const ag::Tensor& log_probs, std::span<const int> symbols);

// -log P(target | log_probs), differentiable via the beta recursion.
ag::Tensor ctc_loss(ag::Tape& tape, const ag::Tensor& log_probs, const LabelSequence& target);

// Test oracle: sums every length-T path whose collapse (dedupe adjacent,
// drop blanks) equals the target. Loss +inf when no path matches.
double ctc_brute_force(const ag::Tensor& log_probs, const LabelSequence& target);

// Per-frame argmax (ties toward the lower id), collapse repeats, strip blanks.
LabelSequence greedy_decode(const ag::Tensor& log_probs);

// Add-k smoothed character n-gram model over transcripts. Contexts are
// BOS-padded with the blank id (which never occurs in transcripts); the
// outcome set is every non-blank symbol plus an end marker.
class NGramLM {
public:
    NGramLM() = default;

    static NGramLM from_table(int order, double add_k, int alphabet_size,
                              std::map<std::vector<int>, std::vector<double>> log_probs);

    int order() const { return order_; }
    double add_k() const { return add_k_; }
    int alphabet_size() const { return alphabet_size_; }
    int end_id() const { return alphabet_size_; }
    int bos_id() const { return kBlank; }
    std::size_t context_count() const { return table_.size(); }

    // context = exactly order-1 ids; unseen contexts are uniform
    double log_prob(std::span<const int> context, int outcome) const;
    std::vector<int> context_of(std::span<const int> prefix) const;
    // sum of conditionals along the sequence; optionally including the end marker
    double sequence_log_prob(std::span<const int> symbols, bool include_end) const;

    void save(const std::string& path) const;
    static NGramLM load(const std::string& path);

private:
    int order_ = 0;
    double add_k_ = 0.0;
    int alphabet_size_ = 0;
    // context -> log-prob per outcome; index s-1 for symbol s, last index = end
    std::map<std::vector<int>, std::vector<double>> table_;
};

NGramLM train_ngram(const std::vector<LabelSequence>& corpus, int order, double add_k);

// CTC prefix beam search; prefix score = CTC log-prob + lm_weight * LM
// log-prob. Final candidates (plus the greedy sequence) are rescored with
// the exact marginal, so the result never scores below greedy's.
LabelSequence beam_decode(const ag::Tensor& log_probs, const NGramLM* lm, int beam,
                          double lm_weight);

// combined score used by beam_decode's final ranking
double combined_score(const ag::Tensor& log_probs, std::span<const int> symbols,
                      const NGramLM* lm, double lm_weight);

}  // namespace csasr::ctc
