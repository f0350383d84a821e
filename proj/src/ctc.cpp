#include "csasr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace csasr::ctc {

using ag::Tape;
using ag::Tensor;

double logadd(double a, double b) {
    if (a < b) std::swap(a, b);
    if (b <= kLogFloor) return a <= kLogFloor ? kLogFloor : a;
    return a + std::log1p(std::exp(b - a));
}

void LabelSequence::validate() const {
    if (alphabet_size < 2) {
        throw ContractError("label sequence alphabet_size must be >= 2, got " +
                            std::to_string(alphabet_size));
    }
    for (int s : symbols) {
        if (s < 1 || s >= alphabet_size) {
            throw ContractError("label id " + std::to_string(s) + " outside [1, " +
                                std::to_string(alphabet_size - 1) + "]");
        }
    }
}

int required_frames(const LabelSequence& target) {
    int req = static_cast<int>(target.symbols.size());
    for (std::size_t i = 1; i < target.symbols.size(); ++i) {
        if (target.symbols[i] == target.symbols[i - 1]) ++req;
    }
    return req;
}

namespace {

std::vector<int> augmented(std::span<const int> symbols) {
    std::vector<int> aug(2 * symbols.size() + 1, kBlank);
    for (std::size_t i = 0; i < symbols.size(); ++i) aug[2 * i + 1] = symbols[i];
    return aug;
}

// alpha[t][s]: log prob of prefixes ending in augmented state s at frame t,
// emission at t included
std::vector<double> alpha_table(const Tensor& lp, const std::vector<int>& aug) {
    const int t_len = ag::rows(lp), v = ag::cols(lp);
    const int s_len = static_cast<int>(aug.size());
    std::vector<double> la(static_cast<std::size_t>(t_len) * s_len, kLogFloor);
    auto at = [&](int t, int s) -> double& {
        return la[static_cast<std::size_t>(t) * s_len + s];
    };
    (void)v;
    at(0, 0) = lp(0, aug[0]);
    if (s_len > 1) at(0, 1) = lp(0, aug[1]);
    for (int t = 1; t < t_len; ++t) {
        for (int s = 0; s < s_len; ++s) {
            double acc = at(t - 1, s);
            if (s >= 1) acc = logadd(acc, at(t - 1, s - 1));
            if (s >= 2 && aug[s] != kBlank && aug[s] != aug[s - 2]) {
                acc = logadd(acc, at(t - 1, s - 2));
            }
            at(t, s) = acc <= kLogFloor ? kLogFloor : acc + lp(t, aug[s]);
        }
    }
    return la;
}

double terminal_log_prob(const std::vector<double>& la, int t_len, int s_len) {
    const double last = la[static_cast<std::size_t>(t_len - 1) * s_len + (s_len - 1)];
    if (s_len < 2) return last;
    return logadd(last, la[static_cast<std::size_t>(t_len - 1) * s_len + (s_len - 2)]);
}

}  // namespace

double log_marginal(const Tensor& log_probs, std::span<const int> symbols) {
    ag::check_2d(log_probs, "ctc log_probs");
    const int t_len = ag::rows(log_probs);
    LabelSequence tmp{std::vector<int>(symbols.begin(), symbols.end()), ag::cols(log_probs)};
    if (t_len < required_frames(tmp)) return kLogFloor;
    const std::vector<int> aug = augmented(symbols);
    const std::vector<double> la = alpha_table(log_probs, aug);
    return terminal_log_prob(la, t_len, static_cast<int>(aug.size()));
}

Tensor ctc_loss(Tape& tape, const Tensor& log_probs, const LabelSequence& target) {
    ag::check_2d(log_probs, "ctc log_probs");
    target.validate();
    const int t_len = ag::rows(log_probs), v = ag::cols(log_probs);
    if (v != target.alphabet_size) {
        throw DimensionError("ctc_loss: log_probs have " + std::to_string(v) +
                             " classes but target alphabet_size is " +
                             std::to_string(target.alphabet_size));
    }
    const int req = required_frames(target);
    if (t_len < req) {
        throw CtcInfeasibleError("ctc_loss: " + std::to_string(t_len) + " frames cannot emit a " +
                                 std::to_string(target.symbols.size()) +
                                 "-label target needing " + std::to_string(req));
    }

    const std::vector<int> aug = augmented(target.symbols);
    const int s_len = static_cast<int>(aug.size());
    const std::vector<double> la = alpha_table(log_probs, aug);
    const double logp = terminal_log_prob(la, t_len, s_len);
    Tensor loss = Tensor::scalar(-logp, log_probs.requires_grad());

    if (loss.requires_grad()) {
        tape.record("ctc_loss", [log_probs, loss, aug, la, logp, t_len, s_len, v]() {
            if (!loss.grad_present()) return;
            const double g0 = loss.grad()[0];
            // beta[t][s]: log prob of completing from state s after frame t,
            // emission at t excluded; P = sum_s exp(alpha[t][s] + beta[t][s])
            std::vector<double> lb(static_cast<std::size_t>(t_len) * s_len, kLogFloor);
            auto bt = [&](int t, int s) -> double& {
                return lb[static_cast<std::size_t>(t) * s_len + s];
            };
            bt(t_len - 1, s_len - 1) = 0.0;
            if (s_len > 1) bt(t_len - 1, s_len - 2) = 0.0;
            for (int t = t_len - 2; t >= 0; --t) {
                for (int s = 0; s < s_len; ++s) {
                    double acc = bt(t + 1, s) <= kLogFloor
                                     ? kLogFloor
                                     : bt(t + 1, s) + log_probs(t + 1, aug[s]);
                    if (s + 1 < s_len && bt(t + 1, s + 1) > kLogFloor) {
                        acc = logadd(acc, bt(t + 1, s + 1) + log_probs(t + 1, aug[s + 1]));
                    }
                    if (s + 2 < s_len && aug[s + 2] != kBlank && aug[s + 2] != aug[s] &&
                        bt(t + 1, s + 2) > kLogFloor) {
                        acc = logadd(acc, bt(t + 1, s + 2) + log_probs(t + 1, aug[s + 2]));
                    }
                    bt(t, s) = acc;
                }
            }
            std::vector<double> grad(static_cast<std::size_t>(t_len) * v, 0.0);
            std::vector<double> per_class(static_cast<std::size_t>(v), kLogFloor);
            for (int t = 0; t < t_len; ++t) {
                std::fill(per_class.begin(), per_class.end(), kLogFloor);
                for (int s = 0; s < s_len; ++s) {
                    const double a = la[static_cast<std::size_t>(t) * s_len + s];
                    const double b = lb[static_cast<std::size_t>(t) * s_len + s];
                    if (a <= kLogFloor || b <= kLogFloor) continue;
                    per_class[static_cast<std::size_t>(aug[s])] =
                        logadd(per_class[static_cast<std::size_t>(aug[s])], a + b);
                }
                for (int k = 0; k < v; ++k) {
                    const double lse = per_class[static_cast<std::size_t>(k)];
                    if (lse <= kLogFloor) continue;
                    grad[static_cast<std::size_t>(t) * v + k] = -g0 * std::exp(lse - logp);
                }
            }
            const_cast<Tensor&>(log_probs).accumulate_grad(grad);
        });
    }
    return loss;
}

double ctc_brute_force(const Tensor& log_probs, const LabelSequence& target) {
    ag::check_2d(log_probs, "ctc log_probs");
    target.validate();
    const int t_len = ag::rows(log_probs), v = ag::cols(log_probs);
    double paths = 1.0;
    for (int t = 0; t < t_len; ++t) {
        paths *= v;
        if (paths > 1e6) {
            throw OracleScopeError("ctc_brute_force: V^T exceeds 1e6 for V=" + std::to_string(v) +
                                   ", T=" + std::to_string(t_len));
        }
    }
    std::vector<int> path(static_cast<std::size_t>(t_len), 0);
    std::vector<int> collapsed;
    double total = kLogFloor;
    while (true) {
        collapsed.clear();
        int prev = -1;
        for (int t = 0; t < t_len; ++t) {
            const int s = path[static_cast<std::size_t>(t)];
            if (s != prev && s != kBlank) collapsed.push_back(s);
            prev = s;
        }
        if (collapsed == target.symbols) {
            double lp_path = 0.0;
            for (int t = 0; t < t_len; ++t) lp_path += log_probs(t, path[static_cast<std::size_t>(t)]);
            total = logadd(total, lp_path);
        }
        int i = t_len - 1;
        while (i >= 0 && ++path[static_cast<std::size_t>(i)] == v) {
            path[static_cast<std::size_t>(i)] = 0;
            --i;
        }
        if (i < 0) break;
    }
    if (total <= kLogFloor) return std::numeric_limits<double>::infinity();
    return -total;
}

LabelSequence greedy_decode(const Tensor& log_probs) {
    ag::check_2d(log_probs, "ctc log_probs");
    const int t_len = ag::rows(log_probs), v = ag::cols(log_probs);
    std::vector<int> best(static_cast<std::size_t>(t_len), 0);
    for (int t = 0; t < t_len; ++t) {
        int arg = 0;
        double m = log_probs(t, 0);
        for (int j = 1; j < v; ++j) {
            if (log_probs(t, j) > m) {
                m = log_probs(t, j);
                arg = j;
            }
        }
        best[static_cast<std::size_t>(t)] = arg;
    }
    LabelSequence out;
    out.alphabet_size = v;
    int prev = -1;
    for (int s : best) {
        if (s != prev && s != kBlank) out.symbols.push_back(s);
        prev = s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// n-gram language model

NGramLM NGramLM::from_table(int order, double add_k, int alphabet_size,
                            std::map<std::vector<int>, std::vector<double>> log_probs) {
    if (order < 1) throw ConfigError("lm order must be >= 1, got " + std::to_string(order));
    if (alphabet_size < 2) throw ConfigError("lm alphabet_size must be >= 2");
    NGramLM lm;
    lm.order_ = order;
    lm.add_k_ = add_k;
    lm.alphabet_size_ = alphabet_size;
    lm.table_ = std::move(log_probs);
    const std::size_t outcomes = static_cast<std::size_t>(alphabet_size);
    for (const auto& [ctx, dist] : lm.table_) {
        if (static_cast<int>(ctx.size()) != order - 1 || dist.size() != outcomes) {
            throw FormatError("lm table entry has wrong context length or outcome count");
        }
    }
    return lm;
}

double NGramLM::log_prob(std::span<const int> context, int outcome) const {
    if (static_cast<int>(context.size()) != order_ - 1) {
        throw ContractError("lm context length " + std::to_string(context.size()) +
                            " != order-1 = " + std::to_string(order_ - 1));
    }
    std::size_t idx;
    if (outcome == end_id()) {
        idx = static_cast<std::size_t>(alphabet_size_ - 1);
    } else if (outcome >= 1 && outcome < alphabet_size_) {
        idx = static_cast<std::size_t>(outcome - 1);
    } else {
        throw ContractError("lm outcome " + std::to_string(outcome) + " outside alphabet");
    }
    const auto it = table_.find(std::vector<int>(context.begin(), context.end()));
    if (it == table_.end()) {
        return -std::log(static_cast<double>(alphabet_size_));  // unseen context: uniform
    }
    return it->second[idx];
}

std::vector<int> NGramLM::context_of(std::span<const int> prefix) const {
    const int n = order_ - 1;
    std::vector<int> ctx(static_cast<std::size_t>(n), bos_id());
    const int take = std::min<int>(n, static_cast<int>(prefix.size()));
    for (int i = 0; i < take; ++i) {
        ctx[static_cast<std::size_t>(n - 1 - i)] = prefix[prefix.size() - 1 - static_cast<std::size_t>(i)];
    }
    return ctx;
}

double NGramLM::sequence_log_prob(std::span<const int> symbols, bool include_end) const {
    double total = 0.0;
    std::vector<int> seen;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        total += log_prob(context_of(seen), symbols[i]);
        seen.push_back(symbols[i]);
    }
    if (include_end) total += log_prob(context_of(seen), end_id());
    return total;
}

NGramLM train_ngram(const std::vector<LabelSequence>& corpus, int order, double add_k) {
    if (order < 1) throw ConfigError("lm order must be >= 1, got " + std::to_string(order));
    if (corpus.empty()) throw ConfigError("lm training corpus is empty");
    if (add_k < 0.0) throw ConfigError("lm add_k must be non-negative");
    const int alphabet_size = corpus.front().alphabet_size;
    const std::size_t outcomes = static_cast<std::size_t>(alphabet_size);

    std::map<std::vector<int>, std::vector<double>> counts;
    for (const LabelSequence& seq : corpus) {
        seq.validate();
        if (seq.alphabet_size != alphabet_size) {
            throw ContractError("lm corpus mixes alphabet sizes");
        }
        std::vector<int> ctx(static_cast<std::size_t>(order - 1), kBlank);
        auto bump = [&](int outcome_idx) {
            auto [it, inserted] = counts.try_emplace(ctx, std::vector<double>(outcomes, 0.0));
            it->second[static_cast<std::size_t>(outcome_idx)] += 1.0;
        };
        for (int s : seq.symbols) {
            bump(s - 1);
            if (order > 1) {
                ctx.erase(ctx.begin());
                ctx.push_back(s);
            }
        }
        bump(alphabet_size - 1);  // end marker
    }

    std::map<std::vector<int>, std::vector<double>> table;
    for (auto& [ctx, c] : counts) {
        double total = 0.0;
        for (double x : c) total += x;
        std::vector<double> dist(outcomes);
        const double denom = total + add_k * static_cast<double>(outcomes);
        for (std::size_t i = 0; i < outcomes; ++i) {
            const double p = (c[i] + add_k) / denom;
            dist[i] = p > 0.0 ? std::log(p) : kLogFloor;
        }
        table.emplace(ctx, std::move(dist));
    }
    return NGramLM::from_table(order, add_k, alphabet_size, std::move(table));
}

void NGramLM::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open lm file for writing: " + path);
    out.precision(17);
    out << "csasr-lm 1\n";
    out << "order " << order_ << "\n";
    out << "add_k " << add_k_ << "\n";
    out << "alphabet_size " << alphabet_size_ << "\n";
    out << "contexts " << table_.size() << "\n";
    for (const auto& [ctx, dist] : table_) {
        for (std::size_t i = 0; i < dist.size(); ++i) {
            // outcome ids: 1..A-1 are symbols, A is the end marker
            out << "ngram";
            for (int c : ctx) out << " " << c;
            out << " | " << (i + 1 == dist.size() ? alphabet_size_ : static_cast<int>(i) + 1)
                << " " << dist[i] << "\n";
        }
    }
    if (!out) throw FormatError("failed writing lm file: " + path);
}

NGramLM NGramLM::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open lm file: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "csasr-lm") throw FormatError("not an lm file: " + path);
    if (version != 1) throw FormatError("unsupported lm version " + std::to_string(version));
    std::string key;
    int order = 0, alphabet_size = 0;
    double add_k = 0.0;
    std::size_t n_ctx = 0;
    for (int i = 0; i < 4; ++i) {
        in >> key;
        if (key == "order") in >> order;
        else if (key == "add_k") in >> add_k;
        else if (key == "alphabet_size") in >> alphabet_size;
        else if (key == "contexts") in >> n_ctx;
        else throw FormatError("unexpected lm header key '" + key + "'");
    }
    if (!in) throw FormatError("truncated lm header: " + path);
    std::map<std::vector<int>, std::vector<double>> table;
    const std::size_t outcomes = static_cast<std::size_t>(alphabet_size);
    while (in >> key) {
        if (key != "ngram") throw FormatError("unexpected lm line starting '" + key + "'");
        std::vector<int> ctx(static_cast<std::size_t>(order - 1));
        for (auto& c : ctx) in >> c;
        std::string sep;
        int outcome = 0;
        double lp = 0.0;
        in >> sep >> outcome >> lp;
        if (!in || sep != "|") throw FormatError("malformed lm line");
        auto [it, inserted] = table.try_emplace(ctx, std::vector<double>(outcomes, 0.0));
        const std::size_t idx = outcome == alphabet_size ? outcomes - 1
                                                         : static_cast<std::size_t>(outcome - 1);
        it->second[idx] = lp;
    }
    if (table.size() != n_ctx) {
        throw FormatError("lm file declares " + std::to_string(n_ctx) + " contexts but has " +
                          std::to_string(table.size()));
    }
    return from_table(order, add_k, alphabet_size, std::move(table));
}

// ---------------------------------------------------------------------------
// prefix beam search

double combined_score(const Tensor& log_probs, std::span<const int> symbols, const NGramLM* lm,
                      double lm_weight) {
    const double acoustic = log_marginal(log_probs, symbols);
    if (acoustic <= kLogFloor) return -std::numeric_limits<double>::infinity();
    double score = acoustic;
    if (lm != nullptr && lm_weight != 0.0) {
        score += lm_weight * lm->sequence_log_prob(symbols, false);
    }
    return score;
}

namespace {
struct BeamCand {
    double p_blank = kLogFloor;     // log prob of the prefix ending in blank
    double p_symbol = kLogFloor;    // log prob of the prefix ending in its last symbol
    double lm_score = 0.0;          // sum of LM conditionals along the prefix
    double total() const { return logadd(p_blank, p_symbol); }
};
}  // namespace

LabelSequence beam_decode(const Tensor& log_probs, const NGramLM* lm, int beam,
                          double lm_weight) {
    ag::check_2d(log_probs, "ctc log_probs");
    if (beam < 1) throw ContractError("beam_decode: beam must be >= 1");
    const int t_len = ag::rows(log_probs), v = ag::cols(log_probs);

    std::map<std::vector<int>, BeamCand> beams;
    beams[{}] = BeamCand{0.0, kLogFloor, 0.0};

    for (int t = 0; t < t_len; ++t) {
        std::map<std::vector<int>, BeamCand> next;
        for (const auto& [prefix, cand] : beams) {
            // stay on the same prefix via blank
            {
                BeamCand& nc = next[prefix];
                nc.p_blank = logadd(nc.p_blank, cand.total() + log_probs(t, kBlank));
                nc.lm_score = cand.lm_score;
            }
            // repeat the last symbol without a separating blank
            if (!prefix.empty()) {
                BeamCand& nc = next[prefix];
                nc.p_symbol = logadd(nc.p_symbol, cand.p_symbol + log_probs(t, prefix.back()));
            }
            for (int s = 1; s < v; ++s) {
                const double base =
                    (!prefix.empty() && s == prefix.back()) ? cand.p_blank : cand.total();
                if (base <= kLogFloor) continue;
                std::vector<int> ext = prefix;
                ext.push_back(s);
                auto [it, inserted] = next.try_emplace(ext, BeamCand{});
                if (inserted) {
                    it->second.lm_score =
                        cand.lm_score +
                        (lm != nullptr ? lm->log_prob(lm->context_of(prefix), s) : 0.0);
                }
                it->second.p_symbol = logadd(it->second.p_symbol, base + log_probs(t, s));
            }
        }
        // prune to the top `beam` prefixes, deterministically
        std::vector<std::pair<std::vector<int>, BeamCand>> ordered(next.begin(), next.end());
        std::stable_sort(ordered.begin(), ordered.end(), [&](const auto& a, const auto& b) {
            const double sa = a.second.total() + lm_weight * a.second.lm_score;
            const double sb = b.second.total() + lm_weight * b.second.lm_score;
            if (sa != sb) return sa > sb;
            return a.first < b.first;
        });
        if (static_cast<int>(ordered.size()) > beam) ordered.resize(static_cast<std::size_t>(beam));
        beams.clear();
        for (auto& [p, c] : ordered) beams.emplace(std::move(p), c);
    }

    // final ranking by exact marginal; greedy is always a candidate
    LabelSequence greedy = greedy_decode(log_probs);
    std::vector<std::vector<int>> finalists;
    finalists.reserve(beams.size() + 1);
    for (const auto& [prefix, cand] : beams) finalists.push_back(prefix);
    finalists.push_back(greedy.symbols);

    std::vector<int> best;
    double best_score = -std::numeric_limits<double>::infinity();
    bool have = false;
    for (const auto& syms : finalists) {
        const double score = combined_score(log_probs, syms, lm, lm_weight);
        const bool better =
            !have || score > best_score ||
            (score == best_score &&
             (syms.size() < best.size() || (syms.size() == best.size() && syms < best)));
        if (better) {
            best = syms;
            best_score = score;
            have = true;
        }
    }
    return LabelSequence{best, v};
}

}  // namespace csasr::ctc
