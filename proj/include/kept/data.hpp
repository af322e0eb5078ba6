#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kept/corpus_text.hpp"
#include "kept/rng.hpp"

namespace kept {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw std::runtime_error("read failure: " + path);
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failure: " + path);
}

// Byte-tokenized corpus chunked into consecutive fixed-length windows; the
// tail remainder is dropped.
struct PackedDataset {
    std::vector<std::int32_t> token_buffer;
    std::size_t seq_len = 0;
    std::size_t n_sequences = 0;
    std::string provenance;

    std::span<const std::int32_t> sequence(std::size_t i) const {
        if (i >= n_sequences) throw std::out_of_range("PackedDataset: sequence index out of range");
        return {token_buffer.data() + i * seq_len, seq_len};
    }

    PackedDataset slice_sequences(std::size_t begin, std::size_t count) const {
        if (begin + count > n_sequences)
            throw std::out_of_range("PackedDataset: slice out of range");
        PackedDataset out;
        out.seq_len = seq_len;
        out.n_sequences = count;
        out.provenance = provenance + "[" + std::to_string(begin) + ":" +
                         std::to_string(begin + count) + "]";
        out.token_buffer.assign(token_buffer.begin() + static_cast<std::ptrdiff_t>(begin * seq_len),
                                token_buffer.begin() + static_cast<std::ptrdiff_t>((begin + count) * seq_len));
        return out;
    }
};

inline constexpr std::uint8_t kDocSeparator = 0x00;

// Documents joined with a 0x00 separator, byte-tokenized, chunked into
// length-L windows.
inline PackedDataset pack_documents(const std::vector<std::string>& docs, std::size_t seq_len,
                                    std::size_t vocab_size, std::string provenance) {
    if (seq_len < 2) throw std::invalid_argument("pack: seq_len must be at least 2");
    if (docs.empty()) throw std::invalid_argument("pack: empty corpus (no documents)");
    PackedDataset ds;
    ds.seq_len = seq_len;
    ds.provenance = std::move(provenance);
    std::size_t total = docs.size() - 1;
    for (const auto& d : docs) total += d.size();
    ds.token_buffer.reserve(total);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (i) ds.token_buffer.push_back(kDocSeparator);
        for (unsigned char c : docs[i]) {
            if (static_cast<std::size_t>(c) >= vocab_size)
                throw std::invalid_argument("pack: byte " + std::to_string(int(c)) +
                                            " exceeds vocab size " + std::to_string(vocab_size));
            ds.token_buffer.push_back(static_cast<std::int32_t>(c));
        }
    }
    ds.n_sequences = ds.token_buffer.size() / seq_len;
    if (ds.n_sequences == 0)
        throw std::invalid_argument("pack: corpus shorter than one sequence (" +
                                    std::to_string(ds.token_buffer.size()) + " tokens, seq_len " +
                                    std::to_string(seq_len) + ")");
    ds.token_buffer.resize(ds.n_sequences * seq_len);
    return ds;
}

inline PackedDataset load_and_pack(const std::vector<std::string>& paths, std::size_t seq_len,
                                   std::size_t vocab_size = 256) {
    if (paths.empty()) throw std::invalid_argument("load_and_pack: empty file list");
    std::vector<std::string> docs;
    docs.reserve(paths.size());
    std::string provenance;
    for (const auto& p : paths) {
        docs.push_back(read_file(p));
        if (!provenance.empty()) provenance += ",";
        provenance += p;
    }
    return pack_documents(docs, seq_len, vocab_size, provenance);
}

// LM convention: targets are inputs shifted by one within each sequence.
inline std::span<const std::int32_t> lm_inputs(std::span<const std::int32_t> seq) {
    return seq.first(seq.size() - 1);
}
inline std::span<const std::int32_t> lm_targets(std::span<const std::int32_t> seq) {
    return seq.subspan(1);
}

// Deterministic infinite iterator over sequence batches. Each epoch is a
// fresh seeded permutation (seed + epoch); a batch may straddle an epoch
// boundary, but every epoch still visits each sequence exactly once.
class BatchIter {
  public:
    struct Batch {
        std::vector<std::span<const std::int32_t>> sequences;
        std::size_t epoch = 0;
    };

    BatchIter(const PackedDataset& dataset, std::size_t batch_sequences, std::uint64_t seed)
        : dataset_(&dataset), batch_(batch_sequences), seed_(seed) {
        if (batch_ == 0 || batch_ > dataset.n_sequences)
            throw std::invalid_argument("BatchIter: batch_sequences must be in [1, n_sequences]");
        reshuffle();
    }

    Batch next() {
        Batch b;
        b.epoch = epoch_;
        b.sequences.reserve(batch_);
        for (std::size_t i = 0; i < batch_; ++i) {
            if (pos_ == perm_.size()) {
                ++epoch_;
                reshuffle();
            }
            b.sequences.push_back(dataset_->sequence(perm_[pos_++]));
        }
        return b;
    }

    std::size_t epoch() const { return epoch_; }

  private:
    void reshuffle() {
        perm_.resize(dataset_->n_sequences);
        for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
        Rng rng = Rng::derive(seed_ + epoch_, "data_order");
        rng.shuffle(perm_);
        pos_ = 0;
    }

    const PackedDataset* dataset_;
    std::size_t batch_;
    std::uint64_t seed_;
    std::vector<std::size_t> perm_;
    std::size_t pos_ = 0;
    std::size_t epoch_ = 0;
};

// The three corpora behind the transfer probes: natural-language text (no
// arithmetic), generated "a+b=c" lines (answers correct by construction),
// and their concatenation.
struct ProbeCorpora {
    std::string text;
    std::string arithmetic;
    std::string mixed;
};

inline ProbeCorpora make_probe_corpora(std::uint64_t seed) {
    Rng rng = Rng::derive(seed, "probe_corpora");
    ProbeCorpora out;

    std::vector<std::size_t> order(kBundledParagraphs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t repetitions = 6;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
        if (rep) rng.shuffle(order);
        for (std::size_t idx : order) {
            out.text.append(kBundledParagraphs[idx]);
            out.text.append("\n\n");
        }
    }

    const std::size_t n_lines = 4000;
    for (std::size_t i = 0; i < n_lines; ++i) {
        const std::size_t a = rng.uniform_index(100);
        const std::size_t b = rng.uniform_index(100);
        out.arithmetic += std::to_string(a) + "+" + std::to_string(b) + "=" +
                          std::to_string(a + b) + "\n";
    }

    out.mixed = out.text + out.arithmetic;
    return out;
}

}  // namespace kept
