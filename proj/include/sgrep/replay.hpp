// Fixed-capacity reservoir replay buffer shared across the stream, plus the
// buffer-size rule and training-set composition.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sgrep/text.hpp"

namespace sgrep {

struct ReplayBuffer {
    int64_t capacity = 0;
    uint64_t rng_seed = 0;
    int64_t seen_count = 0;  // reservoir stream counter, persists across experiences
    std::vector<ParallelPair> items;
};

inline ReplayBuffer make_buffer(int64_t capacity, uint64_t rng_seed) {
    if (capacity < 0) throw InvalidConfig("buffer capacity must be >= 0");
    ReplayBuffer b;
    b.capacity = capacity;
    b.rng_seed = rng_seed;
    return b;
}

// Round-to-nearest share of the whole stream's training data.
inline int64_t buffer_capacity(double pct, int64_t reference_total) {
    if (!(pct > 0.0) || pct > 1.0)
        throw InvalidPercentage("buffer percentage must be in (0, 1], got " +
                                std::to_string(pct));
    if (reference_total < 0) throw InvalidConfig("reference_total must be >= 0");
    return std::llround(pct * static_cast<double>(reference_total));
}

// Classic algorithm-R step per item: count it, insert while under capacity,
// otherwise draw j uniform in [0, seen_count) and replace slot j when it
// lands inside the buffer (probability capacity/seen_count, uniform slot).
// Each item's draw comes from an engine derived from its own seen_count, so
// the trajectory depends only on the item sequence, not on how the stream is
// chunked into calls.
inline void reservoir_update(ReplayBuffer& buf, const std::vector<ParallelPair>& new_items) {
    for (const auto& item : new_items) {
        buf.seen_count += 1;
        if (static_cast<int64_t>(buf.items.size()) < buf.capacity) {
            buf.items.push_back(item);
            continue;
        }
        if (buf.capacity == 0) continue;
        auto eng = make_engine(
            mix_seed(buf.rng_seed, tag_of("reservoir"), static_cast<uint64_t>(buf.seen_count)));
        int64_t j = static_cast<int64_t>(eng() % static_cast<uint64_t>(buf.seen_count));
        if (j < buf.capacity) buf.items[static_cast<size_t>(j)] = item;
    }
}

// T_i plus the buffer contents, shuffled deterministically.
inline std::vector<ParallelPair> compose_train_set(const std::vector<ParallelPair>& ti,
                                                   const ReplayBuffer& buf, uint64_t seed) {
    std::vector<ParallelPair> out = ti;
    out.insert(out.end(), buf.items.begin(), buf.items.end());
    seeded_shuffle(out, mix_seed(seed, tag_of("compose")));
    return out;
}

// Snapshot TSV: one meta comment line, a column header, then one row per item.
inline void write_buffer_snapshot(const ReplayBuffer& buf, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path);
    out << "#sgrep-buffer capacity=" << buf.capacity << " seen_count=" << buf.seen_count
        << " rng_seed=" << buf.rng_seed << "\n";
    out << "src_lang\ttgt_lang\tprovenance\tsrc\ttgt\n";
    for (const auto& it : buf.items)
        out << it.src_lang << "\t" << it.tgt_lang << "\t" << provenance_name(it.provenance)
            << "\t" << it.src << "\t" << it.tgt << "\n";
    out.close();
    if (!out) throw IoError("write failed: " + path);
}

inline ReplayBuffer read_buffer_snapshot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty buffer snapshot: " + path);
    ReplayBuffer buf;
    unsigned long long cap = 0, seen = 0, seed = 0;
    if (std::sscanf(line.c_str(), "#sgrep-buffer capacity=%llu seen_count=%llu rng_seed=%llu",
                    &cap, &seen, &seed) != 3)
        throw IoError("bad buffer snapshot meta line: " + path);
    buf.capacity = static_cast<int64_t>(cap);
    buf.seen_count = static_cast<int64_t>(seen);
    buf.rng_seed = seed;
    if (!std::getline(in, line) || line != "src_lang\ttgt_lang\tprovenance\tsrc\ttgt")
        throw IoError("bad buffer snapshot header: " + path);
    size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols;
        size_t start = 0;
        for (size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                cols.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (cols.size() != 5)
            throw IoError(path + ":" + std::to_string(lineno) + ": expected 5 columns, got " +
                          std::to_string(cols.size()));
        ParallelPair pp;
        pp.src_lang = cols[0];
        pp.tgt_lang = cols[1];
        pp.provenance = provenance_from(cols[2]);
        pp.src = cols[3];
        pp.tgt = cols[4];
        buf.items.push_back(std::move(pp));
    }
    if (static_cast<int64_t>(buf.items.size()) > buf.capacity)
        throw IoError("buffer snapshot exceeds its capacity: " + path);
    return buf;
}

}  // namespace sgrep
