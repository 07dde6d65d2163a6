#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntp/embed.hpp"

#if defined(__x86_64__)
#include <immintrin.h>
#endif

namespace ntp {

struct Neighbour {
    int id;
    double dist;  // squared L2, computed exactly even by the approximate index
};

// Exact scan over (id, vector) entries; the oracle every approximate index is
// measured against. Results sorted by (distance, id).
class BruteForceIndex {
   public:
    explicit BruteForceIndex(int dim) : dim_(dim) {}

    void add(int id, std::span<const double> v) {
        if (static_cast<int>(v.size()) != dim_) throw std::invalid_argument("dimension mismatch");
        ids_.push_back(id);
        data_.insert(data_.end(), v.begin(), v.end());
    }

    std::size_t size() const { return ids_.size(); }
    int dim() const { return dim_; }

    std::span<const double> vec(std::size_t pos) const {
        return {data_.data() + pos * dim_, static_cast<std::size_t>(dim_)};
    }

    std::vector<Neighbour> search(std::span<const double> query, std::size_t k) const {
        if (ids_.empty()) throw std::runtime_error("search on empty index");
        if (k < 1) throw std::invalid_argument("k must be >= 1");
        std::vector<Neighbour> all(ids_.size());
        for (std::size_t i = 0; i < ids_.size(); ++i)
            all[i] = {ids_[i], squared_l2(query, vec(i))};
        std::size_t n = std::min(k, all.size());
        std::partial_sort(all.begin(), all.begin() + n, all.end(),
                          [](const Neighbour& a, const Neighbour& b) {
                              return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
                          });
        all.resize(n);
        return all;
    }

   private:
    int dim_;
    std::vector<int> ids_;
    std::vector<double> data_;
};

struct HnswParams {
    int M = 16;
    int ef_construction = 200;
    std::uint64_t seed = 0;
};

// Hierarchical navigable small world graph: layered proximity graph built by
// incremental insertion, searched by greedy descent plus an ef-bounded beam at
// the bottom layer. Distances returned are exact; only the candidate set is
// approximate. Insert-only.
class HnswIndex {
   public:
    HnswIndex(int dim, HnswParams params = {})
        : dim_(dim), params_(params), rng_(params.seed), level_mult_(1.0 / std::log(params.M)) {
        if (params.M < 2) throw std::invalid_argument("M must be >= 2");
        if (params.ef_construction < params.M)
            throw std::invalid_argument("ef_construction must be >= M");
    }

    int dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    int entry_point() const { return entry_; }
    int max_level() const { return max_level_; }
    const HnswParams& params() const { return params_; }

    int node_level(std::size_t pos) const { return static_cast<int>(links_[pos].size()) - 1; }
    std::vector<int> neighbours(std::size_t pos, int layer) const {
        auto a = adj(static_cast<int>(pos), layer);
        return {a.begin(), a.end()};
    }
    int id_at(std::size_t pos) const { return ids_[pos]; }

    void insert(int id, std::span<const double> v) {
        if (static_cast<int>(v.size()) != dim_) throw std::invalid_argument("dimension mismatch");
        int pos = static_cast<int>(ids_.size());
        ids_.push_back(id);
        data_.insert(data_.end(), v.begin(), v.end());
        for (double x : v) dataf_.push_back(static_cast<float>(x));

        int level = sample_level();
        links_.emplace_back(static_cast<std::size_t>(level) + 1);
        links0_.resize(links0_.size() + stride0(), 0);
        visited_.push_back(0);

        if (pos == 0) {
            entry_ = 0;
            max_level_ = level;
            return;
        }

        int ep = entry_;
        // greedy descent through layers above the new node's level
        for (int layer = max_level_; layer > level; --layer) ep = greedy_closest(v, ep, layer);

        for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
            auto candidates = search_layer(v, ep, params_.ef_construction, layer);
            auto selected = select_diverse(candidates, max_degree(layer));
            for (const Neighbour& nb : selected) {
                push_adj(pos, layer, nb.id);
                link_back(nb.id, pos, layer);
            }
            if (!candidates.empty()) ep = candidates.front().id;
        }

        if (level > max_level_) {
            max_level_ = level;
            entry_ = pos;
        }
    }

    std::vector<Neighbour> search(std::span<const double> query, std::size_t k,
                                  int ef_search) const {
        if (ids_.empty()) throw std::runtime_error("search on empty index");
        if (ef_search < static_cast<int>(k)) ef_search = static_cast<int>(k);
        int ep = entry_;
        for (int layer = max_level_; layer > 0; --layer) ep = greedy_closest(query, ep, layer);
        auto found = search_layer(query, ep, ef_search, 0);
        // exact double re-rank of the float-screened beam
        for (Neighbour& n : found) n.dist = squared_l2(query, vec(n.id));
        std::sort(found.begin(), found.end(), [](const Neighbour& a, const Neighbour& b) {
            return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
        });
        if (found.size() > k) found.resize(k);
        for (Neighbour& n : found) n.id = ids_[static_cast<std::size_t>(n.id)];
        return found;
    }

    // Per-layer adjacency as text, `level node: n1 n2 ...`, for debugging.
    std::string dump() const {
        std::ostringstream out;
        for (int layer = max_level_; layer >= 0; --layer)
            for (std::size_t pos = 0; pos < links_.size(); ++pos) {
                if (node_level(pos) < layer) continue;
                out << layer << ' ' << ids_[pos] << ':';
                for (int nb : adj(static_cast<int>(pos), layer))
                    out << ' ' << ids_[static_cast<std::size_t>(nb)];
                out << '\n';
            }
        return out.str();
    }

   private:
    std::span<const double> vec(int pos) const {
        return {data_.data() + static_cast<std::size_t>(pos) * dim_,
                static_cast<std::size_t>(dim_)};
    }

    const float* vecf(int pos) const {
        return dataf_.data() + static_cast<std::size_t>(pos) * dim_;
    }

    // Layer 0 is the hot path: adjacency lives in one flat int array with a
    // fixed stride (count slot + 2M slots) so the beam never chases nested
    // vector headers. Upper layers stay nested in links_, whose per-node
    // inner vector count still records the node level; the layer-0 inner
    // vector stays empty because its contents live in links0_.
    std::size_t stride0() const { return static_cast<std::size_t>(2 * params_.M + 1); }

    std::span<const int> adj(int pos, int layer) const {
        if (layer == 0) {
            const int* base = links0_.data() + static_cast<std::size_t>(pos) * stride0();
            return {base + 1, static_cast<std::size_t>(base[0])};
        }
        const auto& lst = links_[static_cast<std::size_t>(pos)][static_cast<std::size_t>(layer)];
        return {lst.data(), lst.size()};
    }

    void push_adj(int pos, int layer, int nb) {
        if (layer == 0) {
            int* base = links0_.data() + static_cast<std::size_t>(pos) * stride0();
            base[1 + base[0]] = nb;
            ++base[0];
            return;
        }
        links_[static_cast<std::size_t>(pos)][static_cast<std::size_t>(layer)].push_back(nb);
    }

    void clear_adj(int pos, int layer) {
        if (layer == 0) {
            links0_[static_cast<std::size_t>(pos) * stride0()] = 0;
            return;
        }
        links_[static_cast<std::size_t>(pos)][static_cast<std::size_t>(layer)].clear();
    }

    int sample_level() {
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        double u = uniform(rng_);
        int level = static_cast<int>(-std::log(1.0 - u) * level_mult_);
        return std::min(level, 63);
    }

    int max_degree(int layer) const { return layer == 0 ? 2 * params_.M : params_.M; }

    // Diversity heuristic: walk the pool in ascending base-distance order and
    // keep a candidate only if it is closer to the base than to every
    // neighbour kept so far. Pruning edges dominated by an existing one keeps
    // the graph navigable at a fixed degree budget, which closest-M does not.
    // Pool entries carry positions in .id and distance-to-base in .dist, and
    // must arrive sorted ascending by (dist, id) so the result is
    // deterministic.
    std::vector<Neighbour> select_diverse(const std::vector<Neighbour>& pool, int m) const {
        std::vector<Neighbour> kept, pruned;
        kept.reserve(static_cast<std::size_t>(m));
        for (const Neighbour& e : pool) {
            if (static_cast<int>(kept.size()) >= m) break;
            bool dominated = false;
            for (const Neighbour& r : kept)
                if (squared_l2(vec(e.id), vec(r.id)) < e.dist) {
                    dominated = true;
                    break;
                }
            if (!dominated)
                kept.push_back(e);
            else
                pruned.push_back(e);
        }
        for (std::size_t i = 0; i < pruned.size() && static_cast<int>(kept.size()) < m; ++i)
            kept.push_back(pruned[i]);
        return kept;
    }

    // Back-edges run through the same heuristic once the degree cap overflows.
    void link_back(int from, int to, int layer) {
        int cap = max_degree(layer);
        auto cur = adj(from, layer);
        if (static_cast<int>(cur.size()) < cap) {
            push_adj(from, layer, to);
            return;
        }
        auto base = vec(from);
        std::vector<Neighbour> pool;
        pool.reserve(cur.size() + 1);
        for (int nb : cur) pool.push_back({nb, squared_l2(base, vec(nb))});
        pool.push_back({to, squared_l2(base, vec(to))});
        std::sort(pool.begin(), pool.end(), [](const Neighbour& a, const Neighbour& b) {
            return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
        });
        auto kept = select_diverse(pool, cap);
        clear_adj(from, layer);
        for (const Neighbour& n : kept) push_adj(from, layer, n.id);
    }

    int greedy_closest(std::span<const double> query, int start, int layer) const {
        int cur = start;
        double cur_dist = squared_l2(query, vec(cur));
        bool improved = true;
        while (improved) {
            improved = false;
            for (int nb : adj(cur, layer)) {
                double d = squared_l2(query, vec(nb));
                if (d < cur_dist || (d == cur_dist && nb < cur)) {
                    cur = nb;
                    cur_dist = d;
                    improved = true;
                }
            }
        }
        return cur;
    }

    // Beam traversal screens candidates against a float32 copy of the data:
    // half the memory traffic of the double rows, four rows in flight to
    // hide latency, and an AVX2 path when the host has one. Screening only
    // orders the beam; anything returned to a caller is re-ranked with exact
    // double distances afterwards, so screening precision never leaks out.
    static bool have_avx2() {
#if defined(__x86_64__)
        static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
        return ok;
#else
        return false;
#endif
    }

#if defined(__x86_64__)
    __attribute__((target("avx2,fma"))) static void l2_batch4f_avx2(const float* q,
                                                                    const float* const p[4],
                                                                    int dim, double out[4]) {
        __m256 a0 = _mm256_setzero_ps(), a1 = a0, a2 = a0, a3 = a0;
        int i = 0;
        for (; i + 8 <= dim; i += 8) {
            __m256 qv = _mm256_loadu_ps(q + i);
            __m256 d0 = _mm256_sub_ps(qv, _mm256_loadu_ps(p[0] + i));
            __m256 d1 = _mm256_sub_ps(qv, _mm256_loadu_ps(p[1] + i));
            __m256 d2 = _mm256_sub_ps(qv, _mm256_loadu_ps(p[2] + i));
            __m256 d3 = _mm256_sub_ps(qv, _mm256_loadu_ps(p[3] + i));
            a0 = _mm256_fmadd_ps(d0, d0, a0);
            a1 = _mm256_fmadd_ps(d1, d1, a1);
            a2 = _mm256_fmadd_ps(d2, d2, a2);
            a3 = _mm256_fmadd_ps(d3, d3, a3);
        }
        __m256 accs[4] = {a0, a1, a2, a3};
        for (int r = 0; r < 4; ++r) {
            __m128 lo = _mm256_castps256_ps128(accs[r]);
            __m128 hi = _mm256_extractf128_ps(accs[r], 1);
            __m128 s = _mm_add_ps(lo, hi);
            s = _mm_add_ps(s, _mm_movehl_ps(s, s));
            s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
            float acc = _mm_cvtss_f32(s);
            for (int j = i; j < dim; ++j) {
                float d = q[j] - p[r][j];
                acc += d * d;
            }
            out[r] = acc;
        }
    }

    __attribute__((target("avx2,fma"))) static double l2f_avx2(const float* a, const float* b,
                                                               int dim) {
        __m256 acc = _mm256_setzero_ps();
        int i = 0;
        for (; i + 8 <= dim; i += 8) {
            __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
            acc = _mm256_fmadd_ps(d, d, acc);
        }
        __m128 lo = _mm256_castps256_ps128(acc);
        __m128 hi = _mm256_extractf128_ps(acc, 1);
        __m128 s = _mm_add_ps(lo, hi);
        s = _mm_add_ps(s, _mm_movehl_ps(s, s));
        s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
        float out = _mm_cvtss_f32(s);
        for (; i < dim; ++i) {
            float d = a[i] - b[i];
            out += d * d;
        }
        return out;
    }
#endif

    static void l2_batch4f(const float* q, const float* const p[4], int dim, double out[4]) {
#if defined(__x86_64__)
        if (have_avx2()) {
            l2_batch4f_avx2(q, p, dim, out);
            return;
        }
#endif
        float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
        for (int i = 0; i < dim; ++i) {
            float qi = q[i];
            float d0 = qi - p[0][i], d1 = qi - p[1][i], d2 = qi - p[2][i], d3 = qi - p[3][i];
            s0 += d0 * d0;
            s1 += d1 * d1;
            s2 += d2 * d2;
            s3 += d3 * d3;
        }
        out[0] = s0;
        out[1] = s1;
        out[2] = s2;
        out[3] = s3;
    }

    static double l2f(const float* a, const float* b, int dim) {
#if defined(__x86_64__)
        if (have_avx2()) return l2f_avx2(a, b, dim);
#endif
        float s = 0.0f;
        for (int i = 0; i < dim; ++i) {
            float d = a[i] - b[i];
            s += d * d;
        }
        return s;
    }

    // ef-bounded best-first beam over one layer. Results ascending by
    // (distance, id); ties broken by id everywhere so builds are
    // reproducible. The beam is one sorted bounded array: a node is admitted
    // while the array is short or it beats the current ef-th entry, and the
    // first unexpanded entry is always the next expansion. Equivalent to the
    // textbook two-heap formulation (same admission threshold, same
    // expansion order, same termination point) with far less bookkeeping.
    struct BeamEntry {
        double dist;
        int id;
        bool expanded;
    };

    static bool beam_before(double dist, int id, const BeamEntry& e) {
        return dist != e.dist ? dist < e.dist : id < e.id;
    }

    std::vector<Neighbour> search_layer(std::span<const double> query, int entry, int ef,
                                        int layer) const {
        auto& qf = query_scratch_;
        qf.resize(query.size());
        for (std::size_t i = 0; i < query.size(); ++i) qf[i] = static_cast<float>(query[i]);
        auto& beam = beam_scratch_;
        beam.clear();

        ++visit_epoch_;
        visited_[static_cast<std::size_t>(entry)] = visit_epoch_;
        beam.push_back({l2f(qf.data(), vecf(entry), dim_), entry, false});

        fresh_scratch_.resize(stride0());
        dist_scratch_.resize(stride0());
        int* fresh = fresh_scratch_.data();
        double* dist = dist_scratch_.data();
        std::size_t scan = 0;
        while (true) {
            while (scan < beam.size() && beam[scan].expanded) ++scan;
            if (scan == beam.size()) break;
            beam[scan].expanded = true;
            auto nbrs = adj(beam[scan].id, layer);

            int cnt = 0;
            for (int nb : nbrs) {
                if (visited_[static_cast<std::size_t>(nb)] == visit_epoch_) continue;
                visited_[static_cast<std::size_t>(nb)] = visit_epoch_;
                __builtin_prefetch(dataf_.data() + static_cast<std::size_t>(nb) * dim_);
                fresh[cnt++] = nb;
            }
            int i = 0;
            for (; i + 4 <= cnt; i += 4) {
                const float* p[4] = {vecf(fresh[i]), vecf(fresh[i + 1]), vecf(fresh[i + 2]),
                                     vecf(fresh[i + 3])};
                l2_batch4f(qf.data(), p, dim_, dist + i);
            }
            for (; i < cnt; ++i) dist[i] = l2f(qf.data(), vecf(fresh[i]), dim_);
            for (i = 0; i < cnt; ++i) {
                int nb = fresh[i];
                double d = dist[i];
                if (static_cast<int>(beam.size()) >= ef && !beam_before(d, nb, beam.back()))
                    continue;
                auto it = std::lower_bound(beam.begin(), beam.end(), std::pair{d, nb},
                                           [](const BeamEntry& e, const std::pair<double, int>& k) {
                                               return !beam_before(k.first, k.second, e);
                                           });
                std::size_t pos = static_cast<std::size_t>(it - beam.begin());
                beam.insert(it, {d, nb, false});
                if (static_cast<int>(beam.size()) > ef) beam.pop_back();
                if (pos < scan) scan = pos;
            }
        }

        std::vector<Neighbour> out;
        out.reserve(beam.size());
        for (const BeamEntry& e : beam) out.push_back({e.id, e.dist});
        return out;
    }

    int dim_;
    HnswParams params_;
    std::mt19937_64 rng_;
    double level_mult_;
    std::vector<int> ids_;
    std::vector<double> data_;
    std::vector<float> dataf_;  // float copy of data_ for beam screening
    std::vector<std::vector<std::vector<int>>> links_;  // [pos][layer] -> neighbour positions
    std::vector<int> links0_;  // flat layer-0 adjacency, stride0() per node
    int entry_ = -1;
    int max_level_ = -1;
    mutable std::vector<std::uint32_t> visited_;
    mutable std::uint32_t visit_epoch_ = 0;
    mutable std::vector<BeamEntry> beam_scratch_;
    mutable std::vector<float> query_scratch_;
    mutable std::vector<int> fresh_scratch_;
    mutable std::vector<double> dist_scratch_;
};

}  // namespace ntp
