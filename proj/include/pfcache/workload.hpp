#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfcache/rng.hpp"

namespace pfcache {

struct ContentItem {
    int id = 0;          // 1..C
    double size_gb = 0;  // eta_c
    double payment = 0;  // phi_c, HKD per download
};

struct ContentCatalog {
    std::vector<ContentItem> items;  // items[i].id == i + 1

    int num_contents() const { return static_cast<int>(items.size()); }

    double total_size_gb() const {
        double s = 0;
        for (const auto& it : items) s += it.size_gb;
        return s;
    }
};

// One MEC server's workload parameters. rank_of[i] is the popularity rank
// of content i+1; identity by default, a permutation of 1..C always.
struct ServerProfile {
    int server_id = 1;
    double plateau_q = 0;   // q_m >= 0
    double zipf_k = 1.0;    // k_m > 0
    int num_users = 1;
    double capacity_gb = 0;
    std::vector<int> rank_of;

    static std::vector<int> identity_ranks(int num_contents) {
        std::vector<int> r(num_contents);
        std::iota(r.begin(), r.end(), 1);
        return r;
    }

    static std::vector<int> shuffled_ranks(int num_contents, Rng& rng) {
        std::vector<int> r = identity_ranks(num_contents);
        for (int i = num_contents - 1; i > 0; --i) {
            int j = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(r[i], r[j]);
        }
        return r;
    }
};

struct RequestVector {
    std::vector<int> counts;  // counts[i] = requests for content i+1 this slot

    int total() const {
        int s = 0;
        for (int c : counts) s += c;
        return s;
    }
};

// Mandelbrot-Zipf pmf over contents: P[c] = (rank_c + q)^-k / sum_i (rank_i + q)^-k.
// Returned vector is indexed by content (0-based), not by rank.
inline std::vector<double> mzipf_pmf(const ServerProfile& profile, int num_contents) {
    if (num_contents < 1) throw std::invalid_argument("mzipf_pmf: need at least one content");
    if (!std::isfinite(profile.plateau_q) || profile.plateau_q < 0)
        throw std::invalid_argument("mzipf_pmf: plateau_q must be finite and >= 0");
    if (!std::isfinite(profile.zipf_k) || profile.zipf_k <= 0)
        throw std::invalid_argument("mzipf_pmf: zipf_k must be finite and > 0");
    if (static_cast<int>(profile.rank_of.size()) != num_contents)
        throw std::invalid_argument("mzipf_pmf: rank_of size mismatch");

    std::vector<double> p(num_contents);
    double z = 0;
    for (int i = 0; i < num_contents; ++i) {
        p[i] = std::pow(static_cast<double>(profile.rank_of[i]) + profile.plateau_q,
                        -profile.zipf_k);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

// Each user requests exactly one content per slot, drawn i.i.d. from pmf.
inline RequestVector generate_requests(const ServerProfile& profile,
                                       const std::vector<double>& pmf, Rng& rng) {
    const int c = static_cast<int>(pmf.size());
    std::vector<double> cdf(pmf.size());
    double acc = 0;
    for (int i = 0; i < c; ++i) {
        acc += pmf[i];
        cdf[i] = acc;
    }

    RequestVector rv;
    rv.counts.assign(pmf.size(), 0);
    for (int u = 0; u < profile.num_users; ++u) {
        const double x = rng.uniform_double() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), x);
        int idx = static_cast<int>(it - cdf.begin());
        if (idx >= c) idx = c - 1;
        ++rv.counts[idx];
    }
    return rv;
}

inline ContentCatalog sample_catalog(int num_contents,
                                     std::pair<double, double> size_range_gb,
                                     std::pair<double, double> payment_range,
                                     Rng& rng) {
    if (num_contents < 1) throw std::invalid_argument("sample_catalog: need at least one content");
    if (size_range_gb.first > size_range_gb.second || size_range_gb.first <= 0)
        throw std::invalid_argument("sample_catalog: bad size range");
    if (payment_range.first > payment_range.second || payment_range.first <= 0)
        throw std::invalid_argument("sample_catalog: bad payment range");

    ContentCatalog catalog;
    catalog.items.resize(num_contents);
    for (int i = 0; i < num_contents; ++i) {
        auto& item = catalog.items[i];
        item.id = i + 1;
        item.size_gb = size_range_gb.first +
                       rng.uniform_double() * (size_range_gb.second - size_range_gb.first);
        item.payment = payment_range.first +
                       rng.uniform_double() * (payment_range.second - payment_range.first);
    }
    return catalog;
}

}  // namespace pfcache
