#include "terraclust/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "terraclust/rng.hpp"

namespace terraclust {

const char* to_string(Eye e) {
    switch (e) {
        case Eye::Left: return "left";
        case Eye::Right: return "right";
        case Eye::Mono: return "mono";
    }
    return "mono";
}

const char* to_string(FilterClass f) {
    switch (f) {
        case FilterClass::Rock: return "rock";
        case FilterClass::Soil: return "soil";
        case FilterClass::Pebbly: return "pebbly";
        case FilterClass::Mixed: return "mixed";
        case FilterClass::Distant: return "distant";
        case FilterClass::Unfiltered: return "unfiltered";
    }
    return "unfiltered";
}

const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Test: return "test";
        case Split::Excluded: return "excluded";
    }
    return "excluded";
}

const char* to_string(ConstraintSource s) {
    switch (s) {
        case ConstraintSource::LR: return "LR";
        case ConstraintSource::RSM: return "RSM";
        case ConstraintSource::Neighbor: return "neighbor";
    }
    return "neighbor";
}

namespace {
[[noreturn]] void bad_enum(const std::string& what, const std::string& s) {
    throw std::invalid_argument("unknown " + what + ": '" + s + "'");
}
}  // namespace

Eye eye_from_string(const std::string& s) {
    if (s == "left") return Eye::Left;
    if (s == "right") return Eye::Right;
    if (s == "mono") return Eye::Mono;
    bad_enum("eye", s);
}

FilterClass filter_class_from_string(const std::string& s) {
    if (s == "rock") return FilterClass::Rock;
    if (s == "soil") return FilterClass::Soil;
    if (s == "pebbly") return FilterClass::Pebbly;
    if (s == "mixed") return FilterClass::Mixed;
    if (s == "distant") return FilterClass::Distant;
    if (s == "unfiltered") return FilterClass::Unfiltered;
    bad_enum("filter class", s);
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    if (s == "excluded") return Split::Excluded;
    bad_enum("split", s);
}

ConstraintSource source_from_string(const std::string& s) {
    if (s == "LR" || s == "lr") return ConstraintSource::LR;
    if (s == "RSM" || s == "rsm") return ConstraintSource::RSM;
    if (s == "neighbor" || s == "Neighbor") return ConstraintSource::Neighbor;
    bad_enum("constraint source", s);
}

void dedup_constraints(ConstraintSet& cs) {
    auto order = [](auto& link) {
        if (link.a > link.b) std::swap(link.a, link.b);
    };
    for (auto& h : cs.hard_links) order(h);
    for (auto& s : cs.soft_links) order(s);
    for (auto& c : cs.cannot_links) order(c);

    auto not_self = [](const auto& l) { return l.a != l.b; };
    std::erase_if(cs.hard_links, [&](const HardLink& l) { return !not_self(l); });
    std::erase_if(cs.soft_links, [&](const SoftLink& l) { return !not_self(l); });
    std::erase_if(cs.cannot_links, [&](const CannotLink& l) { return !not_self(l); });

    std::sort(cs.hard_links.begin(), cs.hard_links.end(), [](const HardLink& x, const HardLink& y) {
        return std::tie(x.a, x.b, x.source) < std::tie(y.a, y.b, y.source);
    });
    cs.hard_links.erase(std::unique(cs.hard_links.begin(), cs.hard_links.end(),
                                    [](const HardLink& x, const HardLink& y) {
                                        return x.a == y.a && x.b == y.b;
                                    }),
                        cs.hard_links.end());

    std::set<std::pair<int64_t, int64_t>> hard_pairs;
    for (const auto& h : cs.hard_links) hard_pairs.emplace(h.a, h.b);

    // Duplicate soft pairs keep the highest confidence; pairs already hard
    // are dropped (the hard link subsumes them).
    std::map<std::pair<int64_t, int64_t>, double> best;
    for (const auto& s : cs.soft_links) {
        const auto key = std::make_pair(s.a, s.b);
        if (hard_pairs.count(key)) continue;
        auto [it, inserted] = best.emplace(key, s.confidence);
        if (!inserted) it->second = std::max(it->second, s.confidence);
    }
    cs.soft_links.clear();
    for (const auto& [key, conf] : best)
        cs.soft_links.push_back({key.first, key.second, conf});

    std::map<std::pair<int64_t, int64_t>, double> best_cl;
    for (const auto& c : cs.cannot_links) {
        auto [it, inserted] = best_cl.emplace(std::make_pair(c.a, c.b), c.weight);
        if (!inserted) it->second = std::max(it->second, c.weight);
    }
    cs.cannot_links.clear();
    for (const auto& [key, w] : best_cl)
        cs.cannot_links.push_back({key.first, key.second, w});
}

size_t restrict_constraints(ConstraintSet& cs, const std::vector<int64_t>& ids) {
    std::unordered_set<int64_t> keep(ids.begin(), ids.end());
    const size_t before = cs.size();
    auto missing = [&](int64_t id) { return keep.find(id) == keep.end(); };
    std::erase_if(cs.hard_links, [&](const HardLink& l) { return missing(l.a) || missing(l.b); });
    std::erase_if(cs.soft_links, [&](const SoftLink& l) { return missing(l.a) || missing(l.b); });
    std::erase_if(cs.cannot_links, [&](const CannotLink& l) { return missing(l.a) || missing(l.b); });
    return before - cs.size();
}

MetricModel MetricModel::identity(int in_dim, int out_dim) {
    MetricModel m;
    m.in_dim = in_dim;
    m.out_dim = out_dim;
    m.weights.assign(static_cast<size_t>(out_dim) * in_dim, 0.0);
    m.bias.assign(out_dim, 0.0);
    for (int i = 0; i < std::min(in_dim, out_dim); ++i)
        m.weights[static_cast<size_t>(i) * in_dim + i] = 1.0;
    return m;
}

MetricModel MetricModel::random_hidden(int in_dim, int hidden_dim, int out_dim, uint64_t seed) {
    MetricModel m;
    m.in_dim = in_dim;
    m.out_dim = out_dim;
    m.hidden_dim = hidden_dim;
    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    m.hidden_weights.resize(static_cast<size_t>(hidden_dim) * in_dim);
    for (auto& w : m.hidden_weights) w = rng.normal(0.0, s1);
    m.hidden_bias.assign(hidden_dim, 0.0);
    m.weights.resize(static_cast<size_t>(out_dim) * hidden_dim);
    for (auto& w : m.weights) w = rng.normal(0.0, s2);
    m.bias.assign(out_dim, 0.0);
    return m;
}

void MetricModel::apply_row(const float* x, double* out) const {
    if (hidden_dim == 0) {
        for (int o = 0; o < out_dim; ++o) {
            const double* w = &weights[static_cast<size_t>(o) * in_dim];
            double acc = bias[o];
            for (int i = 0; i < in_dim; ++i) acc += w[i] * x[i];
            out[o] = acc;
        }
        return;
    }
    std::vector<double> h(hidden_dim);
    for (int j = 0; j < hidden_dim; ++j) {
        const double* w = &hidden_weights[static_cast<size_t>(j) * in_dim];
        double acc = hidden_bias[j];
        for (int i = 0; i < in_dim; ++i) acc += w[i] * x[i];
        h[j] = std::tanh(acc);
    }
    for (int o = 0; o < out_dim; ++o) {
        const double* w = &weights[static_cast<size_t>(o) * hidden_dim];
        double acc = bias[o];
        for (int j = 0; j < hidden_dim; ++j) acc += w[j] * h[j];
        out[o] = acc;
    }
}

std::vector<double> MetricModel::apply(const float* x, int64_t n) const {
    std::vector<double> out(static_cast<size_t>(n) * out_dim);
    for (int64_t r = 0; r < n; ++r)
        apply_row(&x[static_cast<size_t>(r) * in_dim], &out[static_cast<size_t>(r) * out_dim]);
    return out;
}

namespace {

void add_issue(ValidationReport& rep, std::string code, std::string msg) {
    rep.violations.push_back({std::move(code), std::move(msg)});
}

}  // namespace

ValidationReport validate_dataset(const std::vector<PatchRecord>& patches,
                                  const EmbeddingSet& embeddings,
                                  const std::vector<ImageDims>& image_dims) {
    ValidationReport rep;
    std::unordered_map<int64_t, std::pair<int, int>> dims;
    for (const auto& d : image_dims) dims[d.image_id] = {d.width, d.height};

    std::unordered_set<int64_t> seen_ids;
    std::set<std::tuple<int64_t, int, int, int>> seen_windows;
    for (const auto& p : patches) {
        const std::string tag = "patch " + std::to_string(p.patch_id);
        if (!seen_ids.insert(p.patch_id).second)
            add_issue(rep, "duplicate-patch-id", tag + ": id appears more than once");
        if (p.patch_size <= 0) {
            add_issue(rep, "bad-patch-size", tag + ": patch_size must be positive");
            continue;
        }
        if (!seen_windows.emplace(p.image_id, p.center_row, p.center_col, p.patch_size).second)
            add_issue(rep, "duplicate-window",
                      tag + ": (image, center, size) duplicates another patch");
        const int half = p.patch_size / 2;
        auto it = dims.find(p.image_id);
        if (it != dims.end()) {
            const auto [w, h] = it->second;
            if (p.center_row < half || p.center_col < half || p.center_row > h - half ||
                p.center_col > w - half)
                add_issue(rep, "center-out-of-bounds",
                          tag + ": center outside image bounds minus half patch size");
        } else if (p.center_row < half || p.center_col < half) {
            add_issue(rep, "center-out-of-bounds",
                      tag + ": center closer to the origin than half the patch size");
        }
        if (!p.depth_pixels.empty() &&
            p.depth_pixels.size() !=
                static_cast<size_t>(p.patch_size) * static_cast<size_t>(p.patch_size))
            add_issue(rep, "depth-size-mismatch",
                      tag + ": depth_pixels must have patch_size^2 entries");
    }

    if (embeddings.n_patches != static_cast<int64_t>(patches.size()))
        add_issue(rep, "row-count-mismatch",
                  "embeddings have " + std::to_string(embeddings.n_patches) + " rows for " +
                      std::to_string(patches.size()) + " patches");
    if (embeddings.patch_ids.size() != static_cast<size_t>(embeddings.n_patches))
        add_issue(rep, "id-count-mismatch", "embedding patch_ids length != n_patches");
    std::unordered_set<int64_t> emb_ids;
    for (int64_t id : embeddings.patch_ids)
        if (!emb_ids.insert(id).second)
            add_issue(rep, "duplicate-embedding-id",
                      "embedding id " + std::to_string(id) + " appears more than once");

    const bool l2 = embeddings.transform && embeddings.transform->l2_normalized;
    if (l2) {
        for (int64_t r = 0; r < embeddings.n_patches; ++r) {
            const float* row = embeddings.row(r);
            double norm = 0.0;
            for (int64_t c = 0; c < embeddings.dim; ++c) norm += double(row[c]) * row[c];
            norm = std::sqrt(norm);
            if (std::fabs(norm - 1.0) > 1e-4)
                add_issue(rep, "norm-violation",
                          "embedding row " + std::to_string(r) + " has norm " +
                              std::to_string(norm) + " but l2_normalized is set");
        }
    }
    return rep;
}

ValidationReport validate_constraints(const ConstraintSet& cs,
                                      const std::vector<PatchRecord>& patches,
                                      double threshold) {
    ValidationReport rep;
    std::unordered_set<int64_t> ids;
    for (const auto& p : patches) ids.insert(p.patch_id);
    auto check_ref = [&](int64_t id, const char* kind) {
        if (ids.find(id) == ids.end())
            add_issue(rep, "unknown-patch-ref",
                      std::string(kind) + " link references missing patch " + std::to_string(id));
    };
    std::set<std::pair<int64_t, int64_t>> hard_pairs;
    for (const auto& h : cs.hard_links) {
        check_ref(h.a, "hard");
        check_ref(h.b, "hard");
        hard_pairs.emplace(std::min(h.a, h.b), std::max(h.a, h.b));
    }
    for (const auto& s : cs.soft_links) {
        check_ref(s.a, "soft");
        check_ref(s.b, "soft");
        if (s.confidence <= 0.0 || s.confidence > 1.0)
            add_issue(rep, "confidence-out-of-range",
                      "soft link (" + std::to_string(s.a) + "," + std::to_string(s.b) +
                          ") confidence outside (0,1]");
        else if (s.confidence < threshold)
            add_issue(rep, "confidence-below-threshold",
                      "soft link (" + std::to_string(s.a) + "," + std::to_string(s.b) +
                          ") confidence below configured threshold");
        if (hard_pairs.count({std::min(s.a, s.b), std::max(s.a, s.b)}))
            add_issue(rep, "hard-soft-overlap",
                      "pair (" + std::to_string(s.a) + "," + std::to_string(s.b) +
                          ") appears in both hard and soft links");
    }
    return rep;
}

}  // namespace terraclust
