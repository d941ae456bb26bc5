#include "terraclust/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "terraclust/eval.hpp"
#include "terraclust/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace terraclust {

void PipelineConfig::validate() const {
    if (k < 2) throw std::invalid_argument("config: k must be >= 2");
    if (max_rounds < 1) throw std::invalid_argument("config: max_rounds must be >= 1");
    if (nmi_convergence <= 0.0 || nmi_convergence > 1.0)
        throw std::invalid_argument("config: nmi_convergence must be in (0,1]");
    if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
    if (similarity.alpha + similarity.beta <= 0.0)
        throw std::invalid_argument("config: alpha + beta must be positive");
    if (similarity.sigma_spatial <= 0.0 || similarity.sigma_depth <= 0.0)
        throw std::invalid_argument("config: sigmas must be positive");
    if (similarity.threshold <= 0.0 || similarity.threshold > 1.0)
        throw std::invalid_argument("config: threshold must be in (0,1]");
    if (metric.per_cluster < 1 || metric.epochs_per_round < 0)
        throw std::invalid_argument("config: bad metric settings");
    if (stride <= 0.0 || stride > 1.0) throw std::invalid_argument("config: bad stride");
}

PipelineConfig config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config " + path + ": malformed JSON: " + e.what());
    }
    PipelineConfig cfg;
    cfg.k = j.value("k", cfg.k);
    cfg.max_rounds = j.value("max_rounds", cfg.max_rounds);
    cfg.nmi_convergence = j.value("nmi_convergence", cfg.nmi_convergence);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.pca_dim = j.value("pca_dim", cfg.pca_dim);
    cfg.kmeans_max_iters = j.value("kmeans_max_iters", cfg.kmeans_max_iters);
    cfg.stride = j.value("stride", cfg.stride);
    if (j.contains("patch_sizes")) cfg.patch_sizes = j["patch_sizes"].get<std::vector<int>>();
    if (j.contains("similarity")) {
        const auto& s = j["similarity"];
        cfg.similarity.alpha = s.value("alpha", cfg.similarity.alpha);
        cfg.similarity.beta = s.value("beta", cfg.similarity.beta);
        cfg.similarity.sigma_spatial = s.value("sigma_spatial", cfg.similarity.sigma_spatial);
        cfg.similarity.sigma_depth = s.value("sigma_depth", cfg.similarity.sigma_depth);
        cfg.similarity.threshold = s.value("threshold", cfg.similarity.threshold);
        cfg.similarity.candidate_radius =
            s.value("candidate_radius", cfg.similarity.candidate_radius);
    }
    if (j.contains("metric")) {
        const auto& m = j["metric"];
        cfg.metric.margin = m.value("margin", cfg.metric.margin);
        cfg.metric.lr = m.value("lr", cfg.metric.lr);
        cfg.metric.weight_decay = m.value("weight_decay", cfg.metric.weight_decay);
        cfg.metric.per_cluster = m.value("per_cluster", cfg.metric.per_cluster);
        cfg.metric.epochs_per_round = m.value("epochs_per_round", cfg.metric.epochs_per_round);
        cfg.metric.out_dim = m.value("out_dim", cfg.metric.out_dim);
        cfg.metric.hidden_dim = m.value("hidden_dim", cfg.metric.hidden_dim);
    }
    if (j.contains("lr_constraints")) {
        const auto& l = j["lr_constraints"];
        cfg.lr_constraints.focal_ratio = l.value("focal_ratio", cfg.lr_constraints.focal_ratio);
        cfg.lr_constraints.min_score = l.value("min_score", cfg.lr_constraints.min_score);
        cfg.lr_constraints.overlap_threshold =
            l.value("overlap_threshold", cfg.lr_constraints.overlap_threshold);
        cfg.lr_constraints.left_patch_size =
            l.value("left_patch_size", cfg.lr_constraints.left_patch_size);
        cfg.lr_constraints.right_patch_size =
            l.value("right_patch_size", cfg.lr_constraints.right_patch_size);
    }
    if (j.contains("rsm_constraints")) {
        const auto& r = j["rsm_constraints"];
        cfg.rsm_constraints.search_frac = r.value("search_frac", cfg.rsm_constraints.search_frac);
        cfg.rsm_constraints.min_score = r.value("min_score", cfg.rsm_constraints.min_score);
    }
    if (j.contains("constraint_sources")) {
        cfg.sources.clear();
        for (const auto& s : j["constraint_sources"])
            cfg.sources.insert(source_from_string(s.get<std::string>()));
    }
    cfg.validate();
    return cfg;
}

std::string config_to_json(const PipelineConfig& cfg) {
    json j;
    j["k"] = cfg.k;
    j["max_rounds"] = cfg.max_rounds;
    j["nmi_convergence"] = cfg.nmi_convergence;
    j["lambda"] = cfg.lambda;
    j["seed"] = cfg.seed;
    j["pca_dim"] = cfg.pca_dim;
    j["kmeans_max_iters"] = cfg.kmeans_max_iters;
    j["stride"] = cfg.stride;
    j["patch_sizes"] = cfg.patch_sizes;
    j["similarity"] = {{"alpha", cfg.similarity.alpha},
                       {"beta", cfg.similarity.beta},
                       {"sigma_spatial", cfg.similarity.sigma_spatial},
                       {"sigma_depth", cfg.similarity.sigma_depth},
                       {"threshold", cfg.similarity.threshold},
                       {"candidate_radius", cfg.similarity.candidate_radius}};
    j["metric"] = {{"margin", cfg.metric.margin},
                   {"lr", cfg.metric.lr},
                   {"weight_decay", cfg.metric.weight_decay},
                   {"per_cluster", cfg.metric.per_cluster},
                   {"epochs_per_round", cfg.metric.epochs_per_round},
                   {"out_dim", cfg.metric.out_dim},
                   {"hidden_dim", cfg.metric.hidden_dim}};
    j["lr_constraints"] = {{"focal_ratio", cfg.lr_constraints.focal_ratio},
                           {"min_score", cfg.lr_constraints.min_score},
                           {"overlap_threshold", cfg.lr_constraints.overlap_threshold},
                           {"left_patch_size", cfg.lr_constraints.left_patch_size},
                           {"right_patch_size", cfg.lr_constraints.right_patch_size}};
    j["rsm_constraints"] = {{"search_frac", cfg.rsm_constraints.search_frac},
                            {"min_score", cfg.rsm_constraints.min_score}};
    std::vector<std::string> srcs;
    for (const auto& s : cfg.sources) srcs.push_back(to_string(s));
    j["constraint_sources"] = srcs;
    return j.dump(2);
}

ConstraintSet select_sources(const ConstraintSet& cs, const std::set<ConstraintSource>& sources) {
    ConstraintSet out;
    for (const auto& h : cs.hard_links)
        if (sources.count(h.source)) out.hard_links.push_back(h);
    if (sources.count(ConstraintSource::Neighbor)) out.soft_links = cs.soft_links;
    out.cannot_links = cs.cannot_links;
    return out;
}

DccmlResult run_dccml(const EmbeddingSet& raw_features, const ConstraintSet& constraints,
                      const PipelineConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const int in_dim = static_cast<int>(raw_features.dim);
    const int out_dim = cfg.metric.out_dim > 0 ? cfg.metric.out_dim : in_dim;

    DccmlResult result;
    result.metric = cfg.metric.hidden_dim > 0
                        ? MetricModel::random_hidden(in_dim, cfg.metric.hidden_dim, out_dim,
                                                     cfg.seed ^ 0x11d0ULL)
                        : MetricModel::identity(in_dim, out_dim);
    result.metric.margin = cfg.metric.margin;
    result.metric.learning_rate = cfg.metric.lr;
    result.metric.weight_decay = cfg.metric.weight_decay;

    if (!out_dir.empty()) fs::create_directories(out_dir);

    Rng train_rng(cfg.seed ^ 0x7ea1ULL);
    std::vector<int> prev_assignments;
    double best_db = std::numeric_limits<double>::infinity();

    for (int round = 1; round <= cfg.max_rounds; ++round) {
        // (1) project with the current metric, (2) PCA-whiten.
        EmbeddingSet projected;
        projected.n_patches = raw_features.n_patches;
        projected.dim = out_dim;
        projected.patch_ids = raw_features.patch_ids;
        {
            std::vector<double> proj = result.metric.apply(raw_features.values.data(),
                                                           raw_features.n_patches);
            projected.values.assign(proj.begin(), proj.end());
        }
        PcaOptions pca;
        pca.out_dim = cfg.pca_dim;
        EmbeddingSet whitened = fit_pca_whiten(projected, pca);

        // (3) constrained clustering; the seed advances with the round so
        // re-clustering is a fresh k-means++ run, not a warm start.
        PccConfig pcc;
        pcc.lambda = cfg.lambda;
        pcc.max_iters = cfg.kmeans_max_iters;
        pcc.seed = cfg.seed + static_cast<uint64_t>(round);
        ClusterModel cm = pcc_kmeans(whitened, cfg.k, constraints, pcc);

        RoundStats stats;
        stats.round = round;
        stats.objective = cm.objective;
        stats.kmeans_iterations = cm.iterations_run;
        stats.db = db_index(whitened, cm.assignments);
        if (round > 1) stats.nmi_prev = nmi(cm.assignments, prev_assignments);

        if (!out_dir.empty()) {
            const std::string stem = out_dir + "/round_" + std::to_string(round);
            write_embeddings(stem + "_features.temb", whitened);
            write_assignments_csv(stem + "_assignments.csv", whitened.patch_ids, cm.assignments);
        }

        const bool converged = round > 1 && stats.nmi_prev >= cfg.nmi_convergence;

        // Keep the round the contract selects: the converged round, else the
        // best-DB round once the loop runs out.
        if (converged || stats.db < best_db) {
            best_db = stats.db;
            result.model = cm;
            result.round_features = whitened;
            result.selected_round = round;
        }

        result.history.push_back(stats);
        prev_assignments = cm.assignments;

        if (converged) {
            result.converged = true;
            break;
        }
        if (round == cfg.max_rounds) break;

        // (5) metric training on this round's pseudo-labels.
        TrainConfig tc;
        tc.triplets.per_cluster = cfg.metric.per_cluster;
        tc.triplets.margin = cfg.metric.margin;
        tc.learning_rate = cfg.metric.lr;
        tc.weight_decay = cfg.metric.weight_decay;
        double loss_sum = 0.0;
        int loss_batches = 0;
        for (int e = 0; e < cfg.metric.epochs_per_round; ++e) {
            EpochStats es = train_epoch(result.metric, raw_features.values.data(),
                                        raw_features.n_patches, cm.assignments, cfg.k, tc,
                                        train_rng);
            loss_sum += es.mean_loss * es.batches;
            loss_batches += es.batches;
        }
        if (loss_batches > 0) result.history.back().mean_triplet_loss = loss_sum / loss_batches;
    }
    return result;
}

std::string variant_name(const std::set<ConstraintSource>& sources) {
    if (sources.empty()) return "none";
    std::string name;
    for (const auto& s : sources) {
        if (!name.empty()) name += "+";
        name += to_string(s);
    }
    return name;
}

std::vector<AblationRow> run_ablation(const EmbeddingSet& raw_features,
                                      const ConstraintSet& constraints,
                                      const std::vector<PatchRecord>& patches,
                                      const PipelineConfig& cfg,
                                      const std::vector<std::set<ConstraintSource>>& variants) {
    std::vector<AblationRow> rows;
    for (const auto& sources : variants) {
        AblationRow row;
        row.variant = variant_name(sources);
        row.sources = sources;
        try {
            PipelineConfig vcfg = cfg;
            vcfg.sources = sources;
            ConstraintSet active = select_sources(constraints, sources);
            DccmlResult res = run_dccml(raw_features, active, vcfg);
            row.converged = res.converged;
            row.db = res.history[res.selected_round - 1].db;

            std::vector<int> truth(patches.size());
            for (size_t i = 0; i < patches.size(); ++i) truth[i] = patches[i].label;
            row.homogeneous_clusters =
                homogeneity_report(res.model.assignments, truth, cfg.k).homogeneous_clusters;
            row.nmi_vs_truth = nmi(res.model.assignments, truth);

            // Retrieval on the test split in the final embedding space.
            std::vector<PatchRecord> test_patches;
            EmbeddingSet test_emb;
            test_emb.dim = res.round_features.dim;
            for (size_t i = 0; i < patches.size(); ++i) {
                if (patches[i].split != Split::Test || patches[i].label < 0) continue;
                test_patches.push_back(patches[i]);
                const float* r = res.round_features.row(static_cast<int64_t>(i));
                test_emb.values.insert(test_emb.values.end(), r, r + test_emb.dim);
                test_emb.patch_ids.push_back(patches[i].patch_id);
            }
            test_emb.n_patches = static_cast<int64_t>(test_patches.size());
            if (test_emb.n_patches > 0)
                row.mean_precision_at_10 =
                    mean_precision_at_k(test_emb, test_patches, 10).mean_precision;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

RawImage emit_cluster_montage(const Dataset& ds, const std::vector<PatchRecord>& patches,
                              const std::vector<int>& assignments, int cluster_id,
                              int n_samples, uint64_t seed, int tile) {
    if (patches.size() != assignments.size())
        throw std::invalid_argument("montage: assignment length mismatch");
    std::vector<size_t> members;
    for (size_t i = 0; i < patches.size(); ++i)
        if (assignments[i] == cluster_id) members.push_back(i);
    if (members.empty())
        throw std::invalid_argument("montage: cluster " + std::to_string(cluster_id) +
                                    " is empty or unknown");

    Rng rng(seed);
    rng.shuffle(members);
    const int take = std::min<int>(n_samples, static_cast<int>(members.size()));
    members.resize(take);

    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(take))));
    const int rows = (take + cols - 1) / cols;
    RawImage montage;
    montage.width = cols * tile;
    montage.height = rows * tile;
    montage.channels = 1;
    montage.pixels.assign(static_cast<size_t>(montage.width) * montage.height, 0);

    // Load each source image once.
    std::map<int64_t, RawImage> cache;
    for (int t = 0; t < take; ++t) {
        const PatchRecord& p = patches[members[t]];
        auto it = cache.find(p.image_id);
        if (it == cache.end()) {
            const ImageEntry* e = ds.find_image(p.image_id);
            if (!e) throw std::runtime_error("montage: image " + std::to_string(p.image_id) +
                                             " missing from manifest");
            it = cache.emplace(p.image_id, load_image(ds, *e)).first;
        }
        RawImage patch_img = crop(it->second, p.top_row(), p.left_col(), p.patch_size, p.patch_size);
        if (patch_img.channels == 3) {
            GrayImage g = to_gray(patch_img);
            patch_img.channels = 1;
            patch_img.pixels.resize(g.values.size());
            for (size_t i = 0; i < g.values.size(); ++i)
                patch_img.pixels[i] = static_cast<uint8_t>(std::clamp(g.values[i], 0.0, 255.0));
        }
        RawImage cell = resize_area_u8(patch_img, tile, tile);
        const int r0 = (t / cols) * tile;
        const int c0 = (t % cols) * tile;
        for (int r = 0; r < tile; ++r)
            for (int c = 0; c < tile; ++c) montage.at(r0 + r, c0 + c) = cell.at(r, c);
    }
    return montage;
}

}  // namespace terraclust
