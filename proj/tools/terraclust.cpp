// terraclust: constrained-clustering toolkit for terrain patch analysis.
//
// Subcommands: synth, extract, filter, constraints, cluster, run, ablate,
// eval, montage. See README.md for the end-to-end workflow.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "terraclust/cluster.hpp"
#include "terraclust/constraints.hpp"
#include "terraclust/embed.hpp"
#include "terraclust/eval.hpp"
#include "terraclust/ingest.hpp"
#include "terraclust/io.hpp"
#include "terraclust/parallel.hpp"
#include "terraclust/patch_filter.hpp"
#include "terraclust/pipeline.hpp"
#include "terraclust/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace terraclust;

namespace {

constexpr const char* kVersion = "terraclust 0.1.0";

std::set<ConstraintSource> parse_sources(const std::string& spec) {
    std::set<ConstraintSource> out;
    if (spec == "none" || spec.empty()) return out;
    if (spec == "all")
        return {ConstraintSource::Neighbor, ConstraintSource::LR, ConstraintSource::RSM};
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, '+')) out.insert(source_from_string(tok));
    return out;
}

std::vector<ImageDims> dims_of(const Dataset& ds) {
    std::vector<ImageDims> dims;
    for (const auto& e : ds.images) dims.push_back({e.image_id, e.width, e.height});
    return dims;
}

EmbeddingSet subset_features(const EmbeddingSet& all, const std::vector<int64_t>& keep_ids) {
    std::unordered_map<int64_t, int64_t> row_of;
    for (int64_t i = 0; i < all.n_patches; ++i) row_of[all.patch_ids[i]] = i;
    EmbeddingSet out;
    out.dim = all.dim;
    out.transform = all.transform;
    for (int64_t id : keep_ids) {
        auto it = row_of.find(id);
        if (it == row_of.end())
            throw std::runtime_error("features missing patch " + std::to_string(id));
        const float* r = all.row(it->second);
        out.values.insert(out.values.end(), r, r + all.dim);
        out.patch_ids.push_back(id);
    }
    out.n_patches = static_cast<int64_t>(out.patch_ids.size());
    return out;
}

json metrics_json(const EmbeddingSet& features, const std::vector<PatchRecord>& patches,
                  const std::vector<int>& assignments, int k,
                  const std::set<std::string>& which) {
    std::vector<int> truth(patches.size());
    for (size_t i = 0; i < patches.size(); ++i) truth[i] = patches[i].label;

    json out;
    out["k"] = k;
    out["n_patches"] = patches.size();
    if (which.count("db")) out["db_index"] = db_index(features, assignments);
    if (which.count("nmi")) out["nmi_vs_truth"] = nmi(assignments, truth);
    if (which.count("homogeneity"))
        out["homogeneous_clusters"] =
            homogeneity_report(assignments, truth, k).homogeneous_clusters;
    if (which.count("p@10")) {
        std::vector<PatchRecord> test;
        std::vector<int64_t> ids;
        for (const auto& p : patches)
            if (p.split == Split::Test && p.label >= 0) {
                test.push_back(p);
                ids.push_back(p.patch_id);
            }
        if (!test.empty()) {
            EmbeddingSet sub = subset_features(features, ids);
            out["precision_at_10_mean"] = mean_precision_at_k(sub, test, 10).mean_precision;
        } else {
            out["precision_at_10_mean"] = nullptr;
        }
    }
    return out;
}

struct RunArtifacts {
    ExtractionResult extraction;
    ConstraintSet constraints;
    ConstraintGenStats constraint_stats;
};

// Shared front half of `run` / `ablate`: extract, split, generate constraints.
RunArtifacts prepare_run(const Dataset& ds, const PipelineConfig& cfg) {
    RunArtifacts art;
    art.extraction = extract_dataset(ds, cfg.patch_sizes, cfg.stride);
    split_train_test(art.extraction.patches, dims_of(ds));

    ConstraintGenConfig gen;
    gen.similarity = cfg.similarity;
    gen.lr = cfg.lr_constraints;
    gen.rsm = cfg.rsm_constraints;
    gen.enable_neighbor = cfg.sources.count(ConstraintSource::Neighbor) > 0;
    gen.enable_lr = cfg.sources.count(ConstraintSource::LR) > 0;
    gen.enable_rsm = cfg.sources.count(ConstraintSource::RSM) > 0;
    art.constraint_stats = generate_constraints(ds, art.extraction.patches, gen, art.constraints);
    return art;
}

json stats_json(const ConstraintGenStats& s) {
    return {{"neighbor_links", s.neighbor_links}, {"lr_links", s.lr_links},
            {"rsm_links", s.rsm_links},           {"lr_pairs", s.lr_pairs},
            {"lr_skipped", s.lr_skipped},         {"rsm_pairs", s.rsm_pairs}};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kVersion) + " - constrained terrain-patch clustering"};
    app.require_subcommand(1);

    uint64_t seed = 7;
    int threads = 0;
    std::string config_path;
    app.add_option("--seed", seed, "global random seed");
    app.add_option("--threads", threads, "worker threads (0 = hardware)");
    app.add_option("--config", config_path, "pipeline config JSON");

    auto load_config = [&]() {
        PipelineConfig cfg;
        if (!config_path.empty()) cfg = config_from_json_file(config_path);
        if (app.count("--seed")) cfg.seed = seed;
        return cfg;
    };

    // --- synth ---
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
    SynthDatasetConfig synth_cfg;
    std::string synth_out = "data";
    synth->add_option("--classes", synth_cfg.scene.n_classes, "terrain classes");
    synth->add_option("--scenes", synth_cfg.n_scenes, "number of scenes");
    synth->add_option("--size", synth_cfg.scene.image_size, "scene side in pixels");
    synth->add_option("--grid", synth_cfg.scene.region_grid, "regions per axis");
    synth->add_option("--brightness-sigma", synth_cfg.scene.brightness_sigma,
                      "per-region brightness nuisance");
    synth->add_option("--noise-sigma", synth_cfg.scene.noise_sigma, "per-pixel noise");
    synth->add_option("--brightness-gradient", synth_cfg.scene.brightness_gradient,
                      "max relative illumination drift across one region");
    synth->add_option("--depth-ramp", synth_cfg.scene.depth_ramp, "top-to-bottom depth range");
    synth->add_option("--shift-row", synth_cfg.rsm_shift_row, "RSM partner row shift");
    synth->add_option("--shift-col", synth_cfg.rsm_shift_col, "RSM partner column shift");
    synth->add_option("--brightness-delta", synth_cfg.rsm_brightness_delta,
                      "RSM partner brightness offset");
    synth->add_flag("--no-stereo", [&](int64_t) { synth_cfg.stereo = false; }, "skip stereo pairs");
    synth->add_flag("--no-rsm", [&](int64_t) { synth_cfg.rsm = false; }, "skip RSM partners");
    synth->add_option("--out-dir", synth_out, "output directory")->required();

    // --- extract ---
    auto* extract = app.add_subcommand("extract", "extract and featurize patches");
    std::string ex_manifest, ex_out = "patches.csv", ex_features = "features.temb";
    std::string ex_sizes = "128,256";
    double ex_stride = 0.5;
    extract->add_option("--manifest", ex_manifest)->required();
    extract->add_option("--patch-sizes", ex_sizes, "comma-separated window sides");
    extract->add_option("--stride", ex_stride, "stride fraction in (0,1]");
    extract->add_option("--out", ex_out, "patch table CSV");
    extract->add_option("--features", ex_features, "embeddings output");

    // --- filter ---
    auto* filter = app.add_subcommand("filter", "classify patches and keep selected classes");
    std::string fl_patches, fl_manifest, fl_out = "filtered.csv", fl_keep = "rock";
    std::string fl_features_in, fl_features_out;
    FilterConfig fl_cfg;
    filter->add_option("--patches", fl_patches)->required();
    filter->add_option("--manifest", fl_manifest)->required();
    filter->add_option("--keep", fl_keep, "classes to keep, e.g. rock,soil (empty = annotate only)");
    filter->add_option("--out", fl_out);
    filter->add_option("--features", fl_features_in, "embeddings to subset alongside");
    filter->add_option("--features-out", fl_features_out);
    filter->add_option("--depth-cutoff", fl_cfg.depth_cutoff);
    filter->add_flag("--use-depth-cutoff", fl_cfg.use_depth_cutoff,
                     "apply the distant rule to the supplied depth channel");
    filter->add_option("--min-component-size", fl_cfg.min_component_size);
    filter->add_option("--connectivity", fl_cfg.connectivity, "4 or 8");

    // --- constraints ---
    auto* constraints_cmd = app.add_subcommand("constraints", "generate pairwise constraints");
    std::string cn_patches, cn_manifest, cn_out = "constraints.csv", cn_sources = "all";
    constraints_cmd->add_option("--patches", cn_patches)->required();
    constraints_cmd->add_option("--manifest", cn_manifest)->required();
    constraints_cmd->add_option("--out", cn_out);
    constraints_cmd->add_option("--sources", cn_sources, "subset like neighbor+lr+rsm, or all/none");
    PipelineConfig cn_defaults;
    constraints_cmd->add_option("--alpha", cn_defaults.similarity.alpha);
    constraints_cmd->add_option("--beta", cn_defaults.similarity.beta);
    constraints_cmd->add_option("--sigma-spatial", cn_defaults.similarity.sigma_spatial);
    constraints_cmd->add_option("--sigma-depth", cn_defaults.similarity.sigma_depth);
    constraints_cmd->add_option("--threshold", cn_defaults.similarity.threshold);
    constraints_cmd->add_option("--lr-min-score", cn_defaults.lr_constraints.min_score);
    constraints_cmd->add_option("--rsm-min-score", cn_defaults.rsm_constraints.min_score);

    // --- cluster ---
    auto* cluster_cmd = app.add_subcommand("cluster", "constrained k-means over embeddings");
    std::string cl_features, cl_constraints, cl_model = "model.tcm",
                cl_assign = "assignments.csv";
    int cl_k = 150, cl_iters = 100;
    double cl_lambda = 1.0;
    bool cl_whiten = false;
    int cl_pca_dim = 0;
    cluster_cmd->add_option("--features", cl_features)->required();
    cluster_cmd->add_option("--pca-dim", cl_pca_dim, "PCA output dim (0 = auto)");
    cluster_cmd->add_option("--constraints", cl_constraints);
    cluster_cmd->add_option("--k", cl_k);
    cluster_cmd->add_option("--lambda", cl_lambda);
    cluster_cmd->add_option("--max-iters", cl_iters);
    cluster_cmd->add_flag("--pca-whiten", cl_whiten, "fit PCA/whitening before clustering");
    cluster_cmd->add_option("--out-model", cl_model);
    cluster_cmd->add_option("--out-assignments", cl_assign);

    // --- run ---
    auto* run = app.add_subcommand("run", "full iterative pipeline");
    std::string run_manifest, run_out = "out";
    run->add_option("--manifest", run_manifest)->required();
    run->add_option("--out-dir", run_out);

    // --- ablate ---
    auto* ablate = app.add_subcommand("ablate", "constraint-source ablation table");
    std::string ab_manifest, ab_out = "out", ab_variants = "none,neighbor,LR,RSM,neighbor+LR,all";
    ablate->add_option("--manifest", ab_manifest)->required();
    ablate->add_option("--out-dir", ab_out);
    ablate->add_option("--variants", ab_variants, "comma-separated source subsets");

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "clustering / retrieval metrics");
    std::string ev_features, ev_assign, ev_truth, ev_metrics = "db,nmi,p@10,homogeneity",
                ev_out = "metrics.json";
    int ev_k = 0;
    eval_cmd->add_option("--features", ev_features)->required();
    eval_cmd->add_option("--assignments", ev_assign)->required();
    eval_cmd->add_option("--truth", ev_truth, "patch table CSV with labels")->required();
    eval_cmd->add_option("--metrics", ev_metrics);
    eval_cmd->add_option("--k", ev_k, "cluster count (0 = derive from assignments)");
    eval_cmd->add_option("--out", ev_out);

    // --- montage ---
    auto* montage = app.add_subcommand("montage", "tile random members of one cluster");
    std::string mo_manifest, mo_patches, mo_assign, mo_out = "montage.pgm";
    int mo_cluster = 0, mo_samples = 300;
    montage->add_option("--manifest", mo_manifest)->required();
    montage->add_option("--patches", mo_patches)->required();
    montage->add_option("--assignments", mo_assign)->required();
    montage->add_option("--cluster", mo_cluster)->required();
    montage->add_option("--samples", mo_samples);
    montage->add_option("--out", mo_out);

    // Global flags may appear before or after the subcommand.
    for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);
    set_thread_count(threads);

    try {
        if (*synth) {
            synth_cfg.scene.seed = seed;
            Dataset ds = generate_synth_dataset(synth_cfg, synth_out);
            std::cout << "wrote " << ds.images.size() << " images under " << synth_out << "\n";
        }

        if (*extract) {
            Dataset ds = load_manifest(ex_manifest);
            std::vector<int> sizes;
            std::stringstream ss(ex_sizes);
            std::string tok;
            while (std::getline(ss, tok, ',')) sizes.push_back(std::stoi(tok));
            ExtractionResult res = extract_dataset(ds, sizes, ex_stride);
            split_train_test(res.patches, dims_of(ds));
            write_patch_csv(ex_out, res.patches);
            write_embeddings(ex_features, res.features);
            ValidationReport rep = validate_dataset(res.patches, res.features, dims_of(ds));
            std::cout << res.patches.size() << " patches, " << rep.violations.size()
                      << " validation issues\n";
            for (const auto& v : rep.violations) std::cerr << "  " << v.message << "\n";
        }

        if (*filter) {
            Dataset ds = load_manifest(fl_manifest);
            auto patches = read_patch_csv(fl_patches);
            FilterStats stats = classify_dataset(ds, patches, fl_cfg);
            std::cout << "rock " << stats.rock << ", soil " << stats.soil << ", pebbly "
                      << stats.pebbly << ", mixed " << stats.mixed << ", distant "
                      << stats.distant << ", unfiltered " << stats.unfiltered << "\n";
            if (!fl_keep.empty()) {
                std::set<FilterClass> keep;
                std::stringstream ss(fl_keep);
                std::string tok;
                while (std::getline(ss, tok, ',')) keep.insert(filter_class_from_string(tok));
                std::erase_if(patches,
                              [&](const PatchRecord& p) { return !keep.count(p.filter_class); });
            }
            write_patch_csv(fl_out, patches);
            if (!fl_features_in.empty()) {
                EmbeddingSet all = read_embeddings(fl_features_in);
                std::vector<int64_t> ids;
                for (const auto& p : patches) ids.push_back(p.patch_id);
                write_embeddings(fl_features_out.empty() ? fl_features_in + ".filtered"
                                                         : fl_features_out,
                                 subset_features(all, ids));
            }
            std::cout << patches.size() << " patches kept -> " << fl_out << "\n";
        }

        if (*constraints_cmd) {
            Dataset ds = load_manifest(cn_manifest);
            auto patches = read_patch_csv(cn_patches);
            ConstraintGenConfig gen;
            gen.similarity = cn_defaults.similarity;
            gen.lr = cn_defaults.lr_constraints;
            gen.rsm = cn_defaults.rsm_constraints;
            auto sources = parse_sources(cn_sources);
            gen.enable_neighbor = sources.count(ConstraintSource::Neighbor) > 0;
            gen.enable_lr = sources.count(ConstraintSource::LR) > 0;
            gen.enable_rsm = sources.count(ConstraintSource::RSM) > 0;
            ConstraintSet cs;
            ConstraintGenStats stats = generate_constraints(ds, patches, gen, cs);
            write_constraints_csv(cn_out, cs);
            std::cout << cs.hard_links.size() << " hard, " << cs.soft_links.size()
                      << " soft links -> " << cn_out << " " << stats_json(stats).dump() << "\n";
        }

        if (*cluster_cmd) {
            EmbeddingSet features = read_embeddings(cl_features);
            if (cl_whiten) {
                PcaOptions pca;
                pca.out_dim = cl_pca_dim;
                features = fit_pca_whiten(features, pca);
            }
            ConstraintSet cs;
            if (!cl_constraints.empty()) cs = read_constraints_csv(cl_constraints);
            restrict_constraints(cs, features.patch_ids);
            PccConfig pcc;
            pcc.lambda = cl_lambda;
            pcc.max_iters = cl_iters;
            pcc.seed = seed;
            ClusterModel model = pcc_kmeans(features, cl_k, cs, pcc);
            write_cluster_model(cl_model, model);
            write_assignments_csv(cl_assign, features.patch_ids, model.assignments);
            std::cout << "J = " << format_double(model.objective) << " after "
                      << model.iterations_run << " iterations -> " << cl_assign << "\n";
        }

        if (*run) {
            PipelineConfig cfg = load_config();
            Dataset ds = load_manifest(run_manifest);
            fs::create_directories(run_out);
            RunArtifacts art = prepare_run(ds, cfg);

            write_patch_csv(run_out + "/patches.csv", art.extraction.patches);
            write_embeddings(run_out + "/features.temb", art.extraction.features);
            write_constraints_csv(run_out + "/constraints.csv", art.constraints);

            DccmlResult res = run_dccml(art.extraction.features, art.constraints, cfg,
                                        run_out + "/rounds");
            write_assignments_csv(run_out + "/assignments.csv",
                                  art.extraction.features.patch_ids, res.model.assignments);
            write_cluster_model(run_out + "/model.tcm", res.model);
            write_metric_model(run_out + "/metric.tcmet", res.metric);

            json metrics = metrics_json(res.round_features, art.extraction.patches,
                                        res.model.assignments, cfg.k,
                                        {"db", "nmi", "p@10", "homogeneity"});
            write_text(run_out + "/metrics.json", metrics.dump(2) + "\n");

            json run_doc;
            run_doc["version"] = kVersion;
            run_doc["config"] = json::parse(config_to_json(cfg));
            run_doc["constraint_stats"] = stats_json(art.constraint_stats);
            run_doc["converged"] = res.converged;
            run_doc["selected_round"] = res.selected_round;
            run_doc["rounds"] = json::array();
            for (const auto& r : res.history) {
                json jr = {{"round", r.round},
                           {"objective", r.objective},
                           {"db", r.db},
                           {"kmeans_iterations", r.kmeans_iterations},
                           {"features", "rounds/round_" + std::to_string(r.round) +
                                            "_features.temb"},
                           {"assignments", "rounds/round_" + std::to_string(r.round) +
                                               "_assignments.csv"}};
                if (r.nmi_prev >= 0.0) jr["nmi_prev"] = r.nmi_prev;
                if (r.mean_triplet_loss >= 0.0) jr["triplet_loss"] = r.mean_triplet_loss;
                run_doc["rounds"].push_back(jr);
            }
            run_doc["files"] = {{"patches", "patches.csv"},
                                {"features", "features.temb"},
                                {"constraints", "constraints.csv"},
                                {"assignments", "assignments.csv"},
                                {"model", "model.tcm"},
                                {"metric", "metric.tcmet"},
                                {"metrics", "metrics.json"}};
            write_text(run_out + "/run.json", run_doc.dump(2) + "\n");
            std::cout << (res.converged ? "converged" : "unconverged") << " at round "
                      << res.selected_round << ", metrics: " << metrics.dump() << "\n";
        }

        if (*ablate) {
            PipelineConfig cfg = load_config();
            Dataset ds = load_manifest(ab_manifest);
            fs::create_directories(ab_out);
            // Generate every source once; variants filter the shared set.
            PipelineConfig full = cfg;
            full.sources = {ConstraintSource::Neighbor, ConstraintSource::LR,
                            ConstraintSource::RSM};
            RunArtifacts art = prepare_run(ds, full);

            std::vector<std::set<ConstraintSource>> variants;
            std::stringstream ss(ab_variants);
            std::string tok;
            while (std::getline(ss, tok, ',')) variants.push_back(parse_sources(tok));

            auto rows = run_ablation(art.extraction.features, art.constraints,
                                     art.extraction.patches, cfg, variants);
            json table = json::array();
            for (const auto& r : rows) {
                json jr = {{"variant", r.variant},
                           {"db", r.db},
                           {"homogeneous_clusters", r.homogeneous_clusters},
                           {"precision_at_10", r.mean_precision_at_10},
                           {"nmi_vs_truth", r.nmi_vs_truth},
                           {"converged", r.converged}};
                if (r.failed) jr["error"] = r.error;
                table.push_back(jr);
                std::cout << r.variant << ": DB " << r.db << ", homogeneous "
                          << r.homogeneous_clusters << ", P@10 " << r.mean_precision_at_10
                          << (r.failed ? " FAILED: " + r.error : "") << "\n";
            }
            write_text(ab_out + "/ablation.json", table.dump(2) + "\n");
        }

        if (*eval_cmd) {
            EmbeddingSet features = read_embeddings(ev_features);
            auto patches = read_patch_csv(ev_truth);
            auto assign_pairs = read_assignments_csv(ev_assign);
            std::unordered_map<int64_t, int> amap(assign_pairs.begin(), assign_pairs.end());
            std::unordered_map<int64_t, const PatchRecord*> pmap;
            for (const auto& p : patches) pmap[p.patch_id] = &p;

            std::vector<PatchRecord> aligned;
            std::vector<int> assignments;
            for (int64_t id : features.patch_ids) {
                auto pa = pmap.find(id);
                auto aa = amap.find(id);
                if (pa == pmap.end() || aa == amap.end())
                    throw std::runtime_error("eval: patch " + std::to_string(id) +
                                             " missing from truth or assignments");
                aligned.push_back(*pa->second);
                assignments.push_back(aa->second);
            }
            int k = ev_k;
            if (k <= 0)
                for (int a : assignments) k = std::max(k, a + 1);
            std::set<std::string> which;
            std::stringstream ss(ev_metrics);
            std::string tok;
            while (std::getline(ss, tok, ',')) which.insert(tok);
            json metrics = metrics_json(features, aligned, assignments, k, which);
            write_text(ev_out, metrics.dump(2) + "\n");
            std::cout << metrics.dump() << "\n";
        }

        if (*montage) {
            Dataset ds = load_manifest(mo_manifest);
            auto patches = read_patch_csv(mo_patches);
            auto assign_pairs = read_assignments_csv(mo_assign);
            std::unordered_map<int64_t, int> amap(assign_pairs.begin(), assign_pairs.end());
            std::vector<int> assignments;
            for (const auto& p : patches) {
                auto it = amap.find(p.patch_id);
                assignments.push_back(it == amap.end() ? -1 : it->second);
            }
            RawImage img = emit_cluster_montage(ds, patches, assignments, mo_cluster, mo_samples,
                                                seed);
            write_pnm(mo_out, img);
            std::cout << "montage " << img.width << "x" << img.height << " -> " << mo_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
