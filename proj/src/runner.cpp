#include "cmda/runner.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>

#include "cmda/checkpoint.hpp"
#include "cmda/dataset.hpp"
#include "cmda/eval.hpp"
#include "cmda/trainer.hpp"

namespace fs = std::filesystem;

namespace cmda {

namespace {

// Every config key the schema knows, resolved in one place so any run can
// echo the complete effective configuration and unknown keys surface
// immediately, whichever mode runs.
struct Resolved {
    uint64_t seed = 0;
    std::string out_root;
    std::string data_dir;
    DatasetGenConfig dgen;
    SegmenterConfig seg;
    SourceTrainConfig src;
    SourceTrainConfig stl;
    AdversarialTrainConfig adv;
    int critic_cap = 128;
    std::string source_ckpt;
};

Resolved resolve(const RunConfig& cfg, const std::string& out_root) {
    Resolved r;
    r.seed = cfg.get_u64("seed", 42);
    r.out_root = out_root;
    r.data_dir = cfg.get_str("data.dir", out_root + "/data");

    r.dgen.n_train = static_cast<int>(cfg.get_int("data.n_train", 16));
    r.dgen.n_test = static_cast<int>(cfg.get_int("data.n_test", 4));
    r.dgen.seed = Rng::derive(r.seed, 0xDA7Aull);

    r.seg.base_width = static_cast<int>(cfg.get_int("model.base_width", 8));

    r.src.batch_size = static_cast<int>(cfg.get_int("source.batch", 5));
    r.src.lr = cfg.get_double("source.lr", 1e-3);
    r.src.lr_decay = cfg.get_double("source.lr_decay", 0.95);
    r.src.lr_every = cfg.get_int("source.lr_every", 1500);
    r.src.max_iters = cfg.get_int("source.iters", 1200);
    r.src.lambda_dice = cfg.get_double("source.lambda_dice", 1.0);
    r.src.augment_slices = cfg.get_bool("source.augment", true);
    r.src.log_every = cfg.get_int("source.log_every", 50);
    r.src.seed = Rng::derive(r.seed, 0x7A1ull);

    r.stl = r.src;
    r.stl.max_iters = cfg.get_int("stl.iters", 300);
    r.stl.lr = cfg.get_double("stl.lr", 2e-4);
    r.stl.seed = Rng::derive(r.seed, 0x57Aull);

    r.adv.lr = cfg.get_double("adv.lr", 3e-4);
    r.adv.lr_decay = cfg.get_double("adv.lr_decay", 0.98);
    r.adv.lr_every = cfg.get_int("adv.lr_every", 100);
    r.adv.clip_c = cfg.get_double("adv.clip", 0.03);
    r.adv.n_dcm_per_dam = static_cast<int>(cfg.get_int("adv.ratio", 20));
    r.adv.max_joint_updates = cfg.get_int("adv.joint_updates", 150);
    r.adv.batch_size = static_cast<int>(cfg.get_int("adv.batch", 5));
    r.adv.swap_update_ratio = cfg.get_bool("adv.swap_ratio", false);
    r.adv.log_every = cfg.get_int("adv.log_every", 10);
    r.adv.seed = Rng::derive(r.seed, 0xADAull);

    r.critic_cap = static_cast<int>(cfg.get_int("adapt.critic_cap", 128));
    r.source_ckpt =
        cfg.get_str("source.checkpoint", out_root + "/runs/seg-source/checkpoint.ckpt");

    cfg.reject_unconsumed();
    return r;
}

void write_resolved(const std::string& dir, const RunConfig& cfg,
                    const std::map<std::string, std::string>& extra) {
    std::ostringstream os;
    for (const auto& [k, v] : extra) os << k << "=" << v << "\n";
    os << cfg.resolved_echo();
    write_text_file(dir + "/resolved.txt", os.str());
}

// Content hashes of every distinct file the audit saw, plus a combined
// digest over the per-file lines. Paths under the workspace are recorded
// relative to it so two identical runs in different workspaces produce the
// same combined digest.
void write_provenance(const std::string& path, const FileAudit& audit,
                      const std::string& base) {
    std::vector<std::string> files;
    std::set<std::string> seen;
    for (const auto& r : audit.records())
        if (seen.insert(r.path).second) files.push_back(r.path);

    std::string prefix = base.empty() ? "" : base + "/";
    std::ostringstream os;
    for (const auto& f : files) {
        std::string shown = f.rfind(prefix, 0) == 0 && !prefix.empty() ? f.substr(prefix.size())
                                                                       : f;
        os << sha256_file_hex(f) << "  " << shown << "\n";
    }
    std::string body = os.str();
    std::string combined = sha256_hex(body.data(), body.size());
    write_text_file(path, body + "combined " + combined + "\n");
}

void write_eval_artifacts(const std::string& dir, const std::string& heading,
                          const EvalResult& ev) {
    write_case_metrics_csv(dir + "/metrics_cases.csv", ev.cases, structure_names());
    write_summary_csv(dir + "/metrics_summary.csv", ev.report);
    std::ostringstream os;
    os << heading << "\n" << format_report_table(ev.report);
    write_text_file(dir + "/report.txt", os.str());
    std::fputs(os.str().c_str(), stderr);
}

std::string run_dir_for(const std::string& out_root, const std::string& name) {
    std::string dir = out_root + "/runs/" + name;
    fs::create_directories(dir);
    return dir;
}

Segmenter load_source_or_die(const Resolved& r, FileAudit* audit) {
    if (!fs::exists(r.source_ckpt))
        contract_fail("missing prerequisite source checkpoint at ", r.source_ckpt,
                      "; run --mode seg-source first (or set source.checkpoint)");
    if (audit) audit->record_open("checkpoint:source", r.source_ckpt);
    return load_source_checkpoint(r.source_ckpt);
}

int resolve_depth(const Segmenter& model, const std::string& depth) {
    auto presets = depth_presets(model);
    auto it = presets.find(depth);
    if (it != presets.end()) return it->second;
    try {
        return std::stoi(depth);  // check_depth_flag already vetted the format
    } catch (const std::out_of_range&) {
        throw UsageError("--depth index \"" + depth + "\" is out of range");
    }
}

// Supervised modes share one spine: train on a labeled split, checkpoint,
// evaluate on the held-out split of the same modality.
void supervised_run(const std::string& dir, const Resolved& r, const std::string& data_subdir,
                    const SourceTrainConfig& tcfg, bool from_source_ckpt) {
    FileAudit audit;
    audit.set_phase("train");
    DatasetManifest man = read_manifest(r.data_dir + "/" + data_subdir, &audit);
    LoadedDataset train = load_split(man, Split::kTrain, true, &audit);

    Segmenter model = from_source_ckpt
                          ? load_source_or_die(r, &audit)
                          : [&] {
                                SegmenterConfig sc = r.seg;
                                sc.num_classes = man.num_classes;
                                sc.validate();
                                return build_segmenter(sc, Rng::derive(r.seed, 0x5E6ull));
                            }();
    if (model.cfg.num_classes != man.num_classes)
        contract_fail("checkpoint expects ", model.cfg.num_classes, " classes, dataset has ",
                      man.num_classes);

    TrainSourceResult tr = train_source(model, train, tcfg, dir);
    save_source_checkpoint(dir + "/checkpoint.ckpt", model, tcfg.seed,
                           {{"iterations", tr.iters_run}});

    audit.set_phase("eval");
    LoadedDataset test = load_split(man, Split::kTest, true, &audit);
    EvalResult ev = evaluate(model, nullptr, nullptr, test);

    write_eval_artifacts(dir, "modality " + modality_tag(man.modality) + " test split (" +
                                  std::to_string(test.cases.size()) + " cases)",
                         ev);
    audit.write(dir + "/audit.txt");
    write_provenance(dir + "/provenance.txt", audit, r.out_root);
}

struct UdaOutcome {
    EvalResult ev;
    int depth_index = 0;
};

// The unsupervised pipeline: adversarial adaptation with target labels
// locked away, then evaluation on the labeled target test split.
UdaOutcome uda_run(const std::string& dir, const Resolved& r, const std::string& depth,
                   const RunConfig& cfg, const std::string& command) {
    write_resolved(dir, cfg, {{"command", command}, {"mode", "adapt-uda"}, {"depth", depth}});
    FileAudit audit;
    audit.forbid("labels:b");
    audit.set_phase("adapt");

    DatasetManifest man_a = read_manifest(r.data_dir + "/a", &audit);
    DatasetManifest man_b = read_manifest(r.data_dir + "/b", &audit);
    LoadedDataset src_train = load_split(man_a, Split::kTrain, false, &audit);
    LoadedDataset tgt_train = load_split(man_b, Split::kTrain, false, &audit);

    Segmenter source = load_source_or_die(r, &audit);
    int d = resolve_depth(source, depth);

    AdaptationConfig acfg = AdaptationConfig::defaults_for(source, d);
    acfg.clip_c = r.adv.clip_c;
    acfg.n_dcm_per_dam = r.adv.n_dcm_per_dam;
    acfg.critic_width_cap = r.critic_cap;

    AdaptResult ar = adapt_adversarial(source, src_train, tgt_train, r.adv, acfg, dir);
    save_adapted_checkpoint(dir + "/checkpoint.ckpt", source, ar.dam, acfg, r.adv.seed,
                            {{"joint_updates", ar.joint_updates_run},
                             {"dcm_steps", ar.dcm_steps},
                             {"dam_steps", ar.dam_steps}});

    audit.set_phase("eval");
    audit.allow("labels:b");
    LoadedDataset tgt_test = load_split(man_b, Split::kTest, true, &audit);
    EvalResult ev = evaluate(source, &ar.dam, &acfg, tgt_test);

    if (audit.count("adapt", "labels:b") != 0)
        throw AuditViolation("target label files were opened during adaptation");

    write_eval_artifacts(dir, "adapt-uda depth " + depth + " (index " + std::to_string(d) +
                                  "), modality b test split",
                         ev);
    audit.write(dir + "/audit.txt");
    write_provenance(dir + "/provenance.txt", audit, r.out_root);
    return {std::move(ev), d};
}

}  // namespace

void check_depth_flag(const std::string& depth) {
    if (depth == "shallow" || depth == "mid" || depth == "deep") return;
    if (!depth.empty() && std::all_of(depth.begin(), depth.end(),
                                      [](unsigned char c) { return std::isdigit(c); }))
        return;
    throw UsageError("--depth must be shallow, mid, deep or a positive layer index, got \"" +
                     depth + "\"");
}

void run_gen_data(const RunConfig& cfg, const std::string& out_root) {
    Resolved r = resolve(cfg, out_root);
    fs::create_directories(r.data_dir);

    FileAudit audit;
    audit.set_phase("gen");
    DatasetManifest a = gen_dataset(r.data_dir + "/a", Modality::A, r.dgen);
    DatasetManifest b = gen_dataset(r.data_dir + "/b", Modality::B, r.dgen);
    // Hash what was produced so later runs can prove they consumed exactly
    // this dataset.
    for (const auto& man : {a, b}) {
        audit.record_open("manifest:" + modality_tag(man.modality), man.dir + "/manifest.txt");
        for (const auto& c : man.cases) {
            audit.record_open("volume:" + modality_tag(man.modality), man.volume_path(c.name));
            audit.record_open("labels:" + modality_tag(man.modality), man.labels_path(c.name));
        }
    }
    write_resolved(r.data_dir, cfg, {{"command", "gen-data"}});
    write_provenance(r.data_dir + "/provenance.txt", audit, r.out_root);
    std::fprintf(stderr, "[gen-data] wrote %zu + %zu cases under %s\n", a.cases.size(),
                 b.cases.size(), r.data_dir.c_str());
}

void run_mode(const std::string& mode, const std::string& depth, const RunConfig& cfg,
              const std::string& out_root) {
    static const std::set<std::string> kModes = {"seg-source", "seg-target-scratch",
                                                 "seg-target-stl", "eval-nodap", "adapt-uda"};
    if (!kModes.count(mode)) {
        std::string all;
        for (const auto& m : kModes) all += (all.empty() ? "" : ", ") + m;
        throw UsageError("unknown mode \"" + mode + "\"; expected one of " + all);
    }
    check_depth_flag(depth);

    Resolved r = resolve(cfg, out_root);
    std::string dir = run_dir_for(out_root, mode);
    if (mode != "adapt-uda")
        write_resolved(dir, cfg, {{"command", "run"}, {"mode", mode}, {"depth", depth}});

    if (mode == "seg-source") {
        supervised_run(dir, r, "a", r.src, false);
    } else if (mode == "seg-target-scratch") {
        supervised_run(dir, r, "b", r.src, false);
    } else if (mode == "seg-target-stl") {
        supervised_run(dir, r, "b", r.stl, true);
    } else if (mode == "eval-nodap") {
        FileAudit audit;
        audit.forbid("labels:b");
        audit.set_phase("prepare");
        DatasetManifest man_b = read_manifest(r.data_dir + "/b", &audit);
        Segmenter source = load_source_or_die(r, &audit);

        audit.set_phase("eval");
        audit.allow("labels:b");
        LoadedDataset test = load_split(man_b, Split::kTest, true, &audit);
        EvalResult ev = evaluate(source, nullptr, nullptr, test);

        if (audit.count("prepare", "labels:b") != 0)
            throw AuditViolation("target label files were opened before evaluation");
        write_eval_artifacts(dir, "source model on modality b test split, no adaptation", ev);
        audit.write(dir + "/audit.txt");
        write_provenance(dir + "/provenance.txt", audit, r.out_root);
    } else {  // adapt-uda
        uda_run(dir, r, depth, cfg, "run");
    }
}

void run_ablate_depth(const RunConfig& cfg, const std::string& out_root) {
    Resolved r = resolve(cfg, out_root);
    std::string base = run_dir_for(out_root, "ablate");
    write_resolved(base, cfg, {{"command", "ablate-depth"}});

    if (!fs::exists(r.source_ckpt))
        contract_fail("missing prerequisite source checkpoint at ", r.source_ckpt,
                      "; run --mode seg-source first");
    std::string source_sha = sha256_file_hex(r.source_ckpt);

    const std::vector<std::string> order = {"shallow", "mid", "deep"};
    std::vector<UdaOutcome> outs;
    for (const auto& name : order)
        outs.push_back(
            uda_run(run_dir_for(out_root, "ablate/" + name), r, name, cfg, "ablate-depth"));

    std::ofstream csvf(base + "/ablation.csv", std::ios::trunc);
    if (!csvf) contract_fail("cannot open ", base, "/ablation.csv for writing");
    csvf << "depth,depth_index,source_sha256,class,dice_mean,dice_std,asd_mean,asd_std,asd_n,"
            "asd_na\n";
    csvf << std::setprecision(10);
    for (size_t i = 0; i < order.size(); ++i)
        for (const auto& c : outs[i].ev.report.classes) {
            csvf << order[i] << "," << outs[i].depth_index << "," << source_sha << "," << c.name
                 << "," << c.dice.mean << "," << c.dice.stddev << ",";
            if (c.asd.n > 0)
                csvf << c.asd.mean << "," << c.asd.stddev;
            else
                csvf << "NA,NA";
            csvf << "," << c.asd.n << "," << c.asd_na << "\n";
        }

    std::ostringstream os;
    os << std::left << std::setw(10) << "depth";
    for (const auto& name : structure_names())
        os << std::setw(22) << (name + " dice") << std::setw(22) << (name + " asd");
    os << "\n";
    os << std::fixed << std::setprecision(2);
    for (size_t i = 0; i < order.size(); ++i) {
        os << std::left << std::setw(10) << order[i];
        for (const auto& c : outs[i].ev.report.classes) {
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(2) << c.dice.mean << " +- " << c.dice.stddev;
            os << std::setw(22) << cell.str();
            cell.str("");
            if (c.asd.n > 0)
                cell << std::fixed << std::setprecision(2) << c.asd.mean << " +- " << c.asd.stddev;
            else
                cell << "N/A";
            os << std::setw(22) << cell.str();
        }
        os << "\n";
    }
    write_text_file(base + "/ablation.txt", os.str());
    std::fputs(os.str().c_str(), stderr);
}

}  // namespace cmda
