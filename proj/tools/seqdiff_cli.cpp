#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqdiff/analysis.hpp"
#include "seqdiff/bleu.hpp"
#include "seqdiff/checkpoint.hpp"
#include "seqdiff/config.hpp"
#include "seqdiff/denoiser.hpp"
#include "seqdiff/diffusion.hpp"
#include "seqdiff/embedding.hpp"
#include "seqdiff/sampler.hpp"
#include "seqdiff/tasks.hpp"

namespace fs = std::filesystem;
using namespace seqdiff;

namespace {

constexpr const char* kCodeVersion = "0.1.0";
constexpr int kManifestVersion = 1;

// Exit codes: 0 ok, 1 flag/usage error, 2 missing file, 3 config error, 4 other.
struct MissingFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw MissingFileError("no such file or directory: " + path);
}

void write_manifest(const std::string& dir, const std::string& config_text,
                    uint64_t seed, const std::string& command) {
    nlohmann::json j;
    j["manifest_version"] = kManifestVersion;
    j["code_version"] = kCodeVersion;
    j["command"] = command;
    j["seed"] = seed;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(config_text)));
    j["config_fnv1a"] = buf;
    fs::create_directories(dir);
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw std::runtime_error("cannot write manifest in " + dir);
    f << j.dump(2) << "\n";
}

struct Model {
    DenoiserConfig dcfg;
    TrainConfig tcfg;
    EmbeddingTable table;
    std::unique_ptr<Denoiser> denoiser;
    std::unique_ptr<Trainer> trainer;
};

Model build_model(const Config& cfg, int vocab_size, uint64_t seed) {
    Model m;
    m.dcfg.vocab_size = vocab_size;
    m.dcfg.embed_dim = static_cast<int>(cfg.get_int("embed_dim", 16));
    m.dcfg.width = static_cast<int>(cfg.get_int("width", 256));
    m.dcfg.layers = static_cast<int>(cfg.get_int("layers", 4));
    m.dcfg.heads = static_cast<int>(cfg.get_int("heads", 4));
    m.dcfg.ffn_width = static_cast<int>(cfg.get_int("ffn_width", 1024));
    m.dcfg.length_offset_k = static_cast<int>(cfg.get_int("length_offset_k", 32));
    m.dcfg.max_len = static_cast<int>(cfg.get_int("max_len", 256));

    m.tcfg.schedule = NoiseSchedule::parse(cfg.get_str("schedule", "linear"));
    m.tcfg.noise_clipping = cfg.get_bool("noise_clipping", true);
    m.tcfg.clip_refresh_every =
        static_cast<uint64_t>(cfg.get_int("clip_refresh_every", 100));
    m.tcfg.self_cond_prob = cfg.get_double("self_cond_prob", 0.5);
    m.tcfg.length_loss_weight = cfg.get_double("length_loss_weight", 0.1);
    m.tcfg.optimizer.lr = cfg.get_double("lr", 3e-4);
    m.tcfg.optimizer.warmup_steps =
        static_cast<uint64_t>(cfg.get_int("warmup_steps", 1000));
    m.tcfg.optimizer.weight_decay = cfg.get_double("weight_decay", 0.01);
    m.tcfg.optimizer.clip_norm = cfg.get_double("clip_norm", 1.0);

    Rng init = Rng::derive(seed, 0);
    m.table = EmbeddingTable(vocab_size, m.dcfg.embed_dim, init);
    m.denoiser = std::make_unique<Denoiser>(m.dcfg, init);
    m.trainer = std::make_unique<Trainer>(*m.denoiser, m.table, m.tcfg, seed);
    return m;
}

std::vector<SeqPair> pick_split(const Corpus& corpus, const std::string& split) {
    if (split == "train") return corpus.train;
    if (split == "valid") return corpus.valid;
    if (split == "test") return corpus.test;
    throw ConfigError("unknown split: " + split);
}

// Reference file: either hypothesis-style token arrays or src/tgt records.
std::vector<std::vector<int>> load_refs(const std::string& path) {
    require_file(path);
    std::ifstream f(path);
    std::string line;
    std::vector<std::vector<int>> refs;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        if (j.is_array()) {
            refs.push_back(j.get<std::vector<int>>());
        } else {
            refs.push_back(j.at("tgt").get<std::vector<int>>());
        }
    }
    return refs;
}

void write_csv(const std::string& path, const std::string& version_tag,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "# " << version_tag << "\n";
    for (size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
    f << "\n";
    f.precision(12);
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
        f << "\n";
    }
}

uint64_t per_example_seed(uint64_t base, uint64_t index) {
    return Rng::derive(base, index).next_u64();
}

int run_gen_data(const TaskSpec& spec, const std::string& out_dir) {
    Corpus corpus = generate_dataset(spec);
    fs::create_directories(out_dir);
    save_corpus(out_dir, corpus);
    std::string cfg_text = std::string("task=") + spec.kind_name() + "\n";
    write_manifest(out_dir, cfg_text, spec.seed, "gen-data");
    std::cout << "wrote " << corpus.train.size() << " train / " << corpus.valid.size()
              << " valid / " << corpus.test.size() << " test pairs to " << out_dir
              << " (collision rate " << corpus.collision_rate << ")\n";
    return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, uint64_t seed, int64_t steps_override,
              const std::string& resume) {
    require_file(config_path);
    require_file(data_dir);
    Config cfg = Config::load(config_path);
    Corpus corpus = load_corpus(data_dir);

    Model m = build_model(cfg, corpus.vocab.size(), seed);
    uint64_t total_steps = static_cast<uint64_t>(
        steps_override > 0 ? steps_override : cfg.get_int("steps", 20000));
    int batch_sequences = static_cast<int>(cfg.get_int("batch_sequences", 16));
    uint64_t metrics_every = static_cast<uint64_t>(cfg.get_int("metrics_every", 50));

    fs::create_directories(out_dir);
    std::string metrics_path = out_dir + "/metrics.csv";
    std::ofstream metrics;
    if (!resume.empty()) {
        require_file(resume);
        load_checkpoint(resume, *m.denoiser, m.table, *m.trainer);
        metrics.open(metrics_path, std::ios::app);
    } else {
        metrics.open(metrics_path);
        metrics << "# metrics_v1\n";
        metrics << "step,diffusion_mse,reconstruction_nll,length_nll,sigma_min,t_min\n";
    }
    if (!metrics) throw std::runtime_error("cannot write " + metrics_path);
    metrics.precision(12);

    const uint64_t n_train = corpus.train.size();
    while (m.trainer->step() < total_steps) {
        // Batch choice is a pure function of (seed, step) so a resumed run
        // replays the exact uninterrupted trajectory.
        Rng batch_rng = Rng::derive(seed ^ 0xba7c4e5d1ull, m.trainer->step());
        std::vector<SeqPair> batch;
        for (int b = 0; b < batch_sequences; ++b) {
            batch.push_back(corpus.train[batch_rng.below(n_train)]);
        }
        LossBreakdown loss = m.trainer->train_step(batch);
        uint64_t step = m.trainer->step();
        if (step % metrics_every == 0 || step == total_steps) {
            metrics << step << "," << loss.diffusion_mse << ","
                    << loss.reconstruction_nll << "," << loss.length_nll << ","
                    << m.trainer->clipping().sigma_min << ","
                    << m.trainer->time_sampler().t_min() << "\n";
        }
    }
    metrics.flush();

    std::string config_text = cfg.text();
    std::ofstream(out_dir + "/config.txt") << config_text;
    save_checkpoint(out_dir + "/checkpoint.bin", config_text, *m.denoiser, m.table,
                    *m.trainer);
    write_manifest(out_dir, config_text, seed, "train");
    std::cout << "trained " << m.trainer->step() << " steps; checkpoint at " << out_dir
              << "/checkpoint.bin\n";
    return 0;
}

Model load_model(const std::string& checkpoint, const std::string& config_path,
                 int vocab_size, uint64_t seed) {
    require_file(checkpoint);
    std::string cfg_path = config_path;
    if (cfg_path.empty()) {
        cfg_path = (fs::path(checkpoint).parent_path() / "config.txt").string();
    }
    require_file(cfg_path);
    Config cfg = Config::load(cfg_path);
    Model m = build_model(cfg, vocab_size, seed);
    load_checkpoint(checkpoint, *m.denoiser, m.table, *m.trainer);
    return m;
}

int run_sample(const std::string& checkpoint, const std::string& config_path,
               const std::string& data_dir, const std::string& split,
               const std::string& out_path, SamplerConfig scfg, uint64_t seed,
               int64_t limit) {
    require_file(data_dir);
    Corpus corpus = load_corpus(data_dir);
    Model m = load_model(checkpoint, config_path, corpus.vocab.size(), seed);
    std::vector<SeqPair> pairs = pick_split(corpus, split);
    if (limit > 0 && limit < static_cast<int64_t>(pairs.size())) {
        pairs.resize(static_cast<size_t>(limit));
    }

    std::vector<std::vector<int>> hyps;
    for (size_t i = 0; i < pairs.size(); ++i) {
        SamplerConfig per = scfg;
        per.seed = per_example_seed(seed, i);
        CandidateSet cs = decode(*m.denoiser, m.table, pairs[i].src, per,
                                 m.tcfg.schedule);
        hyps.push_back(cs.candidates[static_cast<size_t>(cs.selected)].tokens);
    }
    save_sequences(out_path, hyps);
    std::cout << "wrote " << hyps.size() << " hypotheses to " << out_path << "\n";
    return 0;
}

int run_evaluate(const std::string& hyp_path, const std::string& ref_path,
                 const std::string& data_dir, const std::string& split) {
    require_file(hyp_path);
    std::vector<std::vector<int>> hyps = load_sequences(hyp_path);
    std::vector<std::vector<int>> refs = load_refs(ref_path);
    double bleu = corpus_bleu(hyps, refs);
    std::cout << "bleu " << bleu << "\n";
    if (!data_dir.empty()) {
        require_file(data_dir);
        Corpus corpus = load_corpus(data_dir);
        if (corpus.spec.kind == TaskSpec::Kind::one_to_many) {
            std::vector<SeqPair> pairs = pick_split(corpus, split);
            std::vector<std::vector<int>> sources;
            for (size_t i = 0; i < hyps.size() && i < pairs.size(); ++i) {
                sources.push_back(pairs[i].src);
            }
            std::vector<std::vector<int>> trimmed(hyps.begin(),
                                                  hyps.begin() + sources.size());
            std::cout << "language_accuracy "
                      << language_accuracy(trimmed, sources, corpus.spec) << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"seqdiff: diffused conditional sequence learning toolkit"};
    app.require_subcommand(1);

    // --- gen-data -----------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
    TaskSpec spec;
    std::string task_name = "copy", gen_out = "data";
    gen->add_option("--task", task_name,
                    "copy | reverse | toy_translation | one_to_many | many_to_one");
    gen->add_option("--vocab-size", spec.vocab_size, "content tokens per language");
    gen->add_option("--min-len", spec.min_len);
    gen->add_option("--max-len", spec.max_len);
    gen->add_option("--n-train", spec.n_train);
    gen->add_option("--n-valid", spec.n_valid);
    gen->add_option("--n-test", spec.n_test);
    gen->add_option("--languages", spec.n_languages);
    gen->add_option("--seed", spec.seed);
    gen->add_option("--out", gen_out, "output directory");

    // --- train ---------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Train a denoiser");
    std::string train_config, train_data = "data", train_out = "run", resume;
    uint64_t train_seed = 0;
    int64_t steps_override = 0;
    train->add_option("--config", train_config, "key=value config file")->required();
    train->add_option("--data", train_data, "corpus directory");
    train->add_option("--out", train_out, "output directory");
    train->add_option("--seed", train_seed);
    train->add_option("--steps", steps_override, "override config step count");
    train->add_option("--resume", resume, "checkpoint to resume from");

    // --- sample ----------------------------------------------------------------
    auto* sample_cmd = app.add_subcommand("sample", "Decode a trained model");
    std::string ckpt, sample_config, sample_data = "data", sample_split = "test";
    std::string sample_out = "hyp.jsonl", mode_name = "cedi";
    SamplerConfig scfg;
    uint64_t sample_seed = 0;
    int64_t sample_limit = 0;
    sample_cmd->add_option("--checkpoint", ckpt)->required();
    sample_cmd->add_option("--config", sample_config,
                           "model config (default: config.txt beside checkpoint)");
    sample_cmd->add_option("--data", sample_data, "corpus directory");
    sample_cmd->add_option("--split", sample_split, "train | valid | test");
    sample_cmd->add_option("--out", sample_out, "hypothesis file");
    sample_cmd->add_option("--mode", mode_name, "ddim | cedi");
    sample_cmd->add_option("--steps", scfg.steps, "sampling steps M");
    sample_cmd->add_option("--tau-sigma", scfg.tau_sigma,
                           "sigma level of the model-facing grid");
    sample_cmd->add_option("--length-beam", scfg.length_beam);
    sample_cmd->add_option("--mbr", scfg.mbr_samples, "candidates per beam length");
    sample_cmd->add_option("--seed", sample_seed);
    sample_cmd->add_option("--limit", sample_limit, "decode only the first N sources");

    // --- evaluate ---------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("evaluate", "Corpus BLEU (and language accuracy)");
    std::string hyp_path, ref_path, eval_data, eval_split = "test";
    eval_cmd->add_option("--hyp", hyp_path)->required();
    eval_cmd->add_option("--ref", ref_path, "token-array or src/tgt records")->required();
    eval_cmd->add_option("--data", eval_data,
                         "corpus directory, enables language accuracy");
    eval_cmd->add_option("--split", eval_split);

    // --- analyze ------------------------------------------------------------------
    auto* analyze = app.add_subcommand("analyze", "Preliminary-study experiments");
    analyze->require_subcommand(1);

    auto* nnrec = analyze->add_subcommand("nn-recovery",
                                          "Nearest-neighbor recovery vs noise scale");
    int nn_vocab = 100, nn_dim = 16, nn_samples = 50000, grid_points = 50;
    uint64_t a_seed = 0;
    std::string a_out = "out.csv", a_svg;
    nnrec->add_option("--vocab", nn_vocab);
    nnrec->add_option("--dim", nn_dim);
    nnrec->add_option("--samples", nn_samples, "z_t draws per grid point");
    nnrec->add_option("--points", grid_points, "sigma grid size");
    nnrec->add_option("--seed", a_seed);
    nnrec->add_option("--out", a_out, "CSV path");
    nnrec->add_option("--svg", a_svg, "optional line-plot path");

    auto* lossprof = analyze->add_subcommand("loss-profile",
                                             "Diffusion loss vs noise scale");
    std::string lp_ckpt, lp_config, lp_data = "data", lp_split = "valid";
    int lp_max_pairs = 64;
    lossprof->add_option("--checkpoint", lp_ckpt)->required();
    lossprof->add_option("--config", lp_config);
    lossprof->add_option("--data", lp_data)->required();
    lossprof->add_option("--split", lp_split);
    lossprof->add_option("--points", grid_points);
    lossprof->add_option("--max-pairs", lp_max_pairs);
    lossprof->add_option("--seed", a_seed);
    lossprof->add_option("--out", a_out);
    lossprof->add_option("--svg", a_svg);

    auto* probe = analyze->add_subcommand("reliance-probe",
                                          "Condition reliance under shifted timesteps");
    std::string pr_ckpt, pr_config, pr_data = "data", pr_split = "valid";
    double tau_fixed = 0.995, t_lo = 0.3, t_hi = 0.9;
    int pr_points = 7, pr_max_pairs = 64;
    probe->add_option("--checkpoint", pr_ckpt)->required();
    probe->add_option("--config", pr_config);
    probe->add_option("--data", pr_data)->required();
    probe->add_option("--split", pr_split);
    probe->add_option("--tau", tau_fixed, "fixed model-facing timestep");
    probe->add_option("--t-lo", t_lo);
    probe->add_option("--t-hi", t_hi);
    probe->add_option("--points", pr_points);
    probe->add_option("--max-pairs", pr_max_pairs);
    probe->add_option("--seed", a_seed);
    probe->add_option("--out", a_out);
    probe->add_option("--svg", a_svg);

    auto* equiv = analyze->add_subcommand("schedule-equiv",
                                          "Uniform-time vs reweighted uniform-sigma");
    std::string from_name = "sqrt", to_name = "linear";
    int eq_samples = 100000, eq_vocab = 64, eq_dim = 16;
    equiv->add_option("--from", from_name);
    equiv->add_option("--to", to_name);
    equiv->add_option("--samples", eq_samples);
    equiv->add_option("--vocab", eq_vocab);
    equiv->add_option("--dim", eq_dim);
    equiv->add_option("--seed", a_seed);
    equiv->add_option("--out", a_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            spec.kind = TaskSpec::parse_kind(task_name);
            return run_gen_data(spec, gen_out);
        }
        if (train->parsed()) {
            return run_train(train_config, train_data, train_out, train_seed,
                             steps_override, resume);
        }
        if (sample_cmd->parsed()) {
            scfg.mode = SamplerConfig::parse_mode(mode_name);
            return run_sample(ckpt, sample_config, sample_data, sample_split,
                              sample_out, scfg, sample_seed, sample_limit);
        }
        if (eval_cmd->parsed()) {
            return run_evaluate(hyp_path, ref_path, eval_data, eval_split);
        }
        if (nnrec->parsed()) {
            std::vector<double> grid;
            for (int i = 1; i <= grid_points; ++i) grid.push_back(i / (grid_points + 1.0));
            auto rows = nn_recovery_experiment(nn_vocab, nn_dim, grid, nn_samples, a_seed);
            std::vector<std::vector<double>> csv;
            std::vector<double> xs, ys;
            for (const auto& r : rows) {
                csv.push_back({r.sigma, r.accuracy});
                xs.push_back(r.sigma);
                ys.push_back(r.accuracy);
            }
            write_csv(a_out, "nn_recovery_v1", {"sigma", "accuracy"}, csv);
            if (!a_svg.empty()) {
                write_line_plot_svg(a_svg, xs, {ys}, {"accuracy"},
                                    "NN recovery vs noise scale");
            }
            return 0;
        }
        if (lossprof->parsed()) {
            require_file(lp_data);
            Corpus corpus = load_corpus(lp_data);
            Model m = load_model(lp_ckpt, lp_config, corpus.vocab.size(), a_seed);
            std::vector<double> grid;
            for (int i = 1; i <= grid_points; ++i) grid.push_back(i / (grid_points + 1.0));
            auto rows = loss_vs_sigma_profile(*m.denoiser, m.table,
                                              pick_split(corpus, lp_split), grid,
                                              m.tcfg.schedule, a_seed, lp_max_pairs);
            std::vector<std::vector<double>> csv;
            std::vector<double> xs, ys;
            for (const auto& r : rows) {
                csv.push_back({r.sigma, r.mean_loss});
                xs.push_back(r.sigma);
                ys.push_back(r.mean_loss);
            }
            write_csv(a_out, "loss_profile_v1", {"sigma", "mean_loss"}, csv);
            if (!a_svg.empty()) {
                write_line_plot_svg(a_svg, xs, {ys}, {"mean_loss"},
                                    "Diffusion loss vs noise scale");
            }
            return 0;
        }
        if (probe->parsed()) {
            require_file(pr_data);
            Corpus corpus = load_corpus(pr_data);
            Model m = load_model(pr_ckpt, pr_config, corpus.vocab.size(), a_seed);
            std::vector<double> grid;
            for (int i = 0; i < pr_points; ++i) {
                grid.push_back(pr_points == 1
                                   ? t_lo
                                   : t_lo + (t_hi - t_lo) * i / (pr_points - 1.0));
            }
            auto rows = condition_reliance_probe(*m.denoiser, m.table,
                                                 pick_split(corpus, pr_split), grid,
                                                 m.tcfg.schedule, tau_fixed, a_seed,
                                                 pr_max_pairs);
            std::vector<std::vector<double>> csv;
            std::vector<double> xs;
            std::vector<std::vector<double>> series(4);
            for (const auto& r : rows) {
                csv.push_back({r.t, r.mse_truth_tau_t, r.mse_neg_tau_t,
                               r.mse_truth_tau_fixed, r.mse_neg_tau_fixed});
                xs.push_back(r.t);
                series[0].push_back(r.mse_truth_tau_t);
                series[1].push_back(r.mse_neg_tau_t);
                series[2].push_back(r.mse_truth_tau_fixed);
                series[3].push_back(r.mse_neg_tau_fixed);
            }
            write_csv(a_out, "reliance_probe_v1",
                      {"t", "mse_truth_tau_t", "mse_neg_tau_t", "mse_truth_tau_fixed",
                       "mse_neg_tau_fixed"},
                      csv);
            if (!a_svg.empty()) {
                write_line_plot_svg(a_svg, xs, series,
                                    {"truth, tau=t", "negative, tau=t",
                                     "truth, tau fixed", "negative, tau fixed"},
                                    "Condition reliance probe");
            }
            return 0;
        }
        if (equiv->parsed()) {
            NoiseSchedule from = NoiseSchedule::parse(from_name);
            NoiseSchedule to = NoiseSchedule::parse(to_name);
            FrozenLinearModel model(eq_vocab, eq_dim, a_seed);
            auto loss = [&model](double sigma, Rng& rng) { return model.loss(sigma, rng); };
            EquivalenceResult r = schedule_equivalence_check(from, to, loss, eq_samples,
                                                             a_seed);
            write_csv(a_out, "schedule_equiv_v1", {"lhs", "rhs", "relative_gap"},
                      {{r.lhs, r.rhs, r.relative_gap}});
            std::cout << "lhs " << r.lhs << " rhs " << r.rhs << " relative_gap "
                      << r.relative_gap << "\n";
            return 0;
        }
        return 1;
    } catch (const MissingFileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
