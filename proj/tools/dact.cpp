// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: prepare / train / eval / tag / gradcheck.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "dact/checkpoint.hpp"
#include "dact/corpus.hpp"
#include "dact/error.hpp"
#include "dact/gradcheck.hpp"
#include "dact/model.hpp"
#include "dact/run_config.hpp"
#include "dact/train.hpp"

namespace fs = std::filesystem;

namespace {

// Exit codes (stable scripting contract).
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;     // e.g. gradient check failures
constexpr int kExitConfig = 2;      // configuration / usage problems
constexpr int kExitData = 3;        // corpus / input data problems
constexpr int kExitCheckpoint = 4;  // unreadable or mismatched checkpoints

// ---------------------------------------------------------------------------
// Config assembly: file < --set overrides < dedicated flags.
// ---------------------------------------------------------------------------

class ConfigCli {
public:
    void attach_common(CLI::App* cmd) {
        cmd->add_option("--config", config_file_,
                        "key=value configuration file")
            ->option_text("PATH");
        cmd->add_option("--set", sets_,
                        "override one configuration key (KEY=VALUE, repeatable)")
            ->option_text("KEY=VALUE");
        attach_key(cmd, "--seed", "seed", "random seed");
        attach_key(cmd, "--out", "out_dir", "output directory");
    }

    void attach_key(CLI::App* cmd, const std::string& flag,
                    const std::string& key, const std::string& desc) {
        auto value = std::make_shared<std::string>();
        CLI::Option* opt = cmd->add_option(flag, *value, desc);
        binds_.push_back(Bind{opt, key, value});
    }

    void attach_bool_flag(CLI::App* cmd, const std::string& flag,
                          const std::string& key, const std::string& desc) {
        auto value = std::make_shared<std::string>("true");
        CLI::Option* opt = cmd->add_flag(flag, desc);
        binds_.push_back(Bind{opt, key, value});
    }

    dact::RunConfig resolve() const {
        dact::RunConfig cfg;
        if (!config_file_.empty()) cfg = dact::RunConfig::load(config_file_);
        for (const std::string& pair : sets_) {
            const std::size_t eq = pair.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw dact::ConfigError("--set expects KEY=VALUE, got '" + pair +
                                        "'");
            }
            cfg.set(pair.substr(0, eq), pair.substr(eq + 1));
        }
        for (const Bind& b : binds_) {
            if (b.opt->count() > 0) cfg.set(b.key, *b.value);
        }
        return cfg;
    }

private:
    struct Bind {
        CLI::Option* opt;
        std::string key;
        std::shared_ptr<std::string> value;
    };

    std::string config_file_;
    std::vector<std::string> sets_;
    std::vector<Bind> binds_;
};

void attach_corpus_keys(CLI::App* cmd, ConfigCli& cli) {
    cli.attach_key(cmd, "--corpus-dir", "corpus_dir",
                   "directory of <id>.csv conversation files");
    cli.attach_key(cmd, "--train-manifest", "train_manifest",
                   "training split id list");
    cli.attach_key(cmd, "--valid-manifest", "valid_manifest",
                   "validation split id list");
    cli.attach_key(cmd, "--test-manifest", "test_manifest",
                   "test split id list");
    cli.attach_key(cmd, "--tag-map", "tag_map",
                   "raw-prefix to collapsed-tag TSV file");
    cli.attach_bool_flag(cmd, "--keep-continuations", "keep_continuations",
                         "keep '+' records as their own class instead of "
                         "merging them into the previous same-speaker row");
}

void require_corpus_inputs(const dact::RunConfig& cfg) {
    auto missing = [](const char* what) {
        throw dact::ConfigError(std::string("missing required setting: ") +
                                what);
    };
    if (cfg.corpus_dir.empty()) missing("corpus_dir");
    if (cfg.train_manifest.empty()) missing("train_manifest");
    if (cfg.valid_manifest.empty()) missing("valid_manifest");
    if (cfg.test_manifest.empty()) missing("test_manifest");
    if (cfg.tag_map.empty()) missing("tag_map");
}

// Mapping-file problems are configuration errors (exit 2), unlike problems in
// the conversation data itself (exit 3), so vet the tag map separately.
dact::TagSet vet_tag_map(const fs::path& path) {
    try {
        return dact::TagSet::load(path);
    } catch (const dact::ConfigError&) {
        throw;
    } catch (const dact::Error& e) {
        throw dact::ConfigError(std::string("bad tag mapping file: ") +
                                e.what());
    }
}

dact::LoadedCorpus load_configured_corpus(const dact::RunConfig& cfg) {
    require_corpus_inputs(cfg);
    vet_tag_map(cfg.tag_map);
    const dact::SplitManifest manifest = dact::load_split_manifest(
        cfg.train_manifest, cfg.valid_manifest, cfg.test_manifest);
    return dact::load_corpus(cfg.corpus_dir, manifest, cfg.tag_map,
                             cfg.corpus_options());
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw dact::DataError("cannot write " + path.string());
    }
    out << content;
    if (!out) {
        throw dact::DataError("error while writing " + path.string());
    }
}

void log_resolved_config(const dact::RunConfig& cfg, const fs::path& out_dir) {
    const std::string resolved = cfg.resolved();
    std::cout << "resolved configuration:\n" << resolved;
    write_text_file(out_dir / "config.resolved", resolved);
}

std::size_t sentence_count(const std::vector<dact::Conversation>& split) {
    std::size_t n = 0;
    for (const dact::Conversation& c : split) n += c.records.size();
    return n;
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

void cmd_prepare(const dact::RunConfig& cfg) {
    const dact::LoadedCorpus corpus = load_configured_corpus(cfg);

    const fs::path out_dir = cfg.out_dir;
    fs::create_directories(out_dir / "conversations");

    for (const auto* split : {&corpus.splits.train, &corpus.splits.valid,
                              &corpus.splits.test}) {
        for (const dact::Conversation& conv : *split) {
            write_text_file(out_dir / "conversations" / (conv.id + ".csv"),
                            dact::serialize_conversation_csv(conv));
        }
    }

    auto id_list = [](const std::vector<std::string>& ids) {
        std::string text;
        for (const std::string& id : ids) {
            text += id;
            text += '\n';
        }
        return text;
    };
    const dact::SplitManifest manifest = dact::load_split_manifest(
        cfg.train_manifest, cfg.valid_manifest, cfg.test_manifest);
    write_text_file(out_dir / "train.txt", id_list(manifest.train));
    write_text_file(out_dir / "valid.txt", id_list(manifest.valid));
    write_text_file(out_dir / "test.txt", id_list(manifest.test));
    fs::copy_file(cfg.tag_map, out_dir / "tag_map.tsv",
                  fs::copy_options::overwrite_existing);

    std::string vocab_text;
    for (const std::string& spelling : corpus.vocab.listing()) {
        vocab_text += spelling;
        vocab_text += '\n';
    }
    write_text_file(out_dir / "vocab.txt", vocab_text);

    std::string tags_text;
    for (const std::string& name : corpus.tags.names()) {
        tags_text += name;
        tags_text += '\n';
    }
    write_text_file(out_dir / "tags.txt", tags_text);

    std::ostringstream stats_text;
    stats_text << std::setprecision(17) << "range = " << corpus.stats.range
               << "\nstd = " << corpus.stats.std_dev << "\n";
    write_text_file(out_dir / "length_stats.txt", stats_text.str());

    log_resolved_config(cfg, out_dir);

    const auto& s = corpus.splits;
    std::cout << "conversations: train=" << s.train.size()
              << " valid=" << s.valid.size() << " test=" << s.test.size()
              << "\n"
              << "sentences: train=" << sentence_count(s.train)
              << " valid=" << sentence_count(s.valid)
              << " test=" << sentence_count(s.test) << "\n"
              << "vocabulary: " << corpus.vocab.size()
              << " entries (incl. specials)\n"
              << "tag classes: " << corpus.tags.size() << "\n";
    const dact::SplitCountCheck check = dact::check_split_counts(corpus.splits);
    if (!check.message.empty()) std::cout << check.message << "\n";
    std::cout << "wrote " << out_dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void cmd_train(const dact::RunConfig& cfg) {
    const dact::LoadedCorpus corpus = load_configured_corpus(cfg);

    const fs::path out_dir = cfg.out_dir;
    fs::create_directories(out_dir);
    log_resolved_config(cfg, out_dir);

    const dact::ModelConfig mcfg = cfg.model_config(corpus.tags.size());
    dact::ModelT<double> model(mcfg, corpus.vocab.size());

    if (!cfg.embeddings.empty()) {
        std::mt19937_64 rng(cfg.seed);
        model.set_embeddings(dact::load_pretrained_embeddings<double>(
            cfg.embeddings, corpus.vocab, cfg.embedding_size, rng));
        std::cout << "loaded pretrained embeddings from " << cfg.embeddings
                  << "\n";
    }

    std::cout << "model: " << mcfg.describe() << "\n"
              << "parameters: " << model.params().total_elements() << " in "
              << model.params().size() << " tensors\n";

    dact::TrainOptions options = cfg.train_options();
    options.checkpoint_path = out_dir / "checkpoint.bin";
    options.log = [](const std::string& line) { std::cout << line << "\n"; };

    const dact::TrainReport report = dact::train_model(model, corpus, options);

    write_text_file(out_dir / "report.json",
                    dact::report_to_json(report).dump(2) + "\n");
    write_text_file(out_dir / "report.txt", dact::report_to_text(report));

    std::cout << "best epoch: " << report.best_epoch << "\n"
              << "test accuracy: " << std::fixed << std::setprecision(6)
              << report.test_accuracy << "\n"
              << "wrote " << (out_dir / "checkpoint.bin").string() << "\n";
}

// ---------------------------------------------------------------------------
// eval / tag helpers
// ---------------------------------------------------------------------------

bool keeps_continuations(const dact::TagSet& tags) {
    const auto& names = tags.names();
    return std::find(names.begin(), names.end(), "+") != names.end();
}

// Loads one conversation and prepares it the way the checkpointed model
// expects: same continuation policy, its tag inventory, its vocabulary.
dact::Conversation prepare_for_model(const fs::path& csv_path,
                                     const dact::LoadedCheckpointT<double>& ckpt,
                                     bool assign_gold) {
    dact::Conversation conv = dact::load_conversation_csv(csv_path);
    if (!keeps_continuations(ckpt.tags)) dact::merge_continuations(conv);
    if (assign_gold) dact::assign_tags(conv, ckpt.tags);
    dact::tokenize_conversation(conv, ckpt.vocab);
    return conv;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

void cmd_eval(const std::string& checkpoint_path,
              const std::string& corpus_dir, const std::string& manifest_path,
              const std::vector<std::string>& csv_paths) {
    const auto ckpt = dact::load_checkpoint<double>(checkpoint_path);

    std::vector<fs::path> files;
    if (!manifest_path.empty()) {
        if (corpus_dir.empty()) {
            throw dact::ConfigError("--manifest requires --corpus-dir");
        }
        for (const std::string& id :
             dact::detail::read_id_list(manifest_path)) {
            files.emplace_back(fs::path(corpus_dir) / (id + ".csv"));
        }
    }
    for (const std::string& p : csv_paths) files.emplace_back(p);
    if (files.empty()) {
        throw dact::ConfigError(
            "nothing to evaluate: pass conversation CSV files or "
            "--corpus-dir with --manifest");
    }

    std::vector<dact::Conversation> split;
    split.reserve(files.size());
    for (const fs::path& f : files) {
        split.push_back(prepare_for_model(f, ckpt, /*assign_gold=*/true));
    }

    const dact::EvalResult res =
        dact::evaluate_model(ckpt.model, split, ckpt.stats);
    std::cout << "conversations: " << split.size()
              << "  sentences: " << res.total << "\n"
              << "accuracy: " << std::fixed << std::setprecision(6)
              << res.accuracy << " (" << res.correct << "/" << res.total
              << ")\n\n";

    const std::vector<dact::ClassMetrics> metrics =
        dact::per_class_metrics(res.confusion);
    std::cout << std::left << std::setw(16) << "tag" << std::right
              << std::setw(6) << "gold" << std::setw(6) << "pred"
              << std::setw(9) << "correct" << std::setw(11) << "precision"
              << std::setw(9) << "recall" << "\n";
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        const dact::ClassMetrics& m = metrics[i];
        if (m.gold_total == 0 && m.predicted_total == 0) continue;
        std::cout << std::left << std::setw(16) << ckpt.tags.name_of(i)
                  << std::right << std::setw(6) << m.gold_total << std::setw(6)
                  << m.predicted_total << std::setw(9) << m.correct
                  << std::setw(11) << std::fixed << std::setprecision(4)
                  << m.precision << std::setw(9) << m.recall << "\n";
    }
    std::cout << "(classes with no gold and no predicted sentences omitted)\n";
}

// ---------------------------------------------------------------------------
// tag
// ---------------------------------------------------------------------------

void cmd_tag(const std::string& checkpoint_path,
             const std::string& compare_path, const std::string& csv_path) {
    const auto ckpt = dact::load_checkpoint<double>(checkpoint_path);
    const dact::Conversation conv =
        prepare_for_model(csv_path, ckpt, /*assign_gold=*/false);
    const std::vector<std::size_t> tags =
        ckpt.model.predict_tags(conv, ckpt.stats);

    std::vector<std::size_t> other;
    std::string other_label;
    const dact::TagSet* other_tags = nullptr;
    std::unique_ptr<dact::LoadedCheckpointT<double>> second;
    if (!compare_path.empty()) {
        second = std::make_unique<dact::LoadedCheckpointT<double>>(
            dact::load_checkpoint<double>(compare_path));
        const dact::Conversation conv2 =
            prepare_for_model(csv_path, *second, /*assign_gold=*/false);
        if (conv2.records.size() != conv.records.size()) {
            throw dact::DataError(
                "checkpoints disagree on continuation handling; cannot "
                "compare row by row");
        }
        other = second->model.predict_tags(conv2, second->stats);
        other_tags = &second->tags;
        other_label = fs::path(compare_path).stem().string();
    }

    std::string first_label = fs::path(checkpoint_path).stem().string();
    if (!other_label.empty() && other_label == first_label) {
        first_label += " (1)";
        other_label += " (2)";
    }
    std::cout << std::left << std::setw(7) << "caller" << std::setw(7) << "utt"
              << std::setw(16) << first_label;
    if (!other_label.empty()) std::cout << std::setw(16) << other_label;
    std::cout << "text\n";
    for (std::size_t i = 0; i < conv.records.size(); ++i) {
        const dact::UtteranceRecord& r = conv.records[i];
        const std::string utt = std::to_string(r.utterance_index) + "." +
                                std::to_string(r.sub_utterance_index);
        std::cout << std::left << std::setw(7)
                  << std::string(1, dact::caller_letter(r.caller))
                  << std::setw(7) << utt << std::setw(16)
                  << ckpt.tags.name_of(tags[i]);
        if (other_tags) {
            std::cout << std::setw(16) << other_tags->name_of(other[i]);
        }
        std::cout << r.text << "\n";
    }
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

// Two-sentence fixture exercising every model component (both GRU levels,
// the feed-forward leg, and the output layer).
struct GradCheckFixture {
    dact::Conversation conv;
    dact::Vocabulary vocab;
    dact::LengthStats stats;
};

GradCheckFixture make_gradcheck_fixture() {
    GradCheckFixture f;
    dact::Conversation& conv = f.conv;
    conv.id = "toy";
    dact::UtteranceRecord r1;
    r1.conversation_id = "toy";
    r1.caller = dact::Caller::A;
    r1.utterance_index = 1;
    r1.sub_utterance_index = 1;
    r1.act_tag_raw = "qy";
    r1.text = "do you live right in the city? /";
    dact::UtteranceRecord r2 = r1;
    r2.caller = dact::Caller::B;
    r2.utterance_index = 2;
    r2.act_tag_raw = "ny";
    r2.text = "yes, i do. /";
    conv.records = {r1, r2};

    dact::TagSet tags = dact::TagSet::from_names({"qy", "ny", "sd"});
    dact::assign_tags(conv, tags);
    f.vocab = dact::Vocabulary::build({conv});
    dact::tokenize_conversation(conv, f.vocab);
    f.stats = dact::compute_length_stats({conv});
    return f;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& fault_op) {
    std::vector<dact::GradCheckResult> results =
        dact::run_builtin_op_checks(seed, fault_op);

    GradCheckFixture fixture = make_gradcheck_fixture();
    dact::ModelConfig mcfg;
    mcfg.sentence_encoder = dact::SentenceEncoderKind::Grnn;
    mcfg.use_nontextual = true;
    mcfg.context = dact::ContextKind::Grnn;
    mcfg.sizes = dact::ModelSizes{5, 4, 3, 4};
    mcfg.num_classes = 3;
    mcfg.seed = seed;
    dact::ModelT<double> model(mcfg, fixture.vocab.size());
    dact::GradCheckCase full = dact::make_model_grad_check(
        "full_model", model, fixture.conv, fixture.stats);
    results.push_back(dact::run_grad_check(
        full, 1e-5, 1e-4, fault_op == "full_model" ? 0.5 : 0.0));

    std::cout << std::left << std::setw(18) << "op" << std::right
              << std::setw(9) << "entries" << std::setw(14) << "max rel err"
              << "  status\n";
    std::size_t failures = 0;
    for (const dact::GradCheckResult& r : results) {
        std::cout << std::left << std::setw(18) << r.name << std::right
                  << std::setw(9) << r.entries << std::setw(14)
                  << std::scientific << std::setprecision(3) << r.max_rel_err
                  << "  " << (r.passed ? "ok" : "FAIL");
        if (!r.passed) {
            ++failures;
            std::cout << "  (worst at " << r.worst << ")";
        }
        std::cout << "\n";
    }
    std::cout.unsetf(std::ios::floatfield);
    std::cout << results.size() << " checks, " << failures << " failed\n";
    return failures == 0 ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural dialog-act tagger"};
    app.require_subcommand(1);

    // prepare
    CLI::App* prepare = app.add_subcommand(
        "prepare", "normalize a corpus and write vocabulary/tag/stats files");
    ConfigCli prepare_cli;
    prepare_cli.attach_common(prepare);
    attach_corpus_keys(prepare, prepare_cli);

    // train
    CLI::App* train = app.add_subcommand(
        "train", "train a model and write checkpoint and report files");
    ConfigCli train_cli;
    train_cli.attach_common(train);
    attach_corpus_keys(train, train_cli);
    train_cli.attach_key(train, "--preset", "preset", "model architecture");
    train_cli.attach_key(train, "--epochs", "epochs", "training epochs");
    train_cli.attach_key(train, "--embeddings", "embeddings",
                         "pretrained embedding text file");

    // eval
    CLI::App* eval = app.add_subcommand(
        "eval", "evaluate a checkpoint; prints accuracy and per-class "
                "precision/recall");
    std::string eval_checkpoint, eval_corpus_dir, eval_manifest;
    std::vector<std::string> eval_files;
    eval->add_option("--checkpoint", eval_checkpoint, "trained checkpoint")
        ->required()
        ->option_text("PATH");
    eval->add_option("--corpus-dir", eval_corpus_dir,
                     "directory of <id>.csv conversation files")
        ->option_text("DIR");
    eval->add_option("--manifest", eval_manifest,
                     "id list of conversations to evaluate")
        ->option_text("PATH");
    eval->add_option("files", eval_files, "conversation CSV files");

    // tag
    CLI::App* tag = app.add_subcommand(
        "tag", "print predicted dialog-act tags for one conversation");
    std::string tag_checkpoint, tag_compare, tag_file;
    tag->add_option("--checkpoint", tag_checkpoint, "trained checkpoint")
        ->required()
        ->option_text("PATH");
    tag->add_option("--compare", tag_compare,
                    "second checkpoint; prints both tag columns side by side")
        ->option_text("PATH");
    tag->add_option("file", tag_file, "conversation CSV file")->required();

    // gradcheck
    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "finite-difference gradient audit of every tape "
                     "operation and the full model");
    std::uint64_t gc_seed = 0;
    std::string gc_fault;
    gradcheck->add_option("--seed", gc_seed, "input draw seed");
    gradcheck->add_option("--inject-fault", gc_fault,
                          "corrupt the named op's analytic gradient (expects "
                          "that single check to fail)")
        ->option_text("OP");

    int exit_code = kExitOk;
    prepare->callback([&]() { cmd_prepare(prepare_cli.resolve()); });
    train->callback([&]() { cmd_train(train_cli.resolve()); });
    eval->callback([&]() {
        cmd_eval(eval_checkpoint, eval_corpus_dir, eval_manifest, eval_files);
    });
    tag->callback([&]() { cmd_tag(tag_checkpoint, tag_compare, tag_file); });
    gradcheck->callback([&]() { exit_code = cmd_gradcheck(gc_seed, gc_fault); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    } catch (const dact::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const dact::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const dact::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const dact::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const dact::EmptySequenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return exit_code;
}
