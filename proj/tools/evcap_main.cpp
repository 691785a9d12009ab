// SPDX-License-Identifier: Apache-2.0
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evcap/embeddings.hpp"
#include "evcap/events.hpp"
#include "evcap/gradcheck_suite.hpp"
#include "evcap/metrics.hpp"
#include "evcap/model.hpp"
#include "evcap/synthetic.hpp"
#include "evcap/train.hpp"

namespace {

using namespace evcap;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run configuration: one JSON document with optional "model", "train",
// "embeddings", and "paths" sections. Every field is optional and falls back
// to the compiled default; unknown keys are rejected so typos cannot
// silently revert a field to its default.

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    SkipGramConfig embeddings;
    std::optional<fs::path> labels;
    std::set<std::string> model_keys;  // model fields explicitly present
    bool has_train_seed = false;
    bool has_embed_seed = false;
};

class SectionReader {
public:
    SectionReader(const nlohmann::json& sec, std::string where)
        : sec_(sec), where_(std::move(where)) {
        if (!sec_.is_object())
            throw ValidationError("config: \"" + where_ + "\" must be a JSON object");
    }

    template <typename T>
    bool get(const char* key, T& out) {
        known_.insert(key);
        auto it = sec_.find(key);
        if (it == sec_.end()) return false;
        if constexpr (std::is_unsigned_v<T>) {
            if (it->is_number_integer() && !it->is_number_unsigned())
                throw ValidationError("config: " + where_ + "." + key +
                                      " must not be negative");
        }
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("config: " + where_ + "." + key + ": " + e.what());
        }
        return true;
    }

    void finish() const {
        for (const auto& item : sec_.items())
            if (!known_.count(item.key())) {
                std::string allowed;
                for (const auto& k : known_) allowed += (allowed.empty() ? "" : ", ") + k;
                throw ValidationError("config: unknown key \"" + where_ + "." + item.key() +
                                      "\" (allowed: " + allowed + ")");
            }
    }

private:
    const nlohmann::json& sec_;
    std::string where_;
    std::set<std::string> known_;
};

RunConfig parse_run_config(const std::optional<fs::path>& path) {
    RunConfig rc;
    if (!path) return rc;

    const auto bytes = read_file_bytes(*path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path->string() + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object())
        throw ValidationError(path->string() + ": config root must be a JSON object");
    for (const auto& item : doc.items())
        if (item.key() != "model" && item.key() != "train" && item.key() != "embeddings" &&
            item.key() != "paths")
            throw ValidationError("config: unknown section \"" + item.key() +
                                  "\" (allowed: model, train, embeddings, paths)");

    if (doc.contains("model")) {
        SectionReader sr(doc["model"], "model");
        auto& m = rc.model;
        auto track = [&](const char* key, auto& field) {
            if (sr.get(key, field)) rc.model_keys.insert(key);
        };
        track("feature_dim", m.feature_dim);
        track("event_dim", m.event_dim);
        track("bigru1_cells", m.bigru1_cells);
        track("bigru2_cells", m.bigru2_cells);
        track("caption_gru_cells", m.caption_gru_cells);
        track("decoder_gru_cells", m.decoder_gru_cells);
        track("embed_dim", m.embed_dim);
        track("vocab_size", m.vocab_size);
        track("dropout", m.dropout);
        track("max_decode_len", m.max_decode_len);
        track("use_leaky_dense", m.use_leaky_dense);
        track("leaky_dense_units", m.leaky_dense_units);
        track("fine_tune_embeddings", m.fine_tune_embeddings);
        sr.finish();
    }
    if (doc.contains("train")) {
        SectionReader sr(doc["train"], "train");
        auto& t = rc.train;
        sr.get("epochs", t.epochs);
        sr.get("batch_size", t.batch_size);
        sr.get("learning_rate", t.learning_rate);
        sr.get("beta1", t.beta1);
        sr.get("beta2", t.beta2);
        sr.get("adam_epsilon", t.adam_epsilon);
        sr.get("event_threshold", t.event_threshold);
        rc.has_train_seed = sr.get("seed", t.seed);
        sr.finish();
        t.validate();
    }
    if (doc.contains("embeddings")) {
        SectionReader sr(doc["embeddings"], "embeddings");
        auto& e = rc.embeddings;
        sr.get("embed_dim", e.embed_dim);
        sr.get("window", e.window);
        sr.get("negatives", e.negatives);
        sr.get("epochs", e.epochs);
        sr.get("learning_rate", e.learning_rate);
        rc.has_embed_seed = sr.get("seed", e.seed);
        sr.finish();
        e.validate();
    }
    if (doc.contains("paths")) {
        SectionReader sr(doc["paths"], "paths");
        std::string labels;
        if (sr.get("labels", labels)) {
            fs::path p(labels);
            // Relative paths resolve against the config file's directory.
            rc.labels = p.is_absolute() ? p : path->parent_path() / p;
        }
        sr.finish();
    }
    return rc;
}

// Flag beats config beats the documented default of 42; the effective seed
// is always logged so a run can be reproduced.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           const std::optional<std::uint64_t>& config) {
    std::uint64_t seed = 42;
    const char* origin = "default";
    if (config) {
        seed = *config;
        origin = "config";
    }
    if (flag) {
        seed = *flag;
        origin = "flag";
    }
    std::cerr << "[evcap] seed " << seed << " (" << origin << ")\n";
    return seed;
}

std::vector<TokenSeq> manifest_captions(const Manifest& manifest) {
    std::vector<TokenSeq> caps;
    caps.reserve(manifest.records.size() * kCaptionsPerClip);
    for (const auto& rec : manifest.records)
        for (const auto& c : rec.captions) caps.push_back(normalize_caption(c));
    return caps;
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_prep_events(const fs::path& labels_path, const fs::path& out) {
    const auto table = load_label_table(labels_path);
    const auto corpus = EventCorpus::build(table);
    corpus.save(out);
    std::cerr << "[evcap] event corpus written to " << out << "\n";
    std::cout << corpus.size() << "\n";
}

void cmd_train_embeddings(const fs::path& manifest_path,
                          const std::optional<fs::path>& config_path, const fs::path& out,
                          const std::optional<std::uint64_t>& seed_flag) {
    RunConfig rc = parse_run_config(config_path);
    SkipGramConfig cfg = rc.embeddings;
    cfg.seed = resolve_seed(seed_flag, rc.has_embed_seed
                                           ? std::optional<std::uint64_t>(cfg.seed)
                                           : std::nullopt);

    const Manifest manifest = load_manifest(manifest_path);
    const auto captions = manifest_captions(manifest);
    const Vocabulary vocab = Vocabulary::build(captions);
    std::vector<std::vector<std::uint32_t>> sentences;
    sentences.reserve(captions.size());
    for (const auto& cap : captions) sentences.push_back(vocab.encode(cap));

    std::cerr << "[evcap] training skip-gram: " << sentences.size() << " captions, vocabulary "
              << vocab.size() << ", dim " << cfg.embed_dim << ", " << cfg.epochs
              << " epochs\n";
    const SkipGramResult result = train_skipgram(sentences, cfg, vocab);
    save_embeddings(result.embeddings, out);
    std::printf("vocabulary %zu, embeddings %zux%zu, final epoch loss %.6f\n", vocab.size(),
                result.embeddings.rows, result.embeddings.cols, result.epoch_loss.back());
}

void cmd_train(const fs::path& train_path, const fs::path& val_path,
               const fs::path& corpus_path, const fs::path& embeddings_path,
               const std::optional<fs::path>& config_path, const fs::path& out,
               const std::optional<std::uint64_t>& seed_flag, bool ablate_events) {
    RunConfig rc = parse_run_config(config_path);
    if (!rc.labels)
        throw ValidationError(
            "config: paths.labels is required for train (the event label table)");

    const auto labels = load_label_table(*rc.labels);
    const EventCorpus corpus = EventCorpus::load(corpus_path);
    const Matrix pretrained = load_embeddings(embeddings_path);
    const Manifest train_man = load_manifest(train_path);
    const Manifest val_man = load_manifest(val_path);

    const Vocabulary vocab = Vocabulary::build(manifest_captions(train_man));

    ModelConfig mc = rc.model;
    if (!rc.model_keys.count("feature_dim"))
        mc.feature_dim = load_features(train_man.records.front().feature_path).cols;
    if (rc.model_keys.count("event_dim") && mc.event_dim != corpus.size())
        throw ValidationError("config: model.event_dim " + std::to_string(mc.event_dim) +
                              " does not match event corpus size " +
                              std::to_string(corpus.size()));
    mc.event_dim = corpus.size();
    if (rc.model_keys.count("vocab_size") && mc.vocab_size != vocab.size())
        throw ValidationError("config: model.vocab_size " + std::to_string(mc.vocab_size) +
                              " does not match training vocabulary size " +
                              std::to_string(vocab.size()));
    mc.vocab_size = vocab.size();
    if (rc.model_keys.count("embed_dim") && mc.embed_dim != pretrained.cols)
        throw ValidationError("config: model.embed_dim " + std::to_string(mc.embed_dim) +
                              " does not match embedding file dimension " +
                              std::to_string(pretrained.cols));
    mc.embed_dim = pretrained.cols;
    if (pretrained.rows != vocab.size())
        throw ValidationError(
            embeddings_path.string() + ": " + std::to_string(pretrained.rows) +
            " embedding rows do not match the training vocabulary of " +
            std::to_string(vocab.size()) +
            " tokens (train embeddings on the same training manifest)");

    TrainConfig tc = rc.train;
    tc.seed = resolve_seed(seed_flag, rc.has_train_seed
                                          ? std::optional<std::uint64_t>(tc.seed)
                                          : std::nullopt);

    SeededRng init_rng(derive_seed(tc.seed, "init"));
    CaptionerModel model = build_model(mc, init_rng);
    model.vocab = vocab;
    model.labels = labels;
    model.event_corpus = corpus;
    model.embeddings = pretrained;

    const TrainData train_data =
        prepare_training_data(train_man, model, tc.event_threshold, ablate_events);
    const TrainData val_data =
        prepare_training_data(val_man, model, tc.event_threshold, ablate_events);
    std::cerr << "[evcap] " << train_data.clips.size() << " train clips ("
              << train_data.pairs.size() << " pairs), " << val_data.clips.size()
              << " val clips (" << val_data.pairs.size() << " pairs), "
              << trainable_param_count(model) << " trainable parameters\n";
    if (ablate_events) std::cerr << "[evcap] event conditioning ablated (zero vectors)\n";

    const TrainResult result = train_captioner(model, train_data, val_data, tc);
    save_model(model, out);
    const fs::path history_path = out.string() + ".history.jsonl";
    write_file_atomic(history_path, history_to_jsonl(result.history));
    std::cerr << "[evcap] model written to " << out << ", history to " << history_path
              << "\n";
    std::printf("best epoch %zu, val loss %.6f\n", result.best_epoch, result.best_val_loss);
}

void cmd_caption(const fs::path& model_path, const fs::path& manifest_path,
                 const fs::path& out, double event_threshold, size_t threads) {
    const CaptionerModel model = load_model(model_path);
    const Manifest manifest = load_manifest(manifest_path);
    std::vector<std::string> lines(manifest.records.size());

    auto worker = [&](size_t lo, size_t hi) {
        CaptionerModel local = model;  // inference never mutates observable state
        for (size_t i = lo; i < hi; ++i) {
            const auto& rec = manifest.records[i];
            const Matrix feats = load_features(rec.feature_path);
            const auto selected = threshold_events(rec.event_probs, event_threshold);
            const Vec ev = encode_clip_events(selected, local.labels, local.event_corpus);
            TokenSeq tokens = greedy_caption(local, feats, ev);
            TokenSeq words;
            for (auto& t : tokens)
                if (t != kSosToken && t != kEosToken && t != kPadToken)
                    words.push_back(std::move(t));
            lines[i] = nlohmann::json{{"clip_id", rec.clip_id},
                                      {"caption", join_tokens(words)}}
                           .dump();
        }
    };

    if (threads <= 1) {
        worker(0, manifest.records.size());
    } else {
        const size_t n = manifest.records.size();
        const size_t workers = std::min(threads, n);
        std::vector<std::thread> pool;
        std::exception_ptr first_error;
        std::mutex error_mutex;
        for (size_t w = 0; w < workers; ++w) {
            const size_t lo = n * w / workers;
            const size_t hi = n * (w + 1) / workers;
            pool.emplace_back([&, lo, hi] {
                try {
                    worker(lo, hi);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    write_file_atomic(out, join_lines(lines));
    std::cerr << "[evcap] wrote " << lines.size() << " captions to " << out << "\n";
}

void cmd_evaluate(const fs::path& predictions, const fs::path& references,
                  const std::optional<fs::path>& spice, const fs::path& out) {
    const MetricReport report = evaluate(predictions, references, spice);
    write_file_atomic(out, report_to_json(report).dump(2) + "\n");
    std::cerr << "[evcap] report written to " << out << "\n";
    std::cout << report_table(report);
}

bool cmd_gradcheck(const std::optional<std::uint64_t>& seed_flag, size_t trials,
                   bool as_json, bool perturb) {
    if (trials < 1) throw std::invalid_argument("gradcheck: --trials must be >= 1");
    const std::uint64_t seed = resolve_seed(seed_flag, std::nullopt);

    std::vector<std::string> order;
    std::map<std::string, GradCheckResult> agg;
    bool all_passed = true;
    double max_rel_err = 0.0;
    for (size_t t = 0; t < trials; ++t) {
        const std::uint64_t s = t == 0 ? seed : derive_seed(seed, t);
        const SuiteOutcome outcome = run_gradcheck_suite(s, perturb);
        all_passed = all_passed && outcome.all_passed;
        max_rel_err = std::max(max_rel_err, outcome.max_rel_err);
        for (const auto& r : outcome.results) {
            auto it = agg.find(r.name);
            if (it == agg.end()) {
                order.push_back(r.name);
                agg[r.name] = r;
            } else {
                it->second.max_rel_err = std::max(it->second.max_rel_err, r.max_rel_err);
                it->second.max_abs_diff = std::max(it->second.max_abs_diff, r.max_abs_diff);
                it->second.passed = it->second.passed && r.passed;
            }
        }
    }

    if (as_json) {
        nlohmann::json doc;
        doc["seed"] = seed;
        doc["trials"] = trials;
        doc["all_passed"] = all_passed;
        doc["max_rel_err"] = max_rel_err;
        doc["results"] = nlohmann::json::array();
        for (const auto& name : order) {
            const auto& r = agg[name];
            doc["results"].push_back({{"name", r.name},
                                      {"max_rel_err", r.max_rel_err},
                                      {"passed", r.passed}});
        }
        std::cout << doc.dump(2) << "\n";
    } else {
        for (const auto& name : order) {
            const auto& r = agg[name];
            std::printf("%-44s %11.3e %s\n", r.name.c_str(), r.max_rel_err,
                        r.passed ? "ok" : "FAIL");
        }
        std::printf("gradcheck %s: %zu checks, %zu trial%s, max rel err %.3e\n",
                    all_passed ? "PASS" : "FAIL", order.size(), trials,
                    trials == 1 ? "" : "s", max_rel_err);
    }
    return all_passed;
}

void cmd_synth_data(const fs::path& out_dir, const std::string& name, size_t count,
                    size_t start, size_t frames, size_t dim, const std::string& grammar_name,
                    const std::optional<std::uint64_t>& seed_flag) {
    if (count < 1) throw std::invalid_argument("synth-data: --count must be >= 1");
    SynthGrammar grammar;
    if (grammar_name == "bare")
        grammar = SynthGrammar::Bare;
    else if (grammar_name == "scaffold")
        grammar = SynthGrammar::Scaffold;
    else
        throw std::invalid_argument("synth-data: --grammar must be bare or scaffold");

    const auto table = make_synth_label_table();
    fs::create_directories(out_dir);
    save_label_table(table, out_dir / "labels.txt");

    SynthDatasetSpec spec;
    spec.dir = out_dir;
    spec.name = name;
    spec.t_frames = frames;
    spec.feature_dim = dim;
    spec.seed = resolve_seed(seed_flag, std::nullopt);
    spec.grammar = grammar;
    for (size_t i = 0; i < count; ++i)
        spec.classes.push_back(static_cast<std::uint32_t>((start + i) % table.size()));

    const fs::path manifest = write_synth_dataset(spec, table);
    std::cerr << "[evcap] labels written to " << (out_dir / "labels.txt") << "\n";
    std::cout << manifest.string() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-conditioned audio captioning pipeline"};
    app.require_subcommand(1);

    std::uint64_t seed_value = 0;
    std::optional<std::uint64_t> seed;
    const auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", seed_value, "random seed (default 42)")
            ->each([&](const std::string& s) { seed = std::stoull(s); });
    };

    fs::path labels_path, out_path, manifest_path, train_path, val_path, corpus_path,
        embeddings_path, model_path, predictions_path, references_path;
    std::optional<fs::path> config_path, spice_path;
    fs::path config_value, spice_value;
    bool ablate_events = false;
    double event_threshold = 0.1;
    size_t threads = 1;
    size_t trials = 1;
    bool as_json = false;
    bool perturb = false;
    std::string name = "data";
    size_t count = 8, start = 0, frames = 16, dim = 32;
    std::string grammar = "bare";
    int exit_code = 0;

    auto* prep = app.add_subcommand("prep-events", "build the event token corpus");
    prep->add_option("--labels", labels_path, "event label table, one label per line")
        ->required();
    prep->add_option("--out", out_path, "output corpus path")->required();
    prep->callback([&] { cmd_prep_events(labels_path, out_path); });

    auto* temb = app.add_subcommand("train-embeddings",
                                    "train skip-gram word embeddings on caption text");
    temb->add_option("--manifest", manifest_path, "training manifest JSONL")->required();
    temb->add_option("--config", config_value, "run configuration JSON")
        ->each([&](const std::string& s) { config_path = fs::path(s); });
    temb->add_option("--out", out_path, "output embedding file")->required();
    add_seed(temb);
    temb->callback(
        [&] { cmd_train_embeddings(manifest_path, config_path, out_path, seed); });

    auto* train = app.add_subcommand("train", "train the captioning model");
    train->add_option("--train", train_path, "training manifest JSONL")->required();
    train->add_option("--val", val_path, "validation manifest JSONL")->required();
    train->add_option("--corpus", corpus_path, "event token corpus")->required();
    train->add_option("--embeddings", embeddings_path, "pretrained embedding file")
        ->required();
    train->add_option("--config", config_value, "run configuration JSON (paths.labels required)")
        ->each([&](const std::string& s) { config_path = fs::path(s); });
    train->add_option("--out", out_path, "output model path")->required();
    train->add_flag("--ablate-events", ablate_events,
                    "replace event vectors with zeros (conditioning ablation)");
    add_seed(train);
    train->callback([&] {
        cmd_train(train_path, val_path, corpus_path, embeddings_path, config_path, out_path,
                  seed, ablate_events);
    });

    auto* caption = app.add_subcommand("caption", "greedy-decode captions for a manifest");
    caption->add_option("--model", model_path, "trained model file")->required();
    caption->add_option("--manifest", manifest_path, "manifest JSONL to caption")->required();
    caption->add_option("--out", out_path, "output predictions JSONL")->required();
    caption->add_option("--event-threshold", event_threshold,
                        "detection probability threshold (default 0.1, as in training)");
    caption->add_option("--threads", threads, "parallel clip workers (default 1)")
        ->check(CLI::PositiveNumber);
    caption->callback([&] {
        cmd_caption(model_path, manifest_path, out_path, event_threshold, threads);
    });

    auto* eval = app.add_subcommand("evaluate", "score predictions against references");
    eval->add_option("--predictions", predictions_path, "predictions JSONL")->required();
    eval->add_option("--references", references_path, "references JSONL")->required();
    eval->add_option("--spice", spice_value, "external SPICE scores JSONL")
        ->each([&](const std::string& s) { spice_path = fs::path(s); });
    eval->add_option("--out", out_path, "output report JSON")->required();
    eval->callback(
        [&] { cmd_evaluate(predictions_path, references_path, spice_path, out_path); });

    auto* grad = app.add_subcommand("gradcheck",
                                    "finite-difference check of every backward pass");
    add_seed(grad);
    grad->add_option("--trials", trials, "number of seeds to run (default 1)")
        ->check(CLI::PositiveNumber);
    grad->add_flag("--json", as_json, "machine-readable output");
    grad->add_flag("--perturb", perturb, "negative control: corrupt one gradient")
        ->group("");
    grad->callback([&] {
        if (!cmd_gradcheck(seed, trials, as_json, perturb)) exit_code = 3;
    });

    auto* synth = app.add_subcommand("synth-data",
                                     "generate a synthetic dataset (features + manifest)");
    synth->add_option("--out", out_path, "output directory")->required();
    synth->add_option("--name", name, "manifest stem and clip id prefix (default data)");
    synth->add_option("--count", count, "number of clips (default 8)")
        ->check(CLI::PositiveNumber);
    synth->add_option("--start", start, "first event class index (default 0)");
    synth->add_option("--frames", frames, "frames per clip (default 16)")
        ->check(CLI::PositiveNumber);
    synth->add_option("--dim", dim, "feature dimension (default 32)")
        ->check(CLI::PositiveNumber);
    synth->add_option("--grammar", grammar, "caption grammar: bare or scaffold");
    add_seed(synth);
    synth->callback([&] {
        cmd_synth_data(out_path, name, count, start, frames, dim, grammar, seed);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ValidationError& e) {
        std::cerr << "evcap: error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "evcap: error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "evcap: error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "evcap: error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "evcap: error: " << e.what() << "\n";
        return 4;
    }
    return exit_code;
}
