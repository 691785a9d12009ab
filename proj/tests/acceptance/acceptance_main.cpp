// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: eight end-to-end criteria, selected by a single
// command-line argument (1..8); with no argument every criterion runs.
// Each prints one PASS/FAIL line with the measured evidence.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evcap/embeddings.hpp"
#include "evcap/events.hpp"
#include "evcap/gradcheck_suite.hpp"
#include "evcap/metrics.hpp"
#include "evcap/model.hpp"
#include "evcap/synthetic.hpp"
#include "evcap/train.hpp"
#include "support/format_fuzz.hpp"

using namespace evcap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("evcap_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const fs::path& dir, const std::string& args) {
    const std::string cmd = "cd '" + dir.string() + "' && '" + EVCAP_CLI_PATH + "' " + args +
                            " > /dev/null 2> /dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << std::fixed << v;
    return os.str();
}

std::string strip_markers(const TokenSeq& tokens) {
    TokenSeq words;
    for (const auto& t : tokens)
        if (t != kSosToken && t != kEosToken && t != kPadToken) words.push_back(t);
    return join_tokens(words);
}

// ---------------------------------------------------------------------------
// 1. Gradient soundness: full finite-difference suite over 20 seeds.

Outcome criterion1() {
    const auto start = std::chrono::steady_clock::now();
    const size_t trials = 20;
    bool all_passed = true;
    double max_err = 0.0;
    size_t checks = 0;
    for (size_t t = 0; t < trials; ++t) {
        const SuiteOutcome outcome = run_gradcheck_suite(derive_seed(42, t));
        all_passed = all_passed && outcome.all_passed;
        max_err = std::max(max_err, outcome.max_rel_err);
        checks = outcome.results.size();
    }
    const double elapsed = seconds_since(start);
    const int cli_exit = run_cli(scratch_dir("gradcheck"), "gradcheck --trials 20 --json");

    Outcome o;
    o.pass = all_passed && max_err < 1e-4 && elapsed < 60.0 && cli_exit == 0;
    o.detail = std::to_string(trials) + " seeds x " + std::to_string(checks) +
               " layer checks, max rel err " + fmt(max_err, 8) + ", " + fmt(elapsed, 1) +
               "s, cli exit " + std::to_string(cli_exit);
    return o;
}

// ---------------------------------------------------------------------------
// 2. End-to-end overfit on an 8-clip synthetic fixture.

Outcome criterion2() {
    const auto start = std::chrono::steady_clock::now();
    const auto dir = scratch_dir("overfit");
    const auto table = make_synth_label_table();

    SynthDatasetSpec spec;
    spec.dir = dir;
    spec.name = "train";
    spec.classes = {0, 1, 2, 3, 4, 5, 6, 7};
    spec.t_frames = 16;
    spec.feature_dim = 32;
    spec.seed = 42;
    spec.grammar = SynthGrammar::Scaffold;
    const Manifest manifest = load_manifest(write_synth_dataset(spec, table));

    std::vector<TokenSeq> captions;
    for (const auto& rec : manifest.records)
        for (const auto& c : rec.captions) captions.push_back(normalize_caption(c));
    const Vocabulary vocab = Vocabulary::build(captions);
    const EventCorpus corpus = EventCorpus::build(table);

    ModelConfig mc;
    mc.feature_dim = spec.feature_dim;
    mc.event_dim = corpus.size();
    mc.bigru1_cells = 8;
    mc.bigru2_cells = 16;
    mc.caption_gru_cells = 32;
    mc.decoder_gru_cells = 32;
    mc.embed_dim = 16;
    mc.vocab_size = vocab.size();
    mc.dropout = 0.0;
    mc.leaky_dense_units = 32;
    mc.fine_tune_embeddings = true;

    SeededRng init(derive_seed(7, "init"));
    CaptionerModel model = build_model(mc, init);
    model.vocab = vocab;
    model.labels = table;
    model.event_corpus = corpus;

    const TrainData data = prepare_training_data(manifest, model);
    TrainConfig tc;
    tc.epochs = 200;
    tc.batch_size = 32;
    tc.learning_rate = 3e-3;
    tc.seed = 7;
    train_captioner(model, data, data, tc);

    const double loss = evaluate_loss(model, data);
    size_t reproduced = 0;
    for (const auto& rec : manifest.records) {
        const Matrix feats = load_features(rec.feature_path);
        const Vec ev = encode_clip_events(threshold_events(rec.event_probs), model.labels,
                                          model.event_corpus);
        if (strip_markers(greedy_caption(model, feats, ev)) == rec.captions[0]) ++reproduced;
    }
    const double elapsed = seconds_since(start);

    Outcome o;
    o.pass = loss < 0.05 && reproduced == manifest.records.size() && elapsed < 300.0;
    o.detail = fmt(loss) + " nats/token, " + std::to_string(reproduced) +
               "/8 captions reproduced greedily, " + fmt(elapsed, 1) + "s";
    return o;
}

// ---------------------------------------------------------------------------
// 3. Event conditioning: unseen event combinations caption correctly only
// when the event vector is present.

std::string word_set_key(const std::string& label) {
    TokenSeq tokens = tokenize_label(label);
    std::sort(tokens.begin(), tokens.end());
    return join_tokens(tokens);
}

double bleu1_on_split(CaptionerModel& model, const Manifest& manifest, bool ablate) {
    std::vector<EvalPair> pairs;
    for (const auto& rec : manifest.records) {
        const Matrix feats = load_features(rec.feature_path);
        Vec ev;
        if (ablate) {
            ev.assign(model.config.event_dim, 0.0);
        } else {
            ev = encode_clip_events(threshold_events(rec.event_probs), model.labels,
                                    model.event_corpus);
        }
        EvalPair pair;
        pair.clip_id = rec.clip_id;
        pair.candidate = tokenize_text(strip_markers(greedy_caption(model, feats, ev)));
        for (const auto& c : rec.captions) pair.references.push_back(tokenize_text(c));
        pairs.push_back(std::move(pair));
    }
    return bleu(pairs, 1);
}

CaptionerModel train_conditioning_model(const Manifest& train_man, const Manifest& val_man,
                                        const EventLabelTable& table,
                                        const EventCorpus& corpus, bool ablate) {
    std::vector<TokenSeq> captions;
    for (const auto& rec : train_man.records)
        for (const auto& c : rec.captions) captions.push_back(normalize_caption(c));
    const Vocabulary vocab = Vocabulary::build(captions);

    ModelConfig mc;
    mc.feature_dim = 16;
    mc.event_dim = corpus.size();
    mc.bigru1_cells = 8;
    mc.bigru2_cells = 16;
    mc.caption_gru_cells = 32;
    mc.decoder_gru_cells = 32;
    mc.embed_dim = 16;
    mc.vocab_size = vocab.size();
    mc.dropout = 0.0;
    mc.leaky_dense_units = 32;
    mc.fine_tune_embeddings = true;

    SeededRng init(derive_seed(13, "init"));
    CaptionerModel model = build_model(mc, init);
    model.vocab = vocab;
    model.labels = table;
    model.event_corpus = corpus;

    const TrainData train_data = prepare_training_data(train_man, model, 0.1, ablate);
    const TrainData val_data = prepare_training_data(val_man, model, 0.1, ablate);
    TrainConfig tc;
    tc.epochs = 60;
    tc.batch_size = 64;
    tc.learning_rate = 3e-3;
    tc.seed = 13;
    train_captioner(model, train_data, val_data, tc);
    return model;
}

Outcome criterion3() {
    const auto start = std::chrono::steady_clock::now();
    const auto dir = scratch_dir("conditioning");
    const auto table = make_synth_label_table();
    const EventCorpus corpus = EventCorpus::build(table);

    // Hold out 20 classes whose word sets never occur in training. Labels
    // are ordered word triples, so the same set recurs in several orders;
    // filtering by sorted set keeps the held-out combinations genuinely new.
    std::vector<std::uint32_t> all_classes(table.size());
    for (std::uint32_t c = 0; c < table.size(); ++c) all_classes[c] = c;
    SeededRng split_rng(derive_seed(2024, "split"));
    split_rng.shuffle(all_classes);

    std::vector<std::uint32_t> eval_classes;
    std::set<std::string> eval_keys;
    size_t cursor = 0;
    while (eval_classes.size() < 20)
        if (eval_keys.insert(word_set_key(table[all_classes[cursor]])).second)
            eval_classes.push_back(all_classes[cursor++]);
        else
            ++cursor;

    std::vector<std::uint32_t> train_classes;
    std::set<std::string> train_words;
    for (; cursor < all_classes.size() && train_classes.size() < 120; ++cursor) {
        const std::uint32_t c = all_classes[cursor];
        if (eval_keys.count(word_set_key(table[c]))) continue;
        train_classes.push_back(c);
        for (const auto& t : tokenize_label(table[c])) train_words.insert(t);
    }
    if (train_words.size() != synth_words().size())
        return {false, "training split does not cover the word inventory"};

    SynthDatasetSpec spec;
    spec.dir = dir;
    spec.t_frames = 8;
    spec.feature_dim = 16;
    spec.grammar = SynthGrammar::Bare;

    // Three clips per class with independent feature noise, so the event
    // vector is the only signal that survives across clips of a class.
    spec.name = "train";
    spec.classes.clear();
    for (int rep = 0; rep < 3; ++rep)
        spec.classes.insert(spec.classes.end(), train_classes.begin(), train_classes.end());
    spec.seed = 21;
    const Manifest train_man = load_manifest(write_synth_dataset(spec, table));

    spec.name = "val";
    spec.classes.assign(train_classes.begin(), train_classes.begin() + 24);
    spec.seed = 22;  // same classes, fresh feature noise
    const Manifest val_man = load_manifest(write_synth_dataset(spec, table));

    spec.name = "eval";
    spec.classes = eval_classes;
    spec.seed = 23;
    const Manifest eval_man = load_manifest(write_synth_dataset(spec, table));

    CaptionerModel conditioned =
        train_conditioning_model(train_man, val_man, table, corpus, false);
    const double bleu_conditioned = bleu1_on_split(conditioned, eval_man, false);

    CaptionerModel ablated = train_conditioning_model(train_man, val_man, table, corpus, true);
    const double bleu_ablated = bleu1_on_split(ablated, eval_man, true);

    const double elapsed = seconds_since(start);
    Outcome o;
    o.pass = bleu_conditioned >= 0.9 && bleu_ablated <= 0.5 && elapsed < 600.0;
    o.detail = "held-out BLEU-1 " + fmt(bleu_conditioned) + " conditioned vs " +
               fmt(bleu_ablated) + " ablated, " + std::to_string(eval_classes.size()) +
               " unseen combinations, " + std::to_string(train_man.records.size()) +
               " training clips, " + fmt(elapsed, 1) + "s";
    return o;
}

// ---------------------------------------------------------------------------
// 4. Metric oracles on the hand-built fixture.

std::vector<EvalPair> metric_fixture() {
    auto tok = [](const std::string& s) { return tokenize_text(s); };
    auto toks = [&](const std::vector<std::string>& v) {
        std::vector<TokenSeq> out;
        for (const auto& s : v) out.push_back(tok(s));
        return out;
    };
    return {
        {"c1", tok("a dog barks in the park"),
         toks({"a dog barks loudly in the park", "a dog is barking in a park",
               "dogs bark in the park", "a loud dog barks at the park",
               "the dog barked in a park"})},
        {"c2", tok("rain falls on the roof"),
         toks({"heavy rain falls on a roof", "rain falls on the roof of a house",
               "the rain patters on a tin roof", "rain drops fall onto the roof",
               "it rains hard on the roof"})},
        {"c3", tok("birds sing"),
         toks({"birds are singing in the trees", "a bird sings sweetly",
               "small birds sing at dawn", "birds chirp and sing",
               "the birds sang all morning"})},
        {"c4", tok("a man speaks while music plays"),
         toks({"a man is speaking over music", "music plays while a man talks",
               "a man speaks and music plays in the background",
               "someone speaks while a song plays", "a male voice talks over playing music"})},
    };
}

Outcome criterion4() {
    const auto pairs = metric_fixture();
    const std::vector<EvalPair> clip_pair = {
        {"x", tokenize_text("the the the the the the the"),
         {tokenize_text("the cat is on the mat")}}};
    struct Check {
        const char* name;
        double got;
        double want;
        double tol;
    };
    const Check checks[] = {
        {"bleu1", bleu(pairs, 1), 0.8539396656235351, 1e-10},
        {"bleu2", bleu(pairs, 2), 0.7949745649108553, 1e-10},
        {"bleu3", bleu(pairs, 3), 0.6652181241204197, 1e-10},
        {"bleu4", bleu(pairs, 4), 0.500685315045562, 1e-10},
        {"rouge_l", rouge_l(pairs), 0.7303181113833835, 1e-10},
        {"meteor", meteor_lite(pairs), 0.7149945552383632, 1e-10},
        {"cider", cider(pairs), 2.4636017541021533, 1e-10},
        {"clipped 2/7", bleu(clip_pair, 1), 2.0 / 7.0, 1e-15},
        {"spider exact", spider(0.328, 0.155), (0.328 + 0.155) / 2.0, 1e-15},
        {"spider rounded", spider(0.328, 0.155), 0.242, 5e-4 + 1e-12},
    };
    Outcome o;
    o.pass = true;
    double worst = 0.0;
    for (const auto& c : checks) {
        const double err = std::abs(c.got - c.want);
        worst = std::max(worst, err);
        if (err > c.tol) {
            o.pass = false;
            o.detail += std::string(o.detail.empty() ? "" : "; ") + c.name + " off by " +
                        fmt(err, 12);
        }
    }
    if (o.pass)
        o.detail = "10 oracle values matched, worst absolute deviation " + fmt(worst, 14);
    return o;
}

// ---------------------------------------------------------------------------
// 5. Pipeline determinism through the command-line interface: every stage
// rerun from scratch with the same seeds yields bit-identical artifacts.

Outcome criterion5() {
    const auto start = std::chrono::steady_clock::now();
    const auto dir = scratch_dir("determinism");
    write_file_atomic(dir / "cfg.json", std::string(R"({
  "model": {"bigru1_cells": 4, "bigru2_cells": 4, "caption_gru_cells": 8,
            "decoder_gru_cells": 8, "embed_dim": 8, "dropout": 0.1,
            "leaky_dense_units": 8, "max_decode_len": 12},
  "train": {"epochs": 4, "batch_size": 16, "learning_rate": 0.003},
  "embeddings": {"embed_dim": 8, "epochs": 5, "window": 2},
  "paths": {"labels": "a/labels.txt"}
})"));

    std::string failed;
    auto stage = [&](const std::string& args, const std::string& what) {
        if (!failed.empty()) return;
        if (run_cli(dir, args) != 0) failed = what;
    };

    for (const char* side : {"a", "b"}) {
        const std::string s(side);
        stage("synth-data --out " + s + " --name train --count 6 --frames 6 --dim 8 --seed 5",
              "synth-data train " + s);
        stage("synth-data --out " + s + " --name val --count 3 --frames 6 --dim 8 --seed 99",
              "synth-data val " + s);
        stage("prep-events --labels " + s + "/labels.txt --out " + s + "/corpus.txt",
              "prep-events " + s);
        stage("train-embeddings --manifest " + s + "/train.jsonl --config cfg.json --out " +
                  s + "/vectors.emb --seed 42",
              "train-embeddings " + s);
        stage("train --train " + s + "/train.jsonl --val " + s + "/val.jsonl --corpus " + s +
                  "/corpus.txt --embeddings " + s + "/vectors.emb --config cfg.json --out " +
                  s + "/model.acm --seed 11",
              "train " + s);
        stage("caption --model " + s + "/model.acm --manifest " + s + "/val.jsonl --out " + s +
                  "/pred.jsonl",
              "caption " + s);
        if (failed.empty()) {
            std::vector<std::string> refs;
            for (const auto& line : read_lines(dir / (s + "/val.jsonl"))) {
                auto rec = nlohmann::json::parse(line);
                refs.push_back(nlohmann::json{{"clip_id", rec["clip_id"]},
                                              {"captions", rec["captions"]}}
                                   .dump());
            }
            write_file_atomic(dir / (s + "/refs.jsonl"), join_lines(refs));
        }
        stage("evaluate --predictions " + s + "/pred.jsonl --references " + s +
                  "/refs.jsonl --out " + s + "/report.json",
              "evaluate " + s);
    }
    Outcome o;
    if (!failed.empty()) {
        o.detail = "stage failed: " + failed;
        return o;
    }

    const std::vector<std::pair<const char*, const char*>> artifacts = {
        {"features", "features/train_0.afc"}, {"manifest", "train.jsonl"},
        {"corpus", "corpus.txt"},             {"embeddings", "vectors.emb"},
        {"model", "model.acm"},               {"predictions", "pred.jsonl"},
        {"report", "report.json"},
    };
    std::string mismatched;
    for (const auto& [what, rel] : artifacts) {
        if (read_file_bytes(dir / ("a/" + std::string(rel))) !=
            read_file_bytes(dir / ("b/" + std::string(rel))))
            mismatched += std::string(mismatched.empty() ? "" : ", ") + what;
    }
    o.pass = mismatched.empty();
    o.detail = o.pass ? "7 artifact classes bit-identical across reruns, " +
                            fmt(seconds_since(start), 1) + "s"
                      : "differs: " + mismatched;
    return o;
}

// ---------------------------------------------------------------------------
// 6. Event pipeline exactness fixtures.

Outcome criterion6() {
    std::string failures;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failures += std::string(failures.empty() ? "" : "; ") + what;
    };

    Vec probs(kEventClassCount, 0.0);
    probs[3] = 0.1;     // exactly at the threshold: excluded
    probs[7] = 0.1001;  // just above: included
    probs[9] = 0.9;
    const auto selected = threshold_events(probs, 0.1);
    expect(selected == std::vector<std::uint32_t>{7, 9},
           "strict threshold selection picked " + std::to_string(selected.size()) + " ids");

    expect(tokenize_label("Middle Eastern Music") == TokenSeq{"middle", "eastern", "music"},
           "label tokenization order");

    const EventLabelTable labels = {"Dog, Barking", "Rain", "Dog Howl"};
    const EventCorpus corpus = EventCorpus::build(labels);
    expect(corpus.size() == 4, "corpus size " + std::to_string(corpus.size()));

    const Vec multi = encode_clip_events({0, 2}, labels, corpus);
    double total = 0.0;
    const std::set<std::string> expected_tokens = {"dog", "barking", "howl"};
    for (size_t i = 0; i < corpus.size(); ++i) {
        total += multi[i];
        const bool should = expected_tokens.count(corpus.tokens()[i]) > 0;
        expect(multi[i] == (should ? 1.0 : 0.0), "union bit for " + corpus.tokens()[i]);
    }
    expect(total == 3.0, "union cardinality " + fmt(total, 1));

    Outcome o;
    o.pass = failures.empty();
    o.detail = o.pass ? "threshold strictness, label tokenization, multi-hot union all exact"
                      : failures;
    return o;
}

// ---------------------------------------------------------------------------
// 7. Parameter budget at reference scale.

Outcome criterion7() {
    ModelConfig c;
    c.feature_dim = 2048;
    c.event_dim = 600;
    c.vocab_size = 4300;
    c.fine_tune_embeddings = true;
    SeededRng rng(1);
    CaptionerModel m = build_model(c, rng);
    const size_t count = trainable_param_count(m);
    Outcome o;
    o.pass = count == expected_param_count(c) && count >= 2'000'000 && count <= 3'000'000;
    o.detail = std::to_string(count) + " trainable parameters, closed form " +
               std::to_string(expected_param_count(c));
    return o;
}

// ---------------------------------------------------------------------------
// 8. Format round-trip fuzz, 1000 cases per format.

Outcome criterion8() {
    const auto start = std::chrono::steady_clock::now();
    std::string diag;
    Outcome o;
    o.pass = evcap::fuzz::fuzz_features(101, 1000, &diag) &&
             evcap::fuzz::fuzz_embeddings(202, 1000, &diag) &&
             evcap::fuzz::fuzz_model(303, 1000, &diag) &&
             evcap::fuzz::fuzz_manifest(scratch_dir("fuzz"), 404, 1000, &diag);
    o.detail = o.pass ? "4000 randomized round-trips bit-exact, " +
                            fmt(seconds_since(start), 1) + "s"
                      : diag;
    return o;
}

} // namespace

int main(int argc, char** argv) {
    Outcome (*const criteria[])() = {criterion1, criterion2, criterion3, criterion4,
                                     criterion5, criterion6, criterion7, criterion8};

    std::vector<size_t> to_run;
    if (argc > 1) {
        const int n = std::atoi(argv[1]);
        if (n < 1 || n > 8) {
            std::fprintf(stderr, "usage: %s [1-8]\n", argv[0]);
            return 2;
        }
        to_run.push_back(static_cast<size_t>(n));
    } else {
        for (size_t i = 1; i <= 8; ++i) to_run.push_back(i);
    }

    bool all = true;
    for (size_t n : to_run) {
        const Outcome o = criteria[n - 1]();
        all = all && o.pass;
        std::printf("criterion %zu: %s (%s)\n", n, o.pass ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
