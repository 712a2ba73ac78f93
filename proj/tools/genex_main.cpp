#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "genex/baselines.hpp"
#include "genex/datagen.hpp"
#include "genex/decoding.hpp"
#include "genex/errors.hpp"
#include "genex/gradcheck.hpp"
#include "genex/report.hpp"
#include "genex/training.hpp"
#include "selftest.hpp"

using namespace genex;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> triple_corpus(const std::vector<std::string>& paths) {
  std::vector<std::string> corpus;
  for (const auto& p : paths) {
    for (const auto& t : read_triples(p)) {
      corpus.push_back(t.query);
      corpus.push_back(t.document);
      corpus.push_back(t.explanation);
    }
  }
  return corpus;
}

ConfigMap parse_overrides(const std::vector<std::string>& sets) {
  ConfigMap out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

// Config file then --set overrides; every key must be known.
ConfigMap merged_config(const std::string& path, const std::vector<std::string>& sets) {
  ConfigMap map = path.empty() ? ConfigMap{} : load_config_file(path);
  for (const auto& [k, v] : parse_overrides(sets)) map[k] = v;
  for (const auto& [k, _] : map) {
    if (!model_config_keys().count(k) && !train_config_keys().count(k)) {
      throw UsageError("unknown config key '" + k + "'");
    }
  }
  return map;
}

void write_stats(const std::string& path, const DatagenStats& stats) {
  std::cerr << stats.summary() << "\n";
  if (!path.empty()) write_file(path, stats.summary() + "\n");
}

struct Common {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Seed for all randomness");
  cmd->add_option("--threads", c.threads, "Worker thread bound")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-focused search result explanation pipeline"};
  app.require_subcommand(1);
  Common common;

  // build-vocab
  auto* vocab_cmd = app.add_subcommand("build-vocab", "Train a subword vocabulary on triple files");
  std::vector<std::string> vocab_inputs;
  std::size_t vocab_size = 4096;
  std::string vocab_out;
  vocab_cmd->add_option("--input", vocab_inputs, "Triple JSONL files")->required();
  vocab_cmd->add_option("--size", vocab_size, "Target vocabulary size");
  vocab_cmd->add_option("--out", vocab_out, "Output vocabulary file")->required();
  add_common(vocab_cmd, common);

  // build-wiki
  auto* wiki_cmd = app.add_subcommand("build-wiki", "Build triples from sectioned articles");
  std::string wiki_in, wiki_out, wiki_stop, wiki_vocab, wiki_stats;
  wiki_cmd->add_option("--input", wiki_in, "Article JSONL")->required();
  wiki_cmd->add_option("--out", wiki_out, "Triple JSONL")->required();
  wiki_cmd->add_option("--stop-headers", wiki_stop, "Stop header list, one per line");
  wiki_cmd->add_option("--vocab", wiki_vocab, "Count gate lengths in subword pieces of this vocabulary");
  wiki_cmd->add_option("--stats", wiki_stats, "Write drop counters here");
  add_common(wiki_cmd, common);

  // build-anchors
  auto* anchor_cmd = app.add_subcommand("build-anchors", "Build triples from anchor text and pages");
  std::string anchor_in, pages_in, anchor_out, anchor_emb, anchor_block, anchor_vocab, anchor_stats;
  bool no_summary = false;
  std::size_t anchor_cap = 256;
  anchor_cmd->add_option("--anchors", anchor_in, "Anchor JSONL")->required();
  anchor_cmd->add_option("--pages", pages_in, "Page JSONL")->required();
  anchor_cmd->add_option("--out", anchor_out, "Triple JSONL")->required();
  anchor_cmd->add_option("--embeddings", anchor_emb, "Word vectors for summary similarity");
  anchor_cmd->add_option("--blocklist", anchor_block, "Facet blocklist, one word per line");
  anchor_cmd->add_option("--vocab", anchor_vocab, "Count gate lengths in subword pieces of this vocabulary");
  anchor_cmd->add_option("--summary-cap", anchor_cap, "Summary length cap in tokens");
  anchor_cmd->add_flag("--no-summary", no_summary, "Keep page text whole");
  anchor_cmd->add_option("--stats", anchor_stats, "Write drop counters here");
  add_common(anchor_cmd, common);

  // summarize
  auto* sum_cmd = app.add_subcommand("summarize", "Query-biased extractive summaries");
  std::string sum_in, sum_out, sum_emb;
  std::size_t sum_cap = 256;
  double sum_threshold = 0.8;
  sum_cmd->add_option("--input", sum_in, "JSONL with query and document fields")->required();
  sum_cmd->add_option("--out", sum_out, "JSONL with query and summary fields")->required();
  sum_cmd->add_option("--embeddings", sum_emb, "Word vectors for similarity");
  sum_cmd->add_option("--cap", sum_cap, "Length cap in tokens");
  sum_cmd->add_option("--threshold", sum_threshold, "Embedding similarity threshold");
  add_common(sum_cmd, common);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic key-value task");
  std::size_t synth_n = 1000, synth_words = 18;
  SynthOptions synth_opt;
  std::string synth_out;
  synth_cmd->add_option("--n", synth_n, "Number of triples");
  synth_cmd->add_option("--words", synth_words, "Size of the pseudo-word pool");
  synth_cmd->add_option("--fields", synth_opt.fields_per_doc, "Key-value clauses per document");
  synth_cmd->add_option("--value-words", synth_opt.value_words, "Words per value");
  synth_cmd->add_option("--min-words", synth_opt.min_document_words, "Minimum document length in words");
  synth_cmd->add_option("--out", synth_out, "Triple JSONL")->required();
  add_common(synth_cmd, common);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model variant");
  std::string train_data, train_config, train_vocab, train_out, train_resume, train_log;
  std::vector<std::string> train_sets;
  std::size_t train_epochs = 0;
  train_cmd->add_option("--data", train_data, "Training triple JSONL")->required();
  train_cmd->add_option("--config", train_config, "key = value config file");
  train_cmd->add_option("--vocab", train_vocab, "Vocabulary file (built from --data when absent)");
  auto* epochs_opt = train_cmd->add_option("--epochs", train_epochs, "Total epochs to reach");
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_cmd->add_option("--resume", train_resume, "Continue from this checkpoint");
  train_cmd->add_option("--log", train_log, "Progress log (epoch, step, loss)");
  train_cmd->add_option("--set", train_sets, "Config override key=value");
  auto* train_seed = train_cmd->add_option("--seed", common.seed, "Seed for all randomness");
  auto* train_threads = train_cmd->add_option("--threads", common.threads, "Worker thread bound")
                            ->check(CLI::PositiveNumber);

  // decode
  auto* decode_cmd = app.add_subcommand("decode", "Greedy decoding of explanations");
  std::string dec_ckpt, dec_in, dec_out;
  DecodeOptions dec_opt;
  decode_cmd->add_option("--ckpt", dec_ckpt, "Checkpoint")->required();
  decode_cmd->add_option("--input", dec_in, "JSONL with query and document fields")->required();
  decode_cmd->add_option("--out", dec_out, "Prediction JSONL")->required();
  decode_cmd->add_option("--max-len", dec_opt.max_len, "Maximum generated tokens")->check(CLI::PositiveNumber);
  decode_cmd->add_flag("--ban-query-logits", dec_opt.ban_query_logits, "Never emit query tokens");
  add_common(decode_cmd, common);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "BLEU and ROUGE against gold explanations");
  std::string ev_pred, ev_gold, ev_metrics = "bleu1,bleu2,rouge1,rouge2,rougeL", ev_out, ev_tsv, ev_compare;
  eval_cmd->add_option("--pred", ev_pred, "Prediction JSONL (explanation field)")->required();
  eval_cmd->add_option("--gold", ev_gold, "Gold triple JSONL")->required();
  eval_cmd->add_option("--metrics", ev_metrics, "Comma separated metric names");
  eval_cmd->add_option("--out", ev_out, "Report JSON");
  eval_cmd->add_option("--tsv", ev_tsv, "Per-sample TSV");
  eval_cmd->add_option("--compare", ev_compare, "Second prediction file for a paired t-test");
  add_common(eval_cmd, common);

  // baseline
  auto* base_cmd = app.add_subcommand("baseline", "Non-neural explanation baselines");
  std::string base_method, base_in, base_out;
  std::size_t base_k = 3, base_window = 10, base_samples = 500;
  base_cmd->add_option("--method", base_method, "textrank | ts-textrank | lime | sensitivity")
      ->required()
      ->check(CLI::IsMember({"textrank", "ts-textrank", "lime", "sensitivity"}));
  base_cmd->add_option("--input", base_in, "Triple JSONL")->required();
  base_cmd->add_option("--out", base_out, "Prediction JSONL")->required();
  base_cmd->add_option("--k", base_k, "Keywords per explanation (TextRank)");
  base_cmd->add_option("--window", base_window, "Co-occurrence window (TextRank)");
  base_cmd->add_option("--samples", base_samples, "Perturbation samples (LIME)");
  add_common(base_cmd, common);

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  std::string grad_config;
  std::vector<std::string> grad_sets;
  grad_cmd->add_option("--config", grad_config, "key = value config file");
  grad_cmd->add_option("--set", grad_sets, "Config override key=value");
  add_common(grad_cmd, common);

  // selftest
  auto* self_cmd = app.add_subcommand("selftest", "Run the invariant suite of every module");
  std::string self_out;
  self_cmd->add_option("--out", self_out, "Write the result lines here");
  add_common(self_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*vocab_cmd) {
      const auto vocab = Vocab::train(triple_corpus(vocab_inputs), vocab_size);
      vocab.save(vocab_out);
      std::cerr << "vocabulary of " << vocab.size() << " pieces\n";
    } else if (*wiki_cmd) {
      DatagenStats stats;
      const auto articles = parse_wiki_articles(read_jsonl(wiki_in), stats);
      LengthGates gates;
      Vocab vocab;
      if (!wiki_vocab.empty()) {
        vocab = Vocab::load(wiki_vocab);
        gates.count = subword_counter(vocab);
      }
      std::set<std::string> stop = default_stop_headers();
      if (!wiki_stop.empty()) {
        const auto words = load_word_list(wiki_stop);
        stop.clear();
        stop.insert(words.begin(), words.end());
      }
      write_triples(wiki_out, build_wiki_triples(articles, stop, gates, stats));
      write_stats(wiki_stats, stats);
    } else if (*anchor_cmd) {
      DatagenStats stats;
      const auto records = parse_anchor_records(read_jsonl(anchor_in), stats);
      const auto pages = parse_pages(read_jsonl(pages_in), stats);
      AnchorOptions opt;
      Vocab vocab;
      if (!anchor_vocab.empty()) {
        vocab = Vocab::load(anchor_vocab);
        opt.gates.count = subword_counter(vocab);
      }
      if (!anchor_block.empty()) {
        const auto words = load_word_list(anchor_block);
        opt.blocklist = std::set<std::string>(words.begin(), words.end());
      }
      EmbeddingTable emb;
      if (no_summary) {
        opt.summary.reset();
      } else {
        opt.summary->cap = anchor_cap;
        opt.summary->count = opt.gates.count;
        if (!anchor_emb.empty()) {
          emb = load_embeddings(anchor_emb);
          opt.summary->embeddings = &emb;
        }
      }
      write_triples(anchor_out, build_anchor_triples(records, pages, opt, stats));
      write_stats(anchor_stats, stats);
    } else if (*sum_cmd) {
      SummaryOptions opt;
      opt.cap = sum_cap;
      opt.threshold = sum_threshold;
      EmbeddingTable emb;
      if (!sum_emb.empty()) {
        emb = load_embeddings(sum_emb);
        opt.embeddings = &emb;
      }
      std::ostringstream out;
      for (const auto& rec : read_jsonl(sum_in)) {
        if (!rec.is_object() || !rec.contains("query") || !rec.contains("document") ||
            !rec["query"].is_string() || !rec["document"].is_string()) {
          throw DataError("summarize records need string query and document fields");
        }
        const auto q = rec["query"].get<std::string>();
        nlohmann::ordered_json o;
        o["query"] = q;
        o["summary"] = query_biased_summary(rec["document"].get<std::string>(), q, opt);
        out << o.dump() << "\n";
      }
      write_file(sum_out, out.str());
    } else if (*synth_cmd) {
      write_triples(synth_out,
                    synth_keyvalue_dataset(synth_n, synthetic_words(synth_words), synth_opt, common.seed));
    } else if (*train_cmd) {
      const auto map = merged_config(train_config, train_sets);
      TrainOptions opt;
      apply_train_config(map, opt);
      if (train_seed->count()) opt.seed = common.seed;
      if (train_threads->count()) opt.threads = common.threads;
      if (epochs_opt->count()) opt.epochs = train_epochs;
      if (opt.threads == 0) throw UsageError("threads must be positive");
      const auto triples = read_triples(train_data);
      if (triples.empty()) throw DataError("no training triples in " + train_data);

      TrainState state;
      if (!train_resume.empty()) {
        state = load_checkpoint(train_resume);
      } else {
        ModelConfig cfg;
        apply_model_config(map, cfg);
        const Vocab vocab = train_vocab.empty() ? Vocab::train(triple_corpus({train_data}), cfg.vocab_size)
                                                : Vocab::load(train_vocab);
        if (!map.count("vocab_size")) cfg.vocab_size = vocab.size();
        state = init_train_state(cfg, vocab, opt);
      }
      const auto samples = encode_triples(triples, state.vocab, state.config);
      std::ostringstream log;
      train(state, samples, opt.epochs, opt.threads, [&](const EpochStats& s, const TrainState& st) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %zu step %zu loss %.9f acc %.6f\n", s.epoch, st.step,
                      s.mean_loss, s.token_accuracy);
        log << line;
        std::cerr << line;
      });
      save_checkpoint(state, train_out);
      if (!train_log.empty()) write_file(train_log, log.str());
    } else if (*decode_cmd) {
      const auto state = load_checkpoint(dec_ckpt);
      std::vector<DecodeRequest> reqs;
      for (const auto& rec : read_jsonl(dec_in)) {
        if (!rec.is_object() || !rec.contains("query") || !rec.contains("document") ||
            !rec["query"].is_string() || !rec["document"].is_string()) {
          throw DataError("decode records need string query and document fields");
        }
        reqs.push_back({rec["query"].get<std::string>(), rec["document"].get<std::string>()});
      }
      const auto preds = decode_batch(reqs, state, dec_opt, common.threads);
      std::ostringstream out;
      for (std::size_t i = 0; i < reqs.size(); ++i) {
        nlohmann::ordered_json o;
        o["query"] = reqs[i].query;
        o["document"] = reqs[i].document;
        o["explanation"] = preds[i];
        out << o.dump() << "\n";
      }
      write_file(dec_out, out.str());
    } else if (*eval_cmd) {
      const auto metrics = parse_metric_list(ev_metrics);
      const auto gold = keyed_records(read_jsonl(ev_gold), "explanation");
      const auto report = corpus_report(keyed_records(read_jsonl(ev_pred), "explanation"), gold, metrics);
      for (const auto& [name, s] : report.metrics) std::cout << name << "\t" << fmt(s.corpus) << "\n";
      if (!ev_out.empty()) write_file(ev_out, report_to_json(report).dump(2) + "\n");
      if (!ev_tsv.empty()) write_file(ev_tsv, report_to_tsv(report));
      if (!ev_compare.empty()) {
        const auto other = corpus_report(keyed_records(read_jsonl(ev_compare), "explanation"), gold, metrics);
        for (const auto& [name, t] : compare_reports(report, other)) {
          std::cout << name << "\tt=" << fmt(t.t) << "\tdf=" << t.df << "\tp=" << fmt(t.p) << "\n";
        }
      }
    } else if (*base_cmd) {
      const auto triples = read_triples(base_in);
      std::unique_ptr<TfIdfIndex> index;
      if (base_method == "lime" || base_method == "sensitivity") {
        std::vector<std::string> docs;
        for (const auto& t : triples) docs.push_back(t.document);
        if (docs.empty()) throw DataError("no triples in " + base_in);
        index = std::make_unique<TfIdfIndex>(docs);
      }
      const Ranker ranker = [&](const std::string& q, const std::string& d) { return tfidf_score(q, d, *index); };
      std::ostringstream out;
      for (std::size_t i = 0; i < triples.size(); ++i) {
        const auto& t = triples[i];
        std::vector<std::string> words;
        if (base_method == "textrank" || base_method == "ts-textrank") {
          const auto ranked = base_method == "textrank"
                                  ? textrank_keywords(t.document, base_k, base_window)
                                  : ts_textrank_keywords(t.document, t.query, base_k, base_window);
          for (const auto& r : ranked) words.push_back(r.term);
        } else {
          std::vector<TokenScore> scores;
          if (base_method == "lime") {
            LimeOptions lo;
            lo.n_samples = base_samples;
            lo.seed = mix_seed(common.seed, i);
            scores = lime_explain(t.query, t.document, ranker, lo);
          } else {
            scores = sensitivity_explain(t.query, t.document, ranker);
          }
          if (!scores.empty()) words = select_top_tokens(scores);
        }
        nlohmann::ordered_json o;
        o["query"] = t.query;
        o["document"] = t.document;
        o["explanation"] = join(words);
        out << o.dump() << "\n";
      }
      write_file(base_out, out.str());
    } else if (*grad_cmd) {
      const auto map = merged_config(grad_config, grad_sets);
      ModelConfig cfg;
      apply_model_config(map, cfg);
      cfg.dropout = 0.0;
      cfg.validate();
      const auto report = full_model_gradcheck(cfg, common.seed);
      std::cout << "variant " << to_string(cfg.variant) << " checked " << report.checked << " max_rel_error "
                << report.max_rel_error << " max_abs_error " << report.max_abs_error << " worst " << report.worst
                << "\n";
      return report.passed ? 0 : kExitNumeric;
    } else if (*self_cmd) {
      const auto lines = run_selftest(common.seed, common.threads);
      std::string text;
      bool ok = true;
      for (const auto& l : lines) {
        text += (l.passed ? "PASS " : "FAIL ") + l.name + (l.detail.empty() ? "" : ": " + l.detail) + "\n";
        ok = ok && l.passed;
      }
      std::cout << text;
      if (!self_out.empty()) write_file(self_out, text);
      return ok ? 0 : kExitNumeric;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
