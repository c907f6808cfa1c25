#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "kgqa/pipeline.hpp"
#include "kgqa/text.hpp"

namespace {

using namespace kgqa;

struct Options {
  std::string corpus = "corpus.jsonl";
  std::string kb = "kb.jsonl";
  std::string entity_map = "entity_map.jsonl";
  std::string aliases = "aliases.jsonl";
  std::string index_dir;
  std::string params_path = "params.bin";
  std::string dataset;
  std::string predictions;
  std::string out;
  std::string trace;
  std::string question;

  RetrieverConfig retriever;
  std::size_t n_inference = 40;
  std::string edge_filter = "cross+inner";

  std::size_t hidden = 64;
  std::size_t seq_len = 64;
  std::size_t v_hash = 1u << 16;
  std::string fusion = "relation";
  std::size_t layers = 1;
  double dropout = 0.3;
  std::string head = "graph";

  std::string sampling = "uniform";
  std::uint64_t seed = 0;
  std::size_t steps = 500;
  double learning_rate = 1e-3;
  std::size_t sample_cap = 20;

  std::string host = "127.0.0.1";
  int port = 8080;
};

void add_common_flags(CLI::App* cmd, Options& opt) {
  cmd->add_option("--corpus", opt.corpus, "Corpus JSONL file");
  cmd->add_option("--kb", opt.kb, "KB triples JSONL file");
  cmd->add_option("--entity-map", opt.entity_map, "Entity->article JSONL file");
  cmd->add_option("--aliases", opt.aliases, "Alias JSONL file");
  cmd->add_option("--index-dir", opt.index_dir,
                  "Artifact snapshot directory (preferred over raw files "
                  "when it exists)");
  cmd->add_option("--k-tfidf", opt.retriever.k_tfidf, "TF-IDF seed articles");
  cmd->add_option("--k-bm25", opt.retriever.k_bm25,
                  "Supporting passages per expansion");
  cmd->add_option("--m-ret", opt.retriever.m_ret, "Expansion iterations");
  cmd->add_option("--n-max", opt.retriever.n_max, "Passage budget");
  cmd->add_option("--n-inference", opt.n_inference,
                  "Passage budget for answer/serve");
  cmd->add_option("--edge-filter", opt.edge_filter,
                  "cross+inner|cross-doc|inner-doc|empty|fully-connected");
  cmd->add_option("--hidden", opt.hidden, "Hidden width h");
  cmd->add_option("--seq-len", opt.seq_len, "Encoded sequence length");
  cmd->add_option("--vhash", opt.v_hash, "Hashed vocabulary size");
  cmd->add_option("--fusion", opt.fusion, "binary|relation");
  cmd->add_option("--layers", opt.layers, "Fusion layers M");
  cmd->add_option("--dropout", opt.dropout, "Fusion dropout (training)");
  cmd->add_option("--head", opt.head, "graph|parreader|parreader_pp");
  cmd->add_option("--sampling", opt.sampling, "uniform|subgraph");
  cmd->add_option("--seed", opt.seed, "Random seed");
  cmd->add_option("--steps", opt.steps, "Training steps");
  cmd->add_option("--lr", opt.learning_rate, "Learning rate");
  cmd->add_option("--sample-cap", opt.sample_cap,
                  "Passages per training instance");
}

void print_config(const Options& opt, const std::string& command) {
  std::cout << "config command=" << command << " k_tfidf="
            << opt.retriever.k_tfidf << " k_bm25=" << opt.retriever.k_bm25
            << " m_ret=" << opt.retriever.m_ret
            << " n_max=" << opt.retriever.n_max
            << " n_inference=" << opt.n_inference
            << " edge_filter=" << opt.edge_filter << " fusion=" << opt.fusion
            << " layers=" << opt.layers << " head=" << opt.head
            << " hidden=" << opt.hidden << " seq_len=" << opt.seq_len
            << " vhash=" << opt.v_hash << " dropout=" << opt.dropout
            << " sampling=" << opt.sampling << " steps=" << opt.steps
            << " lr=" << opt.learning_rate << " sample_cap=" << opt.sample_cap
            << " seed=" << opt.seed << "\n";
}

RetrieverConfig resolved_retriever(const Options& opt, bool inference) {
  RetrieverConfig config = opt.retriever;
  if (inference) config.n_max = opt.n_inference;
  const auto filter = parse_edge_filter(opt.edge_filter);
  if (!filter.has_value()) {
    throw std::runtime_error("unknown edge filter '" + opt.edge_filter + "'");
  }
  config.edge_filter = *filter;
  return config;
}

FusionConfig resolved_fusion(const Options& opt) {
  FusionConfig config;
  const auto mode = parse_fusion_mode(opt.fusion);
  if (!mode.has_value()) {
    throw std::runtime_error("unknown fusion mode '" + opt.fusion + "'");
  }
  config.mode = *mode;
  config.layers = opt.layers;
  config.dropout = opt.dropout;
  return config;
}

SelectionHead resolved_head(const Options& opt) {
  const auto head = parse_selection_head(opt.head);
  if (!head.has_value()) {
    throw std::runtime_error("unknown selection head '" + opt.head + "'");
  }
  return *head;
}

SamplingMode resolved_sampling(const Options& opt) {
  const auto mode = parse_sampling_mode(opt.sampling);
  if (!mode.has_value()) {
    throw std::runtime_error("unknown sampling mode '" + opt.sampling + "'");
  }
  return *mode;
}

Artifacts load_or_build(const Options& opt) {
  if (!opt.index_dir.empty()) {
    const auto dir = resolve_data_path(opt.index_dir);
    if (std::filesystem::exists(dir / "corpus.json")) {
      return load_artifacts(dir);
    }
  }
  return build_artifacts(resolve_data_path(opt.corpus),
                         resolve_data_path(opt.kb),
                         resolve_data_path(opt.entity_map),
                         resolve_data_path(opt.aliases));
}

// Questions come from --question or the dataset file; `answers` may be empty.
std::vector<QAExample> gather_questions(const Options& opt) {
  if (!opt.question.empty()) {
    return {QAExample{opt.question, {}}};
  }
  if (opt.dataset.empty()) {
    throw std::runtime_error("need --dataset or --question");
  }
  return load_dataset(resolve_data_path(opt.dataset));
}

// Output sink: --out file or stdout.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

int cmd_ingest(const Options& opt) {
  print_config(opt, "ingest");
  const Artifacts artifacts = load_or_build(opt);
  std::cout << "articles " << artifacts.corpus.articles().size() << "\n"
            << "passages " << artifacts.corpus.passages().size() << "\n"
            << "triples " << artifacts.kb.triples().size() << "\n"
            << "entities " << artifacts.kb.entity_to_article().size() << "\n"
            << "relations " << artifacts.vocab.assigned_size() << "\n"
            << "aliases " << artifacts.aliases.size() << "\n";
  return 0;
}

int cmd_index(const Options& opt) {
  print_config(opt, "index");
  if (opt.index_dir.empty()) {
    throw std::runtime_error("index needs --index-dir");
  }
  const Artifacts artifacts = build_artifacts(
      resolve_data_path(opt.corpus), resolve_data_path(opt.kb),
      resolve_data_path(opt.entity_map), resolve_data_path(opt.aliases));
  save_artifacts(artifacts, opt.index_dir);
  std::cout << "indexed " << artifacts.corpus.articles().size()
            << " articles into " << opt.index_dir << "\n";
  return 0;
}

int cmd_retrieve(const Options& opt) {
  print_config(opt, "retrieve");
  const Artifacts artifacts = load_or_build(opt);
  const RetrieverConfig config = resolved_retriever(opt, false);
  Sink sink(opt.out);
  for (const QAExample& example : gather_questions(opt)) {
    const PassageGraph graph =
        retrieve_graph(example.question, artifacts.corpus, artifacts.kb,
                       artifacts.vocab, artifacts.indexes(), config);
    sink.stream() << graph_to_json(example.question, graph, artifacts.vocab)
                  << "\n";
  }
  return 0;
}

int cmd_answer(const Options& opt) {
  print_config(opt, "answer");
  const Artifacts artifacts = load_or_build(opt);
  const ReaderParams params = load_params(resolve_data_path(opt.params_path));
  const RetrieverConfig config = resolved_retriever(opt, true);
  const FusionConfig fusion = resolved_fusion(opt);
  const SelectionHead head = resolved_head(opt);
  Sink sink(opt.out);
  for (const QAExample& example : gather_questions(opt)) {
    const AnswerRecord record = answer_question(
        example.question, artifacts, params, config, fusion, head);
    sink.stream() << answer_record_json(record) << "\n";
  }
  return 0;
}

int cmd_train(const Options& opt) {
  print_config(opt, "train");
  const Artifacts artifacts = load_or_build(opt);
  if (opt.dataset.empty()) throw std::runtime_error("train needs --dataset");
  const std::vector<QAExample> dataset =
      load_dataset(resolve_data_path(opt.dataset));
  const RetrieverConfig retriever = resolved_retriever(opt, false);
  const FusionConfig fusion = resolved_fusion(opt);
  const SelectionHead head = resolved_head(opt);

  ReaderDims dims;
  dims.h = opt.hidden;
  dims.max_seq = opt.seq_len;
  dims.v_hash = opt.v_hash;
  TrainConfig config;
  config.learning_rate = opt.learning_rate;
  config.steps = opt.steps;
  config.sample_cap = opt.sample_cap;
  config.sampling = resolved_sampling(opt);
  config.seed = opt.seed;

  const std::vector<TrainingInstance> instances = prepare_training_instances(
      dataset, artifacts, retriever, dims.max_seq);
  const TrainResult result =
      train(instances, dims, fusion, head,
            relation_vocab_fingerprint(artifacts.vocab), config);
  save_params(result.params, opt.params_path);
  if (!opt.trace.empty()) {
    std::ofstream trace(opt.trace);
    if (!trace) throw std::runtime_error("cannot write " + opt.trace);
    for (const auto& [step, loss] : result.loss_trace) {
      trace << step << " " << loss << "\n";
    }
  }
  double final_loss = 0.0;
  if (!result.loss_trace.empty()) final_loss = result.loss_trace.back().second;
  std::cout << "trained " << result.loss_trace.size() << " steps, skipped "
            << result.skipped << ", final loss " << final_loss << ", params "
            << opt.params_path << "\n";
  return 0;
}

int cmd_eval(const Options& opt) {
  print_config(opt, "eval");
  if (opt.dataset.empty() || opt.predictions.empty()) {
    throw std::runtime_error("eval needs --dataset and --predictions");
  }
  const std::vector<QAExample> dataset =
      load_dataset(resolve_data_path(opt.dataset));

  // Predictions are answer records, matched to gold examples by question.
  std::map<std::string, std::string> predicted;
  std::ifstream in(resolve_data_path(opt.predictions));
  if (!in) throw std::runtime_error("cannot read " + opt.predictions);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("question") ||
        !obj.contains("answer")) {
      throw std::runtime_error("malformed answer record at line " +
                               std::to_string(line_no));
    }
    predicted[obj["question"].get<std::string>()] =
        obj["answer"].get<std::string>();
  }

  std::size_t matches = 0;
  for (const QAExample& example : dataset) {
    const auto it = predicted.find(example.question);
    if (it == predicted.end()) continue;
    if (exact_match(it->second, example.answers)) ++matches;
  }
  const double em = dataset.empty()
                        ? 0.0
                        : 100.0 * static_cast<double>(matches) /
                              static_cast<double>(dataset.size());
  std::printf("EM: %.1f\n", em);
  return 0;
}

int cmd_serve(const Options& opt) {
  print_config(opt, "serve");
  const Artifacts artifacts = load_or_build(opt);
  const ReaderParams params = load_params(resolve_data_path(opt.params_path));
  const RetrieverConfig retrieve_config = resolved_retriever(opt, false);
  const RetrieverConfig answer_config = resolved_retriever(opt, true);
  const FusionConfig fusion = resolved_fusion(opt);
  const SelectionHead head = resolved_head(opt);

  httplib::Server server;
  auto parse_question = [](const httplib::Request& req,
                           std::string& question) {
    nlohmann::json obj = nlohmann::json::parse(req.body, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("question") ||
        !obj["question"].is_string()) {
      return false;
    }
    question = obj["question"].get<std::string>();
    return true;
  };
  server.Post("/retrieve", [&](const httplib::Request& req,
                               httplib::Response& res) {
    std::string question;
    if (!parse_question(req, question)) {
      res.status = 400;
      res.set_content("{\"error\":\"body must be {\\\"question\\\"}\"}",
                      "application/json");
      return;
    }
    const PassageGraph graph =
        retrieve_graph(question, artifacts.corpus, artifacts.kb,
                       artifacts.vocab, artifacts.indexes(), retrieve_config);
    res.set_content(graph_to_json(question, graph, artifacts.vocab),
                    "application/json");
  });
  server.Post("/answer", [&](const httplib::Request& req,
                             httplib::Response& res) {
    std::string question;
    if (!parse_question(req, question)) {
      res.status = 400;
      res.set_content("{\"error\":\"body must be {\\\"question\\\"}\"}",
                      "application/json");
      return;
    }
    const AnswerRecord record = answer_question(question, artifacts, params,
                                                answer_config, fusion, head);
    res.set_content(answer_record_json(record), "application/json");
  });

  std::cout << "serving on " << opt.host << ":" << opt.port << "\n";
  if (!server.listen(opt.host, opt.port)) {
    std::cerr << "cannot bind " << opt.host << ":" << opt.port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-guided passage-graph question answering"};
  app.require_subcommand(1);
  Options opt;

  CLI::App* ingest = app.add_subcommand("ingest", "Validate inputs and print stats");
  CLI::App* index = app.add_subcommand("index", "Build and save artifacts");
  CLI::App* retrieve = app.add_subcommand("retrieve", "Write passage-graph dumps");
  CLI::App* answer = app.add_subcommand("answer", "Write answer records");
  CLI::App* train = app.add_subcommand("train", "Train reader parameters");
  CLI::App* eval = app.add_subcommand("eval", "Score predictions against golds");
  CLI::App* serve = app.add_subcommand("serve", "HTTP service");

  for (CLI::App* cmd : {ingest, index, retrieve, answer, train, eval, serve}) {
    add_common_flags(cmd, opt);
  }
  for (CLI::App* cmd : {retrieve, answer}) {
    cmd->add_option("--question", opt.question, "Single question");
    cmd->add_option("--out", opt.out, "Output file (default stdout)");
  }
  for (CLI::App* cmd : {retrieve, answer, train, eval}) {
    cmd->add_option("--dataset", opt.dataset, "Question JSONL file");
  }
  for (CLI::App* cmd : {answer, train, serve}) {
    cmd->add_option("--params", opt.params_path, "Params snapshot path");
  }
  train->add_option("--trace", opt.trace, "Loss trace output file");
  eval->add_option("--predictions", opt.predictions, "Answer records file");
  serve->add_option("--host", opt.host, "Bind address");
  serve->add_option("--port", opt.port, "Bind port");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return cmd_ingest(opt);
    if (index->parsed()) return cmd_index(opt);
    if (retrieve->parsed()) return cmd_retrieve(opt);
    if (answer->parsed()) return cmd_answer(opt);
    if (train->parsed()) return cmd_train(opt);
    if (eval->parsed()) return cmd_eval(opt);
    if (serve->parsed()) return cmd_serve(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
