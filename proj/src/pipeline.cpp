#include "kgqa/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kgqa/text.hpp"

namespace kgqa {

namespace {

using nlohmann::json;

json read_snapshot(const std::filesystem::path& path, const char* magic) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) {
    throw std::runtime_error(path.string() + " is not a snapshot");
  }
  if (obj.value("magic", "") != magic) {
    throw std::runtime_error(path.string() + " has the wrong magic");
  }
  if (obj.value("version", 0) != 1) {
    throw std::runtime_error(path.string() + " has an unsupported version");
  }
  return obj;
}

void write_snapshot(const json& obj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << obj.dump() << '\n';
}

}  // namespace

Artifacts build_artifacts(const std::filesystem::path& corpus_path,
                          const std::filesystem::path& kb_path,
                          const std::filesystem::path& entity_map_path,
                          const std::filesystem::path& aliases_path) {
  Artifacts a;
  a.corpus = load_corpus(corpus_path);
  a.kb = load_kb(kb_path, entity_map_path, a.corpus);
  a.vocab = build_relation_vocab(a.kb);
  a.tfidf = build_tfidf_index(a.corpus);
  a.bm25 = build_bm25_index(a.corpus);
  a.aliases = load_alias_table(aliases_path, a.kb);
  return a;
}

void save_artifacts(const Artifacts& artifacts,
                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  json corpus_obj;
  corpus_obj["magic"] = "kgqa.corpus";
  corpus_obj["version"] = 1;
  json articles = json::array();
  for (const Article& article : artifacts.corpus.articles()) {
    json a;
    a["id"] = article.article_id;
    a["title"] = article.title;
    a["text"] = article.raw_text;
    if (article.entity_id.has_value()) a["entity_id"] = *article.entity_id;
    articles.push_back(std::move(a));
  }
  corpus_obj["articles"] = std::move(articles);
  write_snapshot(corpus_obj, dir / "corpus.json");

  json kb_obj;
  kb_obj["magic"] = "kgqa.kb";
  kb_obj["version"] = 1;
  json triples = json::array();
  for (const Triple& t : artifacts.kb.triples()) {
    triples.push_back(json::array({t.subject, t.relation, t.object}));
  }
  kb_obj["triples"] = std::move(triples);
  json entity_map = json::object();
  for (const auto& [entity, article] : artifacts.kb.entity_to_article()) {
    entity_map[entity] = article;
  }
  kb_obj["entity_map"] = std::move(entity_map);
  write_snapshot(kb_obj, dir / "kb.json");

  // Relation ranking in assignment order (frequency desc, then name) so a
  // replay of assign() reproduces the vocabulary bit for bit.
  json rel_obj;
  rel_obj["magic"] = "kgqa.relations";
  rel_obj["version"] = 1;
  std::vector<std::pair<std::string, std::size_t>> ranked(
      artifacts.vocab.frequencies().begin(),
      artifacts.vocab.frequencies().end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  json ranked_json = json::array();
  for (const auto& [name, freq] : ranked) {
    ranked_json.push_back(json::array({name, freq}));
  }
  rel_obj["ranked"] = std::move(ranked_json);
  write_snapshot(rel_obj, dir / "relations.json");

  save_tfidf_index(artifacts.tfidf, dir / "tfidf.json");
  save_bm25_index(artifacts.bm25, dir / "bm25.json");
  save_alias_table(artifacts.aliases, dir / "aliases.json");
}

Artifacts load_artifacts(const std::filesystem::path& dir) {
  Artifacts a;

  json corpus_obj = read_snapshot(dir / "corpus.json", "kgqa.corpus");
  std::vector<Article> articles;
  for (const json& entry : corpus_obj.at("articles")) {
    Article article;
    article.article_id = entry.at("id").get<std::string>();
    article.title = entry.at("title").get<std::string>();
    article.raw_text = entry.at("text").get<std::string>();
    if (entry.contains("entity_id")) {
      article.entity_id = entry.at("entity_id").get<std::string>();
    }
    articles.push_back(std::move(article));
  }
  a.corpus = Corpus(std::move(articles));

  json kb_obj = read_snapshot(dir / "kb.json", "kgqa.kb");
  std::vector<Triple> triples;
  for (const json& entry : kb_obj.at("triples")) {
    triples.push_back(Triple{entry.at(0).get<std::string>(),
                             entry.at(1).get<std::string>(),
                             entry.at(2).get<std::string>()});
  }
  std::map<std::string, std::string> entity_map;
  for (const auto& [entity, article] : kb_obj.at("entity_map").items()) {
    entity_map[entity] = article.get<std::string>();
  }
  a.kb = KnowledgeBase(std::move(triples), std::move(entity_map));

  json rel_obj = read_snapshot(dir / "relations.json", "kgqa.relations");
  for (const json& entry : rel_obj.at("ranked")) {
    a.vocab.assign(entry.at(0).get<std::string>(),
                   entry.at(1).get<std::size_t>());
  }

  a.tfidf = load_tfidf_index(dir / "tfidf.json");
  a.bm25 = load_bm25_index(dir / "bm25.json");
  a.aliases = load_alias_table_snapshot(dir / "aliases.json");
  return a;
}

std::vector<QAExample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<QAExample> dataset;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw std::runtime_error("malformed JSON at line " +
                               std::to_string(line_no));
    }
    if (!obj.contains("question") || !obj["question"].is_string()) {
      throw std::runtime_error("missing string field 'question' at line " +
                               std::to_string(line_no));
    }
    if (!obj.contains("answers") || !obj["answers"].is_array()) {
      throw std::runtime_error("missing array field 'answers' at line " +
                               std::to_string(line_no));
    }
    QAExample example;
    example.question = obj["question"].get<std::string>();
    for (const json& answer : obj["answers"]) {
      if (!answer.is_string()) {
        throw std::runtime_error("non-string answer at line " +
                                 std::to_string(line_no));
      }
      example.answers.push_back(answer.get<std::string>());
    }
    dataset.push_back(std::move(example));
  }
  return dataset;
}

std::string answer_record_json(const AnswerRecord& record) {
  json obj;
  obj["answer"] = record.answer;
  obj["p_sel"] = record.p_sel;
  obj["passage_id"] =
      record.passage_id.has_value() ? json(*record.passage_id) : json(nullptr);
  obj["question"] = record.question;
  obj["span"] = record.span.has_value()
                    ? json::array({record.span->first, record.span->second})
                    : json(nullptr);
  return obj.dump();
}

AnswerRecord answer_question(std::string_view question,
                             const Artifacts& artifacts,
                             const ReaderParams& params,
                             const RetrieverConfig& retriever,
                             const FusionConfig& fusion, SelectionHead head) {
  AnswerRecord record;
  record.question = std::string(question);
  const PassageGraph graph =
      retrieve_graph(question, artifacts.corpus, artifacts.kb, artifacts.vocab,
                     artifacts.indexes(), retriever);
  const Prediction pred = predict_answer(tokenize(question), graph, params,
                                         fusion, head);
  if (!pred.answered) return record;
  record.answer = pred.answer;
  record.passage_id = graph.passage(pred.passage_index).passage_id;
  record.span = std::make_pair(pred.span_start, pred.span_end);
  record.p_sel = pred.p_sel;
  return record;
}

std::vector<TrainingInstance> prepare_training_instances(
    const std::vector<QAExample>& dataset, const Artifacts& artifacts,
    const RetrieverConfig& retriever, std::size_t max_seq) {
  std::vector<TrainingInstance> instances;
  instances.reserve(dataset.size());
  for (const QAExample& example : dataset) {
    TrainingInstance instance;
    instance.example = example;
    instance.question_tokens = tokenize(example.question);
    instance.graph =
        retrieve_graph(example.question, artifacts.corpus, artifacts.kb,
                       artifacts.vocab, artifacts.indexes(), retriever);
    instance.labels = find_answer_spans(instance.question_tokens,
                                        instance.graph, example.answers,
                                        max_seq);
    instances.push_back(std::move(instance));
  }
  return instances;
}

std::filesystem::path resolve_data_path(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) return path;
  const char* root = std::getenv("KGQA_DATA_DIR");
  if (root != nullptr) {
    const std::filesystem::path candidate = std::filesystem::path(root) / path;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return path;
}

}  // namespace kgqa
