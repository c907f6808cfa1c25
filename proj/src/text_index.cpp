#include "kgqa/text_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace kgqa {

namespace {

using nlohmann::json;

json load_snapshot(const std::filesystem::path& path, const char* magic) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) {
    throw std::runtime_error(path.string() + ": not a JSON snapshot");
  }
  if (obj.value("magic", "") != magic) {
    throw std::runtime_error(path.string() + ": expected magic '" +
                             std::string(magic) + "'");
  }
  if (obj.value("version", 0) != 1) {
    throw std::runtime_error(path.string() + ": unsupported snapshot version");
  }
  return obj;
}

void write_snapshot(const json& obj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << obj.dump() << '\n';
}

// Query-side tf-idf weights plus the query norm. Terms are kept in a sorted
// map so every summation below runs in one fixed order.
struct QueryVector {
  std::map<std::string, double> weights;
  double norm = 0.0;
};

QueryVector build_query_vector(const ArticleIndex& index,
                               std::string_view question) {
  QueryVector q;
  std::map<std::string, std::size_t> tf;
  for (const std::string& term : unigram_bigram_terms(tokenize(question)))
    ++tf[term];
  for (const auto& [term, count] : tf) {
    q.weights[term] =
        (1.0 + std::log(static_cast<double>(count))) * index.idf(term);
  }
  double sq = 0.0;
  for (const auto& [term, w] : q.weights) sq += w * w;
  q.norm = std::sqrt(sq);
  return q;
}

double cosine_against_doc(const QueryVector& q,
                          const ArticleIndex::DocVector& doc) {
  double dot = 0.0;
  for (const auto& [term, qw] : q.weights) {
    auto it = doc.weights.find(term);
    if (it != doc.weights.end()) dot += qw * it->second;
  }
  if (dot == 0.0 || q.norm == 0.0 || doc.norm == 0.0) return 0.0;
  return dot / (q.norm * doc.norm);
}

double bm25_passage_score(const Bm25Index& index,
                          const std::vector<std::string>& passage_tokens,
                          const std::vector<std::string>& query_terms) {
  const double len = static_cast<double>(passage_tokens.size());
  double score = 0.0;
  for (const std::string& term : query_terms) {
    std::size_t tf = 0;
    for (const std::string& tok : passage_tokens)
      if (tok == term) ++tf;
    if (tf == 0) continue;
    const double tfd = static_cast<double>(tf);
    const double denom =
        tfd + Bm25Index::kK1 *
                  (1.0 - Bm25Index::kB + Bm25Index::kB * len / index.avgdl);
    score += index.idf(term) * tfd * (Bm25Index::kK1 + 1.0) / denom;
  }
  return score;
}

}  // namespace

std::vector<std::string> unigram_bigram_terms(
    const std::vector<std::string>& tokens) {
  std::vector<std::string> terms;
  terms.reserve(tokens.size() * 2);
  for (const std::string& t : tokens) terms.push_back(t);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
    terms.push_back(tokens[i] + " " + tokens[i + 1]);
  return terms;
}

double ArticleIndex::idf(std::string_view term) const {
  auto it = df_.find(std::string(term));
  const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((static_cast<double>(docs_.size()) + 1.0) / (df + 1.0));
}

ArticleIndex build_tfidf_index(const Corpus& corpus) {
  if (corpus.articles().empty()) {
    throw std::runtime_error("cannot build tf-idf index over an empty corpus");
  }
  ArticleIndex index;
  std::vector<std::map<std::string, std::size_t>> tfs;
  tfs.reserve(corpus.articles().size());
  for (const Article& article : corpus.articles()) {
    std::vector<std::string> tokens = tokenize(article.title);
    std::vector<std::string> text_tokens = tokenize(article.raw_text);
    tokens.insert(tokens.end(), text_tokens.begin(), text_tokens.end());
    std::map<std::string, std::size_t> tf;
    for (const std::string& term : unigram_bigram_terms(tokens)) ++tf[term];
    for (const auto& [term, count] : tf) ++index.df_[term];
    tfs.push_back(std::move(tf));
  }
  // All slots exist before any idf() call so the document count is final.
  index.docs_.resize(corpus.articles().size());
  for (std::size_t a = 0; a < corpus.articles().size(); ++a) {
    ArticleIndex::DocVector& doc = index.docs_[a];
    doc.article_id = corpus.articles()[a].article_id;
    double sq = 0.0;
    for (const auto& [term, count] : tfs[a]) {
      const double w =
          (1.0 + std::log(static_cast<double>(count))) * index.idf(term);
      doc.weights[term] = w;
      sq += w * w;
    }
    doc.norm = std::sqrt(sq);
  }
  return index;
}

std::vector<double> tfidf_scores(const ArticleIndex& index,
                                 std::string_view question) {
  const QueryVector q = build_query_vector(index, question);
  const auto& docs = index.docs();
  std::vector<double> scores(docs.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(docs.size()); ++i) {
    scores[i] = cosine_against_doc(q, docs[i]);
  }
  return scores;
}

std::vector<double> tfidf_scores_serial(const ArticleIndex& index,
                                        std::string_view question) {
  const QueryVector q = build_query_vector(index, question);
  const auto& docs = index.docs();
  std::vector<double> scores(docs.size(), 0.0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    scores[i] = cosine_against_doc(q, docs[i]);
  }
  return scores;
}

std::vector<std::string> tfidf_top_k(const ArticleIndex& index,
                                     std::string_view question,
                                     std::size_t k) {
  const std::vector<double> scores = tfidf_scores(index, question);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > 0.0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.docs()[a].article_id < index.docs()[b].article_id;
  });
  if (order.size() > k) order.resize(k);
  std::vector<std::string> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(index.docs()[i].article_id);
  return out;
}

double Bm25Index::idf(std::string_view term) const {
  auto it = df.find(std::string(term));
  const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
  const double n = static_cast<double>(passage_count);
  return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

Bm25Index build_bm25_index(const Corpus& corpus) {
  Bm25Index index;
  index.passage_count = corpus.passages().size();
  std::size_t total_len = 0;
  for (const Passage& p : corpus.passages()) {
    total_len += p.tokens.size();
    std::map<std::string, bool> seen;
    for (const std::string& tok : p.tokens) {
      if (seen.emplace(tok, true).second) ++index.df[tok];
    }
  }
  index.avgdl = index.passage_count == 0
                    ? 0.0
                    : static_cast<double>(total_len) /
                          static_cast<double>(index.passage_count);
  return index;
}

std::vector<std::string> distinct_query_terms(std::string_view question) {
  std::vector<std::string> terms;
  for (std::string& tok : tokenize(question)) {
    if (std::find(terms.begin(), terms.end(), tok) == terms.end())
      terms.push_back(std::move(tok));
  }
  return terms;
}

double bm25_score(const Bm25Index& index,
                  const std::vector<std::string>& passage_tokens,
                  const std::vector<std::string>& query_terms) {
  return bm25_passage_score(index, passage_tokens, query_terms);
}

std::vector<double> bm25_scores(const Bm25Index& index,
                                const std::vector<const Passage*>& candidates,
                                std::string_view question) {
  const std::vector<std::string> terms = distinct_query_terms(question);
  std::vector<double> scores(candidates.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(candidates.size()); ++i) {
    scores[i] = bm25_passage_score(index, candidates[i]->tokens, terms);
  }
  return scores;
}

std::vector<double> bm25_scores_serial(
    const Bm25Index& index, const std::vector<const Passage*>& candidates,
    std::string_view question) {
  const std::vector<std::string> terms = distinct_query_terms(question);
  std::vector<double> scores(candidates.size(), 0.0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores[i] = bm25_passage_score(index, candidates[i]->tokens, terms);
  }
  return scores;
}

std::vector<const Passage*> bm25_rank(
    const Bm25Index& index, const std::vector<const Passage*>& candidates,
    std::string_view question, std::size_t k) {
  const std::vector<double> scores = bm25_scores(index, candidates, question);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (scores[i] > 0.0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a]->passage_id < candidates[b]->passage_id;
  });
  if (order.size() > k) order.resize(k);
  std::vector<const Passage*> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(candidates[i]);
  return out;
}

void AliasTable::add(std::string_view surface, const std::string& entity_id) {
  std::vector<std::string> tokens = tokenize(surface);
  if (tokens.empty()) return;
  std::string key = detokenize(tokens);
  auto& list = alias_[key];
  auto it = std::lower_bound(list.begin(), list.end(), entity_id);
  if (it == list.end() || *it != entity_id) list.insert(it, entity_id);
  max_alias_tokens_ = std::max(max_alias_tokens_, tokens.size());
}

const std::vector<std::string>* AliasTable::entities(
    std::string_view normalized) const {
  auto it = alias_.find(std::string(normalized));
  return it == alias_.end() ? nullptr : &it->second;
}

AliasTable load_alias_table(const std::filesystem::path& path,
                            const KnowledgeBase& kb) {
  AliasTable table;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\v\f\r") == std::string::npos) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw std::runtime_error(path.string() + ": malformed JSON at line " +
                               std::to_string(line_no));
    }
    auto surface_it = obj.find("surface");
    auto entity_it = obj.find("entity_id");
    if (surface_it == obj.end() || !surface_it->is_string() ||
        entity_it == obj.end() || !entity_it->is_string()) {
      throw std::runtime_error(path.string() +
                               ": alias lines need string 'surface' and "
                               "'entity_id' (line " +
                               std::to_string(line_no) + ")");
    }
    const std::string entity = entity_it->get<std::string>();
    if (kb.article_of(entity) == nullptr) {
      throw std::runtime_error(path.string() + ": alias entity " + entity +
                               " has no article mapping (line " +
                               std::to_string(line_no) + ")");
    }
    table.add(surface_it->get<std::string>(), entity);
  }
  return table;
}

std::vector<std::string> link_entities(std::string_view question,
                                       const AliasTable& table) {
  const std::vector<std::string> tokens = tokenize(question);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t longest = std::min(table.max_alias_tokens(), tokens.size() - i);
    bool matched = false;
    for (std::size_t len = longest; len >= 1 && !matched; --len) {
      std::string key = detokenize(tokens, i, i + len);
      if (const std::vector<std::string>* entities = table.entities(key)) {
        // Entities of one mention come out sorted by id (stored sorted).
        out.insert(out.end(), entities->begin(), entities->end());
        i += len;
        matched = true;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

void save_tfidf_index(const ArticleIndex& index,
                      const std::filesystem::path& path) {
  json obj;
  obj["magic"] = "kgqa.tfidf";
  obj["version"] = 1;
  obj["df"] = index.df_;
  json docs = json::array();
  for (const auto& doc : index.docs_) {
    json d;
    d["article_id"] = doc.article_id;
    d["norm"] = doc.norm;
    d["weights"] = doc.weights;
    docs.push_back(std::move(d));
  }
  obj["docs"] = std::move(docs);
  write_snapshot(obj, path);
}

ArticleIndex load_tfidf_index(const std::filesystem::path& path) {
  json obj = load_snapshot(path, "kgqa.tfidf");
  ArticleIndex index;
  index.df_ = obj.at("df").get<std::map<std::string, std::size_t>>();
  for (const json& d : obj.at("docs")) {
    ArticleIndex::DocVector doc;
    doc.article_id = d.at("article_id").get<std::string>();
    doc.norm = d.at("norm").get<double>();
    doc.weights = d.at("weights").get<std::map<std::string, double>>();
    index.docs_.push_back(std::move(doc));
  }
  return index;
}

void save_bm25_index(const Bm25Index& index,
                     const std::filesystem::path& path) {
  json obj;
  obj["magic"] = "kgqa.bm25";
  obj["version"] = 1;
  obj["passage_count"] = index.passage_count;
  obj["avgdl"] = index.avgdl;
  obj["df"] = index.df;
  write_snapshot(obj, path);
}

Bm25Index load_bm25_index(const std::filesystem::path& path) {
  json obj = load_snapshot(path, "kgqa.bm25");
  Bm25Index index;
  index.passage_count = obj.at("passage_count").get<std::size_t>();
  index.avgdl = obj.at("avgdl").get<double>();
  index.df = obj.at("df").get<std::map<std::string, std::size_t>>();
  return index;
}

void save_alias_table(const AliasTable& table,
                      const std::filesystem::path& path) {
  json obj;
  obj["magic"] = "kgqa.aliases";
  obj["version"] = 1;
  obj["entries"] = table.entries();
  write_snapshot(obj, path);
}

AliasTable load_alias_table_snapshot(const std::filesystem::path& path) {
  json obj = load_snapshot(path, "kgqa.aliases");
  AliasTable table;
  for (const auto& [key, entities] :
       obj.at("entries").get<std::map<std::string, std::vector<std::string>>>()) {
    for (const std::string& entity : entities) table.add(key, entity);
  }
  return table;
}

}  // namespace kgqa
