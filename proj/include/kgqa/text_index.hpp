#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/corpus.hpp"

namespace kgqa {

// TF-IDF article index over unigrams and bigrams of tokenize(title + text).
// Term weight is (1 + log tf) * log((N + 1) / (df + 1)) with natural logs;
// terms absent from the corpus keep df = 0 in that formula.
class ArticleIndex {
 public:
  struct DocVector {
    std::string article_id;
    std::map<std::string, double> weights;  // term -> tf-idf weight
    double norm = 0.0;                      // L2 norm of weights
  };

  std::size_t doc_count() const { return docs_.size(); }
  const std::vector<DocVector>& docs() const { return docs_; }
  const std::map<std::string, std::size_t>& df() const { return df_; }
  double idf(std::string_view term) const;

  friend ArticleIndex build_tfidf_index(const Corpus& corpus);
  friend void save_tfidf_index(const ArticleIndex&,
                               const std::filesystem::path&);
  friend ArticleIndex load_tfidf_index(const std::filesystem::path&);

 private:
  std::vector<DocVector> docs_;  // corpus article order
  std::map<std::string, std::size_t> df_;
};

// Builds the index; raises std::runtime_error on an empty corpus.
ArticleIndex build_tfidf_index(const Corpus& corpus);

// Unigram + bigram terms of a token sequence; bigrams are "a b" strings.
std::vector<std::string> unigram_bigram_terms(
    const std::vector<std::string>& tokens);

// Cosine similarity of the question against every indexed article, aligned
// with docs(). The parallel version and the serial reference compute each
// score identically, element for element.
std::vector<double> tfidf_scores(const ArticleIndex& index,
                                 std::string_view question);
std::vector<double> tfidf_scores_serial(const ArticleIndex& index,
                                        std::string_view question);

// Top-k article ids by cosine similarity; ties break toward the smaller
// article id and zero-score articles never appear.
std::vector<std::string> tfidf_top_k(const ArticleIndex& index,
                                     std::string_view question, std::size_t k);

// Okapi BM25 statistics over the corpus's passages (k1 = 1.2, b = 0.75,
// idf = log((N - df + 0.5) / (df + 0.5) + 1)).
struct Bm25Index {
  static constexpr double kK1 = 1.2;
  static constexpr double kB = 0.75;

  std::size_t passage_count = 0;
  double avgdl = 0.0;  // mean passage length in tokens
  std::map<std::string, std::size_t> df;

  double idf(std::string_view term) const;
};

Bm25Index build_bm25_index(const Corpus& corpus);

// Score of one passage for a list of distinct query terms (kept in first
// appearance order so summation order is pinned down).
double bm25_score(const Bm25Index& index,
                  const std::vector<std::string>& passage_tokens,
                  const std::vector<std::string>& query_terms);

std::vector<std::string> distinct_query_terms(std::string_view question);

// Scores for every candidate, aligned with the input order.
std::vector<double> bm25_scores(const Bm25Index& index,
                                const std::vector<const Passage*>& candidates,
                                std::string_view question);
std::vector<double> bm25_scores_serial(
    const Bm25Index& index, const std::vector<const Passage*>& candidates,
    std::string_view question);

// Top-k candidates by BM25 score; ties break toward the smaller passage id
// and zero-score candidates are dropped. Input order does not matter.
std::vector<const Passage*> bm25_rank(
    const Bm25Index& index, const std::vector<const Passage*>& candidates,
    std::string_view question, std::size_t k);

// Surface-form -> entity ids table for entity linking. Keys are normalized by
// tokenizing the surface and joining the tokens with single spaces.
class AliasTable {
 public:
  void add(std::string_view surface, const std::string& entity_id);

  const std::vector<std::string>* entities(std::string_view normalized) const;
  std::size_t max_alias_tokens() const { return max_alias_tokens_; }
  std::size_t size() const { return alias_.size(); }
  const std::map<std::string, std::vector<std::string>>& entries() const {
    return alias_;
  }

 private:
  std::map<std::string, std::vector<std::string>> alias_;
  std::size_t max_alias_tokens_ = 0;
};

// Loads {"surface","entity_id"} lines; every entity must be present in the
// KB's entity-to-article map.
AliasTable load_alias_table(const std::filesystem::path& path,
                            const KnowledgeBase& kb);

// Greedy longest-match linking over the tokenized question: at each position
// the longest alias starting there wins and the scan resumes after it, so
// shorter and overlapping matches are suppressed. Returns entity ids ordered
// by mention start, then entity id.
std::vector<std::string> link_entities(std::string_view question,
                                       const AliasTable& table);

// Versioned snapshots (JSON with a magic string and version integer).
void save_tfidf_index(const ArticleIndex& index,
                      const std::filesystem::path& path);
ArticleIndex load_tfidf_index(const std::filesystem::path& path);
void save_bm25_index(const Bm25Index& index, const std::filesystem::path& path);
Bm25Index load_bm25_index(const std::filesystem::path& path);
void save_alias_table(const AliasTable& table,
                      const std::filesystem::path& path);
AliasTable load_alias_table_snapshot(const std::filesystem::path& path);

}  // namespace kgqa
