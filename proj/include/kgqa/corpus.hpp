#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/text.hpp"

namespace kgqa {

struct Article {
  std::string article_id;
  std::string title;
  std::optional<std::string> entity_id;  // set when the article describes a KB entity
  std::string raw_text;
};

// A contiguous chunk of an article's text, at most kMaxPassageTokens tokens.
struct Passage {
  std::string passage_id;  // "<article_id>#<position>"
  std::string article_id;
  std::size_t position = 0;  // 0 = first passage of the article
  std::vector<std::string> tokens;
};

inline constexpr std::size_t kMaxPassageTokens = 300;

// Splits raw article text into passages. Paragraphs are delimited by blank
// lines; consecutive paragraphs are merged greedily while the merged token
// count stays within max_tokens, and a single oversized paragraph is
// hard-split into max_tokens-sized chunks. Concatenating the returned token
// lists reproduces tokenize(raw_text) exactly.
std::vector<std::vector<std::string>> split_passages(
    std::string_view raw_text, std::size_t max_tokens = kMaxPassageTokens);

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Article> articles);

  const std::vector<Article>& articles() const { return articles_; }
  const std::vector<Passage>& passages() const { return passages_; }

  const Article* find_article(std::string_view article_id) const;
  const Passage* find_passage(std::string_view passage_id) const;
  // First passage (position 0) of an article; nullptr when the article has no
  // text and therefore no passages.
  const Passage* first_passage(std::string_view article_id) const;
  // All passages of one article, ordered by position.
  std::vector<const Passage*> article_passages(std::string_view article_id) const;

 private:
  std::vector<Article> articles_;
  std::vector<Passage> passages_;
  std::map<std::string, std::size_t, std::less<>> article_by_id_;
  std::map<std::string, std::size_t, std::less<>> passage_by_id_;
  std::map<std::string, std::pair<std::size_t, std::size_t>, std::less<>>
      passage_range_;  // article_id -> [first, last) into passages_
};

// Loads a line-delimited JSON corpus file; each line is
// {"id": ..., "title": ..., "entity_id"?: ..., "text": ...}.
// Malformed lines and duplicate article ids raise std::runtime_error naming
// the offending line.
Corpus load_corpus(const std::filesystem::path& path);

struct Triple {
  std::string subject;   // entity id
  std::string relation;  // relation name
  std::string object;    // entity id

  auto operator<=>(const Triple&) const = default;
};

class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  // Triples are deduplicated and kept sorted by (subject, relation, object)
  // so that iteration order is deterministic.
  KnowledgeBase(std::vector<Triple> triples,
                std::map<std::string, std::string> entity_to_article);

  const std::vector<Triple>& triples() const { return triples_; }
  const std::map<std::string, std::string>& entity_to_article() const {
    return entity_to_article_;
  }

  const std::string* article_of(std::string_view entity_id) const;
  // Triples whose subject is entity_id, ordered by (relation, object).
  std::span<const Triple> triples_from(std::string_view entity_id) const;

 private:
  std::vector<Triple> triples_;
  std::map<std::string, std::string> entity_to_article_;
};

// Loads {"e1","relation","e2"} triples and {"entity_id","article_id"} map
// lines. Every mapped article must exist in the corpus, and an article's own
// entity_id (when present) must agree with the map.
KnowledgeBase load_kb(const std::filesystem::path& triples_path,
                      const std::filesystem::path& entity_map_path,
                      const Corpus& corpus);

// Relation vocabulary of exactly 100 indices: 0..3 are reserved and the most
// frequent KB relations fill 4..99 (frequency desc, then name asc). Rarer
// relations all map to the unknown index. The index domain is fixed at 100
// regardless of how many entries are actually present.
class RelationVocab {
 public:
  static constexpr int kNoRelation = 0;
  static constexpr int kUnkRelation = 1;
  static constexpr int kChild = 2;
  static constexpr int kParent = 3;
  static constexpr int kIndexSize = 100;
  static constexpr int kFirstKbIndex = 4;

  RelationVocab();

  // Total lookup: reserved names and ranked KB relations resolve to their
  // index, anything else to kUnkRelation.
  int lookup(std::string_view relation) const;
  // Name for an index in [0, 100); indices with no assigned relation report
  // "unk_relation". Out-of-range indices raise std::out_of_range.
  const std::string& name_of(int index) const;
  bool is_kb_relation(int index) const {
    return index >= kFirstKbIndex && index < next_index_;
  }
  // Number of occupied indices (4 reserved + ranked KB relations).
  int assigned_size() const { return next_index_; }
  // How often a relation name occurred in the KB the vocab was built from.
  // Used to break ties when several relations compete for one edge slot.
  std::size_t frequency(std::string_view relation) const;

  const std::map<std::string, int>& index_map() const { return index_; }
  const std::map<std::string, std::size_t>& frequencies() const {
    return frequency_;
  }

  void assign(const std::string& relation, std::size_t frequency);

 private:
  std::map<std::string, int> index_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> frequency_;
  int next_index_ = kFirstKbIndex;
};

RelationVocab build_relation_vocab(const KnowledgeBase& kb);

// Stable fingerprint of a vocab's name->index assignment, stored in parameter
// snapshots so a model is never applied with a mismatched vocabulary.
std::uint64_t relation_vocab_fingerprint(const RelationVocab& vocab);

}  // namespace kgqa
