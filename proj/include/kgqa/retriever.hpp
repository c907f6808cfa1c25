#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/corpus.hpp"
#include "kgqa/text_index.hpp"

namespace kgqa {

// Which edges survive in the final graph.
enum class EdgeFilter {
  kCrossInner,       // keep KB edges and child/parent edges (default)
  kCrossDoc,         // keep only KB edges
  kInnerDoc,         // keep only child/parent edges
  kEmpty,            // drop every edge
  kFullyConnected,   // every off-diagonal pair becomes unk_relation
};

std::string_view edge_filter_name(EdgeFilter filter);
std::optional<EdgeFilter> parse_edge_filter(std::string_view name);

struct RetrieverConfig {
  std::size_t k_tfidf = 5;   // seed articles from TF-IDF
  std::size_t k_bm25 = 40;   // supporting passages kept per expansion
  std::size_t m_ret = 2;     // expansion iterations
  std::size_t n_max = 40;    // passage budget
  EdgeFilter edge_filter = EdgeFilter::kCrossInner;
};

enum class Provenance : std::uint8_t {
  kSeedEntity,
  kSeedTfidf,
  kKbExpansion,
  kBm25Support,
};

std::string_view provenance_name(Provenance p);

struct GraphPassage {
  std::string passage_id;
  std::string article_id;
  std::string title;
  std::size_t position = 0;
  std::vector<std::string> tokens;
  Provenance provenance = Provenance::kSeedEntity;
  std::optional<std::string> entity_id;  // the article's entity, when it has one
};

// Passages plus a dense n x n matrix of relation-vocab indices. relation(i, j)
// describes the directed pair (p_i, p_j); the diagonal is always no_relation.
class PassageGraph {
 public:
  std::size_t size() const { return passages_.size(); }
  const std::vector<GraphPassage>& passages() const { return passages_; }
  const GraphPassage& passage(std::size_t i) const { return passages_[i]; }

  std::uint8_t relation(std::size_t i, std::size_t j) const {
    return relations_[i * passages_.size() + j];
  }
  void set_relation(std::size_t i, std::size_t j, std::uint8_t r) {
    relations_[i * passages_.size() + j] = r;
  }
  const std::vector<std::uint8_t>& relation_matrix() const { return relations_; }

  // Index of a passage id, if present.
  std::optional<std::size_t> index_of(std::string_view passage_id) const;

  // Appends a passage, growing the relation matrix (new row/column all
  // no_relation).
  std::size_t add_passage(GraphPassage passage);

  // Builds a graph over an explicit passage list with an all-no_relation
  // matrix (used by tests and by subgraph sampling).
  static PassageGraph from_passages(std::vector<GraphPassage> passages);

 private:
  std::vector<GraphPassage> passages_;
  std::vector<std::uint8_t> relations_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Read-only bundle of the retrieval indexes.
struct Indexes {
  const ArticleIndex* tfidf = nullptr;
  const Bm25Index* bm25 = nullptr;
  const AliasTable* aliases = nullptr;
};

// Seed passages: first passages of entity-linked articles (in mention order),
// then first passages of the top-k_tfidf articles not already seeded, cut off
// at n_max.
std::vector<GraphPassage> seed_passages(std::string_view question,
                                        const Corpus& corpus,
                                        const KnowledgeBase& kb,
                                        const Indexes& indexes,
                                        const RetrieverConfig& config);

// Incremental graph construction. The builder tracks, per directed pair, which
// concrete relation currently owns the edge so that conflicts can be resolved
// (a KB relation beats child/parent; between KB relations the more frequent
// name wins, ties to the lexicographically smaller one).
class GraphBuilder {
 public:
  GraphBuilder(const Corpus& corpus, const KnowledgeBase& kb,
               const RelationVocab& vocab, std::size_t n_max);

  PassageGraph& graph() { return graph_; }
  const PassageGraph& graph() const { return graph_; }
  std::size_t n_max() const { return n_max_; }

  // Adds a seed list (already deduplicated and truncated).
  void add_seeds(std::vector<GraphPassage> seeds);

  // KB expansion over the frontier: for every frontier passage that is the
  // first passage of an entity's article, follow all triples from that entity.
  // Targets already in the graph only get the relation recorded; new targets
  // are appended while the budget allows. Candidates are visited in frontier
  // order, then relation name, then target entity id. Returns the indices of
  // newly added passages.
  std::vector<std::size_t> expand_kb(const std::vector<std::size_t>& frontier);

  // Supporting-passage expansion: BM25-ranks the not-yet-present non-first
  // passages of articles whose first passage is in the frontier, keeping the
  // top k_bm25 positive-scoring candidates, and adds them while the budget
  // allows. Each added passage is tied to its article's first passage with a
  // child/parent edge pair.
  std::vector<std::size_t> expand_support(const std::vector<std::size_t>& frontier,
                                          std::string_view question,
                                          const Bm25Index& bm25,
                                          std::size_t k_bm25);

 private:
  struct EdgeClaim {
    bool is_kb = false;
    std::string relation;  // concrete KB relation name, for tie-breaking
  };

  void claim_kb_edge(std::size_t i, std::size_t j, const std::string& relation);
  void claim_child_parent(std::size_t first, std::size_t other);

  const Corpus& corpus_;
  const KnowledgeBase& kb_;
  const RelationVocab& vocab_;
  std::size_t n_max_;
  PassageGraph graph_;
  std::map<std::pair<std::size_t, std::size_t>, EdgeClaim> claims_;
};

// Replaces relations according to the filter. Passages are untouched.
void apply_edge_filter(PassageGraph& graph, EdgeFilter filter);

// Full retrieval: seeds, then m_ret rounds of KB expansion followed by
// supporting-passage expansion (the frontier is always the previous round's
// additions), then the edge filter. Passage additions stop at n_max but
// relations between already-present passages are still recorded.
PassageGraph retrieve_graph(std::string_view question, const Corpus& corpus,
                            const KnowledgeBase& kb, const RelationVocab& vocab,
                            const Indexes& indexes,
                            const RetrieverConfig& config);

// Structural invariant check; returns human-readable problems (empty = ok).
std::vector<std::string> validate_graph(const PassageGraph& graph,
                                        std::size_t n_max);

// JSON graph dump: {"question", "passages": [{id, article, position,
// provenance, tokens}], "relations": [{i, j, name}]} with 0-based indices and
// no_relation pairs omitted, serialized with sorted keys.
std::string graph_to_json(std::string_view question, const PassageGraph& graph,
                          const RelationVocab& vocab);

}  // namespace kgqa
