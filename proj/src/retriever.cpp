#include "kgqa/retriever.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace kgqa {

std::string_view edge_filter_name(EdgeFilter filter) {
  switch (filter) {
    case EdgeFilter::kCrossInner: return "cross+inner";
    case EdgeFilter::kCrossDoc: return "cross-doc";
    case EdgeFilter::kInnerDoc: return "inner-doc";
    case EdgeFilter::kEmpty: return "empty";
    case EdgeFilter::kFullyConnected: return "fully-connected";
  }
  return "cross+inner";
}

std::optional<EdgeFilter> parse_edge_filter(std::string_view name) {
  if (name == "cross+inner") return EdgeFilter::kCrossInner;
  if (name == "cross-doc") return EdgeFilter::kCrossDoc;
  if (name == "inner-doc") return EdgeFilter::kInnerDoc;
  if (name == "empty") return EdgeFilter::kEmpty;
  if (name == "fully-connected") return EdgeFilter::kFullyConnected;
  return std::nullopt;
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kSeedEntity: return "seed-entity";
    case Provenance::kSeedTfidf: return "seed-tfidf";
    case Provenance::kKbExpansion: return "kb-expansion";
    case Provenance::kBm25Support: return "bm25-support";
  }
  return "seed-entity";
}

std::optional<std::size_t> PassageGraph::index_of(
    std::string_view passage_id) const {
  auto it = index_.find(passage_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t PassageGraph::add_passage(GraphPassage passage) {
  const std::size_t old_n = passages_.size();
  const std::size_t new_n = old_n + 1;
  // Grow the dense matrix in place: old rows gain one trailing slot.
  std::vector<std::uint8_t> grown(new_n * new_n, 0);
  for (std::size_t i = 0; i < old_n; ++i) {
    for (std::size_t j = 0; j < old_n; ++j) {
      grown[i * new_n + j] = relations_[i * old_n + j];
    }
  }
  relations_ = std::move(grown);
  index_.emplace(passage.passage_id, old_n);
  passages_.push_back(std::move(passage));
  return old_n;
}

PassageGraph PassageGraph::from_passages(std::vector<GraphPassage> passages) {
  PassageGraph graph;
  graph.passages_ = std::move(passages);
  graph.relations_.assign(graph.passages_.size() * graph.passages_.size(), 0);
  for (std::size_t i = 0; i < graph.passages_.size(); ++i) {
    graph.index_.emplace(graph.passages_[i].passage_id, i);
  }
  return graph;
}

namespace {

GraphPassage make_graph_passage(const Corpus& corpus, const Passage& passage,
                                Provenance provenance) {
  GraphPassage gp;
  gp.passage_id = passage.passage_id;
  gp.article_id = passage.article_id;
  gp.position = passage.position;
  gp.tokens = passage.tokens;
  gp.provenance = provenance;
  if (const Article* article = corpus.find_article(passage.article_id)) {
    gp.title = article->title;
    gp.entity_id = article->entity_id;
  }
  return gp;
}

}  // namespace

std::vector<GraphPassage> seed_passages(std::string_view question,
                                        const Corpus& corpus,
                                        const KnowledgeBase& kb,
                                        const Indexes& indexes,
                                        const RetrieverConfig& config) {
  std::vector<GraphPassage> seeds;
  std::vector<std::string> seen_ids;
  auto already_seeded = [&](const std::string& passage_id) {
    return std::find(seen_ids.begin(), seen_ids.end(), passage_id) !=
           seen_ids.end();
  };
  auto push = [&](const Passage& passage, Provenance provenance) {
    if (seeds.size() >= config.n_max) return;
    if (already_seeded(passage.passage_id)) return;
    seen_ids.push_back(passage.passage_id);
    seeds.push_back(make_graph_passage(corpus, passage, provenance));
  };

  // Entity-linked articles first, in mention order.
  for (const std::string& entity :
       link_entities(question, *indexes.aliases)) {
    const std::string* article = kb.article_of(entity);
    if (article == nullptr) continue;
    if (const Passage* first = corpus.first_passage(*article)) {
      push(*first, Provenance::kSeedEntity);
    }
  }
  // Then the text-match seeds.
  for (const std::string& article :
       tfidf_top_k(*indexes.tfidf, question, config.k_tfidf)) {
    if (const Passage* first = corpus.first_passage(article)) {
      push(*first, Provenance::kSeedTfidf);
    }
  }
  return seeds;
}

GraphBuilder::GraphBuilder(const Corpus& corpus, const KnowledgeBase& kb,
                           const RelationVocab& vocab, std::size_t n_max)
    : corpus_(corpus), kb_(kb), vocab_(vocab), n_max_(n_max) {}

void GraphBuilder::add_seeds(std::vector<GraphPassage> seeds) {
  for (GraphPassage& seed : seeds) graph_.add_passage(std::move(seed));
}

void GraphBuilder::claim_kb_edge(std::size_t i, std::size_t j,
                                 const std::string& relation) {
  if (i == j) return;  // the diagonal stays no_relation
  auto key = std::make_pair(i, j);
  auto it = claims_.find(key);
  if (it == claims_.end()) {
    claims_[key] = {true, relation};
    graph_.set_relation(i, j, static_cast<std::uint8_t>(vocab_.lookup(relation)));
    return;
  }
  if (!it->second.is_kb) {
    // A KB relation displaces a child/parent pair; drop the mirrored edge too
    // so reciprocity holds.
    auto mirror = claims_.find(std::make_pair(j, i));
    if (mirror != claims_.end() && !mirror->second.is_kb) {
      claims_.erase(mirror);
      graph_.set_relation(j, i, RelationVocab::kNoRelation);
    }
    it->second = {true, relation};
    graph_.set_relation(i, j, static_cast<std::uint8_t>(vocab_.lookup(relation)));
    return;
  }
  // Two KB relations compete: higher corpus frequency wins, ties go to the
  // lexicographically smaller name.
  const std::size_t freq_new = vocab_.frequency(relation);
  const std::size_t freq_old = vocab_.frequency(it->second.relation);
  const bool wins = freq_new > freq_old ||
                    (freq_new == freq_old && relation < it->second.relation);
  if (wins) {
    it->second.relation = relation;
    graph_.set_relation(i, j, static_cast<std::uint8_t>(vocab_.lookup(relation)));
  }
}

void GraphBuilder::claim_child_parent(std::size_t first, std::size_t other) {
  if (first == other) return;
  auto forward = claims_.find(std::make_pair(first, other));
  auto backward = claims_.find(std::make_pair(other, first));
  // A KB relation on either direction outranks the structural edge, and an
  // existing structural pair never needs re-recording.
  if (forward != claims_.end() || backward != claims_.end()) return;
  claims_[std::make_pair(first, other)] = {false, ""};
  claims_[std::make_pair(other, first)] = {false, ""};
  graph_.set_relation(first, other, RelationVocab::kChild);
  graph_.set_relation(other, first, RelationVocab::kParent);
}

std::vector<std::size_t> GraphBuilder::expand_kb(
    const std::vector<std::size_t>& frontier) {
  std::vector<std::size_t> added;
  for (std::size_t i : frontier) {
    // Copy what we need: adding passages reallocates the passage vector.
    if (graph_.passage(i).position != 0) continue;
    if (!graph_.passage(i).entity_id.has_value()) continue;
    const std::string entity = *graph_.passage(i).entity_id;
    for (const Triple& triple : kb_.triples_from(entity)) {
      const std::string* article = kb_.article_of(triple.object);
      if (article == nullptr) continue;
      const Passage* first = corpus_.first_passage(*article);
      if (first == nullptr) continue;
      if (auto existing = graph_.index_of(first->passage_id)) {
        claim_kb_edge(i, *existing, triple.relation);
      } else if (graph_.size() < n_max_) {
        std::size_t j = graph_.add_passage(
            make_graph_passage(corpus_, *first, Provenance::kKbExpansion));
        added.push_back(j);
        claim_kb_edge(i, j, triple.relation);
      }
      // Over budget and absent: the passage (and its edge) are dropped.
    }
  }
  return added;
}

std::vector<std::size_t> GraphBuilder::expand_support(
    const std::vector<std::size_t>& frontier, std::string_view question,
    const Bm25Index& bm25, std::size_t k_bm25) {
  // Candidates: non-first passages, not yet present, of articles whose first
  // passage sits in the frontier.
  std::vector<const Passage*> pool;
  std::map<std::string, std::size_t> article_anchor;  // article -> first's index
  for (std::size_t i : frontier) {
    const GraphPassage& p = graph_.passage(i);
    if (p.position != 0) continue;
    if (!article_anchor.emplace(p.article_id, i).second) continue;
    for (const Passage* candidate : corpus_.article_passages(p.article_id)) {
      if (candidate->position == 0) continue;
      if (graph_.index_of(candidate->passage_id).has_value()) continue;
      pool.push_back(candidate);
    }
  }
  std::vector<std::size_t> added;
  for (const Passage* picked : bm25_rank(bm25, pool, question, k_bm25)) {
    if (graph_.size() >= n_max_) break;
    std::size_t j = graph_.add_passage(
        make_graph_passage(corpus_, *picked, Provenance::kBm25Support));
    added.push_back(j);
    claim_child_parent(article_anchor.at(picked->article_id), j);
  }
  return added;
}

void apply_edge_filter(PassageGraph& graph, EdgeFilter filter) {
  if (filter == EdgeFilter::kCrossInner) return;
  const std::size_t n = graph.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const std::uint8_t r = graph.relation(i, j);
      switch (filter) {
        case EdgeFilter::kEmpty:
          graph.set_relation(i, j, RelationVocab::kNoRelation);
          break;
        case EdgeFilter::kFullyConnected:
          graph.set_relation(i, j, RelationVocab::kUnkRelation);
          break;
        case EdgeFilter::kCrossDoc:
          if (r == RelationVocab::kChild || r == RelationVocab::kParent)
            graph.set_relation(i, j, RelationVocab::kNoRelation);
          break;
        case EdgeFilter::kInnerDoc:
          if (r != RelationVocab::kNoRelation && r != RelationVocab::kChild &&
              r != RelationVocab::kParent)
            graph.set_relation(i, j, RelationVocab::kNoRelation);
          break;
        case EdgeFilter::kCrossInner:
          break;
      }
    }
  }
}

PassageGraph retrieve_graph(std::string_view question, const Corpus& corpus,
                            const KnowledgeBase& kb, const RelationVocab& vocab,
                            const Indexes& indexes,
                            const RetrieverConfig& config) {
  GraphBuilder builder(corpus, kb, vocab, config.n_max);
  std::vector<GraphPassage> seeds =
      seed_passages(question, corpus, kb, indexes, config);
  builder.add_seeds(std::move(seeds));

  std::vector<std::size_t> frontier(builder.graph().size());
  for (std::size_t i = 0; i < frontier.size(); ++i) frontier[i] = i;

  for (std::size_t m = 0; m < config.m_ret && !frontier.empty(); ++m) {
    std::vector<std::size_t> added = builder.expand_kb(frontier);
    std::vector<std::size_t> support = builder.expand_support(
        frontier, question, *indexes.bm25, config.k_bm25);
    added.insert(added.end(), support.begin(), support.end());
    frontier = std::move(added);
  }

  PassageGraph graph = std::move(builder.graph());
  apply_edge_filter(graph, config.edge_filter);
  return graph;
}

std::vector<std::string> validate_graph(const PassageGraph& graph,
                                        std::size_t n_max) {
  std::vector<std::string> problems;
  const std::size_t n = graph.size();
  if (n > n_max) {
    problems.push_back("passage count " + std::to_string(n) +
                       " exceeds budget " + std::to_string(n_max));
  }
  std::map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ids.emplace(graph.passage(i).passage_id, i).second) {
      problems.push_back("duplicate passage " + graph.passage(i).passage_id);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (graph.relation(i, i) != RelationVocab::kNoRelation) {
      problems.push_back("self relation on passage " + std::to_string(i));
    }
    for (std::size_t j = 0; j < n; ++j) {
      const std::uint8_t r = graph.relation(i, j);
      const std::uint8_t back = graph.relation(j, i);
      if (r == RelationVocab::kChild && back != RelationVocab::kParent) {
        problems.push_back("child edge (" + std::to_string(i) + "," +
                           std::to_string(j) + ") lacks a parent edge back");
      }
      if (r == RelationVocab::kParent && back != RelationVocab::kChild) {
        problems.push_back("parent edge (" + std::to_string(i) + "," +
                           std::to_string(j) + ") lacks a child edge back");
      }
      if (r == RelationVocab::kChild || r == RelationVocab::kParent) {
        const GraphPassage& a = graph.passage(i);
        const GraphPassage& b = graph.passage(j);
        if (a.article_id != b.article_id) {
          problems.push_back("structural edge (" + std::to_string(i) + "," +
                             std::to_string(j) + ") spans two articles");
        }
        if ((a.position == 0) == (b.position == 0)) {
          problems.push_back("structural edge (" + std::to_string(i) + "," +
                             std::to_string(j) +
                             ") must join a first passage with a later one");
        }
      }
    }
  }
  return problems;
}

std::string graph_to_json(std::string_view question, const PassageGraph& graph,
                          const RelationVocab& vocab) {
  nlohmann::json obj;
  obj["question"] = std::string(question);
  nlohmann::json passages = nlohmann::json::array();
  for (const GraphPassage& p : graph.passages()) {
    nlohmann::json e;
    e["id"] = p.passage_id;
    e["article"] = p.article_id;
    e["position"] = p.position;
    e["provenance"] = std::string(provenance_name(p.provenance));
    e["tokens"] = p.tokens;
    passages.push_back(std::move(e));
  }
  obj["passages"] = std::move(passages);
  nlohmann::json relations = nlohmann::json::array();
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (std::size_t j = 0; j < graph.size(); ++j) {
      const std::uint8_t r = graph.relation(i, j);
      if (r == RelationVocab::kNoRelation) continue;
      nlohmann::json e;
      e["i"] = i;
      e["j"] = j;
      e["name"] = vocab.name_of(r);
      relations.push_back(std::move(e));
    }
  }
  obj["relations"] = std::move(relations);
  return obj.dump();
}

}  // namespace kgqa
