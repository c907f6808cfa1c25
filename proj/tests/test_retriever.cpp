#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgqa/corpus.hpp"
#include "kgqa/retriever.hpp"
#include "support/oracle.hpp"
#include "support/world.hpp"

using namespace kgqa;
using namespace kgqa::test;

namespace {

std::set<std::string> passage_ids(const PassageGraph& graph) {
  std::set<std::string> ids;
  for (const GraphPassage& p : graph.passages()) ids.insert(p.passage_id);
  return ids;
}

GraphPassage stub_passage(std::string article, std::size_t position) {
  GraphPassage p;
  p.article_id = article;
  p.position = position;
  p.passage_id = article + "#" + std::to_string(position);
  p.title = article;
  p.tokens = {"word"};
  return p;
}

}  // namespace

TEST_CASE("passage graph growth keeps the relation matrix consistent") {
  PassageGraph graph;
  CHECK(graph.size() == 0);
  CHECK(graph.add_passage(stub_passage("A1", 0)) == 0);
  CHECK(graph.add_passage(stub_passage("A2", 0)) == 1);
  graph.set_relation(0, 1, 7);
  CHECK(graph.add_passage(stub_passage("A3", 0)) == 2);

  CHECK(graph.relation(0, 1) == 7);  // survived the matrix growth
  CHECK(graph.relation(1, 0) == 0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(graph.relation(i, 2) == 0);
    CHECK(graph.relation(2, i) == 0);
  }
  CHECK(graph.index_of("A2#0") == 1);
  CHECK(!graph.index_of("A9#0").has_value());
  CHECK(graph.relation_matrix().size() == 9);
}

TEST_CASE("seed passages are entity mentions first, then tfidf, capped") {
  std::vector<Article> articles;
  articles.push_back({"A1", "silver fox", "E1", "the silver fox den"});
  articles.push_back({"A2", "river otter", "E2", "the river otter raft"});
  articles.push_back({"A3", "granite peak", std::nullopt,
                      "granite peak trail climbs"});
  const Corpus corpus(std::move(articles));
  const KnowledgeBase kb({}, {{"E1", "A1"}, {"E2", "A2"}});
  AliasTable aliases;
  aliases.add("river otter", "E2");
  aliases.add("silver fox", "E1");
  const ArticleIndex tfidf = build_tfidf_index(corpus);
  const Bm25Index bm25 = build_bm25_index(corpus);
  const Indexes indexes{&tfidf, &bm25, &aliases};

  RetrieverConfig config;
  config.k_tfidf = 2;
  config.n_max = 10;
  // Mention order puts the otter before the fox even though E1 < E2.
  auto seeds = seed_passages("the river otter met the silver fox", corpus, kb,
                             indexes, config);
  REQUIRE(seeds.size() >= 2);
  CHECK(seeds[0].passage_id == "A2#0");
  CHECK(seeds[0].provenance == Provenance::kSeedEntity);
  CHECK(seeds[1].passage_id == "A1#0");
  // TF-IDF seeds skip articles already present.
  for (std::size_t i = 2; i < seeds.size(); ++i) {
    CHECK(seeds[i].provenance == Provenance::kSeedTfidf);
    CHECK(seeds[i].article_id != "A1");
    CHECK(seeds[i].article_id != "A2");
  }

  config.n_max = 1;
  const auto capped = seed_passages("the river otter met the silver fox",
                                    corpus, kb, indexes, config);
  REQUIRE(capped.size() == 1);
  CHECK(capped[0].passage_id == "A2#0");

  // The same entity mentioned twice seeds once.
  const auto deduped = seed_passages("silver fox silver fox", corpus, kb,
                                     indexes, config);
  std::size_t fox_count = 0;
  for (const auto& s : deduped) fox_count += s.passage_id == "A1#0";
  CHECK(fox_count == 1);
}

TEST_CASE("retrieve_graph matches the reference walker on random worlds") {
  Rng rng(201);
  for (int trial = 0; trial < 25; ++trial) {
    const World world = make_random_world(rng);
    const RetrieverConfig config = random_retriever_config(rng);
    const std::string question = random_question(rng, world);
    const PassageGraph got = retrieve_graph(question, world.corpus, world.kb,
                                            world.vocab, world.indexes(), config);
    const RefGraph want = ref_retrieve(question, world.corpus, world.kb,
                                       world.vocab, world.indexes(), config);
    const auto mismatch = graph_mismatch(got, want);
    INFO("trial ", trial, " question '", question, "' filter ",
         edge_filter_name(config.edge_filter), ": ",
         mismatch.value_or("match"));
    CHECK(!mismatch.has_value());
    CHECK(validate_graph(got, config.n_max).empty());
  }
}

TEST_CASE("edge filters keep exactly the advertised relation classes") {
  Rng rng(202);
  const World world = make_random_world(rng);
  RetrieverConfig config;
  config.k_tfidf = 4;
  config.k_bm25 = 5;
  config.m_ret = 2;
  config.n_max = 12;
  const std::string question = random_question(rng, world);

  auto run = [&](EdgeFilter filter) {
    config.edge_filter = filter;
    return retrieve_graph(question, world.corpus, world.kb, world.vocab,
                          world.indexes(), config);
  };
  const PassageGraph base = run(EdgeFilter::kCrossInner);
  const PassageGraph cross = run(EdgeFilter::kCrossDoc);
  const PassageGraph inner = run(EdgeFilter::kInnerDoc);
  const PassageGraph empty = run(EdgeFilter::kEmpty);
  const PassageGraph full = run(EdgeFilter::kFullyConnected);

  // The passage set never depends on the filter.
  CHECK(passage_ids(cross) == passage_ids(base));
  CHECK(passage_ids(full) == passage_ids(base));

  const std::size_t n = base.size();
  REQUIRE(cross.size() == n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::uint8_t r = base.relation(i, j);
      const bool structural = r == RelationVocab::kChild ||
                              r == RelationVocab::kParent;
      CHECK(cross.relation(i, j) == (structural ? 0 : r));
      CHECK(inner.relation(i, j) == (structural ? r : 0));
      CHECK(empty.relation(i, j) == 0);
      CHECK(full.relation(i, j) ==
            (i == j ? 0 : RelationVocab::kUnkRelation));
    }
  }
}

TEST_CASE("growing the budget only ever adds passages") {
  Rng rng(203);
  for (int trial = 0; trial < 10; ++trial) {
    const World world = make_random_world(rng);
    RetrieverConfig config = random_retriever_config(rng);
    const std::string question = random_question(rng, world);

    std::set<std::string> previous;
    for (std::size_t budget : {2, 5, 9, 14}) {
      config.n_max = budget;
      const PassageGraph graph = retrieve_graph(
          question, world.corpus, world.kb, world.vocab, world.indexes(), config);
      const std::set<std::string> ids = passage_ids(graph);
      CHECK(ids.size() <= budget);
      CHECK(std::includes(ids.begin(), ids.end(), previous.begin(),
                          previous.end()));
      previous = ids;
    }
  }
}

TEST_CASE("under the default filter every supporting passage keeps an edge") {
  Rng rng(204);
  for (int trial = 0; trial < 10; ++trial) {
    const World world = make_random_world(rng);
    RetrieverConfig config = random_retriever_config(rng);
    config.edge_filter = EdgeFilter::kCrossInner;
    const std::string question = random_question(rng, world);
    const PassageGraph graph = retrieve_graph(
        question, world.corpus, world.kb, world.vocab, world.indexes(), config);
    for (std::size_t i = 0; i < graph.size(); ++i) {
      if (graph.passage(i).provenance != Provenance::kBm25Support) continue;
      // A supporting passage rides in on its article's first passage, so the
      // child/parent pair must have survived.
      bool linked = false;
      for (std::size_t j = 0; j < graph.size(); ++j) {
        linked |= graph.relation(i, j) == RelationVocab::kParent;
      }
      CHECK(linked);
    }
  }
}

TEST_CASE("validate_graph reports each class of violation") {
  // A1 is long enough to split, so it contributes a first and a later passage.
  std::string long_text;
  for (int i = 0; i < 310; ++i) long_text += "alpha ";
  const Corpus corpus({{"A1", "alpha", "E1", long_text},
                       {"A2", "beta", std::nullopt, "beta body text"}});
  REQUIRE(corpus.passages().size() == 3);

  auto fresh = [&] {
    PassageGraph graph;
    for (const char* id : {"A1#0", "A1#1", "A2#0"}) {
      const Passage* p = corpus.find_passage(id);
      REQUIRE(p != nullptr);
      GraphPassage gp;
      gp.passage_id = p->passage_id;
      gp.article_id = p->article_id;
      gp.title = corpus.find_article(p->article_id)->title;
      gp.position = p->position;
      gp.tokens = p->tokens;
      graph.add_passage(std::move(gp));
    }
    return graph;
  };

  CHECK(validate_graph(fresh(), 3).empty());
  CHECK(!validate_graph(fresh(), 2).empty());  // over budget

  PassageGraph diagonal = fresh();
  diagonal.set_relation(0, 0, RelationVocab::kUnkRelation);
  CHECK(!validate_graph(diagonal, 5).empty());

  PassageGraph one_way = fresh();
  one_way.set_relation(0, 1, RelationVocab::kChild);
  CHECK(!validate_graph(one_way, 5).empty());  // missing the parent mirror

  PassageGraph paired = fresh();
  paired.set_relation(0, 1, RelationVocab::kChild);
  paired.set_relation(1, 0, RelationVocab::kParent);
  CHECK(validate_graph(paired, 5).empty());

  // Structural edges may not join two first passages of different articles.
  PassageGraph cross_article = fresh();
  cross_article.set_relation(0, 2, RelationVocab::kChild);
  cross_article.set_relation(2, 0, RelationVocab::kParent);
  CHECK(!validate_graph(cross_article, 5).empty());

  PassageGraph duplicated = fresh();
  duplicated.add_passage(stub_passage("A1", 0));
  CHECK(!validate_graph(duplicated, 5).empty());
}

TEST_CASE("a kb with more relations than slots falls back to unk_relation") {
  // 120 distinct relation names from a hub entity: the first 96 get concrete
  // indices, the rest collapse onto unk_relation in the built graph.
  std::vector<Article> articles;
  std::map<std::string, std::string> entity_map;
  std::vector<Triple> triples;
  articles.push_back({"H", "hub", "EH", "hub article text"});
  entity_map["EH"] = "H";
  for (int i = 0; i < 120; ++i) {
    char rel[16];
    std::snprintf(rel, sizeof(rel), "rel%03d", i);
    char art[8];
    std::snprintf(art, sizeof(art), "T%03d", i);
    const std::string entity = std::string("ET") + art;
    articles.push_back({art, std::string("target ") + art, entity,
                        "target article text"});
    entity_map[entity] = art;
    triples.push_back({"EH", rel, entity});
  }
  const Corpus corpus(std::move(articles));
  const KnowledgeBase kb(std::move(triples), std::move(entity_map));
  const RelationVocab vocab = build_relation_vocab(kb);

  GraphBuilder builder(corpus, kb, vocab, 200);
  std::vector<GraphPassage> seeds;
  {
    const Passage* hub = corpus.first_passage("H");
    GraphPassage gp;
    gp.passage_id = hub->passage_id;
    gp.article_id = hub->article_id;
    gp.title = corpus.find_article(hub->article_id)->title;
    gp.position = hub->position;
    gp.tokens = hub->tokens;
    gp.entity_id = "EH";
    builder.add_seeds({gp});
  }
  const auto added = builder.expand_kb({0});
  CHECK(added.size() == 120);

  std::size_t unk_edges = 0;
  std::size_t concrete = 0;
  const PassageGraph& graph = builder.graph();
  for (std::size_t j = 1; j < graph.size(); ++j) {
    const std::uint8_t r = graph.relation(0, j);
    CHECK(r != RelationVocab::kNoRelation);
    if (r == RelationVocab::kUnkRelation) {
      ++unk_edges;
    } else {
      CHECK(vocab.is_kb_relation(r));
      ++concrete;
    }
  }
  CHECK(concrete == 96);
  CHECK(unk_edges == 24);
  CHECK(validate_graph(graph, 200).empty());
}

TEST_CASE("graph json lists passages in order and skips no_relation pairs") {
  Rng rng(205);
  const World world = make_random_world(rng);
  RetrieverConfig config = random_retriever_config(rng);
  config.edge_filter = EdgeFilter::kCrossInner;
  const std::string question = random_question(rng, world);
  const PassageGraph graph = retrieve_graph(
      question, world.corpus, world.kb, world.vocab, world.indexes(), config);

  const std::string json_text = graph_to_json(question, graph, world.vocab);
  const nlohmann::json parsed = nlohmann::json::parse(json_text);
  CHECK(parsed.at("question").get<std::string>() == question);
  REQUIRE(parsed.at("passages").size() == graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto& entry = parsed.at("passages").at(i);
    CHECK(entry.at("id").get<std::string>() == graph.passage(i).passage_id);
    CHECK(entry.at("position").get<std::size_t>() == graph.passage(i).position);
  }

  std::size_t expected_edges = 0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (std::size_t j = 0; j < graph.size(); ++j) {
      expected_edges += graph.relation(i, j) != RelationVocab::kNoRelation;
    }
  }
  REQUIRE(parsed.at("relations").size() == expected_edges);
  for (const auto& edge : parsed.at("relations")) {
    const std::size_t i = edge.at("i").get<std::size_t>();
    const std::size_t j = edge.at("j").get<std::size_t>();
    CHECK(edge.at("name").get<std::string>() ==
          world.vocab.name_of(graph.relation(i, j)));
  }

  // Serialization is deterministic.
  CHECK(graph_to_json(question, graph, world.vocab) == json_text);
}
