#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kgqa/corpus.hpp"
#include "kgqa/retriever.hpp"
#include "kgqa/rng.hpp"
#include "kgqa/text_index.hpp"
#include "kgqa/training.hpp"

namespace kgqa::test {

// A self-contained corpus + KB + indexes, with the raw records kept around so
// the same world can be written to disk for CLI-level tests.
struct World {
  Corpus corpus;
  KnowledgeBase kb;
  RelationVocab vocab;
  ArticleIndex tfidf;
  Bm25Index bm25;
  AliasTable aliases;

  std::vector<Article> raw_articles;
  std::vector<Triple> raw_triples;
  std::map<std::string, std::string> entity_map;
  std::vector<std::pair<std::string, std::string>> alias_rows;

  Indexes indexes() const { return {&tfidf, &bm25, &aliases}; }
};

// Builds corpus/kb/vocab/indexes from the raw record fields.
void finish_world(World& world);

// Randomized small world: up to 30 articles, up to 50 triples, entity
// articles, multi-passage articles, aliases shared between entities.
World make_random_world(Rng& rng);

// Random retriever config spanning every edge filter and tight budgets.
RetrieverConfig random_retriever_config(Rng& rng);

// Word-soup question that often contains an alias surface so entity seeding
// triggers.
std::string random_question(Rng& rng, const World& world);

// Writes corpus.jsonl / kb.jsonl / entity_map.jsonl / aliases.jsonl into dir.
void write_world_files(const World& world, const std::filesystem::path& dir);

// Synthetic organization benchmark: each org article links via KB edges to a
// leader article and a founder article whose texts are identical templates up
// to the person name, so picking the right passage requires the edge label.
// Three orgs are held out of training entirely; their org-name tokens all
// occur in training questions (only the combinations are new), while their
// people carry reserved names training never mentions, so name identity
// cannot substitute for the edge label.
struct OrgWorld {
  World world;
  std::vector<QAExample> train;
  std::vector<QAExample> test;
};

OrgWorld make_org_world();

}  // namespace kgqa::test
