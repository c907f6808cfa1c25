#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/corpus.hpp"
#include "kgqa/reader.hpp"
#include "kgqa/retriever.hpp"
#include "kgqa/text_index.hpp"
#include "kgqa/training.hpp"

namespace kgqa {

// Everything retrieval needs, loaded once and shared read-only.
struct Artifacts {
  Corpus corpus;
  KnowledgeBase kb;
  RelationVocab vocab;
  ArticleIndex tfidf;
  Bm25Index bm25;
  AliasTable aliases;

  Indexes indexes() const { return {&tfidf, &bm25, &aliases}; }
};

// Builds all artifacts from the raw input files.
Artifacts build_artifacts(const std::filesystem::path& corpus_path,
                          const std::filesystem::path& kb_path,
                          const std::filesystem::path& entity_map_path,
                          const std::filesystem::path& aliases_path);

// Snapshot directory layout: corpus.json, kb.json, relations.json,
// tfidf.json, bm25.json, aliases.json, each carrying a magic string and a
// version integer.
void save_artifacts(const Artifacts& artifacts,
                    const std::filesystem::path& dir);
Artifacts load_artifacts(const std::filesystem::path& dir);

// Line-delimited {"question", "answers": [...]} records.
std::vector<QAExample> load_dataset(const std::filesystem::path& path);

struct AnswerRecord {
  std::string question;
  std::string answer;
  std::optional<std::string> passage_id;
  std::optional<std::pair<std::size_t, std::size_t>> span;  // sequence positions
  double p_sel = 0.0;
};

// One line of answer output, keys in alphabetical order; null passage_id/span
// for an unanswered question. The CLI and the HTTP service both emit exactly
// this string.
std::string answer_record_json(const AnswerRecord& record);

AnswerRecord answer_question(std::string_view question,
                             const Artifacts& artifacts,
                             const ReaderParams& params,
                             const RetrieverConfig& retriever,
                             const FusionConfig& fusion, SelectionHead head);

// Retrieves graphs for a dataset and pairs them with labels, ready for train().
std::vector<TrainingInstance> prepare_training_instances(
    const std::vector<QAExample>& dataset, const Artifacts& artifacts,
    const RetrieverConfig& retriever, std::size_t max_seq);

// Resolves a path against the KGQA_DATA_DIR environment variable: a path that
// does not exist as given but does exist under the data dir resolves there.
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

}  // namespace kgqa
