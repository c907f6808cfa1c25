#include "kgqa/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace kgqa {

namespace {

using nlohmann::json;

bool blank_line(std::string_view line) {
  return line.find_first_not_of(" \t\v\f\r") == std::string_view::npos;
}

// Paragraphs are maximal runs of non-blank lines.
std::vector<std::string> split_paragraphs(std::string_view raw_text) {
  std::vector<std::string> paragraphs;
  std::string current;
  std::size_t pos = 0;
  while (pos <= raw_text.size()) {
    std::size_t eol = raw_text.find('\n', pos);
    if (eol == std::string_view::npos) eol = raw_text.size();
    std::string_view line = raw_text.substr(pos, eol - pos);
    if (blank_line(line)) {
      if (!current.empty()) {
        paragraphs.push_back(std::move(current));
        current.clear();
      }
    } else {
      if (!current.empty()) current.push_back('\n');
      current.append(line);
    }
    if (eol == raw_text.size()) break;
    pos = eol + 1;
  }
  if (!current.empty()) paragraphs.push_back(std::move(current));
  return paragraphs;
}

json parse_line(const std::string& line, std::size_t line_no,
                const std::filesystem::path& path) {
  json value = json::parse(line, nullptr, false);
  if (value.is_discarded() || !value.is_object()) {
    throw std::runtime_error(path.string() + ": malformed JSON at line " +
                             std::to_string(line_no));
  }
  return value;
}

std::string require_string(const json& obj, const char* key,
                           std::size_t line_no,
                           const std::filesystem::path& path) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw std::runtime_error(path.string() + ": missing string field '" +
                             key + "' at line " + std::to_string(line_no));
  }
  return it->get<std::string>();
}

// Calls fn(line, line_no) for every non-blank line of a file.
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank_line(line)) continue;
    fn(line, line_no);
  }
}

}  // namespace

std::vector<std::vector<std::string>> split_passages(std::string_view raw_text,
                                                     std::size_t max_tokens) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> buffer;
  auto flush = [&] {
    if (!buffer.empty()) {
      out.push_back(std::move(buffer));
      buffer.clear();
    }
  };
  for (const std::string& paragraph : split_paragraphs(raw_text)) {
    std::vector<std::string> tokens = tokenize(paragraph);
    if (tokens.empty()) continue;
    if (tokens.size() > max_tokens) {
      // Oversized paragraphs never merge with neighbors; they are cut into
      // max_tokens-sized chunks.
      flush();
      for (std::size_t i = 0; i < tokens.size(); i += max_tokens) {
        std::size_t n = std::min(max_tokens, tokens.size() - i);
        out.emplace_back(tokens.begin() + i, tokens.begin() + i + n);
      }
      continue;
    }
    if (buffer.empty()) {
      buffer = std::move(tokens);
    } else if (buffer.size() + tokens.size() <= max_tokens) {
      buffer.insert(buffer.end(), tokens.begin(), tokens.end());
    } else {
      flush();
      buffer = std::move(tokens);
    }
  }
  flush();
  return out;
}

Corpus::Corpus(std::vector<Article> articles) : articles_(std::move(articles)) {
  for (std::size_t a = 0; a < articles_.size(); ++a) {
    article_by_id_.emplace(articles_[a].article_id, a);
    std::size_t first = passages_.size();
    auto chunks = split_passages(articles_[a].raw_text);
    for (std::size_t p = 0; p < chunks.size(); ++p) {
      Passage passage;
      passage.article_id = articles_[a].article_id;
      passage.position = p;
      passage.passage_id = passage.article_id + "#" + std::to_string(p);
      passage.tokens = std::move(chunks[p]);
      passage_by_id_.emplace(passage.passage_id, passages_.size());
      passages_.push_back(std::move(passage));
    }
    passage_range_.emplace(articles_[a].article_id,
                           std::make_pair(first, passages_.size()));
  }
}

const Article* Corpus::find_article(std::string_view article_id) const {
  auto it = article_by_id_.find(article_id);
  return it == article_by_id_.end() ? nullptr : &articles_[it->second];
}

const Passage* Corpus::find_passage(std::string_view passage_id) const {
  auto it = passage_by_id_.find(passage_id);
  return it == passage_by_id_.end() ? nullptr : &passages_[it->second];
}

const Passage* Corpus::first_passage(std::string_view article_id) const {
  auto it = passage_range_.find(article_id);
  if (it == passage_range_.end() || it->second.first == it->second.second)
    return nullptr;
  return &passages_[it->second.first];
}

std::vector<const Passage*> Corpus::article_passages(
    std::string_view article_id) const {
  std::vector<const Passage*> out;
  auto it = passage_range_.find(article_id);
  if (it == passage_range_.end()) return out;
  for (std::size_t i = it->second.first; i < it->second.second; ++i)
    out.push_back(&passages_[i]);
  return out;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::vector<Article> articles;
  std::map<std::string, std::size_t> seen;  // article_id -> line
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    json obj = parse_line(line, line_no, path);
    Article article;
    article.article_id = require_string(obj, "id", line_no, path);
    article.title = require_string(obj, "title", line_no, path);
    article.raw_text = require_string(obj, "text", line_no, path);
    if (auto it = obj.find("entity_id"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) {
        throw std::runtime_error(path.string() +
                                 ": entity_id must be a string at line " +
                                 std::to_string(line_no));
      }
      article.entity_id = it->get<std::string>();
    }
    if (!seen.emplace(article.article_id, line_no).second) {
      throw std::runtime_error("duplicate article " + article.article_id +
                               " at line " + std::to_string(line_no));
    }
    articles.push_back(std::move(article));
  });
  return Corpus(std::move(articles));
}

KnowledgeBase::KnowledgeBase(std::vector<Triple> triples,
                             std::map<std::string, std::string> entity_to_article)
    : triples_(std::move(triples)),
      entity_to_article_(std::move(entity_to_article)) {
  std::sort(triples_.begin(), triples_.end());
  triples_.erase(std::unique(triples_.begin(), triples_.end()),
                 triples_.end());
}

const std::string* KnowledgeBase::article_of(std::string_view entity_id) const {
  auto it = entity_to_article_.find(std::string(entity_id));
  return it == entity_to_article_.end() ? nullptr : &it->second;
}

std::span<const Triple> KnowledgeBase::triples_from(
    std::string_view entity_id) const {
  auto lo = std::lower_bound(
      triples_.begin(), triples_.end(), entity_id,
      [](const Triple& t, std::string_view e) { return t.subject < e; });
  auto hi = lo;
  while (hi != triples_.end() && hi->subject == entity_id) ++hi;
  return {lo, hi};
}

KnowledgeBase load_kb(const std::filesystem::path& triples_path,
                      const std::filesystem::path& entity_map_path,
                      const Corpus& corpus) {
  std::vector<Triple> triples;
  for_each_line(triples_path, [&](const std::string& line, std::size_t line_no) {
    json obj = parse_line(line, line_no, triples_path);
    Triple t;
    t.subject = require_string(obj, "e1", line_no, triples_path);
    t.relation = require_string(obj, "relation", line_no, triples_path);
    t.object = require_string(obj, "e2", line_no, triples_path);
    triples.push_back(std::move(t));
  });

  std::map<std::string, std::string> entity_to_article;
  for_each_line(entity_map_path,
                [&](const std::string& line, std::size_t line_no) {
    json obj = parse_line(line, line_no, entity_map_path);
    std::string entity = require_string(obj, "entity_id", line_no,
                                        entity_map_path);
    std::string article = require_string(obj, "article_id", line_no,
                                         entity_map_path);
    const Article* found = corpus.find_article(article);
    if (found == nullptr) {
      throw std::runtime_error(entity_map_path.string() +
                               ": unknown article " + article + " at line " +
                               std::to_string(line_no));
    }
    if (found->entity_id && *found->entity_id != entity) {
      throw std::runtime_error(entity_map_path.string() + ": entity " +
                               entity + " maps to article " + article +
                               " which declares entity " + *found->entity_id +
                               " (line " + std::to_string(line_no) + ")");
    }
    auto [it, inserted] = entity_to_article.emplace(entity, article);
    if (!inserted && it->second != article) {
      throw std::runtime_error(entity_map_path.string() +
                               ": conflicting mapping for entity " + entity +
                               " at line " + std::to_string(line_no));
    }
  });
  return KnowledgeBase(std::move(triples), std::move(entity_to_article));
}

RelationVocab::RelationVocab() {
  names_ = {"no_relation", "unk_relation", "child", "parent"};
  for (int i = 0; i < kFirstKbIndex; ++i) index_.emplace(names_[i], i);
}

int RelationVocab::lookup(std::string_view relation) const {
  auto it = index_.find(std::string(relation));
  return it == index_.end() ? kUnkRelation : it->second;
}

const std::string& RelationVocab::name_of(int index) const {
  if (index < 0 || index >= kIndexSize) {
    throw std::out_of_range("relation index " + std::to_string(index) +
                            " outside [0, " + std::to_string(kIndexSize) + ")");
  }
  if (index < static_cast<int>(names_.size())) return names_[index];
  return names_[kUnkRelation];
}

std::size_t RelationVocab::frequency(std::string_view relation) const {
  auto it = frequency_.find(std::string(relation));
  return it == frequency_.end() ? 0 : it->second;
}

void RelationVocab::assign(const std::string& relation, std::size_t frequency) {
  frequency_[relation] = frequency;
  if (next_index_ >= kIndexSize) return;
  if (index_.contains(relation)) return;
  index_.emplace(relation, next_index_);
  names_.push_back(relation);
  ++next_index_;
}

RelationVocab build_relation_vocab(const KnowledgeBase& kb) {
  std::map<std::string, std::size_t> counts;
  for (const Triple& t : kb.triples()) ++counts[t.relation];

  // Rank by frequency, then name; the top 96 fill indices 4..99.
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  RelationVocab vocab;
  for (const auto& [name, freq] : ranked) vocab.assign(name, freq);
  return vocab;
}

std::uint64_t relation_vocab_fingerprint(const RelationVocab& vocab) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, index] : vocab.index_map()) {
    mix(name);
    mix("=");
    mix(std::to_string(index));
    mix(";");
  }
  return h;
}

}  // namespace kgqa
