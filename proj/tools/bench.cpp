// Times the OpenMP kernels against their serial references and checks the
// outputs agree bit for bit.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "kgqa/corpus.hpp"
#include "kgqa/reader.hpp"
#include "kgqa/rng.hpp"
#include "kgqa/text_index.hpp"
#include "kgqa/training.hpp"

namespace {

using namespace kgqa;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

std::string random_word(Rng& rng) {
  static const char* kWords[] = {"river",  "county", "battle", "music",
                                 "bridge", "harbor", "forest", "winter",
                                 "letter", "valley", "signal", "copper"};
  return kWords[rng.uniform_index(12)];
}

Corpus make_corpus(Rng& rng, std::size_t articles, std::size_t words) {
  std::vector<Article> list;
  for (std::size_t a = 0; a < articles; ++a) {
    Article article;
    article.article_id = "A" + std::to_string(a);
    article.title = random_word(rng) + " " + std::to_string(a);
    std::string text;
    for (std::size_t w = 0; w < words; ++w) {
      if (!text.empty()) text += ' ';
      text += random_word(rng);
    }
    article.raw_text = text;
    list.push_back(std::move(article));
  }
  return Corpus(std::move(list));
}

PassageGraph make_graph(Rng& rng, std::size_t n, std::size_t tokens) {
  std::vector<GraphPassage> passages;
  for (std::size_t i = 0; i < n; ++i) {
    GraphPassage p;
    p.passage_id = "A" + std::to_string(i) + "#0";
    p.article_id = "A" + std::to_string(i);
    p.title = random_word(rng);
    for (std::size_t t = 0; t < tokens; ++t) p.tokens.push_back(random_word(rng));
    passages.push_back(std::move(p));
  }
  PassageGraph graph = PassageGraph::from_passages(std::move(passages));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && rng.uniform_real() < 0.2) {
        graph.set_relation(i, j, static_cast<std::uint8_t>(
                                     4 + rng.uniform_index(10)));
      }
    }
  }
  return graph;
}

bool same_states(const std::vector<std::vector<double>>& a,
                 const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace

int main() {
  Rng rng(7);
  const int repeats = 20;

  // Text scoring over a mid-sized corpus.
  const Corpus corpus = make_corpus(rng, 200, 400);
  const ArticleIndex tfidf = build_tfidf_index(corpus);
  const Bm25Index bm25 = build_bm25_index(corpus);
  const std::string query = "river battle music harbor winter";
  std::vector<const Passage*> candidates;
  for (const Passage& p : corpus.passages()) candidates.push_back(&p);

  {
    auto t0 = Clock::now();
    std::vector<double> parallel;
    for (int r = 0; r < repeats; ++r) parallel = tfidf_scores(tfidf, query);
    const double par_ms = ms_since(t0) / repeats;
    t0 = Clock::now();
    std::vector<double> serial;
    for (int r = 0; r < repeats; ++r) serial = tfidf_scores_serial(tfidf, query);
    const double ser_ms = ms_since(t0) / repeats;
    std::printf("tfidf_scores      parallel %8.3f ms  serial %8.3f ms  equal %s\n",
                par_ms, ser_ms, parallel == serial ? "yes" : "NO");
  }
  {
    auto t0 = Clock::now();
    std::vector<double> parallel;
    for (int r = 0; r < repeats; ++r) {
      parallel = bm25_scores(bm25, candidates, query);
    }
    const double par_ms = ms_since(t0) / repeats;
    t0 = Clock::now();
    std::vector<double> serial;
    for (int r = 0; r < repeats; ++r) {
      serial = bm25_scores_serial(bm25, candidates, query);
    }
    const double ser_ms = ms_since(t0) / repeats;
    std::printf("bm25_scores       parallel %8.3f ms  serial %8.3f ms  equal %s\n",
                par_ms, ser_ms, parallel == serial ? "yes" : "NO");
  }

  // Reader kernels.
  ReaderDims dims;
  dims.h = 64;
  dims.max_seq = 64;
  dims.v_hash = 1u << 12;
  const ReaderParams params =
      init_params(dims, FusionMode::kRelation, 1, 0, 11);
  const PassageGraph graph = make_graph(rng, 40, 80);
  const std::vector<std::string> question = {"who", "holds", "the", "river"};

  {
    auto t0 = Clock::now();
    std::vector<EncodedPassage> parallel;
    for (int r = 0; r < repeats; ++r) {
      parallel = encode_graph(question, graph, params);
    }
    const double par_ms = ms_since(t0) / repeats;
    t0 = Clock::now();
    std::vector<EncodedPassage> serial;
    for (int r = 0; r < repeats; ++r) {
      serial = encode_graph_serial(question, graph, params);
    }
    const double ser_ms = ms_since(t0) / repeats;
    bool equal = parallel.size() == serial.size();
    for (std::size_t i = 0; equal && i < parallel.size(); ++i) {
      equal = parallel[i].matrix == serial[i].matrix;
    }
    std::printf("encode_graph      parallel %8.3f ms  serial %8.3f ms  equal %s\n",
                par_ms, ser_ms, equal ? "yes" : "NO");

    const std::vector<std::vector<double>> z = init_node_states(serial);
    auto t1 = Clock::now();
    std::vector<std::vector<double>> fused_par;
    for (int r = 0; r < repeats; ++r) {
      fused_par = fuse_relation(z, graph, params.relation_emb,
                                params.fusion[0], dims.h);
    }
    const double fuse_par_ms = ms_since(t1) / repeats;
    t1 = Clock::now();
    std::vector<std::vector<double>> fused_ser;
    for (int r = 0; r < repeats; ++r) {
      fused_ser = fuse_relation_serial(z, graph, params.relation_emb,
                                       params.fusion[0], dims.h);
    }
    const double fuse_ser_ms = ms_since(t1) / repeats;
    std::printf("fuse_relation     parallel %8.3f ms  serial %8.3f ms  equal %s\n",
                fuse_par_ms, fuse_ser_ms,
                same_states(fused_par, fused_ser) ? "yes" : "NO");
  }

  // Optimizer over the full parameter set.
  {
    ReaderParams p1 = params;
    ReaderParams p2 = params;
    ReaderParams grads = init_params(dims, FusionMode::kRelation, 1, 0, 13);
    AdamState s1;
    AdamState s2;
    TrainConfig config;
    auto t0 = Clock::now();
    for (int r = 0; r < repeats; ++r) adam_step(p1, grads, s1, config);
    const double par_ms = ms_since(t0) / repeats;
    t0 = Clock::now();
    for (int r = 0; r < repeats; ++r) adam_step_serial(p2, grads, s2, config);
    const double ser_ms = ms_since(t0) / repeats;
    std::printf("adam_step         parallel %8.3f ms  serial %8.3f ms  equal %s\n",
                par_ms, ser_ms,
                p1.encoder_table == p2.encoder_table &&
                        p1.fusion[0].weight == p2.fusion[0].weight
                    ? "yes"
                    : "NO");
  }
  return 0;
}
