#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "kgqa/reader.hpp"
#include "kgqa/text.hpp"
#include "support/oracle.hpp"
#include "support/tmpdir.hpp"

using namespace kgqa;
using namespace kgqa::test;

namespace {

ReaderParams small_params(std::uint64_t seed, FusionMode mode,
                          std::size_t layers, std::size_t h = 4,
                          std::size_t max_seq = 16, std::size_t v_hash = 32) {
  ReaderDims dims;
  dims.h = h;
  dims.max_seq = max_seq;
  dims.v_hash = v_hash;
  return init_params(dims, mode, layers, 0x1234, seed);
}

bool close_all(const std::vector<std::vector<double>>& a,
               const std::vector<std::vector<double>>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    for (std::size_t d = 0; d < a[i].size(); ++d) {
      const double gap = std::abs(a[i][d] - b[i][d]);
      if (gap > tol * std::max(1.0, std::abs(b[i][d]))) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("assemble_sequence lays out question, title, passage with markers") {
  const std::vector<std::string> q = {"who", "won"};
  const std::vector<std::string> t = {"mint"};
  const std::vector<std::string> p = {"p1", "p2", "p3"};

  const SequenceLayout full = assemble_sequence(q, t, p, 20);
  CHECK(full.tokens == std::vector<std::string>{"who", "won", "[SEP]", "<t>",
                                                "mint", "</t>", "p1", "p2",
                                                "p3"});
  CHECK(full.passage_offset == 6);
  CHECK(full.valid_len == 9);

  // The cut lands on the passage tail first.
  const SequenceLayout cut = assemble_sequence(q, t, p, 7);
  CHECK(cut.tokens == std::vector<std::string>{"who", "won", "[SEP]", "<t>",
                                               "mint", "</t>", "p1"});
  CHECK(cut.passage_offset == 6);
  CHECK(cut.valid_len == 7);

  // A cut inside the prefix clamps the offset to the end.
  const SequenceLayout deep = assemble_sequence(q, t, p, 4);
  CHECK(deep.tokens == std::vector<std::string>{"who", "won", "[SEP]", "<t>"});
  CHECK(deep.passage_offset == 4);
  CHECK(deep.valid_len == 4);

  const SequenceLayout bare = assemble_sequence({}, {}, {"x"}, 20);
  CHECK(bare.tokens ==
        std::vector<std::string>{"[SEP]", "<t>", "</t>", "x"});
  CHECK(bare.passage_offset == 3);
}

TEST_CASE("question gate averages embedding rows through a sigmoid") {
  ReaderParams params = small_params(7, FusionMode::kBinary, 0);

  // Empty question: sigmoid of the zero vector.
  for (double g : question_gate({}, params)) CHECK(g == 0.5);

  // A constant table makes the mean independent of hashing.
  std::fill(params.encoder_table.begin(), params.encoder_table.end(), 0.75);
  const double expect = 1.0 / (1.0 + std::exp(-0.75));
  for (double g : question_gate({"any", "words", "work"}, params)) {
    CHECK(g == doctest::Approx(expect).epsilon(1e-12));
  }

  // Repeating a token leaves the mean unchanged.
  params = small_params(8, FusionMode::kBinary, 0);
  CHECK(question_gate({"w", "w"}, params) == question_gate({"w"}, params));
  for (double g : question_gate({"v", "w"}, params)) {
    CHECK(g > 0.0);
    CHECK(g < 1.0);
  }
}

TEST_CASE("text_encode gates table rows and zeroes the padding") {
  ReaderParams params = small_params(9, FusionMode::kBinary, 0);
  const std::vector<std::string> q = {"q1", "q2"};
  const EncodedPassage enc = text_encode(q, {"ttl"}, {"body", "words"}, params);
  const std::size_t h = params.dims.h;
  REQUIRE(enc.h == h);
  REQUIRE(enc.matrix.size() == params.dims.max_seq * h);
  // q1 q2 [SEP] <t> ttl </t> body words
  REQUIRE(enc.valid_len == 8);

  const std::vector<double> gate = question_gate(q, params);
  const SequenceLayout layout =
      assemble_sequence(q, {"ttl"}, {"body", "words"}, params.dims.max_seq);
  for (std::size_t t = 0; t < enc.valid_len; ++t) {
    const std::size_t row =
        fnv1a64(layout.tokens[t]) % params.dims.v_hash;
    for (std::size_t d = 0; d < h; ++d) {
      CHECK(enc.matrix[t * h + d] ==
            params.encoder_table[row * h + d] * gate[d]);
    }
  }
  for (std::size_t t = enc.valid_len; t < params.dims.max_seq; ++t) {
    for (std::size_t d = 0; d < h; ++d) CHECK(enc.matrix[t * h + d] == 0.0);
  }
}

TEST_CASE("relation_encode bounds-checks the index") {
  const ReaderParams params = small_params(10, FusionMode::kRelation, 1);
  const std::vector<double> row = relation_encode(3, params);
  REQUIRE(row.size() == params.dims.h);
  for (std::size_t d = 0; d < row.size(); ++d) {
    CHECK(row[d] == params.relation_emb[3 * params.dims.h + d]);
  }
  CHECK_THROWS_AS(relation_encode(-1, params), std::out_of_range);
  CHECK_THROWS_AS(relation_encode(100, params), std::out_of_range);
}

TEST_CASE("node pooling takes the columnwise max over valid rows only") {
  EncodedPassage enc;
  enc.h = 2;
  enc.valid_len = 3;
  // Four rows allocated, only three valid; the huge fourth row must not leak.
  enc.matrix = {1.0, 5.0, 3.0, 5.0, 2.0, -1.0, 99.0, 99.0};
  const auto states = init_node_states({enc});
  REQUIRE(states.size() == 1);
  CHECK(states[0] == std::vector<double>{3.0, 5.0});

  EncodedPassage empty;
  empty.h = 2;
  empty.valid_len = 0;
  CHECK_THROWS_AS(init_node_states({empty}), std::runtime_error);
}

TEST_CASE("pooling ties resolve to the earliest row") {
  // Every table row is identical, so every column ties across all rows.
  ReaderDims dims;
  dims.h = 1;
  dims.max_seq = 8;
  dims.v_hash = 4;
  ReaderParams params = init_params(dims, FusionMode::kBinary, 0, 0, 11);
  std::fill(params.encoder_table.begin(), params.encoder_table.end(), 5.0);

  GraphPassage gp;
  gp.passage_id = "A1#0";
  gp.article_id = "A1";
  gp.title = "w";
  gp.position = 0;
  gp.tokens = {"w", "w"};
  const PassageGraph graph = PassageGraph::from_passages({gp});
  const ReaderForward fwd =
      run_reader({}, graph, params, FusionConfig{}, SelectionHead::kGraph);
  REQUIRE(fwd.pool_argmax.size() == 1);
  CHECK(fwd.pool_argmax[0][0] == 0);
}

TEST_CASE("fusion layers match the naive per-contribution oracle") {
  Rng rng(301);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(6);
    const std::size_t h = 1 + rng.uniform_index(6);
    const PassageGraph graph = random_reader_graph(rng, n, 5);
    std::vector<std::vector<double>> z(n, std::vector<double>(h));
    for (auto& row : z)
      for (double& v : row) v = rng.uniform_range(-2.0, 2.0);

    FusionLayerParams binary_layer;
    binary_layer.weight.resize(h * 2 * h);
    binary_layer.bias.resize(h);
    for (double& v : binary_layer.weight) v = rng.uniform_range(-1.0, 1.0);
    for (double& v : binary_layer.bias) v = rng.uniform_range(-1.0, 1.0);

    const auto got_b = fuse_binary(z, graph, binary_layer, h);
    CHECK(got_b == fuse_binary_serial(z, graph, binary_layer, h));
    CHECK(close_all(got_b, ref_fuse_binary(z, graph, binary_layer, h), 1e-12));

    FusionLayerParams relation_layer;
    relation_layer.weight.resize(h * 3 * h);
    relation_layer.bias.resize(h);
    for (double& v : relation_layer.weight) v = rng.uniform_range(-1.0, 1.0);
    for (double& v : relation_layer.bias) v = rng.uniform_range(-1.0, 1.0);
    std::vector<double> rel_emb(RelationVocab::kIndexSize * h);
    for (double& v : rel_emb) v = rng.uniform_range(-1.0, 1.0);

    const auto got_r = fuse_relation(z, graph, rel_emb, relation_layer, h);
    CHECK(got_r == fuse_relation_serial(z, graph, rel_emb, relation_layer, h));
    CHECK(close_all(got_r,
                    ref_fuse_relation(z, graph, rel_emb, relation_layer, h),
                    1e-12));
  }
}

TEST_CASE("isolated nodes pass through binary fusion unchanged") {
  const std::size_t h = 3;
  GraphPassage a;
  a.passage_id = "P0";
  a.tokens = {"x"};
  const PassageGraph graph = PassageGraph::from_passages({a});
  std::vector<std::vector<double>> z = {{1.5, -2.0, 0.25}};
  FusionLayerParams layer;
  layer.weight.assign(h * 2 * h, 0.7);
  layer.bias.assign(h, 0.9);
  CHECK(fuse_binary(z, graph, layer, h) == z);
}

TEST_CASE("relation fusion with a zeroed relation block equals binary fusion") {
  // On a graph whose every cell (diagonal included) is unk_relation, the
  // binary neighbor set is all n nodes, the same set the relation layer
  // always averages over. Splicing the binary weight into a 3h weight with a
  // zero middle block then yields bit-identical outputs, because the relation
  // term contributes an exact 0.0 to each sum.
  Rng rng(302);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(5);
    const std::size_t h = 1 + rng.uniform_index(5);
    std::vector<GraphPassage> passages(n);
    for (std::size_t i = 0; i < n; ++i) {
      passages[i].passage_id = "P" + std::to_string(i);
      passages[i].tokens = {"t"};
    }
    PassageGraph graph = PassageGraph::from_passages(std::move(passages));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        graph.set_relation(i, j, RelationVocab::kUnkRelation);
      }
    }

    std::vector<std::vector<double>> z(n, std::vector<double>(h));
    for (auto& row : z)
      for (double& v : row) v = rng.uniform_range(-2.0, 2.0);

    FusionLayerParams binary_layer;
    binary_layer.weight.resize(h * 2 * h);
    binary_layer.bias.resize(h);
    for (double& v : binary_layer.weight) v = rng.uniform_range(-1.0, 1.0);
    for (double& v : binary_layer.bias) v = rng.uniform_range(-1.0, 1.0);

    FusionLayerParams relation_layer;
    relation_layer.weight.assign(h * 3 * h, 0.0);
    relation_layer.bias = binary_layer.bias;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < h; ++c) {
        relation_layer.weight[r * 3 * h + c] =
            binary_layer.weight[r * 2 * h + c];
        relation_layer.weight[r * 3 * h + 2 * h + c] =
            binary_layer.weight[r * 2 * h + h + c];
      }
    }
    std::vector<double> rel_emb(RelationVocab::kIndexSize * h);
    for (double& v : rel_emb) v = rng.uniform_range(-5.0, 5.0);

    CHECK(fuse_binary(z, graph, binary_layer, h) ==
          fuse_relation(z, graph, rel_emb, relation_layer, h));
  }
}

TEST_CASE("the reader is equivariant under passage reordering") {
  Rng rng(303);
  for (FusionMode mode : {FusionMode::kBinary, FusionMode::kRelation}) {
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t n = 2 + rng.uniform_index(5);
      const PassageGraph graph = random_reader_graph(rng, n, 6);
      const ReaderParams params =
          small_params(400 + trial, mode, 2, 4, 16, 64);
      const std::vector<std::string> question = random_tokens(rng, 3);

      std::vector<std::size_t> to_new(n);
      std::iota(to_new.begin(), to_new.end(), 0);
      for (std::size_t i = n; i > 1; --i) {
        std::swap(to_new[i - 1], to_new[rng.uniform_index(i)]);
      }
      std::vector<std::size_t> to_old(n);
      for (std::size_t i = 0; i < n; ++i) to_old[to_new[i]] = i;
      std::vector<GraphPassage> reordered(n);
      for (std::size_t k = 0; k < n; ++k) {
        reordered[k] = graph.passage(to_old[k]);
      }
      PassageGraph permuted = PassageGraph::from_passages(std::move(reordered));
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
          permuted.set_relation(k, l, graph.relation(to_old[k], to_old[l]));
        }
      }

      FusionConfig fusion;
      fusion.mode = mode;
      fusion.layers = 2;
      const ReaderForward base = run_reader(question, graph, params, fusion,
                                            SelectionHead::kGraph);
      const ReaderForward perm = run_reader(question, permuted, params, fusion,
                                            SelectionHead::kGraph);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(perm.p_sel[to_new[i]] ==
              doctest::Approx(base.p_sel[i]).epsilon(1e-12));
      }

      const Prediction base_pred = predict_answer(question, graph, params,
                                                  fusion, SelectionHead::kGraph);
      const Prediction perm_pred = predict_answer(
          question, permuted, params, fusion, SelectionHead::kGraph);
      CHECK(perm_pred.passage_index == to_new[base_pred.passage_index]);
      CHECK(perm_pred.answer == base_pred.answer);
      CHECK(perm_pred.span_start == base_pred.span_start);
      CHECK(perm_pred.span_end == base_pred.span_end);
    }
  }
}

TEST_CASE("inference consumes no randomness and dropout is seed-stable") {
  Rng rng(304);
  const PassageGraph graph = random_reader_graph(rng, 4, 6);
  const ReaderParams params = small_params(41, FusionMode::kRelation, 2);
  const std::vector<std::string> question = {"which", "one"};
  FusionConfig fusion;
  fusion.layers = 2;
  fusion.dropout = 0.5;

  // Inference: rng is never touched, even when one is supplied.
  Rng probe(777);
  const ReaderForward a = run_reader(question, graph, params, fusion,
                                     SelectionHead::kGraph, false, &probe);
  CHECK(probe.next_u64() == Rng(777).next_u64());
  const ReaderForward b = run_reader(question, graph, params, fusion,
                                     SelectionHead::kGraph, false, nullptr);
  CHECK(a.p_sel == b.p_sel);
  CHECK(a.dropout_keep.empty());

  // Zero dropout during training also skips the rng.
  FusionConfig no_drop = fusion;
  no_drop.dropout = 0.0;
  Rng probe2(778);
  const ReaderForward c = run_reader(question, graph, params, no_drop,
                                     SelectionHead::kGraph, true, &probe2);
  CHECK(probe2.next_u64() == Rng(778).next_u64());
  CHECK(c.p_sel == a.p_sel);

  // Dropout draws are reproducible and masks scale by 1 / (1 - p).
  Rng d1(55);
  Rng d2(55);
  const ReaderForward t1 = run_reader(question, graph, params, fusion,
                                      SelectionHead::kGraph, true, &d1);
  const ReaderForward t2 = run_reader(question, graph, params, fusion,
                                      SelectionHead::kGraph, true, &d2);
  CHECK(t1.p_sel == t2.p_sel);
  REQUIRE(t1.dropout_keep.size() == 2);
  bool saw_zero = false;
  bool saw_kept = false;
  for (const auto& layer : t1.dropout_keep) {
    for (double k : layer) {
      CHECK((k == 0.0 || k == 2.0));
      saw_zero |= k == 0.0;
      saw_kept |= k == 2.0;
    }
  }
  CHECK(saw_zero);
  CHECK(saw_kept);

  Rng d3(56);
  const ReaderForward t3 = run_reader(question, graph, params, fusion,
                                      SelectionHead::kGraph, true, &d3);
  CHECK(t1.dropout_keep != t3.dropout_keep);
}

TEST_CASE("selection heads: shared softmax vs independent two-way units") {
  Rng rng(305);
  const std::size_t h = 4;
  std::vector<std::vector<double>> z(5, std::vector<double>(h));
  for (auto& row : z)
    for (double& v : row) v = rng.uniform_range(-1.0, 1.0);
  ReaderParams params = small_params(42, FusionMode::kBinary, 0, h);

  const auto graph_probs = select_passage(z, params, SelectionHead::kGraph);
  CHECK(graph_probs ==
        select_passage(z, params, SelectionHead::kParReaderPP));
  double sum = 0.0;
  for (double p : graph_probs) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  const auto par_probs = select_passage(z, params, SelectionHead::kParReader);
  for (double p : par_probs) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  // Entries are independent: dropping a passage leaves the rest unchanged.
  std::vector<std::vector<double>> fewer(z.begin(), z.end() - 1);
  const auto par_fewer = select_passage(fewer, params, SelectionHead::kParReader);
  for (std::size_t i = 0; i < fewer.size(); ++i) {
    CHECK(par_fewer[i] == par_probs[i]);
  }

  // Zero weights: uniform softmax, 0.5 per two-way unit.
  std::fill(params.w_sel.begin(), params.w_sel.end(), 0.0);
  std::fill(params.parreader_w_sel.begin(), params.parreader_w_sel.end(), 0.0);
  for (double p : select_passage(z, params, SelectionHead::kGraph)) {
    CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
  }
  for (double p : select_passage(z, params, SelectionHead::kParReader)) {
    CHECK(p == 0.5);
  }
  CHECK(select_passage({}, params, SelectionHead::kGraph).empty());
}

TEST_CASE("span distributions sum to one and vanish on padding") {
  Rng rng(306);
  const ReaderParams params = small_params(43, FusionMode::kBinary, 0);
  const EncodedPassage enc =
      text_encode(random_tokens(rng, 3), random_tokens(rng, 2),
                  random_tokens(rng, 5), params);
  const SpanDistributions dist = span_scores(enc, params);
  REQUIRE(dist.start.size() == params.dims.max_seq);
  REQUIRE(dist.end.size() == params.dims.max_seq);
  double s = 0.0;
  double e = 0.0;
  for (std::size_t t = 0; t < dist.start.size(); ++t) {
    if (t < enc.valid_len) {
      CHECK(dist.start[t] > 0.0);
      s += dist.start[t];
      e += dist.end[t];
    } else {
      CHECK(dist.start[t] == 0.0);
      CHECK(dist.end[t] == 0.0);
    }
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(e == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("a graph head with zero fusion layers is exactly the plain reader") {
  Rng rng(307);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(6);
    const PassageGraph graph = random_reader_graph(rng, n, 6);
    const ReaderParams params =
        small_params(500 + trial, trial % 2 == 0 ? FusionMode::kBinary
                                                 : FusionMode::kRelation,
                     2);
    const std::vector<std::string> question = random_tokens(rng, 4);
    FusionConfig fusion;
    fusion.mode = params.mode;
    fusion.layers = 0;
    const ReaderForward g = run_reader(question, graph, params, fusion,
                                       SelectionHead::kGraph);
    const ReaderForward pp = run_reader(question, graph, params, fusion,
                                        SelectionHead::kParReaderPP);
    CHECK(g.p_sel == pp.p_sel);
    const Prediction pg =
        predict_answer(question, graph, params, fusion, SelectionHead::kGraph);
    const Prediction ppp = predict_answer(question, graph, params, fusion,
                                          SelectionHead::kParReaderPP);
    CHECK(pg.answer == ppp.answer);
    CHECK(pg.passage_index == ppp.passage_index);
  }
}

TEST_CASE("predict_answer picks the first best span and obeys the length cap") {
  ReaderDims dims;
  dims.h = 2;
  dims.max_seq = 16;
  dims.v_hash = 64;
  ReaderParams params = init_params(dims, FusionMode::kBinary, 0, 0, 60);
  std::fill(params.encoder_table.begin(), params.encoder_table.end(), 0.0);
  params.w_start = {1.0, 0.0};
  params.w_end = {0.0, 1.0};
  params.w_sel = {1.0, 1.0};

  // Pick words whose hash rows collide with nothing else in the sequence.
  const std::vector<std::string> specials = {"[SEP]", "<t>", "</t>"};
  auto row_of = [&](const std::string& tok) {
    return fnv1a64(tok) % dims.v_hash;
  };
  std::vector<std::string> picked;
  std::vector<std::size_t> used;
  for (const std::string& s : specials) used.push_back(row_of(s));
  for (char c = 'a'; c <= 'z' && picked.size() < 3; ++c) {
    const std::string word(3, c);
    const std::size_t row = row_of(word);
    if (std::find(used.begin(), used.end(), row) == used.end()) {
      picked.push_back(word);
      used.push_back(row);
    }
  }
  REQUIRE(picked.size() == 3);
  const std::string start_word = picked[0];  // strong start logit
  const std::string end_word = picked[1];    // stronger end logit
  const std::string filler = picked[2];

  params.encoder_table[row_of(start_word) * 2 + 0] = 10.0;
  params.encoder_table[row_of(end_word) * 2 + 1] = 20.0;

  GraphPassage gp;
  gp.passage_id = "A1#0";
  gp.article_id = "A1";
  gp.title = "";
  gp.position = 0;
  gp.tokens = {start_word, filler, filler, filler, filler, end_word};
  const PassageGraph graph = PassageGraph::from_passages({gp});

  // Empty question: the gate is 0.5 everywhere, so logits are 5 and 10.
  // Sequence: [SEP] <t> </t> s f f f f e with the start peak at 3 and the
  // end peak at 8.
  const Prediction wide = predict_answer({}, graph, params, FusionConfig{},
                                         SelectionHead::kGraph, 10);
  CHECK(wide.answered);
  CHECK(wide.span_start == 3);
  CHECK(wide.span_end == 8);
  CHECK(wide.answer == start_word + " " + filler + " " + filler + " " +
                           filler + " " + filler + " " + end_word);

  // A span cap of 3 forbids (3, 8); the mass at the end peak dominates the
  // capped alternatives, so the best window ends at 8.
  const Prediction capped = predict_answer({}, graph, params, FusionConfig{},
                                           SelectionHead::kGraph, 3);
  CHECK(capped.span_end == 8);
  CHECK(capped.span_start == 6);
  CHECK(capped.answer == filler + " " + filler + " " + end_word);

  // With flat distributions every span ties and the first one wins.
  std::fill(params.encoder_table.begin(), params.encoder_table.end(), 0.0);
  const Prediction flat = predict_answer({}, graph, params, FusionConfig{},
                                         SelectionHead::kGraph, 10);
  CHECK(flat.span_start == 0);
  CHECK(flat.span_end == 0);
  CHECK(flat.answer == "[SEP]");

  const Prediction none = predict_answer({}, PassageGraph(), params,
                                         FusionConfig{}, SelectionHead::kGraph);
  CHECK(!none.answered);
}

TEST_CASE("init_params is seed-deterministic and bounded") {
  const ReaderParams a = small_params(77, FusionMode::kRelation, 2);
  const ReaderParams b = small_params(77, FusionMode::kRelation, 2);
  const ReaderParams c = small_params(78, FusionMode::kRelation, 2);
  CHECK(a.encoder_table == b.encoder_table);
  CHECK(a.relation_emb == b.relation_emb);
  REQUIRE(a.fusion.size() == 2);
  CHECK(a.fusion[0].weight == b.fusion[0].weight);
  CHECK(a.fusion[1].bias == b.fusion[1].bias);
  CHECK(a.w_sel == b.w_sel);
  CHECK(a.parreader_w_sel == b.parreader_w_sel);
  CHECK(a.encoder_table != c.encoder_table);
  for (double v : a.encoder_table) {
    CHECK(v >= -0.05);
    CHECK(v <= 0.05);
  }
  REQUIRE(a.fusion[0].weight.size() ==
          a.dims.h * 3 * a.dims.h);  // relation mode widens the input

  const ReaderParams z = zero_like(a);
  CHECK(z.encoder_table.size() == a.encoder_table.size());
  for (double v : z.w_sel) CHECK(v == 0.0);
}

TEST_CASE("params snapshots round-trip and re-save byte-identically") {
  TempDir dir("params");
  const ReaderParams params = small_params(91, FusionMode::kRelation, 2);
  save_params(params, dir.file("p.bin"));
  const ReaderParams loaded = load_params(dir.file("p.bin"));
  save_params(loaded, dir.file("p2.bin"));
  CHECK(read_text(dir.file("p.bin")) == read_text(dir.file("p2.bin")));

  CHECK(loaded.dims.h == params.dims.h);
  CHECK(loaded.dims.max_seq == params.dims.max_seq);
  CHECK(loaded.dims.v_hash == params.dims.v_hash);
  CHECK(loaded.mode == params.mode);
  CHECK(loaded.relation_vocab_hash == params.relation_vocab_hash);
  REQUIRE(loaded.fusion.size() == params.fusion.size());
  REQUIRE(loaded.encoder_table.size() == params.encoder_table.size());
  for (std::size_t i = 0; i < params.encoder_table.size(); ++i) {
    // float32 storage: small values keep seven significant digits.
    CHECK(std::abs(loaded.encoder_table[i] - params.encoder_table[i]) <= 1e-7);
  }
}

TEST_CASE("params loading rejects malformed snapshots") {
  TempDir dir("params_err");
  const ReaderParams params = small_params(92, FusionMode::kBinary, 1);
  save_params(params, dir.file("good.bin"));

  write_text(dir.file("not_params.bin"), "kgqawhat and then some bytes");
  CHECK_THROWS_WITH_AS(load_params(dir.file("not_params.bin")),
                       doctest::Contains("not a params snapshot"),
                       std::runtime_error);

  std::string bytes = read_text(dir.file("good.bin"));
  std::string truncated = bytes.substr(0, bytes.size() - 3);
  write_text(dir.file("short.bin"), truncated);
  CHECK_THROWS_WITH_AS(load_params(dir.file("short.bin")),
                       doctest::Contains("truncated"), std::runtime_error);

  write_text(dir.file("long.bin"), bytes + "x");
  CHECK_THROWS_WITH_AS(load_params(dir.file("long.bin")),
                       doctest::Contains("trailing"), std::runtime_error);

  std::string bad_version = bytes;
  bad_version[8] = 9;  // version field follows the 8-byte magic
  write_text(dir.file("version.bin"), bad_version);
  CHECK_THROWS_WITH_AS(load_params(dir.file("version.bin")),
                       doctest::Contains("version"), std::runtime_error);

  CHECK_THROWS_AS(load_params(dir.file("missing.bin")), std::runtime_error);
}

TEST_CASE("parallel graph encoding matches the serial reference exactly") {
  Rng rng(308);
  const PassageGraph graph = random_reader_graph(rng, 6, 8);
  const ReaderParams params = small_params(93, FusionMode::kBinary, 0);
  const std::vector<std::string> question = random_tokens(rng, 3);
  const auto par = encode_graph(question, graph, params);
  const auto ser = encode_graph_serial(question, graph, params);
  REQUIRE(par.size() == ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    CHECK(par[i].matrix == ser[i].matrix);
    CHECK(par[i].valid_len == ser[i].valid_len);
  }
}
