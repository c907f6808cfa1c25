#include "kgqa/reader.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "kgqa/text.hpp"

namespace kgqa {

std::string_view fusion_mode_name(FusionMode mode) {
  return mode == FusionMode::kBinary ? "binary" : "relation";
}

std::optional<FusionMode> parse_fusion_mode(std::string_view name) {
  if (name == "binary") return FusionMode::kBinary;
  if (name == "relation") return FusionMode::kRelation;
  return std::nullopt;
}

std::string_view selection_head_name(SelectionHead head) {
  switch (head) {
    case SelectionHead::kGraph: return "graph";
    case SelectionHead::kParReader: return "parreader";
    case SelectionHead::kParReaderPP: return "parreader_pp";
  }
  return "graph";
}

std::optional<SelectionHead> parse_selection_head(std::string_view name) {
  if (name == "graph") return SelectionHead::kGraph;
  if (name == "parreader") return SelectionHead::kParReader;
  if (name == "parreader_pp") return SelectionHead::kParReaderPP;
  return std::nullopt;
}

ReaderParams init_params(const ReaderDims& dims, FusionMode mode,
                         std::size_t layers, std::uint64_t relation_vocab_hash,
                         std::uint64_t seed) {
  ReaderParams p;
  p.dims = dims;
  p.mode = mode;
  p.relation_vocab_hash = relation_vocab_hash;
  Rng rng(seed);
  auto fill = [&rng](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (double& x : v) x = rng.uniform_range(-0.05, 0.05);
  };
  fill(p.encoder_table, dims.v_hash * dims.h);
  fill(p.relation_emb, RelationVocab::kIndexSize * dims.h);
  p.fusion.resize(layers);
  for (FusionLayerParams& layer : p.fusion) {
    fill(layer.weight, dims.h * p.fusion_in_width());
    fill(layer.bias, dims.h);
  }
  fill(p.w_sel, dims.h);
  fill(p.w_start, dims.h);
  fill(p.w_end, dims.h);
  fill(p.parreader_w_sel, 2 * dims.h);
  return p;
}

ReaderParams zero_like(const ReaderParams& params) {
  ReaderParams z;
  z.dims = params.dims;
  z.mode = params.mode;
  z.relation_vocab_hash = params.relation_vocab_hash;
  z.encoder_table.assign(params.encoder_table.size(), 0.0);
  z.relation_emb.assign(params.relation_emb.size(), 0.0);
  z.fusion.resize(params.fusion.size());
  for (std::size_t l = 0; l < params.fusion.size(); ++l) {
    z.fusion[l].weight.assign(params.fusion[l].weight.size(), 0.0);
    z.fusion[l].bias.assign(params.fusion[l].bias.size(), 0.0);
  }
  z.w_sel.assign(params.w_sel.size(), 0.0);
  z.w_start.assign(params.w_start.size(), 0.0);
  z.w_end.assign(params.w_end.size(), 0.0);
  z.parreader_w_sel.assign(params.parreader_w_sel.size(), 0.0);
  return z;
}

namespace {

constexpr char kParamsMagic[8] = {'k', 'g', 'q', 'a', 'p', 'r', 'm', 's'};
constexpr std::uint32_t kParamsVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffull));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32_array(std::ostream& out, const std::vector<double>& v) {
  for (double x : v) {
    float f = static_cast<float>(x);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated params snapshot");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t lo = get_u32(in);
  std::uint64_t hi = get_u32(in);
  return lo | (hi << 32);
}

void get_f32_array(std::istream& in, std::vector<double>& v, std::size_t n) {
  v.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = get_u32(in);
    float f;
    std::memcpy(&f, &bits, 4);
    v[i] = static_cast<double>(f);
  }
}

}  // namespace

void save_params(const ReaderParams& params,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kParamsMagic, sizeof(kParamsMagic));
  put_u32(out, kParamsVersion);
  put_u32(out, static_cast<std::uint32_t>(params.dims.h));
  put_u32(out, static_cast<std::uint32_t>(params.dims.max_seq));
  put_u32(out, static_cast<std::uint32_t>(params.dims.v_hash));
  put_u32(out, static_cast<std::uint32_t>(params.mode));
  put_u32(out, static_cast<std::uint32_t>(params.fusion.size()));
  put_u64(out, params.relation_vocab_hash);
  put_f32_array(out, params.encoder_table);
  put_f32_array(out, params.relation_emb);
  for (const FusionLayerParams& layer : params.fusion) {
    put_f32_array(out, layer.weight);
    put_f32_array(out, layer.bias);
  }
  put_f32_array(out, params.w_sel);
  put_f32_array(out, params.w_start);
  put_f32_array(out, params.w_end);
  put_f32_array(out, params.parreader_w_sel);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ReaderParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kParamsMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(path.string() + " is not a params snapshot");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kParamsVersion) {
    throw std::runtime_error("unsupported params snapshot version " +
                             std::to_string(version));
  }
  ReaderParams p;
  p.dims.h = get_u32(in);
  p.dims.max_seq = get_u32(in);
  p.dims.v_hash = get_u32(in);
  const std::uint32_t mode = get_u32(in);
  if (mode > 1) throw std::runtime_error("bad fusion mode in params snapshot");
  p.mode = static_cast<FusionMode>(mode);
  const std::uint32_t layers = get_u32(in);
  p.relation_vocab_hash = get_u64(in);
  get_f32_array(in, p.encoder_table, p.dims.v_hash * p.dims.h);
  get_f32_array(in, p.relation_emb, RelationVocab::kIndexSize * p.dims.h);
  p.fusion.resize(layers);
  for (FusionLayerParams& layer : p.fusion) {
    get_f32_array(in, layer.weight, p.dims.h * p.fusion_in_width());
    get_f32_array(in, layer.bias, p.dims.h);
  }
  get_f32_array(in, p.w_sel, p.dims.h);
  get_f32_array(in, p.w_start, p.dims.h);
  get_f32_array(in, p.w_end, p.dims.h);
  get_f32_array(in, p.parreader_w_sel, 2 * p.dims.h);
  in.peek();
  if (!in.eof()) throw std::runtime_error("trailing bytes in params snapshot");
  return p;
}

SequenceLayout assemble_sequence(const std::vector<std::string>& question_tokens,
                                 const std::vector<std::string>& title_tokens,
                                 const std::vector<std::string>& passage_tokens,
                                 std::size_t max_seq) {
  SequenceLayout layout;
  std::vector<std::string>& seq = layout.tokens;
  seq.reserve(question_tokens.size() + title_tokens.size() +
              passage_tokens.size() + 3);
  seq.insert(seq.end(), question_tokens.begin(), question_tokens.end());
  seq.push_back("[SEP]");
  seq.push_back("<t>");
  seq.insert(seq.end(), title_tokens.begin(), title_tokens.end());
  seq.push_back("</t>");
  const std::size_t prefix_len = seq.size();
  seq.insert(seq.end(), passage_tokens.begin(), passage_tokens.end());
  if (seq.size() > max_seq) seq.resize(max_seq);
  layout.valid_len = seq.size();
  layout.passage_offset = std::min(prefix_len, layout.valid_len);
  return layout;
}

namespace {

std::size_t hash_row(const std::string& token, std::size_t v_hash) {
  return static_cast<std::size_t>(fnv1a64(token) %
                                  static_cast<std::uint64_t>(v_hash));
}

std::vector<std::size_t> hash_rows(const std::vector<std::string>& tokens,
                                   std::size_t v_hash) {
  std::vector<std::size_t> ids(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    ids[t] = hash_row(tokens[t], v_hash);
  }
  return ids;
}

EncodedPassage encode_rows(const std::vector<std::size_t>& row_ids,
                           std::size_t valid_len,
                           const std::vector<double>& gate,
                           const ReaderParams& params) {
  const std::size_t h = params.dims.h;
  EncodedPassage out;
  out.h = h;
  out.valid_len = valid_len;
  out.matrix.assign(params.dims.max_seq * h, 0.0);
  for (std::size_t t = 0; t < valid_len; ++t) {
    const double* row = params.encoder_table.data() + row_ids[t] * h;
    for (std::size_t d = 0; d < h; ++d) {
      out.matrix[t * h + d] = row[d] * gate[d];
    }
  }
  return out;
}

// Softmax with first-max subtraction; summation in index order.
std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> probs(logits.size());
  if (logits.empty()) return probs;
  double top = logits[0];
  for (double v : logits) {
    if (v > top) top = v;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - top);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

std::vector<double> pool_passage(const EncodedPassage& encoded, std::size_t h,
                                 std::vector<std::size_t>* argmax) {
  if (encoded.valid_len == 0) {
    throw std::runtime_error("cannot pool an empty passage");
  }
  std::vector<double> state(h);
  if (argmax != nullptr) argmax->assign(h, 0);
  for (std::size_t d = 0; d < h; ++d) state[d] = encoded.matrix[d];
  for (std::size_t t = 1; t < encoded.valid_len; ++t) {
    for (std::size_t d = 0; d < h; ++d) {
      const double v = encoded.matrix[t * h + d];
      if (v > state[d]) {
        state[d] = v;
        if (argmax != nullptr) (*argmax)[d] = t;
      }
    }
  }
  return state;
}

std::vector<double> fuse_binary_node(const std::vector<std::vector<double>>& z,
                                     const PassageGraph& graph,
                                     const FusionLayerParams& layer,
                                     std::size_t h, std::size_t i) {
  const std::size_t n = z.size();
  std::vector<std::size_t> neighbors;
  for (std::size_t j = 0; j < n; ++j) {
    if (graph.relation(i, j) != RelationVocab::kNoRelation) {
      neighbors.push_back(j);
    }
  }
  if (neighbors.empty()) return z[i];
  std::vector<double> acc(h, 0.0);
  for (std::size_t j : neighbors) {
    for (std::size_t r = 0; r < h; ++r) {
      double v = layer.bias[r];
      const double* w = layer.weight.data() + r * 2 * h;
      v += dot(w, z[i].data(), h);
      v += dot(w + h, z[j].data(), h);
      acc[r] += v;
    }
  }
  const double inv = 1.0 / static_cast<double>(neighbors.size());
  for (double& v : acc) v *= inv;
  return acc;
}

std::vector<double> fuse_relation_node(
    const std::vector<std::vector<double>>& z, const PassageGraph& graph,
    const std::vector<double>& relation_emb, const FusionLayerParams& layer,
    std::size_t h, std::size_t i) {
  const std::size_t n = z.size();
  std::vector<double> acc(h, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t rel = graph.relation(i, j);
    const double* rel_row = relation_emb.data() + rel * h;
    for (std::size_t r = 0; r < h; ++r) {
      double v = layer.bias[r];
      const double* w = layer.weight.data() + r * 3 * h;
      v += dot(w, z[i].data(), h);
      v += dot(w + h, rel_row, h);
      v += dot(w + 2 * h, z[j].data(), h);
      acc[r] += v;
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : acc) v *= inv;
  return acc;
}

}  // namespace

std::vector<double> question_gate(const std::vector<std::string>& question_tokens,
                                  const ReaderParams& params) {
  const std::size_t h = params.dims.h;
  std::vector<double> mean(h, 0.0);
  for (const std::string& token : question_tokens) {
    const double* row =
        params.encoder_table.data() + hash_row(token, params.dims.v_hash) * h;
    for (std::size_t d = 0; d < h; ++d) mean[d] += row[d];
  }
  if (!question_tokens.empty()) {
    const double inv = 1.0 / static_cast<double>(question_tokens.size());
    for (double& v : mean) v *= inv;
  }
  for (double& v : mean) v = 1.0 / (1.0 + std::exp(-v));
  return mean;
}

EncodedPassage text_encode(const std::vector<std::string>& question_tokens,
                           const std::vector<std::string>& title_tokens,
                           const std::vector<std::string>& passage_tokens,
                           const ReaderParams& params) {
  const SequenceLayout layout = assemble_sequence(
      question_tokens, title_tokens, passage_tokens, params.dims.max_seq);
  const std::vector<std::size_t> rows =
      hash_rows(layout.tokens, params.dims.v_hash);
  const std::vector<double> gate = question_gate(question_tokens, params);
  return encode_rows(rows, layout.valid_len, gate, params);
}

std::vector<double> relation_encode(int relation_index,
                                    const ReaderParams& params) {
  if (relation_index < 0 ||
      relation_index >= static_cast<int>(RelationVocab::kIndexSize)) {
    throw std::out_of_range("relation index " +
                            std::to_string(relation_index) +
                            " outside [0, 100)");
  }
  const std::size_t h = params.dims.h;
  const double* row =
      params.relation_emb.data() + static_cast<std::size_t>(relation_index) * h;
  return std::vector<double>(row, row + h);
}

std::vector<EncodedPassage> encode_graph(
    const std::vector<std::string>& question_tokens, const PassageGraph& graph,
    const ReaderParams& params) {
  const long n = static_cast<long>(graph.size());
  std::vector<EncodedPassage> out(graph.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const GraphPassage& p = graph.passage(static_cast<std::size_t>(i));
    out[i] = text_encode(question_tokens, tokenize(p.title), p.tokens, params);
  }
  return out;
}

std::vector<EncodedPassage> encode_graph_serial(
    const std::vector<std::string>& question_tokens, const PassageGraph& graph,
    const ReaderParams& params) {
  std::vector<EncodedPassage> out(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const GraphPassage& p = graph.passage(i);
    out[i] = text_encode(question_tokens, tokenize(p.title), p.tokens, params);
  }
  return out;
}

std::vector<std::vector<double>> init_node_states(
    const std::vector<EncodedPassage>& encoded) {
  std::vector<std::vector<double>> states(encoded.size());
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    states[i] = pool_passage(encoded[i], encoded[i].h, nullptr);
  }
  return states;
}

std::vector<std::vector<double>> fuse_binary(
    const std::vector<std::vector<double>>& z, const PassageGraph& graph,
    const FusionLayerParams& layer, std::size_t h) {
  const long n = static_cast<long>(z.size());
  std::vector<std::vector<double>> out(z.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    out[i] = fuse_binary_node(z, graph, layer, h, static_cast<std::size_t>(i));
  }
  return out;
}

std::vector<std::vector<double>> fuse_binary_serial(
    const std::vector<std::vector<double>>& z, const PassageGraph& graph,
    const FusionLayerParams& layer, std::size_t h) {
  std::vector<std::vector<double>> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = fuse_binary_node(z, graph, layer, h, i);
  }
  return out;
}

std::vector<std::vector<double>> fuse_relation(
    const std::vector<std::vector<double>>& z, const PassageGraph& graph,
    const std::vector<double>& relation_emb, const FusionLayerParams& layer,
    std::size_t h) {
  const long n = static_cast<long>(z.size());
  std::vector<std::vector<double>> out(z.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    out[i] = fuse_relation_node(z, graph, relation_emb, layer, h,
                                static_cast<std::size_t>(i));
  }
  return out;
}

std::vector<std::vector<double>> fuse_relation_serial(
    const std::vector<std::vector<double>>& z, const PassageGraph& graph,
    const std::vector<double>& relation_emb, const FusionLayerParams& layer,
    std::size_t h) {
  std::vector<std::vector<double>> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = fuse_relation_node(z, graph, relation_emb, layer, h, i);
  }
  return out;
}

std::vector<double> select_passage(const std::vector<std::vector<double>>& z,
                                   const ReaderParams& params,
                                   SelectionHead head) {
  const std::size_t n = z.size();
  if (n == 0) return {};
  const std::size_t h = params.dims.h;
  if (head == SelectionHead::kParReader) {
    std::vector<double> probs(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double l0 = dot(params.parreader_w_sel.data(), z[i].data(), h);
      const double l1 = dot(params.parreader_w_sel.data() + h, z[i].data(), h);
      const double top = l0 > l1 ? l0 : l1;
      const double e0 = std::exp(l0 - top);
      const double e1 = std::exp(l1 - top);
      probs[i] = e1 / (e0 + e1);
    }
    return probs;
  }
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    logits[i] = dot(z[i].data(), params.w_sel.data(), h);
  }
  return softmax(logits);
}

SpanDistributions span_scores(const EncodedPassage& encoded,
                              const ReaderParams& params) {
  const std::size_t h = params.dims.h;
  const std::size_t max_seq = params.dims.max_seq;
  SpanDistributions dist;
  dist.start.assign(max_seq, 0.0);
  dist.end.assign(max_seq, 0.0);
  if (encoded.valid_len == 0) return dist;
  std::vector<double> start_logits(encoded.valid_len);
  std::vector<double> end_logits(encoded.valid_len);
  for (std::size_t t = 0; t < encoded.valid_len; ++t) {
    const double* row = encoded.matrix.data() + t * h;
    start_logits[t] = dot(row, params.w_start.data(), h);
    end_logits[t] = dot(row, params.w_end.data(), h);
  }
  const std::vector<double> start = softmax(start_logits);
  const std::vector<double> end = softmax(end_logits);
  for (std::size_t t = 0; t < encoded.valid_len; ++t) {
    dist.start[t] = start[t];
    dist.end[t] = end[t];
  }
  return dist;
}

ReaderForward run_reader(const std::vector<std::string>& question_tokens,
                         const PassageGraph& graph, const ReaderParams& params,
                         const FusionConfig& fusion, SelectionHead head,
                         bool train, Rng* rng) {
  const std::size_t n = graph.size();
  const std::size_t h = params.dims.h;
  ReaderForward fwd;
  fwd.question_row_ids = hash_rows(question_tokens, params.dims.v_hash);
  fwd.gate = question_gate(question_tokens, params);
  fwd.layouts.resize(n);
  fwd.row_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const GraphPassage& p = graph.passage(i);
    fwd.layouts[i] = assemble_sequence(question_tokens, tokenize(p.title),
                                       p.tokens, params.dims.max_seq);
    fwd.row_ids[i] = hash_rows(fwd.layouts[i].tokens, params.dims.v_hash);
  }
  fwd.encoded.resize(n);
  {
    const long ln = static_cast<long>(n);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < ln; ++i) {
      fwd.encoded[i] = encode_rows(fwd.row_ids[i], fwd.layouts[i].valid_len,
                                   fwd.gate, params);
    }
  }
  fwd.pool_argmax.resize(n);
  fwd.z.resize(1);
  fwd.z[0].resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    fwd.z[0][i] = pool_passage(fwd.encoded[i], h, &fwd.pool_argmax[i]);
  }
  const std::size_t layers =
      head == SelectionHead::kGraph
          ? std::min(fusion.layers, params.fusion.size())
          : 0;
  const bool drop = train && fusion.dropout > 0.0;
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<std::vector<double>> next =
        params.mode == FusionMode::kBinary
            ? fuse_binary(fwd.z[l], graph, params.fusion[l], h)
            : fuse_relation(fwd.z[l], graph, params.relation_emb,
                            params.fusion[l], h);
    if (drop) {
      std::vector<double> keep(n * h, 1.0);
      const double scale = 1.0 / (1.0 - fusion.dropout);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < h; ++d) {
          const double u = rng->uniform_real();
          keep[i * h + d] = u < fusion.dropout ? 0.0 : scale;
          next[i][d] *= keep[i * h + d];
        }
      }
      fwd.dropout_keep.push_back(std::move(keep));
    }
    fwd.z.push_back(std::move(next));
  }
  fwd.p_sel = select_passage(fwd.z.back(), params, head);
  return fwd;
}

Prediction predict_answer(const std::vector<std::string>& question_tokens,
                          const PassageGraph& graph, const ReaderParams& params,
                          const FusionConfig& fusion, SelectionHead head,
                          std::size_t max_span_len) {
  Prediction pred;
  if (graph.size() == 0) return pred;
  const ReaderForward fwd =
      run_reader(question_tokens, graph, params, fusion, head);
  std::size_t best = 0;
  for (std::size_t i = 1; i < fwd.p_sel.size(); ++i) {
    if (fwd.p_sel[i] > fwd.p_sel[best]) best = i;
  }
  const SpanDistributions dist = span_scores(fwd.encoded[best], params);
  const std::size_t valid = fwd.encoded[best].valid_len;
  double best_p = -1.0;
  std::size_t best_j = 0;
  std::size_t best_k = 0;
  for (std::size_t j = 0; j < valid; ++j) {
    const std::size_t k_hi = std::min(valid - 1, j + max_span_len - 1);
    for (std::size_t k = j; k <= k_hi; ++k) {
      const double p = dist.start[j] * dist.end[k];
      if (p > best_p) {
        best_p = p;
        best_j = j;
        best_k = k;
      }
    }
  }
  pred.answered = true;
  pred.passage_index = best;
  pred.span_start = best_j;
  pred.span_end = best_k;
  pred.answer = detokenize(fwd.layouts[best].tokens, best_j, best_k + 1);
  pred.p_sel = fwd.p_sel[best];
  return pred;
}

}  // namespace kgqa
