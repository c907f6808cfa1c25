#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/corpus.hpp"
#include "kgqa/retriever.hpp"
#include "kgqa/rng.hpp"

namespace kgqa {

struct ReaderDims {
  std::size_t h = 64;            // hidden width
  std::size_t max_seq = 64;      // encoded sequence length L
  std::size_t v_hash = 1u << 16; // hashed token vocabulary size
};

enum class FusionMode : std::uint32_t { kBinary = 0, kRelation = 1 };
enum class SelectionHead { kGraph, kParReader, kParReaderPP };

std::string_view fusion_mode_name(FusionMode mode);
std::optional<FusionMode> parse_fusion_mode(std::string_view name);
std::string_view selection_head_name(SelectionHead head);
std::optional<SelectionHead> parse_selection_head(std::string_view name);

struct FusionConfig {
  FusionMode mode = FusionMode::kRelation;
  std::size_t layers = 1;   // M; 0 disables fusion entirely
  double dropout = 0.3;     // applied to fusion-layer outputs during training
};

struct FusionLayerParams {
  std::vector<double> weight;  // h x 2h (binary) or h x 3h (relation), row-major
  std::vector<double> bias;    // h
};

// All trainable parameters. Field order here is the serialization order.
struct ReaderParams {
  ReaderDims dims;
  FusionMode mode = FusionMode::kRelation;
  std::uint64_t relation_vocab_hash = 0;

  std::vector<double> encoder_table;        // v_hash x h
  std::vector<double> relation_emb;         // 100 x h
  std::vector<FusionLayerParams> fusion;    // M layers
  std::vector<double> w_sel;                // h
  std::vector<double> w_start;              // h
  std::vector<double> w_end;                // h
  std::vector<double> parreader_w_sel;      // 2 x h

  std::size_t fusion_in_width() const {
    return (mode == FusionMode::kBinary ? 2 : 3) * dims.h;
  }
};

// Uniform[-0.05, 0.05] init, filled field by field in declaration order from
// one seeded stream.
ReaderParams init_params(const ReaderDims& dims, FusionMode mode,
                         std::size_t layers, std::uint64_t relation_vocab_hash,
                         std::uint64_t seed);

// Zero-valued parameter set with the same shapes (gradient accumulator).
ReaderParams zero_like(const ReaderParams& params);

// Binary snapshot: fixed header (magic, version, h, L, v_hash, mode, layers,
// relation vocab hash) followed by the parameter arrays as little-endian
// float32 in declaration order.
void save_params(const ReaderParams& params, const std::filesystem::path& path);
ReaderParams load_params(const std::filesystem::path& path);

// The token sequence fed to the encoder for one passage:
//   question ++ [SEP] ++ <t> ++ title ++ </t> ++ passage
// truncated to max_seq tokens (the cut always falls on the passage tail).
struct SequenceLayout {
  std::vector<std::string> tokens;  // truncated sequence, size == valid_len
  std::size_t passage_offset = 0;   // where passage tokens start
  std::size_t valid_len = 0;
};

SequenceLayout assemble_sequence(const std::vector<std::string>& question_tokens,
                                 const std::vector<std::string>& title_tokens,
                                 const std::vector<std::string>& passage_tokens,
                                 std::size_t max_seq);

// Question-aware gate g = sigmoid(mean of the question tokens' embedding
// rows); an empty question yields the sigmoid of the zero vector.
std::vector<double> question_gate(const std::vector<std::string>& question_tokens,
                                  const ReaderParams& params);

// L x h question-aware token matrix. Row t is
// encoder_table[hash(token_t) mod v_hash] * g (elementwise); rows at and
// beyond valid_len are zero.
struct EncodedPassage {
  std::vector<double> matrix;  // max_seq x h, row-major
  std::size_t h = 0;           // columns, so the matrix is self-describing
  std::size_t valid_len = 0;
};

EncodedPassage text_encode(const std::vector<std::string>& question_tokens,
                           const std::vector<std::string>& title_tokens,
                           const std::vector<std::string>& passage_tokens,
                           const ReaderParams& params);

// Embedding row of a relation index in [0, 100); out of range raises
// std::out_of_range.
std::vector<double> relation_encode(int relation_index,
                                    const ReaderParams& params);

// Encodes every passage of a graph against one question. Parallel over
// passages; the serial variant is the reference the parallel one must match
// exactly.
std::vector<EncodedPassage> encode_graph(
    const std::vector<std::string>& question_tokens, const PassageGraph& graph,
    const ReaderParams& params);
std::vector<EncodedPassage> encode_graph_serial(
    const std::vector<std::string>& question_tokens, const PassageGraph& graph,
    const ReaderParams& params);

// Initial node states: columnwise max over each passage's valid rows.
// A passage with valid_len 0 raises std::runtime_error.
std::vector<std::vector<double>> init_node_states(
    const std::vector<EncodedPassage>& encoded);

// One fusion layer, binary flavor: nodes average W_f [z_i ; z_j] + b_f over
// their non-no_relation neighbors; isolated nodes pass through unchanged.
std::vector<std::vector<double>> fuse_binary(
    const std::vector<std::vector<double>>& z, const PassageGraph& graph,
    const FusionLayerParams& layer, std::size_t h);
std::vector<std::vector<double>> fuse_binary_serial(
    const std::vector<std::vector<double>>& z, const PassageGraph& graph,
    const FusionLayerParams& layer, std::size_t h);

// One fusion layer, relation flavor: nodes average
// W_f [z_i ; r(i,j) ; z_j] + b_f over all j (including j = i, whose relation
// is no_relation).
std::vector<std::vector<double>> fuse_relation(
    const std::vector<std::vector<double>>& z, const PassageGraph& graph,
    const std::vector<double>& relation_emb, const FusionLayerParams& layer,
    std::size_t h);
std::vector<std::vector<double>> fuse_relation_serial(
    const std::vector<std::vector<double>>& z, const PassageGraph& graph,
    const std::vector<double>& relation_emb, const FusionLayerParams& layer,
    std::size_t h);

// Passage-selection distribution.
//   graph / parreader_pp: softmax over passages of z_i . w_sel
//   parreader:            per-passage two-way softmax of parreader_w_sel z_i,
//                         probability of class 1 (entries are independent)
// Callers pass the fused states for the graph head and the initial (max
// pooled) states for the baselines.
std::vector<double> select_passage(const std::vector<std::vector<double>>& z,
                                   const ReaderParams& params,
                                   SelectionHead head);

// Start/end distributions over one encoded sequence: softmax of row . w over
// the valid rows. Vectors span all max_seq positions; padding positions carry
// exactly zero.
struct SpanDistributions {
  std::vector<double> start;  // size max_seq
  std::vector<double> end;
};

SpanDistributions span_scores(const EncodedPassage& encoded,
                              const ReaderParams& params);

inline constexpr std::size_t kMaxSpanLen = 10;

struct Prediction {
  bool answered = false;
  std::size_t passage_index = 0;
  std::size_t span_start = 0;  // sequence positions
  std::size_t span_end = 0;
  std::string answer;
  double p_sel = 0.0;
};

// Everything the forward pass produced, kept for backprop and prediction.
struct ReaderForward {
  std::vector<SequenceLayout> layouts;
  std::vector<std::vector<std::size_t>> row_ids;  // per passage, per position
  std::vector<std::size_t> question_row_ids;      // hashed question tokens
  std::vector<double> gate;                       // h
  std::vector<EncodedPassage> encoded;
  std::vector<std::vector<std::size_t>> pool_argmax;    // per passage, per column
  std::vector<std::vector<std::vector<double>>> z;      // [layers+1][n][h]
  std::vector<std::vector<double>> dropout_keep;        // per layer, n*h scale factors
  std::vector<double> p_sel;
};

// Runs encode -> pool -> fusion -> selection. Fusion runs only for the graph
// head. When train is true, inverted dropout masks are drawn from rng and the
// kept activations are scaled by 1/(1-p); inference applies no dropout.
ReaderForward run_reader(const std::vector<std::string>& question_tokens,
                         const PassageGraph& graph, const ReaderParams& params,
                         const FusionConfig& fusion, SelectionHead head,
                         bool train = false, Rng* rng = nullptr);

// Answer prediction: the argmax-probability passage (ties to the smallest
// index), then the span maximizing P_start(j) * P_end(k) with
// j <= k <= j + max_span_len - 1 (ties to the smaller j, then k). Returns an
// unanswered prediction for an empty graph.
Prediction predict_answer(const std::vector<std::string>& question_tokens,
                          const PassageGraph& graph, const ReaderParams& params,
                          const FusionConfig& fusion, SelectionHead head,
                          std::size_t max_span_len = kMaxSpanLen);

}  // namespace kgqa
