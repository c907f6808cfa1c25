#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kgqa/reader.hpp"
#include "kgqa/retriever.hpp"
#include "kgqa/rng.hpp"

namespace kgqa {

struct QAExample {
  std::string question;
  std::vector<std::string> answers;
};

// Answer-span labels for one graph, in encoded-sequence coordinates.
// spans[i] lists the (start, end) pairs inside passage i whose detokenization
// matches a gold answer after normalization.
struct SpanLabels {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> spans;

  bool any() const;
  std::size_t labeled_count() const;
};

// Answer-string normalization used for matching: lowercase, remove ASCII
// punctuation, drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);
bool exact_match(std::string_view prediction,
                 const std::vector<std::string>& golds);

// Exhaustively scans every passage's in-sequence tokens for subsequences of at
// most max_span_len tokens whose normalized detokenization equals a normalized
// gold answer.
SpanLabels find_answer_spans(const std::vector<std::string>& question_tokens,
                             const PassageGraph& graph,
                             const std::vector<std::string>& answers,
                             std::size_t max_seq,
                             std::size_t max_span_len = kMaxSpanLen);

enum class SamplingMode { kUniform, kSubgraph };

std::string_view sampling_mode_name(SamplingMode mode);
std::optional<SamplingMode> parse_sampling_mode(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t steps = 500;
  std::size_t sample_cap = 20;  // passages kept per training instance
  SamplingMode sampling = SamplingMode::kUniform;
  std::uint64_t seed = 0;

  // Adam moment constants.
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;
};

// Maximum-marginal-likelihood objective for one instance:
//   -[ sum over labeled passages of log P_sel(i)
//      + sum over labeled passages of log sum over spans of
//        P_start,i(s) * P_end,i(e) ]
// An instance with no labeled passage raises std::runtime_error
// ("unanswerable instance").
double marginal_loss(const std::vector<std::string>& question_tokens,
                     const PassageGraph& graph, const SpanLabels& labels,
                     const ReaderParams& params, const FusionConfig& fusion,
                     SelectionHead head);

// Loss plus analytic gradients for every parameter. Parameters outside the
// active configuration (relation embeddings in binary mode, the unused
// selection head's weights) get exactly zero gradient. When train is true the
// same dropout draw is applied in forward and backward.
struct LossGradients {
  double loss = 0.0;
  ReaderParams grads;  // same shapes as the parameters
};

LossGradients loss_and_gradients(const std::vector<std::string>& question_tokens,
                                 const PassageGraph& graph,
                                 const SpanLabels& labels,
                                 const ReaderParams& params,
                                 const FusionConfig& fusion, SelectionHead head,
                                 bool train = false, Rng* rng = nullptr,
                                 double dropout_override = -1.0);

// Down-samples a graph to at most cap passages for one training step. Uniform
// mode keeps one uniformly chosen labeled passage plus a uniform sample of the
// rest; subgraph mode grows a BFS tree (over edges in either direction,
// neighbors in index order) from a uniformly chosen labeled passage and backs
// off to uniform filling when the component is exhausted. Passages keep their
// original relative order.
struct SampledGraph {
  PassageGraph graph;
  SpanLabels labels;
  std::vector<std::size_t> original_indices;
};

SampledGraph sample_training_passages(const PassageGraph& graph,
                                       const SpanLabels& labels,
                                       std::size_t cap, SamplingMode mode,
                                       Rng& rng);

// One pre-retrieved, pre-labeled training instance.
struct TrainingInstance {
  QAExample example;
  std::vector<std::string> question_tokens;
  PassageGraph graph;
  SpanLabels labels;
};

struct AdamState {
  ReaderParams m;
  ReaderParams v;
  std::size_t step = 0;
};

// One Adam update over all parameter arrays (parallel over elements, with a
// serial reference kept for testing).
void adam_step(ReaderParams& params, const ReaderParams& grads,
               AdamState& state, const TrainConfig& config);
void adam_step_serial(ReaderParams& params, const ReaderParams& grads,
                      AdamState& state, const TrainConfig& config);

struct TrainResult {
  ReaderParams params;
  std::vector<std::pair<std::size_t, double>> loss_trace;  // (step, loss)
  std::size_t skipped = 0;  // instances with no labeled passage
};

// SGD loop: per step, sample an instance uniformly, down-sample its passages,
// take the dropout-regularized gradient, and apply Adam. Instances with no
// labeled passage are counted and skipped. Deterministic given the seed.
TrainResult train(const std::vector<TrainingInstance>& instances,
                  const ReaderDims& dims, const FusionConfig& fusion,
                  SelectionHead head, std::uint64_t relation_vocab_hash,
                  const TrainConfig& config);

}  // namespace kgqa
