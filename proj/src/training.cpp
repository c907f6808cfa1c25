#include "kgqa/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kgqa/text.hpp"

namespace kgqa {

bool SpanLabels::any() const {
  for (const auto& s : spans) {
    if (!s.empty()) return true;
  }
  return false;
}

std::size_t SpanLabels::labeled_count() const {
  std::size_t count = 0;
  for (const auto& s : spans) {
    if (!s.empty()) ++count;
  }
  return count;
}

namespace {

bool is_ascii_punct(char c) {
  const unsigned char u = static_cast<unsigned char>(c);
  return (u >= '!' && u <= '/') || (u >= ':' && u <= '@') ||
         (u >= '[' && u <= '`') || (u >= '{' && u <= '~');
}

bool is_ascii_space(char c) {
  const unsigned char u = static_cast<unsigned char>(c);
  return u == ' ' || u == '\t' || u == '\n' || u == '\r' || u == '\f' ||
         u == '\v';
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    if (is_ascii_punct(c)) continue;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    cleaned.push_back(c);
  }
  std::string out;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && is_ascii_space(cleaned[i])) ++i;
    std::size_t j = i;
    while (j < cleaned.size() && !is_ascii_space(cleaned[j])) ++j;
    if (j > i) {
      std::string_view word(cleaned.data() + i, j - i);
      if (word != "a" && word != "an" && word != "the") {
        if (!out.empty()) out.push_back(' ');
        out.append(word);
      }
    }
    i = j;
  }
  return out;
}

bool exact_match(std::string_view prediction,
                 const std::vector<std::string>& golds) {
  const std::string norm_pred = normalize_answer(prediction);
  for (const std::string& gold : golds) {
    if (norm_pred == normalize_answer(gold)) return true;
  }
  return false;
}

SpanLabels find_answer_spans(const std::vector<std::string>& question_tokens,
                             const PassageGraph& graph,
                             const std::vector<std::string>& answers,
                             std::size_t max_seq, std::size_t max_span_len) {
  std::vector<std::string> norm_answers;
  for (const std::string& a : answers) {
    std::string n = normalize_answer(a);
    if (!n.empty()) norm_answers.push_back(std::move(n));
  }
  SpanLabels labels;
  labels.spans.resize(graph.size());
  if (norm_answers.empty()) return labels;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const GraphPassage& p = graph.passage(i);
    const SequenceLayout layout = assemble_sequence(
        question_tokens, tokenize(p.title), p.tokens, max_seq);
    for (std::size_t s = layout.passage_offset; s < layout.valid_len; ++s) {
      const std::size_t e_hi =
          std::min(layout.valid_len - 1, s + max_span_len - 1);
      for (std::size_t e = s; e <= e_hi; ++e) {
        const std::string cand =
            normalize_answer(detokenize(layout.tokens, s, e + 1));
        if (cand.empty()) continue;
        if (std::find(norm_answers.begin(), norm_answers.end(), cand) !=
            norm_answers.end()) {
          labels.spans[i].emplace_back(s, e);
        }
      }
    }
  }
  return labels;
}

std::string_view sampling_mode_name(SamplingMode mode) {
  return mode == SamplingMode::kUniform ? "uniform" : "subgraph";
}

std::optional<SamplingMode> parse_sampling_mode(std::string_view name) {
  if (name == "uniform") return SamplingMode::kUniform;
  if (name == "subgraph") return SamplingMode::kSubgraph;
  return std::nullopt;
}

namespace {

// Shared loss arithmetic so the standalone loss and the gradient path agree
// term for term: selection terms over labeled passages in index order, then
// span terms in the same order.
double loss_terms(const std::vector<double>& p_sel,
                  const std::vector<SpanDistributions>& dists,
                  const SpanLabels& labels, std::vector<double>* span_sums) {
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.spans.size(); ++i) {
    if (labels.spans[i].empty()) continue;
    loss += -std::log(p_sel[i]);
  }
  for (std::size_t i = 0; i < labels.spans.size(); ++i) {
    if (labels.spans[i].empty()) continue;
    double sum = 0.0;
    for (const auto& [s, e] : labels.spans[i]) {
      sum += dists[i].start[s] * dists[i].end[e];
    }
    if (span_sums != nullptr) (*span_sums)[i] = sum;
    loss += -std::log(sum);
  }
  return loss;
}

void check_instance(const PassageGraph& graph, const SpanLabels& labels) {
  if (labels.spans.size() != graph.size()) {
    throw std::invalid_argument("label vector size mismatch");
  }
  if (!labels.any()) throw std::runtime_error("unanswerable instance");
}

}  // namespace

double marginal_loss(const std::vector<std::string>& question_tokens,
                     const PassageGraph& graph, const SpanLabels& labels,
                     const ReaderParams& params, const FusionConfig& fusion,
                     SelectionHead head) {
  check_instance(graph, labels);
  const ReaderForward fwd =
      run_reader(question_tokens, graph, params, fusion, head);
  std::vector<SpanDistributions> dists(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (!labels.spans[i].empty()) dists[i] = span_scores(fwd.encoded[i], params);
  }
  return loss_terms(fwd.p_sel, dists, labels, nullptr);
}

LossGradients loss_and_gradients(const std::vector<std::string>& question_tokens,
                                 const PassageGraph& graph,
                                 const SpanLabels& labels,
                                 const ReaderParams& params,
                                 const FusionConfig& fusion, SelectionHead head,
                                 bool train, Rng* rng,
                                 double dropout_override) {
  check_instance(graph, labels);
  FusionConfig effective = fusion;
  if (dropout_override >= 0.0) effective.dropout = dropout_override;

  const std::size_t n = graph.size();
  const std::size_t h = params.dims.h;
  const std::size_t max_seq = params.dims.max_seq;

  const ReaderForward fwd =
      run_reader(question_tokens, graph, params, effective, head, train, rng);

  LossGradients out;
  out.grads = zero_like(params);
  ReaderParams& g = out.grads;

  std::vector<SpanDistributions> dists(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!labels.spans[i].empty()) dists[i] = span_scores(fwd.encoded[i], params);
  }
  std::vector<double> span_sums(n, 0.0);
  out.loss = loss_terms(fwd.p_sel, dists, labels, &span_sums);

  // Gradient wrt every encoded matrix, filled by the span and pooling paths.
  std::vector<std::vector<double>> d_enc(n);
  for (std::size_t i = 0; i < n; ++i) d_enc[i].assign(max_seq * h, 0.0);

  // --- selection head backward ---
  std::vector<std::vector<double>> dz(n, std::vector<double>(h, 0.0));
  const std::vector<std::vector<double>>& z_top = fwd.z.back();
  if (head == SelectionHead::kParReader) {
    for (std::size_t i = 0; i < n; ++i) {
      if (labels.spans[i].empty()) continue;
      const double p = fwd.p_sel[i];
      const double dl0 = 1.0 - p;
      const double dl1 = p - 1.0;
      for (std::size_t d = 0; d < h; ++d) {
        g.parreader_w_sel[d] += dl0 * z_top[i][d];
        g.parreader_w_sel[h + d] += dl1 * z_top[i][d];
        dz[i][d] += dl0 * params.parreader_w_sel[d] +
                    dl1 * params.parreader_w_sel[h + d];
      }
    }
  } else {
    const double labeled = static_cast<double>(labels.labeled_count());
    for (std::size_t i = 0; i < n; ++i) {
      const double ds =
          labeled * fwd.p_sel[i] - (labels.spans[i].empty() ? 0.0 : 1.0);
      for (std::size_t d = 0; d < h; ++d) {
        g.w_sel[d] += ds * z_top[i][d];
        dz[i][d] += ds * params.w_sel[d];
      }
    }
  }

  // --- span backward (over the raw encoded matrices) ---
  for (std::size_t i = 0; i < n; ++i) {
    if (labels.spans[i].empty()) continue;
    const std::size_t valid = fwd.encoded[i].valid_len;
    const double inv_sum = 1.0 / span_sums[i];
    std::vector<double> d_start(valid, 0.0);
    std::vector<double> d_end(valid, 0.0);
    for (const auto& [s, e] : labels.spans[i]) {
      d_start[s] += -inv_sum * dists[i].end[e];
      d_end[e] += -inv_sum * dists[i].start[s];
    }
    // Softmax backward: dlogit_t = p_t (dp_t - sum_u p_u dp_u).
    double start_dot = 0.0;
    double end_dot = 0.0;
    for (std::size_t t = 0; t < valid; ++t) {
      start_dot += dists[i].start[t] * d_start[t];
      end_dot += dists[i].end[t] * d_end[t];
    }
    for (std::size_t t = 0; t < valid; ++t) {
      const double dls = dists[i].start[t] * (d_start[t] - start_dot);
      const double dle = dists[i].end[t] * (d_end[t] - end_dot);
      const double* row = fwd.encoded[i].matrix.data() + t * h;
      for (std::size_t d = 0; d < h; ++d) {
        g.w_start[d] += dls * row[d];
        g.w_end[d] += dle * row[d];
        d_enc[i][t * h + d] += dls * params.w_start[d] + dle * params.w_end[d];
      }
    }
  }

  // --- fusion backward, top layer down ---
  const std::size_t layers_run = fwd.z.size() - 1;
  for (std::size_t l = layers_run; l >= 1; --l) {
    // Undo dropout scaling on this layer's outputs.
    std::vector<std::vector<double>> d_pre = dz;
    if (l - 1 < fwd.dropout_keep.size()) {
      const std::vector<double>& keep = fwd.dropout_keep[l - 1];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < h; ++d) d_pre[i][d] *= keep[i * h + d];
      }
    }
    const std::vector<std::vector<double>>& z_in = fwd.z[l - 1];
    std::vector<std::vector<double>> dz_in(n, std::vector<double>(h, 0.0));
    FusionLayerParams& gl = g.fusion[l - 1];
    const FusionLayerParams& pl = params.fusion[l - 1];

    if (params.mode == FusionMode::kRelation) {
      const double inv_n = 1.0 / static_cast<double>(n);
      // Sums reused across nodes: every term carries weight 1/n.
      std::vector<double> pre_sum(h, 0.0);  // sum_i d_pre_i
      std::vector<double> z_sum(h, 0.0);    // sum_j z_in_j
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < h; ++d) {
          pre_sum[d] += d_pre[i][d];
          z_sum[d] += z_in[i][d];
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < h; ++r) gl.bias[r] += d_pre[i][r];
        // Left block: z_i appears in all n terms, total weight 1.
        for (std::size_t r = 0; r < h; ++r) {
          const double dp = d_pre[i][r];
          double* w_row = gl.weight.data() + r * 3 * h;
          for (std::size_t c = 0; c < h; ++c) w_row[c] += dp * z_in[i][c];
        }
        // Middle block: relation rows of the i-th node's pairs.
        std::vector<double> rel_sum(h, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          const double* rel_row =
              params.relation_emb.data() + graph.relation(i, j) * h;
          for (std::size_t c = 0; c < h; ++c) rel_sum[c] += rel_row[c];
        }
        for (std::size_t r = 0; r < h; ++r) {
          const double dp = inv_n * d_pre[i][r];
          double* w_row = gl.weight.data() + r * 3 * h + h;
          for (std::size_t c = 0; c < h; ++c) w_row[c] += dp * rel_sum[c];
        }
        // Relation embedding rows: each pair (i, j) contributes
        // (1/n) W_mid^T d_pre_i to row rel(i, j).
        std::vector<double> w_mid_t(h, 0.0);
        for (std::size_t c = 0; c < h; ++c) {
          double acc = 0.0;
          for (std::size_t r = 0; r < h; ++r) {
            acc += pl.weight[r * 3 * h + h + c] * d_pre[i][r];
          }
          w_mid_t[c] = inv_n * acc;
        }
        for (std::size_t j = 0; j < n; ++j) {
          double* rel_grad =
              g.relation_emb.data() + graph.relation(i, j) * h;
          for (std::size_t c = 0; c < h; ++c) rel_grad[c] += w_mid_t[c];
        }
        // Input gradient, left block: z_i collects W_left^T d_pre_i.
        for (std::size_t c = 0; c < h; ++c) {
          double acc = 0.0;
          for (std::size_t r = 0; r < h; ++r) {
            acc += pl.weight[r * 3 * h + c] * d_pre[i][r];
          }
          dz_in[i][c] += acc;
        }
      }
      // Right block of the weight gradient: sums factorize over (i, j).
      for (std::size_t r = 0; r < h; ++r) {
        const double dp = inv_n * pre_sum[r];
        double* w_row = gl.weight.data() + r * 3 * h + 2 * h;
        for (std::size_t c = 0; c < h; ++c) w_row[c] += dp * z_sum[c];
      }
      // Input gradient, right block: every j receives (1/n) W_right^T pre_sum.
      std::vector<double> shared(h, 0.0);
      for (std::size_t c = 0; c < h; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < h; ++r) {
          acc += pl.weight[r * 3 * h + 2 * h + c] * pre_sum[r];
        }
        shared[c] = inv_n * acc;
      }
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < h; ++c) dz_in[j][c] += shared[c];
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> neighbors;
        for (std::size_t j = 0; j < n; ++j) {
          if (graph.relation(i, j) != RelationVocab::kNoRelation) {
            neighbors.push_back(j);
          }
        }
        if (neighbors.empty()) {
          for (std::size_t d = 0; d < h; ++d) dz_in[i][d] += d_pre[i][d];
          continue;
        }
        const double inv_m = 1.0 / static_cast<double>(neighbors.size());
        for (std::size_t r = 0; r < h; ++r) gl.bias[r] += d_pre[i][r];
        // Left block: z_i has total weight 1 across the neighbor average.
        for (std::size_t r = 0; r < h; ++r) {
          const double dp = d_pre[i][r];
          double* w_row = gl.weight.data() + r * 2 * h;
          for (std::size_t c = 0; c < h; ++c) w_row[c] += dp * z_in[i][c];
        }
        std::vector<double> nbr_sum(h, 0.0);
        for (std::size_t j : neighbors) {
          for (std::size_t c = 0; c < h; ++c) nbr_sum[c] += z_in[j][c];
        }
        for (std::size_t r = 0; r < h; ++r) {
          const double dp = inv_m * d_pre[i][r];
          double* w_row = gl.weight.data() + r * 2 * h + h;
          for (std::size_t c = 0; c < h; ++c) w_row[c] += dp * nbr_sum[c];
        }
        for (std::size_t c = 0; c < h; ++c) {
          double acc_left = 0.0;
          double acc_right = 0.0;
          for (std::size_t r = 0; r < h; ++r) {
            acc_left += pl.weight[r * 2 * h + c] * d_pre[i][r];
            acc_right += pl.weight[r * 2 * h + h + c] * d_pre[i][r];
          }
          dz_in[i][c] += acc_left;
          const double per_neighbor = inv_m * acc_right;
          for (std::size_t j : neighbors) dz_in[j][c] += per_neighbor;
        }
      }
    }
    dz = std::move(dz_in);
  }

  // --- pooling backward: each column's gradient goes to its argmax row ---
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < h; ++d) {
      d_enc[i][fwd.pool_argmax[i][d] * h + d] += dz[i][d];
    }
  }

  // --- encoder backward: rows are table[row] * gate ---
  std::vector<double> d_gate(h, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t valid = fwd.encoded[i].valid_len;
    for (std::size_t t = 0; t < valid; ++t) {
      const std::size_t row = fwd.row_ids[i][t];
      const double* table_row = params.encoder_table.data() + row * h;
      double* grad_row = g.encoder_table.data() + row * h;
      for (std::size_t d = 0; d < h; ++d) {
        const double de = d_enc[i][t * h + d];
        grad_row[d] += de * fwd.gate[d];
        d_gate[d] += de * table_row[d];
      }
    }
  }
  if (!fwd.question_row_ids.empty()) {
    const double inv_q =
        1.0 / static_cast<double>(fwd.question_row_ids.size());
    for (std::size_t d = 0; d < h; ++d) {
      // Sigmoid backward, then the mean over question tokens.
      d_gate[d] *= fwd.gate[d] * (1.0 - fwd.gate[d]) * inv_q;
    }
    for (std::size_t q : fwd.question_row_ids) {
      double* grad_row = g.encoder_table.data() + q * h;
      for (std::size_t d = 0; d < h; ++d) grad_row[d] += d_gate[d];
    }
  }
  return out;
}

SampledGraph sample_training_passages(const PassageGraph& graph,
                                      const SpanLabels& labels,
                                      std::size_t cap, SamplingMode mode,
                                      Rng& rng) {
  if (cap == 0) throw std::invalid_argument("sample cap must be positive");
  check_instance(graph, labels);
  const std::size_t n = graph.size();

  std::vector<std::size_t> selected;
  if (n <= cap) {
    selected.resize(n);
    for (std::size_t i = 0; i < n; ++i) selected[i] = i;
  } else {
    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < n; ++i) {
      if (!labels.spans[i].empty()) labeled.push_back(i);
    }
    const std::size_t start = labeled[rng.uniform_index(labeled.size())];
    std::vector<char> taken(n, 0);
    taken[start] = 1;
    selected.push_back(start);
    if (mode == SamplingMode::kSubgraph) {
      // Breadth-first over edges in either direction, neighbors in index
      // order; passages join the sample on discovery.
      std::vector<std::size_t> queue{start};
      std::size_t head = 0;
      while (head < queue.size() && selected.size() < cap) {
        const std::size_t a = queue[head++];
        for (std::size_t j = 0; j < n && selected.size() < cap; ++j) {
          if (taken[j]) continue;
          if (graph.relation(a, j) == RelationVocab::kNoRelation &&
              graph.relation(j, a) == RelationVocab::kNoRelation) {
            continue;
          }
          taken[j] = 1;
          selected.push_back(j);
          queue.push_back(j);
        }
      }
    }
    if (selected.size() < cap) {
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i]) pool.push_back(i);
      }
      const std::size_t need = cap - selected.size();
      for (std::size_t k = 0; k < need && k < pool.size(); ++k) {
        const std::size_t r = k + rng.uniform_index(pool.size() - k);
        std::swap(pool[k], pool[r]);
        selected.push_back(pool[k]);
      }
    }
    std::sort(selected.begin(), selected.end());
  }

  SampledGraph sample;
  sample.original_indices = selected;
  std::vector<GraphPassage> passages;
  passages.reserve(selected.size());
  for (std::size_t i : selected) passages.push_back(graph.passage(i));
  sample.graph = PassageGraph::from_passages(std::move(passages));
  for (std::size_t a = 0; a < selected.size(); ++a) {
    for (std::size_t b = 0; b < selected.size(); ++b) {
      sample.graph.set_relation(a, b, graph.relation(selected[a], selected[b]));
    }
  }
  sample.labels.spans.resize(selected.size());
  for (std::size_t a = 0; a < selected.size(); ++a) {
    sample.labels.spans[a] = labels.spans[selected[a]];
  }
  return sample;
}

namespace {

std::vector<std::vector<double>*> param_arrays(ReaderParams& p) {
  std::vector<std::vector<double>*> out{&p.encoder_table, &p.relation_emb};
  for (FusionLayerParams& layer : p.fusion) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  out.push_back(&p.w_sel);
  out.push_back(&p.w_start);
  out.push_back(&p.w_end);
  out.push_back(&p.parreader_w_sel);
  return out;
}

std::vector<const std::vector<double>*> param_arrays(const ReaderParams& p) {
  std::vector<const std::vector<double>*> out{&p.encoder_table,
                                              &p.relation_emb};
  for (const FusionLayerParams& layer : p.fusion) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  out.push_back(&p.w_sel);
  out.push_back(&p.w_start);
  out.push_back(&p.w_end);
  out.push_back(&p.parreader_w_sel);
  return out;
}

void adam_array(std::vector<double>& p, const std::vector<double>& g,
                std::vector<double>& m, std::vector<double>& v, double lr,
                double bias1, double bias2) {
  const long count = static_cast<long>(p.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < count; ++i) {
    m[i] = TrainConfig::kBeta1 * m[i] + (1.0 - TrainConfig::kBeta1) * g[i];
    v[i] = TrainConfig::kBeta2 * v[i] + (1.0 - TrainConfig::kBeta2) * g[i] * g[i];
    p[i] -= lr * (m[i] / bias1) /
            (std::sqrt(v[i] / bias2) + TrainConfig::kEpsilon);
  }
}

void adam_array_serial(std::vector<double>& p, const std::vector<double>& g,
                       std::vector<double>& m, std::vector<double>& v,
                       double lr, double bias1, double bias2) {
  const long count = static_cast<long>(p.size());
  for (long i = 0; i < count; ++i) {
    m[i] = TrainConfig::kBeta1 * m[i] + (1.0 - TrainConfig::kBeta1) * g[i];
    v[i] = TrainConfig::kBeta2 * v[i] + (1.0 - TrainConfig::kBeta2) * g[i] * g[i];
    p[i] -= lr * (m[i] / bias1) /
            (std::sqrt(v[i] / bias2) + TrainConfig::kEpsilon);
  }
}

template <typename Step>
void adam_apply(ReaderParams& params, const ReaderParams& grads,
                AdamState& state, const TrainConfig& config, Step step_fn) {
  if (state.m.encoder_table.empty()) state.m = zero_like(params);
  if (state.v.encoder_table.empty()) state.v = zero_like(params);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(TrainConfig::kBeta1, t);
  const double bias2 = 1.0 - std::pow(TrainConfig::kBeta2, t);
  auto p_arrays = param_arrays(params);
  auto g_arrays = param_arrays(grads);
  auto m_arrays = param_arrays(state.m);
  auto v_arrays = param_arrays(state.v);
  for (std::size_t a = 0; a < p_arrays.size(); ++a) {
    step_fn(*p_arrays[a], *g_arrays[a], *m_arrays[a], *v_arrays[a],
            config.learning_rate, bias1, bias2);
  }
}

}  // namespace

void adam_step(ReaderParams& params, const ReaderParams& grads,
               AdamState& state, const TrainConfig& config) {
  adam_apply(params, grads, state, config, adam_array);
}

void adam_step_serial(ReaderParams& params, const ReaderParams& grads,
                      AdamState& state, const TrainConfig& config) {
  adam_apply(params, grads, state, config, adam_array_serial);
}

TrainResult train(const std::vector<TrainingInstance>& instances,
                  const ReaderDims& dims, const FusionConfig& fusion,
                  SelectionHead head, std::uint64_t relation_vocab_hash,
                  const TrainConfig& config) {
  if (instances.empty()) throw std::runtime_error("no training instances");
  TrainResult result;
  result.params = init_params(dims, fusion.mode, fusion.layers,
                              relation_vocab_hash, config.seed);
  Rng rng(config.seed + 1);
  AdamState state;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const TrainingInstance& instance =
        instances[rng.uniform_index(instances.size())];
    try {
      SampledGraph sampled =
          sample_training_passages(instance.graph, instance.labels,
                                   config.sample_cap, config.sampling, rng);
      LossGradients lg = loss_and_gradients(
          instance.question_tokens, sampled.graph, sampled.labels,
          result.params, fusion, head, true, &rng);
      adam_step(result.params, lg.grads, state, config);
      result.loss_trace.emplace_back(step, lg.loss);
    } catch (const std::runtime_error&) {
      ++result.skipped;
    }
  }
  return result;
}

}  // namespace kgqa
