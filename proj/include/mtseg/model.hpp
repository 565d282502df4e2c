#pragma once

// Character-level transformer with one shared encoder and two decoders.
// The segmentation decoder emits canonical segmentations; the gloss decoder
// emits gloss symbol sequences. Both cross-attend to the same encoder
// output. Layers are pre-norm with fixed sinusoidal positions.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtseg/layers.hpp"
#include "mtseg/tensor.hpp"
#include "mtseg/vocab.hpp"

namespace mtseg {

struct ModelConfig {
  int encoder_layers = 4;
  int decoder_layers = 4;
  int attention_heads = 4;
  int embedding_dim = 256;
  int hidden_dim = 1024;  // feed-forward inner size
  double dropout = 0.1;
  double attention_dropout = 0.1;
  int max_positions = 128;
  bool multitask = true;  // false builds the segmentation decoder only

  // Throws ConfigError.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct VocabSizes {
  int source = 0;
  int segmentation = 0;
  int gloss = 0;
};

// Right-padded batch of source id sequences.
struct PaddedBatch {
  int batch = 0;
  int width = 0;
  std::vector<int> ids;  // batch x width, Vocabulary::kPad past each length
  std::vector<int> lengths;

  static PaddedBatch from_sequences(std::span<const std::vector<int>> sequences);
};

template <typename T>
struct EncoderStates {
  int batch = 0;
  int width = 0;
  int dim = 0;
  std::vector<T> data;         // batch x width x dim; padded rows are zero
  std::vector<int> lengths;

  const T* at(int b, int t) const { return data.data() + (static_cast<std::size_t>(b) * width + t) * dim; }
  bool masked(int b, int t) const { return t >= lengths[static_cast<std::size_t>(b)]; }
  // Unpadded states of one sequence.
  Matrix<T> sequence(int b) const;
};

// Packed teacher-forcing batch. Target inputs start with BOS; outputs end
// with EOS.
struct Batch {
  struct Target {
    SeqLayout layout;
    std::vector<int> input;
    std::vector<int> output;
  };
  SeqLayout source;
  std::vector<int> source_ids;
  Target segmentation;
  Target gloss;  // empty when the gloss stream is not trained
  bool has_gloss = false;

  static Batch build(std::span<const EncodedExample* const> examples, bool with_gloss);
  int size() const { return source.count(); }
};

template <typename T>
struct EncoderLayer {
  nn::LayerNorm<T> ln1, ln2;
  nn::MultiHeadAttention<T> attn;
  nn::FeedForward<T> ffn;

  struct Cache {
    typename nn::LayerNorm<T>::Cache ln1, ln2;
    typename nn::MultiHeadAttention<T>::Cache attn;
    typename nn::FeedForward<T>::Cache ffn;
    std::vector<T> drop1, drop2;
  };

  template <typename F>
  void visit(F&& f) {
    attn.visit(f);
    ln1.visit(f);
    ffn.visit(f);
    ln2.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    attn.visit(f);
    ln1.visit(f);
    ffn.visit(f);
    ln2.visit(f);
  }
};

template <typename T>
struct DecoderLayer {
  nn::LayerNorm<T> ln1, ln2, ln3;
  nn::MultiHeadAttention<T> self_attn, cross_attn;
  nn::FeedForward<T> ffn;

  struct Cache {
    typename nn::LayerNorm<T>::Cache ln1, ln2, ln3;
    typename nn::MultiHeadAttention<T>::Cache self_attn, cross_attn;
    typename nn::FeedForward<T>::Cache ffn;
    std::vector<T> drop1, drop2, drop3;
  };

  template <typename F>
  void visit(F&& f) {
    self_attn.visit(f);
    ln1.visit(f);
    cross_attn.visit(f);
    ln2.visit(f);
    ffn.visit(f);
    ln3.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    self_attn.visit(f);
    ln1.visit(f);
    cross_attn.visit(f);
    ln2.visit(f);
    ffn.visit(f);
    ln3.visit(f);
  }
};

template <typename T>
struct EncoderStack {
  Param<T> embedding;  // vocab x dim
  std::vector<EncoderLayer<T>> layers;
  nn::LayerNorm<T> final_norm;

  template <typename F>
  void visit(F&& f) {
    f(embedding);
    for (auto& l : layers) l.visit(f);
    final_norm.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    f(embedding);
    for (const auto& l : layers) l.visit(f);
    final_norm.visit(f);
  }
};

template <typename T>
struct DecoderStack {
  Param<T> embedding;   // vocab x dim
  std::vector<DecoderLayer<T>> layers;
  nn::LayerNorm<T> final_norm;
  Param<T> projection;  // vocab x dim, no bias

  template <typename F>
  void visit(F&& f) {
    f(embedding);
    for (auto& l : layers) l.visit(f);
    final_norm.visit(f);
    f(projection);
  }
  template <typename F>
  void visit(F&& f) const {
    f(embedding);
    for (const auto& l : layers) l.visit(f);
    final_norm.visit(f);
    f(projection);
  }
};

// Activations recorded by forward_train for backward_train.
template <typename T>
struct TrainCache {
  struct Stack {
    std::vector<typename EncoderLayer<T>::Cache> enc_layers;
    std::vector<typename DecoderLayer<T>::Cache> dec_layers;
    typename nn::LayerNorm<T>::Cache final_norm;
    std::vector<T> embed_drop;
    Matrix<T> final_hidden;  // input of the output projection
  };
  Stack encoder;
  Stack segmentation;
  Stack gloss;
  Matrix<T> memory;  // encoder output
};

// Cross-attention keys/values of one encoded word, per decoder layer.
template <typename T>
struct DecoderMemory {
  Stream stream = Stream::segmentation;
  std::vector<Matrix<T>> keys, values;
  int length = 0;
};

// Self-attention keys/values of one hypothesis, per decoder layer.
template <typename T>
struct DecoderState {
  std::vector<Matrix<T>> keys, values;
  int steps = 0;
};

template <typename T>
class SegGlossModel {
 public:
  SegGlossModel(const ModelConfig& config, const VocabSizes& vocab, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const VocabSizes& vocab_sizes() const { return vocab_; }
  bool has_gloss_decoder() const { return gloss_.has_value(); }
  std::uint64_t seed() const { return seed_; }

  // Throws Error on empty sequences or sequences longer than max_positions.
  EncoderStates<T> encode(const PaddedBatch& batch) const;
  Matrix<T> encode_word(std::span<const int> source) const;

  // Full-prefix recomputation. `prefix` starts with BOS. Returns the
  // log-distribution for the symbol following the prefix.
  std::vector<T> decode_step(Stream stream, const Matrix<T>& encoded, std::span<const int> prefix) const;
  // Log-distributions after every prefix position (prefix.size() rows).
  Matrix<T> decode_all(Stream stream, const Matrix<T>& encoded, std::span<const int> prefix) const;

  // Incremental decoding with cached keys/values.
  DecoderMemory<T> prepare_memory(Stream stream, const Matrix<T>& encoded) const;
  DecoderState<T> initial_state(Stream stream) const;
  // Feeds one token per state, appends to each state, writes one
  // log-distribution row per state.
  void step(const DecoderMemory<T>& memory, std::span<DecoderState<T>*> states,
            std::span<const int> tokens, Matrix<T>& log_probs) const;

  // Training path. Logits rows follow the packed target layouts.
  void forward_train(const Batch& batch, const nn::ForwardMode& mode, TrainCache<T>& cache,
                     Matrix<T>& seg_logits, Matrix<T>* gloss_logits) const;
  // dgloss may be null (gloss loss weight zero or single-task).
  void backward_train(const Batch& batch, TrainCache<T>& cache, const Matrix<T>& dseg_logits,
                      const Matrix<T>* dgloss_logits);

  void zero_grad();
  std::vector<Param<T>*> parameters();
  std::vector<const Param<T>*> parameters() const;
  Param<T>* find_parameter(std::string_view name);
  long count_parameters() const;

  EncoderStack<T>& encoder() { return encoder_; }
  const EncoderStack<T>& encoder() const { return encoder_; }
  DecoderStack<T>& decoder(Stream stream);
  const DecoderStack<T>& decoder(Stream stream) const;

 private:
  void embed(const Param<T>& table, std::span<const int> ids, const SeqLayout& layout, Matrix<T>& x) const;
  void check_lengths(const SeqLayout& layout, const char* what) const;
  void run_encoder(const SeqLayout& layout, std::span<const int> ids, const nn::ForwardMode& mode,
                   typename TrainCache<T>::Stack* cache, Matrix<T>& out) const;
  void backward_encoder(const SeqLayout& layout, std::span<const int> ids,
                        typename TrainCache<T>::Stack& cache, Matrix<T>& dmemory);
  void run_decoder(const DecoderStack<T>& dec, const SeqLayout& layout, std::span<const int> ids,
                   const Matrix<T>& memory, const SeqLayout& memory_layout, const nn::ForwardMode& mode,
                   typename TrainCache<T>::Stack* cache, Matrix<T>& logits) const;
  void backward_decoder(DecoderStack<T>& dec, const SeqLayout& layout, std::span<const int> ids,
                        const SeqLayout& memory_layout, typename TrainCache<T>::Stack& cache,
                        const Matrix<T>& dlogits, Matrix<T>& dmemory);

  ModelConfig config_;
  VocabSizes vocab_;
  std::uint64_t seed_;
  Matrix<T> positions_;  // max_positions x dim, sinusoidal
  EncoderStack<T> encoder_;
  DecoderStack<T> segmentation_;
  std::optional<DecoderStack<T>> gloss_;
};

}  // namespace mtseg
