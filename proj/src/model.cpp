#include "mtseg/model.hpp"

#include <cmath>

#include "mtseg/error.hpp"
#include "mtseg/kernels.hpp"

namespace mtseg {

void ModelConfig::validate() const {
  if (encoder_layers <= 0 || decoder_layers <= 0 || attention_heads <= 0 || embedding_dim <= 0 ||
      hidden_dim <= 0 || max_positions <= 0)
    throw ConfigError("model dimensions and layer counts must be positive");
  if (embedding_dim % attention_heads != 0)
    throw ConfigError("embedding_dim " + std::to_string(embedding_dim) + " is not divisible by " +
                      std::to_string(attention_heads) + " attention heads");
  if (!(dropout >= 0.0 && dropout < 1.0) || !(attention_dropout >= 0.0 && attention_dropout < 1.0))
    throw ConfigError("dropout rates must be in [0, 1)");
}

PaddedBatch PaddedBatch::from_sequences(std::span<const std::vector<int>> sequences) {
  PaddedBatch b;
  b.batch = static_cast<int>(sequences.size());
  for (const auto& s : sequences) b.width = std::max(b.width, static_cast<int>(s.size()));
  b.ids.assign(static_cast<std::size_t>(b.batch) * b.width, Vocabulary::kPad);
  for (int i = 0; i < b.batch; ++i) {
    const auto& s = sequences[static_cast<std::size_t>(i)];
    std::copy(s.begin(), s.end(), b.ids.begin() + static_cast<long>(i) * b.width);
    b.lengths.push_back(static_cast<int>(s.size()));
  }
  return b;
}

template <typename T>
Matrix<T> EncoderStates<T>::sequence(int b) const {
  const int len = lengths[static_cast<std::size_t>(b)];
  Matrix<T> m(len, dim);
  for (int t = 0; t < len; ++t) std::copy(at(b, t), at(b, t) + dim, m.row(t));
  return m;
}

Batch Batch::build(std::span<const EncodedExample* const> examples, bool with_gloss) {
  Batch b;
  b.has_gloss = with_gloss;
  std::vector<int> src_len, seg_len, gloss_len;
  for (const EncodedExample* ex : examples) {
    src_len.push_back(static_cast<int>(ex->source.size()));
    b.source_ids.insert(b.source_ids.end(), ex->source.begin(), ex->source.end());
    auto add_target = [](Target& t, const std::vector<int>& ids, std::vector<int>& lens) {
      lens.push_back(static_cast<int>(ids.size()) + 1);
      t.input.push_back(Vocabulary::kBos);
      t.input.insert(t.input.end(), ids.begin(), ids.end());
      t.output.insert(t.output.end(), ids.begin(), ids.end());
      t.output.push_back(Vocabulary::kEos);
    };
    add_target(b.segmentation, ex->segmentation, seg_len);
    if (with_gloss) add_target(b.gloss, ex->gloss, gloss_len);
  }
  b.source = SeqLayout::from_lengths(src_len);
  b.segmentation.layout = SeqLayout::from_lengths(seg_len);
  if (with_gloss) b.gloss.layout = SeqLayout::from_lengths(gloss_len);
  return b;
}

namespace {

template <typename T>
void init_layer_norm_pair(nn::LayerNorm<T>& ln, const std::string& name, int dim) {
  ln.init(name, dim);
}

template <typename T>
void append_row(Matrix<T>& m, const T* row, int cols) {
  if (m.cols == 0) m.cols = cols;
  m.data.insert(m.data.end(), row, row + cols);
  ++m.rows;
}

template <typename T>
void add_scaled(Matrix<T>& dst, const Matrix<T>& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

template <typename T>
Matrix<T> masked_copy(const Matrix<T>& src, const std::vector<T>& mask) {
  Matrix<T> out = src;
  nn::dropout_backward<T>(out.data, mask);
  return out;
}

}  // namespace

template <typename T>
SegGlossModel<T>::SegGlossModel(const ModelConfig& config, const VocabSizes& vocab, std::uint64_t seed)
    : config_(config), vocab_(vocab), seed_(seed) {
  config_.validate();
  if (vocab.source <= Vocabulary::kReserved - 1 || vocab.segmentation <= Vocabulary::kReserved - 1 ||
      (config.multitask && vocab.gloss <= Vocabulary::kReserved - 1))
    throw ConfigError("vocabulary sizes must include the reserved symbols");
  const int d = config_.embedding_dim;
  const int h = config_.hidden_dim;
  const int heads = config_.attention_heads;

  positions_.resize(config_.max_positions, d);
  for (int pos = 0; pos < config_.max_positions; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
      positions_(pos, i) = static_cast<T>(std::sin(pos * freq));
      if (i + 1 < d) positions_(pos, i + 1) = static_cast<T>(std::cos(pos * freq));
    }
  }

  encoder_.embedding.allocate("encoder.embedding", vocab.source, d);
  nn::init_uniform_fan_in(encoder_.embedding, d, seed);
  encoder_.layers.resize(static_cast<std::size_t>(config_.encoder_layers));
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "encoder.layers." + std::to_string(l);
    auto& layer = encoder_.layers[static_cast<std::size_t>(l)];
    layer.attn.init(p + ".self_attn", d, heads, seed);
    layer.ln1.init(p + ".ln1", d);
    layer.ffn.init(p + ".ffn", d, h, seed);
    layer.ln2.init(p + ".ln2", d);
  }
  encoder_.final_norm.init("encoder.final_norm", d);

  auto build_decoder = [&](DecoderStack<T>& dec, const std::string& name, int vocab_size) {
    dec.embedding.allocate(name + ".embedding", vocab_size, d);
    nn::init_uniform_fan_in(dec.embedding, d, seed);
    dec.layers.resize(static_cast<std::size_t>(config_.decoder_layers));
    for (int l = 0; l < config_.decoder_layers; ++l) {
      const std::string p = name + ".layers." + std::to_string(l);
      auto& layer = dec.layers[static_cast<std::size_t>(l)];
      layer.self_attn.init(p + ".self_attn", d, heads, seed);
      layer.ln1.init(p + ".ln1", d);
      layer.cross_attn.init(p + ".cross_attn", d, heads, seed);
      layer.ln2.init(p + ".ln2", d);
      layer.ffn.init(p + ".ffn", d, h, seed);
      layer.ln3.init(p + ".ln3", d);
    }
    dec.final_norm.init(name + ".final_norm", d);
    dec.projection.allocate(name + ".projection", vocab_size, d);
    nn::init_uniform_fan_in(dec.projection, d, seed);
  };
  build_decoder(segmentation_, "segmentation", vocab.segmentation);
  if (config_.multitask) {
    gloss_.emplace();
    build_decoder(*gloss_, "gloss", vocab.gloss);
  }
}

template <typename T>
DecoderStack<T>& SegGlossModel<T>::decoder(Stream stream) {
  if (stream == Stream::segmentation) return segmentation_;
  if (!gloss_) throw Error("gloss decoder requested on a single-task model");
  return *gloss_;
}

template <typename T>
const DecoderStack<T>& SegGlossModel<T>::decoder(Stream stream) const {
  if (stream == Stream::segmentation) return segmentation_;
  if (!gloss_) throw Error("gloss decoder requested on a single-task model");
  return *gloss_;
}

template <typename T>
void SegGlossModel<T>::check_lengths(const SeqLayout& layout, const char* what) const {
  for (int i = 0; i < layout.count(); ++i) {
    const int n = layout.length(i);
    if (n == 0) throw Error(std::string("empty ") + what + " sequence at batch index " + std::to_string(i));
    if (n > config_.max_positions)
      throw Error(std::string(what) + " sequence of length " + std::to_string(n) + " exceeds max_positions " +
                  std::to_string(config_.max_positions));
  }
}

template <typename T>
void SegGlossModel<T>::embed(const Param<T>& table, std::span<const int> ids, const SeqLayout& layout,
                             Matrix<T>& x) const {
  const int d = config_.embedding_dim;
  const T scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
  x.resize(layout.total(), d);
  for (int s = 0; s < layout.count(); ++s) {
    for (int t = 0; t < layout.length(s); ++t) {
      const int r = layout.begin(s) + t;
      const int id = ids[static_cast<std::size_t>(r)];
      if (id < 0 || id >= table.value.rows) throw Error("symbol id out of range: " + std::to_string(id));
      const T* e = table.value.row(id);
      const T* p = positions_.row(t);
      T* xr = x.row(r);
      for (int c = 0; c < d; ++c) xr[c] = e[c] * scale + p[c];
    }
  }
}

template <typename T>
void SegGlossModel<T>::run_encoder(const SeqLayout& layout, std::span<const int> ids,
                                   const nn::ForwardMode& mode, typename TrainCache<T>::Stack* cache,
                                   Matrix<T>& out) const {
  Matrix<T> x;
  embed(encoder_.embedding, ids, layout, x);
  nn::dropout_forward<T>(x.data, config_.dropout, mode, cache ? &cache->embed_drop : nullptr);
  if (cache) cache->enc_layers.resize(encoder_.layers.size());
  Matrix<T> a, s;
  for (std::size_t l = 0; l < encoder_.layers.size(); ++l) {
    const auto& layer = encoder_.layers[l];
    auto* c = cache ? &cache->enc_layers[l] : nullptr;
    layer.ln1.forward(x, a, c ? &c->ln1 : nullptr);
    layer.attn.forward(a, layout, a, layout, false, s, c ? &c->attn : nullptr, mode);
    nn::dropout_forward<T>(s.data, config_.dropout, mode, c ? &c->drop1 : nullptr);
    add_scaled(x, s);
    layer.ln2.forward(x, a, c ? &c->ln2 : nullptr);
    layer.ffn.forward(a, s, c ? &c->ffn : nullptr);
    nn::dropout_forward<T>(s.data, config_.dropout, mode, c ? &c->drop2 : nullptr);
    add_scaled(x, s);
  }
  encoder_.final_norm.forward(x, out, cache ? &cache->final_norm : nullptr);
}

template <typename T>
void SegGlossModel<T>::backward_encoder(const SeqLayout& layout, std::span<const int> ids,
                                        typename TrainCache<T>::Stack& cache, Matrix<T>& dmemory) {
  Matrix<T> dx, db, dq, dkv;
  encoder_.final_norm.backward(dmemory, cache.final_norm, dx, false);
  for (std::size_t li = encoder_.layers.size(); li-- > 0;) {
    auto& layer = encoder_.layers[li];
    auto& c = cache.enc_layers[li];
    Matrix<T> df = masked_copy(dx, c.drop2);
    layer.ffn.backward(df, c.ffn, db);
    layer.ln2.backward(db, c.ln2, dx, true);
    Matrix<T> ds = masked_copy(dx, c.drop1);
    layer.attn.backward(ds, c.attn, layout, layout, false, dq, dkv);
    add_scaled(dq, dkv);
    layer.ln1.backward(dq, c.ln1, dx, true);
  }
  nn::dropout_backward<T>(dx.data, cache.embed_drop);
  const int d = config_.embedding_dim;
  const T scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
  for (int r = 0; r < layout.total(); ++r)
    kernels::axpy<T>(d, scale, dx.row(r), encoder_.embedding.grad.row(ids[static_cast<std::size_t>(r)]));
}

template <typename T>
void SegGlossModel<T>::run_decoder(const DecoderStack<T>& dec, const SeqLayout& layout,
                                   std::span<const int> ids, const Matrix<T>& memory,
                                   const SeqLayout& memory_layout, const nn::ForwardMode& mode,
                                   typename TrainCache<T>::Stack* cache, Matrix<T>& logits) const {
  Matrix<T> x;
  embed(dec.embedding, ids, layout, x);
  nn::dropout_forward<T>(x.data, config_.dropout, mode, cache ? &cache->embed_drop : nullptr);
  if (cache) cache->dec_layers.resize(dec.layers.size());
  Matrix<T> a, s;
  for (std::size_t l = 0; l < dec.layers.size(); ++l) {
    const auto& layer = dec.layers[l];
    auto* c = cache ? &cache->dec_layers[l] : nullptr;
    layer.ln1.forward(x, a, c ? &c->ln1 : nullptr);
    layer.self_attn.forward(a, layout, a, layout, true, s, c ? &c->self_attn : nullptr, mode);
    nn::dropout_forward<T>(s.data, config_.dropout, mode, c ? &c->drop1 : nullptr);
    add_scaled(x, s);
    layer.ln2.forward(x, a, c ? &c->ln2 : nullptr);
    layer.cross_attn.forward(a, layout, memory, memory_layout, false, s, c ? &c->cross_attn : nullptr, mode);
    nn::dropout_forward<T>(s.data, config_.dropout, mode, c ? &c->drop2 : nullptr);
    add_scaled(x, s);
    layer.ln3.forward(x, a, c ? &c->ln3 : nullptr);
    layer.ffn.forward(a, s, c ? &c->ffn : nullptr);
    nn::dropout_forward<T>(s.data, config_.dropout, mode, c ? &c->drop3 : nullptr);
    add_scaled(x, s);
  }
  Matrix<T> local;
  Matrix<T>& hidden = cache ? cache->final_hidden : local;
  dec.final_norm.forward(x, hidden, cache ? &cache->final_norm : nullptr);
  const int d = config_.embedding_dim;
  const int v = dec.projection.value.rows;
  logits.resize(hidden.rows, v);
  if (hidden.rows > 0)
    kernels::gemm_nt<T>(hidden.rows, v, d, hidden.data.data(), d, dec.projection.value.data.data(), d,
                        logits.data.data(), v);
}

template <typename T>
void SegGlossModel<T>::backward_decoder(DecoderStack<T>& dec, const SeqLayout& layout,
                                        std::span<const int> ids, const SeqLayout& memory_layout,
                                        typename TrainCache<T>::Stack& cache, const Matrix<T>& dlogits,
                                        Matrix<T>& dmemory) {
  const int d = config_.embedding_dim;
  const int v = dec.projection.value.rows;
  const int n = dlogits.rows;
  kernels::gemm_tn<T>(v, d, n, dlogits.data.data(), v, cache.final_hidden.data.data(), d,
                      dec.projection.grad.data.data(), d, true);
  Matrix<T> dh(n, d);
  kernels::gemm_nn<T>(n, d, v, dlogits.data.data(), v, dec.projection.value.data.data(), d, dh.data.data(), d);
  Matrix<T> dx, db, dq, dkv;
  dec.final_norm.backward(dh, cache.final_norm, dx, false);
  for (std::size_t li = dec.layers.size(); li-- > 0;) {
    auto& layer = dec.layers[li];
    auto& c = cache.dec_layers[li];
    Matrix<T> df = masked_copy(dx, c.drop3);
    layer.ffn.backward(df, c.ffn, db);
    layer.ln3.backward(db, c.ln3, dx, true);
    Matrix<T> dc = masked_copy(dx, c.drop2);
    layer.cross_attn.backward(dc, c.cross_attn, layout, memory_layout, false, dq, dkv);
    add_scaled(dmemory, dkv);
    layer.ln2.backward(dq, c.ln2, dx, true);
    Matrix<T> ds = masked_copy(dx, c.drop1);
    layer.self_attn.backward(ds, c.self_attn, layout, layout, true, dq, dkv);
    add_scaled(dq, dkv);
    layer.ln1.backward(dq, c.ln1, dx, true);
  }
  nn::dropout_backward<T>(dx.data, cache.embed_drop);
  const T scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
  for (int r = 0; r < layout.total(); ++r)
    kernels::axpy<T>(d, scale, dx.row(r), dec.embedding.grad.row(ids[static_cast<std::size_t>(r)]));
}

template <typename T>
EncoderStates<T> SegGlossModel<T>::encode(const PaddedBatch& batch) const {
  const SeqLayout layout = SeqLayout::from_lengths(batch.lengths);
  check_lengths(layout, "source");
  std::vector<int> packed;
  packed.reserve(static_cast<std::size_t>(layout.total()));
  for (int b = 0; b < batch.batch; ++b) {
    const auto row = batch.ids.begin() + static_cast<long>(b) * batch.width;
    packed.insert(packed.end(), row, row + batch.lengths[static_cast<std::size_t>(b)]);
  }
  Matrix<T> out;
  run_encoder(layout, packed, nn::ForwardMode{}, nullptr, out);
  EncoderStates<T> states;
  states.batch = batch.batch;
  states.width = batch.width;
  states.dim = config_.embedding_dim;
  states.lengths = batch.lengths;
  states.data.assign(static_cast<std::size_t>(batch.batch) * batch.width * states.dim, T(0));
  for (int b = 0; b < batch.batch; ++b)
    for (int t = 0; t < layout.length(b); ++t)
      std::copy(out.row(layout.begin(b) + t), out.row(layout.begin(b) + t) + states.dim,
                states.data.begin() + static_cast<long>((static_cast<std::size_t>(b) * batch.width + t) * states.dim));
  return states;
}

template <typename T>
Matrix<T> SegGlossModel<T>::encode_word(std::span<const int> source) const {
  const int len = static_cast<int>(source.size());
  const SeqLayout layout = SeqLayout::from_lengths(std::span<const int>(&len, 1));
  check_lengths(layout, "source");
  Matrix<T> out;
  run_encoder(layout, source, nn::ForwardMode{}, nullptr, out);
  return out;
}

template <typename T>
Matrix<T> SegGlossModel<T>::decode_all(Stream stream, const Matrix<T>& encoded, std::span<const int> prefix) const {
  const auto& dec = decoder(stream);
  if (prefix.empty() || prefix.front() != Vocabulary::kBos) throw Error("decoder prefix must start with BOS");
  const int len = static_cast<int>(prefix.size());
  const int mem_len = encoded.rows;
  const SeqLayout layout = SeqLayout::from_lengths(std::span<const int>(&len, 1));
  const SeqLayout mem_layout = SeqLayout::from_lengths(std::span<const int>(&mem_len, 1));
  check_lengths(layout, "target");
  Matrix<T> logits;
  run_decoder(dec, layout, prefix, encoded, mem_layout, nn::ForwardMode{}, nullptr, logits);
  for (int r = 0; r < logits.rows; ++r) kernels::log_softmax<T>(logits.cols, logits.row(r), logits.row(r));
  return logits;
}

template <typename T>
std::vector<T> SegGlossModel<T>::decode_step(Stream stream, const Matrix<T>& encoded,
                                             std::span<const int> prefix) const {
  const Matrix<T> all = decode_all(stream, encoded, prefix);
  const auto last = all.row_span(all.rows - 1);
  return {last.begin(), last.end()};
}

template <typename T>
DecoderMemory<T> SegGlossModel<T>::prepare_memory(Stream stream, const Matrix<T>& encoded) const {
  const auto& dec = decoder(stream);
  DecoderMemory<T> mem;
  mem.stream = stream;
  mem.length = encoded.rows;
  mem.keys.resize(dec.layers.size());
  mem.values.resize(dec.layers.size());
  for (std::size_t l = 0; l < dec.layers.size(); ++l) {
    dec.layers[l].cross_attn.k.forward(encoded, mem.keys[l]);
    dec.layers[l].cross_attn.v.forward(encoded, mem.values[l]);
  }
  return mem;
}

template <typename T>
DecoderState<T> SegGlossModel<T>::initial_state(Stream stream) const {
  const auto& dec = decoder(stream);
  DecoderState<T> st;
  st.keys.resize(dec.layers.size());
  st.values.resize(dec.layers.size());
  for (auto& m : st.keys) m.cols = config_.embedding_dim;
  for (auto& m : st.values) m.cols = config_.embedding_dim;
  return st;
}

template <typename T>
void SegGlossModel<T>::step(const DecoderMemory<T>& memory, std::span<DecoderState<T>*> states,
                            std::span<const int> tokens, Matrix<T>& log_probs) const {
  const auto& dec = decoder(memory.stream);
  const int n = static_cast<int>(states.size());
  const int d = config_.embedding_dim;
  const T scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
  Matrix<T> x(n, d);
  for (int i = 0; i < n; ++i) {
    const int pos = states[static_cast<std::size_t>(i)]->steps;
    if (pos >= config_.max_positions) throw Error("decoder exceeded max_positions");
    const int id = tokens[static_cast<std::size_t>(i)];
    const T* e = dec.embedding.value.row(id);
    const T* p = positions_.row(pos);
    for (int c = 0; c < d; ++c) x(i, c) = e[c] * scale + p[c];
  }
  Matrix<T> a, q, k, v, ctx(n, d), s;
  std::vector<T> scratch;
  for (std::size_t l = 0; l < dec.layers.size(); ++l) {
    const auto& layer = dec.layers[l];
    layer.ln1.forward(x, a, nullptr);
    layer.self_attn.q.forward(a, q);
    layer.self_attn.k.forward(a, k);
    layer.self_attn.v.forward(a, v);
    for (int i = 0; i < n; ++i) {
      auto& st = *states[static_cast<std::size_t>(i)];
      append_row(st.keys[l], k.row(i), d);
      append_row(st.values[l], v.row(i), d);
      layer.self_attn.attend(q.row(i), st.keys[l], st.values[l], st.keys[l].rows, ctx.row(i), scratch);
    }
    layer.self_attn.o.forward(ctx, s);
    add_scaled(x, s);
    layer.ln2.forward(x, a, nullptr);
    layer.cross_attn.q.forward(a, q);
    for (int i = 0; i < n; ++i)
      layer.cross_attn.attend(q.row(i), memory.keys[l], memory.values[l], memory.length, ctx.row(i), scratch);
    layer.cross_attn.o.forward(ctx, s);
    add_scaled(x, s);
    layer.ln3.forward(x, a, nullptr);
    layer.ffn.forward(a, s, nullptr);
    add_scaled(x, s);
  }
  Matrix<T> hidden;
  dec.final_norm.forward(x, hidden, nullptr);
  const int vsize = dec.projection.value.rows;
  log_probs.resize(n, vsize);
  kernels::gemm_nt<T>(n, vsize, d, hidden.data.data(), d, dec.projection.value.data.data(), d,
                      log_probs.data.data(), vsize);
  for (int i = 0; i < n; ++i) {
    kernels::log_softmax<T>(vsize, log_probs.row(i), log_probs.row(i));
    ++states[static_cast<std::size_t>(i)]->steps;
  }
}

template <typename T>
void SegGlossModel<T>::forward_train(const Batch& batch, const nn::ForwardMode& mode, TrainCache<T>& cache,
                                     Matrix<T>& seg_logits, Matrix<T>* gloss_logits) const {
  check_lengths(batch.source, "source");
  check_lengths(batch.segmentation.layout, "segmentation");
  run_encoder(batch.source, batch.source_ids, mode, &cache.encoder, cache.memory);
  run_decoder(segmentation_, batch.segmentation.layout, batch.segmentation.input, cache.memory, batch.source,
              mode, &cache.segmentation, seg_logits);
  if (gloss_logits) {
    if (!gloss_ || !batch.has_gloss) throw Error("gloss logits requested without a gloss decoder and targets");
    check_lengths(batch.gloss.layout, "gloss");
    run_decoder(*gloss_, batch.gloss.layout, batch.gloss.input, cache.memory, batch.source, mode,
                &cache.gloss, *gloss_logits);
  }
}

template <typename T>
void SegGlossModel<T>::backward_train(const Batch& batch, TrainCache<T>& cache, const Matrix<T>& dseg_logits,
                                      const Matrix<T>* dgloss_logits) {
  Matrix<T> dmemory(cache.memory.rows, cache.memory.cols);
  backward_decoder(segmentation_, batch.segmentation.layout, batch.segmentation.input, batch.source,
                   cache.segmentation, dseg_logits, dmemory);
  if (dgloss_logits) {
    if (!gloss_) throw Error("gloss gradient supplied to a single-task model");
    backward_decoder(*gloss_, batch.gloss.layout, batch.gloss.input, batch.source, cache.gloss, *dgloss_logits,
                     dmemory);
  }
  backward_encoder(batch.source, batch.source_ids, cache.encoder, dmemory);
}

template <typename T>
void SegGlossModel<T>::zero_grad() {
  for (Param<T>* p : parameters()) p->grad.zero();
}

template <typename T>
std::vector<Param<T>*> SegGlossModel<T>::parameters() {
  std::vector<Param<T>*> out;
  auto collect = [&](Param<T>& p) { out.push_back(&p); };
  encoder_.visit(collect);
  segmentation_.visit(collect);
  if (gloss_) gloss_->visit(collect);
  return out;
}

template <typename T>
std::vector<const Param<T>*> SegGlossModel<T>::parameters() const {
  std::vector<const Param<T>*> out;
  auto collect = [&](const Param<T>& p) { out.push_back(&p); };
  encoder_.visit(collect);
  segmentation_.visit(collect);
  if (gloss_) gloss_->visit(collect);
  return out;
}

template <typename T>
Param<T>* SegGlossModel<T>::find_parameter(std::string_view name) {
  for (Param<T>* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

template <typename T>
long SegGlossModel<T>::count_parameters() const {
  long n = 0;
  for (const Param<T>* p : parameters()) n += static_cast<long>(p->value.size());
  return n;
}

template struct EncoderStates<float>;
template struct EncoderStates<double>;
template class SegGlossModel<float>;
template class SegGlossModel<double>;

}  // namespace mtseg
