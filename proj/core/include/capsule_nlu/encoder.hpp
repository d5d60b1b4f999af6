#pragma once

#include <span>
#include <vector>

#include "capsule_nlu/corpus.hpp"
#include "capsule_nlu/rng.hpp"
#include "capsule_nlu/tape.hpp"

namespace capsnlu {

// One direction of LSTM weights. Gate rows are packed [input; forget;
// candidate; output], each block hidden_dim rows tall.
template <typename S>
struct LstmParams {
  Tensor<S> w_x;  // [4H x D_in]
  Tensor<S> w_h;  // [4H x H]
  Tensor<S> b;    // [4H x 1], forget block initialized to 1
};

// Word embeddings plus forward/backward LSTMs producing the context-aware
// hidden-state matrix for each utterance.
template <typename S>
struct EncoderParams {
  Tensor<S> embedding;  // [V x D_W], row 0 is PAD
  LstmParams<S> fw;
  LstmParams<S> bw;

  int vocab_size() const { return embedding.dim(0); }
  int embed_dim() const { return embedding.dim(1); }
  int hidden_dim() const { return fw.w_h.dim(1); }
};

template <typename S>
EncoderParams<S> init_encoder_params(int vocab_size, int embed_dim, int hidden_dim, Rng& rng);

// Embedding lookup for one utterance: [T x D_W]. Gradient flows only to
// the looked-up rows.
template <typename S>
Tensor<S> embed(Tape<S>& tape, const EncoderParams<S>& params, std::span<const int> token_ids);

// Runs both recurrences over the true length and concatenates per-position
// forward and backward states into columns: [2H x T]. Rows [0, H) hold the
// forward state, rows [H, 2H) the backward state.
template <typename S>
Tensor<S> bilstm_encode(Tape<S>& tape, const EncoderParams<S>& params, const Tensor<S>& embedded);

// Batch view of the encoder contract: per-utterance encodings materialized
// into a padded [B x T_max x 2H] value tensor, zeros past each length.
// Padding never enters the recurrences, so a row of this view is identical
// whether the utterance was encoded alone or inside a batch.
template <typename S>
Tensor<S> encode_batch_padded(Tape<S>& tape, const EncoderParams<S>& params, const Batch& batch);

extern template struct LstmParams<float>;
extern template struct LstmParams<double>;
extern template struct EncoderParams<float>;
extern template struct EncoderParams<double>;
extern template EncoderParams<float> init_encoder_params<float>(int, int, int, Rng&);
extern template EncoderParams<double> init_encoder_params<double>(int, int, int, Rng&);
extern template Tensor<float> embed<float>(Tape<float>&, const EncoderParams<float>&, std::span<const int>);
extern template Tensor<double> embed<double>(Tape<double>&, const EncoderParams<double>&, std::span<const int>);
extern template Tensor<float> bilstm_encode<float>(Tape<float>&, const EncoderParams<float>&, const Tensor<float>&);
extern template Tensor<double> bilstm_encode<double>(Tape<double>&, const EncoderParams<double>&, const Tensor<double>&);
extern template Tensor<float> encode_batch_padded<float>(Tape<float>&, const EncoderParams<float>&, const Batch&);
extern template Tensor<double> encode_batch_padded<double>(Tape<double>&, const EncoderParams<double>&, const Batch&);

// Xavier-uniform initialization helper shared by all weight matrices.
template <typename S>
Tensor<S> xavier_init(Shape shape, int fan_in, int fan_out, Rng& rng);

extern template Tensor<float> xavier_init<float>(Shape, int, int, Rng&);
extern template Tensor<double> xavier_init<double>(Shape, int, int, Rng&);

}  // namespace capsnlu
