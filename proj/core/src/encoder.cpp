#include "capsule_nlu/encoder.hpp"

#include <cmath>

namespace capsnlu {

template <typename S>
Tensor<S> xavier_init(Shape shape, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<S> t = Tensor<S>::zeros(std::move(shape), /*needs_grad=*/true);
  for (S& v : t.value()) v = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

namespace {

template <typename S>
LstmParams<S> init_lstm(int input_dim, int hidden_dim, Rng& rng) {
  LstmParams<S> p;
  p.w_x = xavier_init<S>({4 * hidden_dim, input_dim}, input_dim, hidden_dim, rng);
  p.w_h = xavier_init<S>({4 * hidden_dim, hidden_dim}, hidden_dim, hidden_dim, rng);
  p.b = Tensor<S>::zeros({4 * hidden_dim, 1}, /*needs_grad=*/true);
  // forget-gate bias block starts at 1 so early training does not forget
  for (int i = hidden_dim; i < 2 * hidden_dim; ++i) p.b.value()[static_cast<size_t>(i)] = S(1);
  return p;
}

// One LSTM step: returns (h_t, c_t) given x_t [D x 1] and previous state.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> lstm_step(Tape<S>& tape, const LstmParams<S>& p, int hidden_dim,
                                          const Tensor<S>& x, const Tensor<S>& h_prev,
                                          const Tensor<S>& c_prev) {
  Tensor<S> z = tape.add_col_broadcast(tape.add(tape.matmul(p.w_x, x), tape.matmul(p.w_h, h_prev)), p.b);
  Tensor<S> i = tape.sigmoid(tape.slice_rows(z, 0, hidden_dim));
  Tensor<S> f = tape.sigmoid(tape.slice_rows(z, hidden_dim, 2 * hidden_dim));
  Tensor<S> g = tape.tanh(tape.slice_rows(z, 2 * hidden_dim, 3 * hidden_dim));
  Tensor<S> o = tape.sigmoid(tape.slice_rows(z, 3 * hidden_dim, 4 * hidden_dim));
  Tensor<S> c = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
  Tensor<S> h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

}  // namespace

template <typename S>
EncoderParams<S> init_encoder_params(int vocab_size, int embed_dim, int hidden_dim, Rng& rng) {
  EncoderParams<S> p;
  p.embedding = xavier_init<S>({vocab_size, embed_dim}, vocab_size, embed_dim, rng);
  p.fw = init_lstm<S>(embed_dim, hidden_dim, rng);
  p.bw = init_lstm<S>(embed_dim, hidden_dim, rng);
  return p;
}

template <typename S>
Tensor<S> embed(Tape<S>& tape, const EncoderParams<S>& params, std::span<const int> token_ids) {
  return tape.select_rows(params.embedding, token_ids);
}

template <typename S>
Tensor<S> bilstm_encode(Tape<S>& tape, const EncoderParams<S>& params, const Tensor<S>& embedded) {
  const int t_len = embedded.dim(0);
  const int hidden = params.hidden_dim();
  Tensor<S> x_cols = tape.transpose(embedded);  // [D_W x T]

  std::vector<Tensor<S>> fw_states(static_cast<size_t>(t_len));
  std::vector<Tensor<S>> bw_states(static_cast<size_t>(t_len));
  Tensor<S> zero_state = Tensor<S>::zeros({hidden, 1});

  Tensor<S> h = zero_state, c = zero_state;
  for (int t = 0; t < t_len; ++t) {
    auto [h2, c2] = lstm_step(tape, params.fw, hidden, tape.select_col(x_cols, t), h, c);
    fw_states[static_cast<size_t>(t)] = h2;
    h = h2;
    c = c2;
  }
  h = zero_state;
  c = zero_state;
  for (int t = t_len - 1; t >= 0; --t) {
    auto [h2, c2] = lstm_step(tape, params.bw, hidden, tape.select_col(x_cols, t), h, c);
    bw_states[static_cast<size_t>(t)] = h2;
    h = h2;
    c = c2;
  }

  Tensor<S> fw_mat = tape.concat_cols(std::span<const Tensor<S>>(fw_states));
  Tensor<S> bw_mat = tape.concat_cols(std::span<const Tensor<S>>(bw_states));
  const Tensor<S> both[] = {fw_mat, bw_mat};
  return tape.concat_rows(std::span<const Tensor<S>>(both));  // [2H x T]
}

template <typename S>
Tensor<S> encode_batch_padded(Tape<S>& tape, const EncoderParams<S>& params, const Batch& batch) {
  const int two_h = 2 * params.hidden_dim();
  Tensor<S> out = Tensor<S>::zeros({batch.batch_size, batch.max_len, two_h});
  auto ov = out.value();
  for (int i = 0; i < batch.batch_size; ++i) {
    std::vector<int> ids;
    for (int t = 0; t < batch.lengths[static_cast<size_t>(i)]; ++t) ids.push_back(batch.token_id(i, t));
    Tensor<S> enc = bilstm_encode(tape, params, embed(tape, params, ids));  // [2H x T_i]
    for (int t = 0; t < static_cast<int>(ids.size()); ++t) {
      for (int d = 0; d < two_h; ++d) {
        ov[(static_cast<size_t>(i) * batch.max_len + t) * two_h + d] = enc.at(d, t);
      }
    }
  }
  return out;
}

template struct LstmParams<float>;
template struct LstmParams<double>;
template struct EncoderParams<float>;
template struct EncoderParams<double>;
template Tensor<float> xavier_init<float>(Shape, int, int, Rng&);
template Tensor<double> xavier_init<double>(Shape, int, int, Rng&);
template EncoderParams<float> init_encoder_params<float>(int, int, int, Rng&);
template EncoderParams<double> init_encoder_params<double>(int, int, int, Rng&);
template Tensor<float> embed<float>(Tape<float>&, const EncoderParams<float>&, std::span<const int>);
template Tensor<double> embed<double>(Tape<double>&, const EncoderParams<double>&, std::span<const int>);
template Tensor<float> bilstm_encode<float>(Tape<float>&, const EncoderParams<float>&, const Tensor<float>&);
template Tensor<double> bilstm_encode<double>(Tape<double>&, const EncoderParams<double>&, const Tensor<double>&);
template Tensor<float> encode_batch_padded<float>(Tape<float>&, const EncoderParams<float>&, const Batch&);
template Tensor<double> encode_batch_padded<double>(Tape<double>&, const EncoderParams<double>&, const Batch&);

}  // namespace capsnlu
