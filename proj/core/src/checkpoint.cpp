#include "capsule_nlu/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace capsnlu {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'N', 'L', 'M'};
constexpr uint8_t kMaxRank = 4;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string path)
      : bytes_(bytes), path_(std::move(path)) {}

  size_t offset() const { return off_; }

  void need(size_t n, const char* what) const {
    if (off_ + n > bytes_.size()) {
      throw FormatError(path_ + ": truncated while reading " + std::string(what) + " at byte offset " +
                        std::to_string(off_) + " (need " + std::to_string(n) + " bytes, have " +
                        std::to_string(bytes_.size() - off_) + ")");
    }
  }

  void raw(void* dst, size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + off_, n);
    off_ += n;
  }

  uint8_t u8(const char* what) {
    uint8_t v;
    raw(&v, 1, what);
    return v;
  }

  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = static_cast<uint8_t>(bytes_[off_]) | (static_cast<uint16_t>(static_cast<uint8_t>(bytes_[off_ + 1])) << 8);
    off_ += 2;
    return v;
  }

  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes_[off_ + i])) << (8 * i);
    off_ += 4;
    return v;
  }

  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.data() + off_, n);
    off_ += n;
    return s;
  }

  size_t remaining() const { return bytes_.size() - off_; }
  const std::string& path() const { return path_; }

 private:
  const std::string& bytes_;
  std::string path_;
  size_t off_ = 0;
};

// Parameter shells with the shapes implied by config and schema; values
// are filled from the file afterwards.
CapsuleModel<float> make_shell(const ModelConfig& cfg, const Vocabulary& vocab,
                               const LabelSchema& schema) {
  CapsuleModel<float> m;
  m.config = cfg;
  m.vocab = vocab;
  m.schema = schema;
  const int v = vocab.size(), h = cfg.d_h;
  m.encoder.embedding = Tensor<float>::zeros({v, cfg.d_w}, true);
  for (LstmParams<float>* dir : {&m.encoder.fw, &m.encoder.bw}) {
    dir->w_x = Tensor<float>::zeros({4 * h, cfg.d_w}, true);
    dir->w_h = Tensor<float>::zeros({4 * h, h}, true);
    dir->b = Tensor<float>::zeros({4 * h, 1}, true);
  }
  m.slot_caps.w = Tensor<float>::zeros({schema.num_slots(), cfg.d_p, 2 * h}, true);
  m.slot_caps.b = Tensor<float>::zeros({cfg.d_p, schema.num_slots()}, true);
  if (cfg.has_intent_path()) {
    m.intent_caps.w = Tensor<float>::zeros({schema.num_intents(), cfg.d_l, cfg.d_p}, true);
    m.intent_caps.b = Tensor<float>::zeros({cfg.d_l, schema.num_intents()}, true);
    m.intent_caps.rerouting = Tensor<float>::zeros({cfg.d_p, cfg.d_l}, true);
  }
  return m;
}

}  // namespace

void save_checkpoint(CapsuleModel<float>& model, const std::string& path) {
  json blob;
  blob["config"] = json::parse(model_config_to_json(model.config));
  // non-reserved tokens in id order; PAD/UNK are implicit at 0 and 1
  std::vector<std::string> tokens(model.vocab.tokens().begin() + 2, model.vocab.tokens().end());
  blob["vocab"] = tokens;
  blob["slot_tags"] = model.schema.slot_tags();
  blob["intents"] = model.schema.intents();
  const std::string blob_text = blob.dump();

  std::string head;
  head.append(kMagic, 4);
  put_u32(head, kCheckpointVersion);
  put_u32(head, static_cast<uint32_t>(blob_text.size()));
  head += blob_text;

  NamedParams<float> params = model.named_params();
  put_u32(head, static_cast<uint32_t>(params.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
  f.write(head.data(), static_cast<std::streamsize>(head.size()));

  for (auto& [name, p] : params) {
    std::string rec;
    put_u16(rec, static_cast<uint16_t>(name.size()));
    rec += name;
    rec.push_back(static_cast<char>(p.rank()));
    for (int i = 0; i < p.rank(); ++i) put_u32(rec, static_cast<uint32_t>(p.dim(i)));
    f.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    f.write(reinterpret_cast<const char*>(p.value().data()),
            static_cast<std::streamsize>(p.value().size() * sizeof(float)));
  }
  if (!f) throw FormatError("write failure on checkpoint: " + path);
}

CapsuleModel<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader r(bytes, path);

  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic at byte offset 0 (not a checkpoint file)");
  }
  const uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const uint32_t blob_len = r.u32("config length");
  const size_t blob_at = r.offset();
  const std::string blob_text = r.str(blob_len, "config blob");

  ModelConfig cfg;
  Vocabulary vocab;
  LabelSchema schema;
  try {
    json blob = json::parse(blob_text);
    cfg = parse_model_config(blob.at("config").dump());
    auto tokens = blob.at("vocab").get<std::vector<std::string>>();
    vocab = Vocabulary(tokens);
    schema = LabelSchema(blob.at("slot_tags").get<std::vector<std::string>>(),
                         blob.at("intents").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad config blob at byte offset " + std::to_string(blob_at) + ": " + e.what());
  }

  CapsuleModel<float> model = make_shell(cfg, vocab, schema);
  NamedParams<float> params = model.named_params();

  const uint32_t count = r.u32("tensor count");
  if (count != params.size()) {
    throw FormatError(path + ": expected " + std::to_string(params.size()) + " tensors for mode " +
                      to_string(cfg.mode) + ", file declares " + std::to_string(count));
  }

  for (uint32_t ti = 0; ti < count; ++ti) {
    const uint16_t name_len = r.u16("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    const uint8_t rank = r.u8("tensor rank");
    if (rank == 0 || rank > kMaxRank) {
      throw FormatError(path + ": tensor '" + name + "' has invalid rank " + std::to_string(rank) +
                        " at byte offset " + std::to_string(r.offset() - 1));
    }
    Shape dims(rank);
    uint64_t count_elems = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      const uint32_t v = r.u32("tensor dimension");
      if (v == 0 || v > (1u << 28)) {
        throw FormatError(path + ": tensor '" + name + "' has implausible dimension " + std::to_string(v) +
                          " at byte offset " + std::to_string(r.offset() - 4));
      }
      dims[d] = static_cast<int>(v);
      count_elems *= v;
    }
    // size arithmetic checked against the remaining bytes before copying
    if (count_elems * sizeof(float) > r.remaining()) {
      throw FormatError(path + ": tensor '" + name + "' declares " + std::to_string(count_elems) +
                        " floats but only " + std::to_string(r.remaining()) +
                        " bytes remain at byte offset " + std::to_string(r.offset()));
    }

    Tensor<float>* target = nullptr;
    for (auto& [pname, p] : params) {
      if (pname == name) {
        target = &p;
        break;
      }
    }
    if (target == nullptr) throw FormatError(path + ": unknown tensor name '" + name + "'");
    if (target->shape() != dims) {
      throw FormatError(path + ": tensor '" + name + "' has shape " + shape_str(dims) +
                        " but the configuration implies " + shape_str(target->shape()));
    }
    r.raw(target->value().data(), count_elems * sizeof(float), "tensor data");
    target->assert_finite("checkpoint tensor '" + name + "'");
  }
  if (r.remaining() != 0) {
    throw FormatError(path + ": " + std::to_string(r.remaining()) + " trailing bytes at offset " +
                      std::to_string(r.offset()));
  }
  return model;
}

}  // namespace capsnlu
