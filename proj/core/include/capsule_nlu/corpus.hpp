#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "capsule_nlu/errors.hpp"

namespace capsnlu {

// One training/evaluation sample: parallel tokens and BIO slot tags plus an
// utterance-level intent label.
struct AnnotatedUtterance {
  std::vector<std::string> tokens;
  std::vector<std::string> slot_tags;
  std::string intent;

  bool operator==(const AnnotatedUtterance&) const = default;
};

// token <-> id tables with reserved ids 0 (PAD) and 1 (UNK).
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary();
  explicit Vocabulary(std::span<const std::string> tokens_in_order);  // non-reserved tokens

  int add(const std::string& token);          // returns existing id if present
  int id_of(const std::string& token) const;  // UNK id when absent
  const std::string& token_of(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }  // includes PAD/UNK
  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Dense slot-tag and intent label tables. Slot ids cover [0, K) with "O"
// always present; intent ids cover [0, L).
class LabelSchema {
 public:
  LabelSchema() = default;
  LabelSchema(std::vector<std::string> slot_tags, std::vector<std::string> intents);

  int slot_id(const std::string& tag) const;      // -1 when absent
  int intent_id(const std::string& label) const;  // -1 when absent
  const std::string& slot_tag(int id) const;
  const std::string& intent(int id) const;
  int num_slots() const { return static_cast<int>(slot_tags_.size()); }
  int num_intents() const { return static_cast<int>(intents_.size()); }
  int o_tag_id() const { return o_id_; }
  const std::vector<std::string>& slot_tags() const { return slot_tags_; }
  const std::vector<std::string>& intents() const { return intents_; }

 private:
  std::vector<std::string> slot_tags_;
  std::vector<std::string> intents_;
  std::unordered_map<std::string, int> slot_to_id_;
  std::unordered_map<std::string, int> intent_to_id_;
  int o_id_ = -1;
};

// Padded, masked id batch. mask[i][t] = 1 iff t < lengths[i]; padded cells
// hold the PAD id.
struct Batch {
  int batch_size = 0;
  int max_len = 0;
  std::vector<int> token_ids;   // batch_size x max_len, row-major
  std::vector<int> tag_ids;     // batch_size x max_len
  std::vector<int> intent_ids;  // batch_size
  std::vector<uint8_t> mask;    // batch_size x max_len
  std::vector<int> lengths;     // batch_size

  int token_id(int i, int t) const { return token_ids[static_cast<size_t>(i) * max_len + t]; }
  int tag_id(int i, int t) const { return tag_ids[static_cast<size_t>(i) * max_len + t]; }
  bool is_real(int i, int t) const { return mask[static_cast<size_t>(i) * max_len + t] != 0; }
};

// Dataset directory layout: <data_dir>/<split>/{seq.in, seq.out, label},
// parallel line-per-utterance files, UTF-8 with LF line endings.
std::vector<AnnotatedUtterance> load_split(const std::string& data_dir, const std::string& split);
void save_split(const std::string& data_dir, const std::string& split,
                std::span<const AnnotatedUtterance> utts);

// Throws FormatError naming the line on BIO violations (an I-X tag must
// follow B-X or I-X of the same type).
void validate_bio(std::span<const std::string> tags, const std::string& where);

struct VocabAndSchema {
  Vocabulary vocab;
  LabelSchema schema;
};

// Builds the token vocabulary (frequency < min_count maps to UNK) and the
// label schema from the union of training tags and intents.
VocabAndSchema build_vocab(std::span<const AnnotatedUtterance> train, int min_count = 1,
                           bool lowercase = false);

enum class EncodeMode {
  kStrict,   // unseen tag or intent -> SchemaError (training)
  kTolerant  // unseen tag -> O with a warning; unseen intent -> -1 sentinel
};

Batch encode_batch(std::span<const AnnotatedUtterance> utts, const Vocabulary& vocab,
                   const LabelSchema& schema, bool lowercase = false,
                   EncodeMode mode = EncodeMode::kStrict);

// Token -> id helper shared by the batch encoder and the CLI predict path.
std::vector<int> encode_tokens(std::span<const std::string> tokens, const Vocabulary& vocab,
                               bool lowercase);

std::vector<std::string> split_whitespace(const std::string& line);
std::string lowercased(const std::string& s);

}  // namespace capsnlu
