#include "capsule_nlu/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "capsule_nlu/log.hpp"

namespace capsnlu {

Vocabulary::Vocabulary() {
  id_to_token_ = {kPadToken, kUnkToken};
  token_to_id_[kPadToken] = kPadId;
  token_to_id_[kUnkToken] = kUnkId;
}

Vocabulary::Vocabulary(std::span<const std::string> tokens_in_order) : Vocabulary() {
  for (const auto& t : tokens_in_order) add(t);
}

int Vocabulary::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) throw SchemaError("vocabulary id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

LabelSchema::LabelSchema(std::vector<std::string> slot_tags, std::vector<std::string> intents)
    : slot_tags_(std::move(slot_tags)), intents_(std::move(intents)) {
  for (size_t i = 0; i < slot_tags_.size(); ++i) {
    if (!slot_to_id_.emplace(slot_tags_[i], static_cast<int>(i)).second) {
      throw SchemaError("duplicate slot tag '" + slot_tags_[i] + "' in schema");
    }
  }
  for (size_t i = 0; i < intents_.size(); ++i) {
    if (!intent_to_id_.emplace(intents_[i], static_cast<int>(i)).second) {
      throw SchemaError("duplicate intent '" + intents_[i] + "' in schema");
    }
  }
  auto it = slot_to_id_.find("O");
  if (it == slot_to_id_.end()) throw SchemaError("label schema must contain the O tag");
  o_id_ = it->second;
}

int LabelSchema::slot_id(const std::string& tag) const {
  auto it = slot_to_id_.find(tag);
  return it == slot_to_id_.end() ? -1 : it->second;
}

int LabelSchema::intent_id(const std::string& label) const {
  auto it = intent_to_id_.find(label);
  return it == intent_to_id_.end() ? -1 : it->second;
}

const std::string& LabelSchema::slot_tag(int id) const {
  if (id < 0 || id >= num_slots()) throw SchemaError("slot id " + std::to_string(id) + " out of range");
  return slot_tags_[static_cast<size_t>(id)];
}

const std::string& LabelSchema::intent(int id) const {
  if (id < 0 || id >= num_intents()) throw SchemaError("intent id " + std::to_string(id) + " out of range");
  return intents_[static_cast<size_t>(id)];
}

std::vector<std::string> split_whitespace(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string lowercased(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool is_bio_tag(const std::string& tag) {
  if (tag == "O") return true;
  return tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
}

}  // namespace

void validate_bio(std::span<const std::string> tags, const std::string& where) {
  std::string prev = "O";
  for (const auto& tag : tags) {
    if (!is_bio_tag(tag)) {
      throw FormatError(where + ": tag '" + tag + "' is not in BIO form (O, B-type or I-type)");
    }
    if (tag[0] == 'I') {
      const std::string type = tag.substr(2);
      const bool ok = (prev.size() > 2 && prev.substr(2) == type && (prev[0] == 'B' || prev[0] == 'I'));
      if (!ok) {
        throw FormatError(where + ": I-" + type + " is not preceded by B-" + type + " or I-" + type);
      }
    }
    prev = tag;
  }
}

std::vector<AnnotatedUtterance> load_split(const std::string& data_dir, const std::string& split) {
  const std::string base = data_dir + "/" + split + "/";
  const auto tokens_lines = read_lines(base + "seq.in");
  const auto tags_lines = read_lines(base + "seq.out");
  const auto label_lines = read_lines(base + "label");

  if (tokens_lines.size() != tags_lines.size() || tokens_lines.size() != label_lines.size()) {
    throw FormatError(base + ": parallel files disagree: seq.in has " + std::to_string(tokens_lines.size()) +
                      " lines, seq.out has " + std::to_string(tags_lines.size()) + ", label has " +
                      std::to_string(label_lines.size()));
  }

  std::vector<AnnotatedUtterance> out;
  out.reserve(tokens_lines.size());
  for (size_t i = 0; i < tokens_lines.size(); ++i) {
    const std::string where = base + "line " + std::to_string(i + 1);
    AnnotatedUtterance u;
    u.tokens = split_whitespace(tokens_lines[i]);
    u.slot_tags = split_whitespace(tags_lines[i]);
    u.intent = label_lines[i];
    while (!u.intent.empty() && (u.intent.back() == ' ' || u.intent.back() == '\t')) u.intent.pop_back();
    if (u.tokens.empty()) throw FormatError(where + ": empty utterance");
    if (u.tokens.size() != u.slot_tags.size()) {
      throw FormatError(where + ": " + std::to_string(u.tokens.size()) + " tokens but " +
                        std::to_string(u.slot_tags.size()) + " tags");
    }
    if (u.intent.empty()) throw FormatError(where + ": empty intent label");
    validate_bio(u.slot_tags, where);
    out.push_back(std::move(u));
  }
  return out;
}

void save_split(const std::string& data_dir, const std::string& split,
                std::span<const AnnotatedUtterance> utts) {
  const std::string base = data_dir + "/" + split + "/";
  std::ofstream fin(base + "seq.in"), fout(base + "seq.out"), flab(base + "label");
  if (!fin || !fout || !flab) throw FormatError("cannot write split files under " + base);
  for (const auto& u : utts) {
    for (size_t i = 0; i < u.tokens.size(); ++i) fin << (i ? " " : "") << u.tokens[i];
    fin << "\n";
    for (size_t i = 0; i < u.slot_tags.size(); ++i) fout << (i ? " " : "") << u.slot_tags[i];
    fout << "\n";
    flab << u.intent << "\n";
  }
}

VocabAndSchema build_vocab(std::span<const AnnotatedUtterance> train, int min_count, bool lowercase) {
  if (train.empty()) throw FormatError("build_vocab: empty training set");

  std::unordered_map<std::string, int> freq;
  std::vector<std::string> order;  // first-occurrence order
  std::set<std::string> slot_tags, intents;
  for (const auto& u : train) {
    for (const auto& raw : u.tokens) {
      const std::string tok = lowercase ? lowercased(raw) : raw;
      if (freq[tok]++ == 0) order.push_back(tok);
    }
    for (const auto& t : u.slot_tags) slot_tags.insert(t);
    intents.insert(u.intent);
  }

  VocabAndSchema vs;
  for (const auto& tok : order) {
    if (freq[tok] >= min_count) vs.vocab.add(tok);
  }
  slot_tags.insert("O");
  vs.schema = LabelSchema(std::vector<std::string>(slot_tags.begin(), slot_tags.end()),
                          std::vector<std::string>(intents.begin(), intents.end()));
  return vs;
}

std::vector<int> encode_tokens(std::span<const std::string> tokens, const Vocabulary& vocab,
                               bool lowercase) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& raw : tokens) {
    ids.push_back(vocab.id_of(lowercase ? lowercased(raw) : raw));
  }
  return ids;
}

Batch encode_batch(std::span<const AnnotatedUtterance> utts, const Vocabulary& vocab,
                   const LabelSchema& schema, bool lowercase, EncodeMode mode) {
  if (utts.empty()) throw FormatError("encode_batch: empty batch");

  Batch b;
  b.batch_size = static_cast<int>(utts.size());
  b.max_len = 0;
  for (const auto& u : utts) b.max_len = std::max(b.max_len, static_cast<int>(u.tokens.size()));

  const size_t cells = static_cast<size_t>(b.batch_size) * b.max_len;
  b.token_ids.assign(cells, Vocabulary::kPadId);
  b.tag_ids.assign(cells, Vocabulary::kPadId);
  b.mask.assign(cells, 0);
  b.intent_ids.resize(utts.size());
  b.lengths.resize(utts.size());

  for (size_t i = 0; i < utts.size(); ++i) {
    const auto& u = utts[i];
    b.lengths[i] = static_cast<int>(u.tokens.size());
    const auto ids = encode_tokens(u.tokens, vocab, lowercase);
    for (size_t t = 0; t < u.tokens.size(); ++t) {
      const size_t cell = i * b.max_len + t;
      b.token_ids[cell] = ids[t];
      int tag = schema.slot_id(u.slot_tags[t]);
      if (tag < 0) {
        if (mode == EncodeMode::kStrict) {
          throw SchemaError("slot tag '" + u.slot_tags[t] + "' not present in schema");
        }
        log::info("unseen slot tag '" + u.slot_tags[t] + "' mapped to O");
        tag = schema.o_tag_id();
      }
      b.tag_ids[cell] = tag;
      b.mask[cell] = 1;
    }
    int intent = schema.intent_id(u.intent);
    if (intent < 0 && mode == EncodeMode::kStrict) {
      throw SchemaError("intent '" + u.intent + "' not present in schema");
    }
    if (intent < 0) log::info("unseen intent '" + u.intent + "' kept as unmatchable sentinel");
    b.intent_ids[i] = intent;
  }
  return b;
}

}  // namespace capsnlu
