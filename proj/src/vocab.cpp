#include "genex/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "genex/errors.hpp"
#include "genex/text.hpp"

namespace genex {

namespace {

bool is_continuation(std::string_view piece) {
  return piece.size() > kContinuation.size() && piece.starts_with(kContinuation);
}

std::string merged_piece(const std::string& left, const std::string& right) {
  return left + right.substr(kContinuation.size());
}

}  // namespace

Vocab Vocab::train(const std::vector<std::string>& corpus, std::size_t target_size) {
  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : corpus) {
    for (auto& w : split_whitespace(to_lower(line))) ++word_counts[w];
  }
  if (word_counts.empty()) throw DataError("cannot train a vocabulary on an empty corpus");

  std::set<std::string> chars;
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  for (const auto& [word, count] : word_counts) {
    auto cs = utf8_chars(word);
    std::vector<std::string> pieces;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      chars.insert(cs[i]);
      pieces.push_back(i == 0 ? cs[i] : std::string(kContinuation) + cs[i]);
    }
    words.emplace_back(std::move(pieces), count);
  }

  std::vector<std::string> pieces(kSpecialPieces.begin(), kSpecialPieces.end());
  for (const auto& c : chars) pieces.push_back(c);
  for (const auto& c : chars) pieces.push_back(std::string(kContinuation) + c);
  if (target_size < pieces.size()) {
    throw UsageError("vocabulary target size " + std::to_string(target_size) +
                     " is below the " + std::to_string(pieces.size()) +
                     " specials and character pieces");
  }
  std::unordered_set<std::string> known(pieces.begin(), pieces.end());

  while (pieces.size() < target_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
    for (const auto& [ws, count] : words) {
      for (std::size_t i = 0; i + 1 < ws.size(); ++i) pair_counts[{ws[i], ws[i + 1]}] += count;
    }
    if (pair_counts.empty()) break;
    // std::map iterates pairs in lexicographic order, so the first maximum
    // is the tie-break winner.
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [left, right] = best->first;
    const std::string joined = merged_piece(left, right);
    for (auto& [ws, count] : words) {
      std::vector<std::string> next;
      next.reserve(ws.size());
      for (std::size_t i = 0; i < ws.size(); ++i) {
        if (i + 1 < ws.size() && ws[i] == left && ws[i + 1] == right) {
          next.push_back(joined);
          ++i;
        } else {
          next.push_back(ws[i]);
        }
      }
      ws = std::move(next);
    }
    if (known.insert(joined).second) pieces.push_back(joined);
  }
  return from_pieces(std::move(pieces));
}

Vocab Vocab::from_pieces(std::vector<std::string> pieces) {
  if (pieces.size() < kNumSpecials) throw DataError("vocabulary is missing the special pieces");
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (pieces[i] != kSpecialPieces[i]) {
      throw DataError("vocabulary line " + std::to_string(i + 1) + " must be " +
                      std::string(kSpecialPieces[i]));
    }
  }
  Vocab v;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].empty() || pieces[i].find_first_of(" \t\r\n") != std::string::npos) {
      throw DataError("invalid vocabulary piece at line " + std::to_string(i + 1));
    }
    if (!v.index_.emplace(pieces[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary piece '" + pieces[i] + "'");
    }
  }
  v.pieces_ = std::move(pieces);
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path);
  std::vector<std::string> pieces;
  std::string line;
  while (std::getline(in, line)) pieces.push_back(line);
  return from_pieces(std::move(pieces));
}

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& p : pieces_) {
    out += p;
    out += '\n';
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + path);
  out << serialize();
}

const std::string& Vocab::piece(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                    std::to_string(pieces_.size()));
  }
  return pieces_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocab::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Vocab::tokenize(std::string_view text) const {
  std::vector<std::string> out;
  const std::string unk(kSpecialPieces[kUnkId]);
  for (const auto& word : split_whitespace(to_lower(text))) {
    const auto chars = utf8_chars(word);
    std::size_t pos = 0;
    while (pos < chars.size()) {
      const std::string prefix = pos == 0 ? "" : std::string(kContinuation);
      std::size_t best_end = 0;
      std::string candidate = prefix;
      std::string best;
      for (std::size_t end = pos; end < chars.size(); ++end) {
        candidate += chars[end];
        if (index_.count(candidate)) {
          best_end = end + 1;
          best = candidate;
        }
      }
      if (best_end == 0) {
        out.push_back(unk);
        ++pos;
      } else {
        out.push_back(std::move(best));
        pos = best_end;
      }
    }
  }
  return out;
}

std::vector<TokenId> Vocab::to_ids(const std::vector<std::string>& pieces) const {
  std::vector<TokenId> ids;
  ids.reserve(pieces.size());
  for (const auto& p : pieces) ids.push_back(find(p).value_or(kUnkId));
  return ids;
}

std::vector<TokenId> Vocab::encode_text(std::string_view text) const {
  return to_ids(tokenize(text));
}

std::string Vocab::join_pieces(const std::vector<std::string>& pieces) {
  std::string out;
  for (const auto& p : pieces) {
    if (is_continuation(p)) {
      out += p.substr(kContinuation.size());
    } else {
      if (!out.empty()) out += ' ';
      out += p;
    }
  }
  return out;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> kept;
  for (auto id : ids) {
    const auto& p = piece(id);
    if (!is_special(id)) kept.push_back(p);
  }
  return join_pieces(kept);
}

EncodedSample encode_ids(std::span<const TokenId> query, std::span<const TokenId> document,
                         std::span<const TokenId> explanation, SegmentScheme scheme,
                         std::size_t max_input_len) {
  if (query.empty()) throw UsageError("cannot encode an empty query");
  if (document.empty()) throw UsageError("cannot encode an empty document");
  if (max_input_len != 0 && max_input_len < 2) {
    throw UsageError("max_input_len must leave room for one token and SEP");
  }
  std::size_t q_len = query.size();
  std::size_t d_len = document.size();
  if (max_input_len != 0) {
    if (scheme == SegmentScheme::kSplit) {
      q_len = std::min(q_len, max_input_len - 1);
      d_len = std::min(d_len, max_input_len - 1);
    } else {
      q_len = std::min(q_len, max_input_len - 2);
      d_len = std::min(d_len, max_input_len - 1 - q_len);
    }
  }

  EncodedSample out;
  out.scheme = scheme;
  out.query_len = q_len;
  out.query_ids.assign(query.begin(), query.begin() + static_cast<std::ptrdiff_t>(q_len));
  const std::unordered_set<TokenId> qset(out.query_ids.begin(), out.query_ids.end());

  if (scheme == SegmentScheme::kSplit) {
    out.query.ids = out.query_ids;
    out.query.ids.push_back(kSepId);
    out.query.segments.assign(out.query.ids.size(), 0);
    out.document.ids.assign(document.begin(), document.begin() + static_cast<std::ptrdiff_t>(d_len));
    out.document.ids.push_back(kSepId);
    // A per-sequence constant carries nothing here, so mark query-id occurrences.
    out.document.segments.resize(out.document.ids.size());
    for (std::size_t i = 0; i < out.document.ids.size(); ++i) {
      out.document.segments[i] = qset.count(out.document.ids[i]) ? 0 : 1;
    }
  } else {
    auto& seq = out.input;
    seq.ids = out.query_ids;
    seq.ids.push_back(kSepId);
    seq.ids.insert(seq.ids.end(), document.begin(), document.begin() + static_cast<std::ptrdiff_t>(d_len));
    seq.segments.resize(seq.ids.size());
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
      if (scheme == SegmentScheme::kPart) {
        seq.segments[i] = i <= q_len ? 0 : 1;
      } else {
        seq.segments[i] = qset.count(seq.ids[i]) ? 0 : 1;
      }
    }
  }

  out.target.ids.push_back(kBosId);
  out.target.ids.insert(out.target.ids.end(), explanation.begin(), explanation.end());
  out.target.ids.push_back(kEosId);
  out.target.segments.assign(out.target.ids.size(), 1);
  return out;
}

EncodedSample encode(std::string_view query, std::string_view document,
                     std::string_view explanation, const Vocab& vocab, SegmentScheme scheme,
                     std::size_t max_input_len) {
  const auto q = vocab.encode_text(query);
  const auto d = vocab.encode_text(document);
  const auto e = vocab.encode_text(explanation);
  return encode_ids(q, d, e, scheme, max_input_len);
}

}  // namespace genex
