#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genex/ops.hpp"

namespace genex {

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kBosId = 2;
inline constexpr TokenId kEosId = 3;
inline constexpr TokenId kSepId = 4;
inline constexpr std::size_t kNumSpecials = 5;
inline constexpr std::array<std::string_view, kNumSpecials> kSpecialPieces = {
    "[PAD]", "[UNK]", "[BOS]", "[EOS]", "[SEP]"};
// Marks a word-internal piece, WordPiece style.
inline constexpr std::string_view kContinuation = "##";

// Subword vocabulary. Ids 0..4 are the special tokens; every character seen
// at build time exists both as a word-initial and a continuation piece.
class Vocab {
 public:
  Vocab() = default;

  // Specials, every observed character, then the most frequent adjacent
  // piece merges (ties broken by the lexicographically smallest pair) until
  // target_size or no merge is left. Text is lowercased.
  static Vocab train(const std::vector<std::string>& corpus, std::size_t target_size);

  // Validates the fixed special prefix and uniqueness.
  static Vocab from_pieces(std::vector<std::string> pieces);
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;
  std::string serialize() const;  // one piece per line

  std::size_t size() const { return pieces_.size(); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  const std::string& piece(TokenId id) const;
  std::optional<TokenId> find(std::string_view piece) const;
  static bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kNumSpecials); }

  // Greedy longest-match per whitespace word; an unmatched character becomes
  // one [UNK] piece. Lowercases internally.
  std::vector<std::string> tokenize(std::string_view text) const;
  std::vector<TokenId> to_ids(const std::vector<std::string>& pieces) const;
  std::vector<TokenId> encode_text(std::string_view text) const;

  // Pieces joined with spaces, continuation pieces fused, specials dropped.
  // Throws DataError on an id outside the vocabulary.
  std::string decode(std::span<const TokenId> ids) const;
  static std::string join_pieces(const std::vector<std::string>& pieces);

  bool operator==(const Vocab& other) const { return pieces_ == other.pieces_; }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TokenSeq {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> segments;  // 0 = query side, 1 = document side

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSeq&) const = default;
};

enum class SegmentScheme {
  kPart,   // [q.., SEP, d..]; segment 0 on the query part and SEP, 1 on the document
  kOccur,  // [q.., SEP, d..]; segment 0 wherever the id is a query id
  kSplit,  // query [q.., SEP] (segment 0) and document [d.., SEP], segment 0 on query ids
};

struct EncodedSample {
  SegmentScheme scheme = SegmentScheme::kPart;
  TokenSeq input;     // concatenated form (kPart, kOccur)
  TokenSeq query;     // kSplit
  TokenSeq document;  // kSplit
  TokenSeq target;    // [BOS, e.., EOS]
  std::size_t query_len = 0;            // content query tokens kept
  std::vector<TokenId> query_ids;       // content ids of the query, in order

  // Total tokens fed to the model, used by the batcher.
  std::size_t token_count() const {
    return input.size() + query.size() + document.size() + target.size();
  }
};

// Builds model inputs from id sequences. A positive max_input_len truncates
// the document (and, only if unavoidable, the query) so every encoder input
// fits. Throws UsageError when the query or document is empty.
EncodedSample encode_ids(std::span<const TokenId> query, std::span<const TokenId> document,
                         std::span<const TokenId> explanation, SegmentScheme scheme,
                         std::size_t max_input_len = 0);

EncodedSample encode(std::string_view query, std::string_view document,
                     std::string_view explanation, const Vocab& vocab, SegmentScheme scheme,
                     std::size_t max_input_len = 0);

}  // namespace genex
