#include "genex/triple.hpp"

#include <fstream>
#include <sstream>

#include "genex/errors.hpp"

namespace genex {

using nlohmann::json;

std::string to_string(TripleSource source) {
  switch (source) {
    case TripleSource::kWiki: return "wiki";
    case TripleSource::kAnchor: return "anchor";
    case TripleSource::kSynthetic: return "synthetic";
  }
  return "synthetic";
}

TripleSource parse_source(const std::string& text) {
  if (text == "wiki") return TripleSource::kWiki;
  if (text == "anchor") return TripleSource::kAnchor;
  if (text == "synthetic") return TripleSource::kSynthetic;
  throw DataError("unknown triple source '" + text + "'");
}

std::string to_jsonl_line(const ExplanationTriple& triple) {
  // Built by hand so the key order is stable.
  std::string line = "{\"query\":" + json(triple.query).dump();
  line += ",\"document\":" + json(triple.document).dump();
  line += ",\"explanation\":" + json(triple.explanation).dump();
  line += ",\"source\":" + json(to_string(triple.source)).dump() + "}";
  return line;
}

ExplanationTriple triple_from_json(const json& record) {
  if (!record.is_object()) throw DataError("triple record is not a JSON object");
  ExplanationTriple t;
  try {
    t.query = record.at("query").get<std::string>();
    t.document = record.at("document").get<std::string>();
    t.explanation = record.value("explanation", std::string());
    t.source = parse_source(record.value("source", std::string("synthetic")));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed triple record: ") + e.what());
  }
  return t;
}

void write_triples(std::ostream& out, const std::vector<ExplanationTriple>& triples) {
  for (const auto& t : triples) out << to_jsonl_line(t) << '\n';
}

void write_triples(const std::string& path, const std::vector<ExplanationTriple>& triples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_triples(out, triples);
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::vector<ExplanationTriple> read_triples(const std::string& path) {
  std::vector<ExplanationTriple> triples;
  std::size_t line_no = 0;
  for (const auto& record : read_jsonl(path)) {
    ++line_no;
    try {
      triples.push_back(triple_from_json(record));
    } catch (const DataError& e) {
      throw DataError(path + " record " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return triples;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << contents;
}

}  // namespace genex
