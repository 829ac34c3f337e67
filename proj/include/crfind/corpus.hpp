/* Copyright 2026 The crfind Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// Column-format corpus reading and writing.
//
// One token per line, whitespace-separated columns, blank line between
// sentences. A line whose first column is "-DOCSTART-" opens a new document.
// The first column is always the token; one column (by default the last) is
// the gold label; every other column is kept as an auxiliary column.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crfind/error.hpp"

namespace crfind {

inline constexpr std::string_view kDocStart = "-DOCSTART-";

struct Sentence {
  std::vector<std::string> tokens;
  // aux[t] holds the non-token, non-label columns of token t, in file order.
  std::vector<std::vector<std::string>> aux;
  // Empty when the sentence was read without a label column.
  std::vector<std::string> labels;
  std::optional<std::string> doc_header;
  std::size_t document = 0;
  // Resolved (non-negative) column index the label came from, -1 if none.
  int label_index = -1;
  std::size_t first_line = 0;

  std::size_t size() const { return tokens.size(); }
  bool labeled() const { return !labels.empty(); }
};

enum class HeaderMode {
  kNone,
  // Header is the first token of the document when it is an all-capitals
  // word of two or more letters (e.g. "SOCCER").
  kFirstToken,
  // Header is the value of `header_column` at the document's first token.
  kColumn,
};

struct ReadOptions {
  bool has_labels = true;
  // Negative values count from the end: -1 is the last column.
  int label_column = -1;
  HeaderMode header_mode = HeaderMode::kNone;
  int header_column = 1;
};

// One element of a column file: either a sentence or a line kept verbatim
// (blank separators and -DOCSTART- lines).
struct ConllBlock {
  bool is_sentence = false;
  std::string raw;
  Sentence sentence;
  std::vector<std::vector<std::string>> columns;
};

namespace detail {

inline std::vector<std::string> split_columns(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool is_all_caps_word(std::string_view s) {
  if (s.size() < 2) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
}

}  // namespace detail

// Reads every line of the stream, grouping token lines into sentences. The
// returned blocks reproduce the input line structure exactly.
inline std::vector<ConllBlock> read_conll_blocks(std::istream& in, const ReadOptions& opts = {}) {
  std::vector<ConllBlock> blocks;
  std::size_t document = 0;
  std::optional<std::string> header;
  bool header_pending = true;

  ConllBlock current;
  std::size_t width = 0;
  int label_index = -1;

  auto flush = [&]() {
    if (current.columns.empty()) return;
    Sentence& s = current.sentence;
    s.document = document;
    s.label_index = label_index;
    if (header_pending) {
      header.reset();
      if (opts.header_mode == HeaderMode::kFirstToken && detail::is_all_caps_word(s.tokens.front())) {
        header = s.tokens.front();
      } else if (opts.header_mode == HeaderMode::kColumn) {
        const auto& row = current.columns.front();
        if (opts.header_column < 0 || static_cast<std::size_t>(opts.header_column) >= row.size())
          throw FormatError("header column " + std::to_string(opts.header_column) + " out of range",
                            s.first_line);
        header = row[static_cast<std::size_t>(opts.header_column)];
      }
      header_pending = false;
    }
    s.doc_header = header;
    current.is_sentence = true;
    blocks.push_back(std::move(current));
    current = ConllBlock{};
    width = 0;
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto cols = detail::split_columns(line);
    if (cols.empty() || cols.front() == kDocStart) {
      flush();
      if (!cols.empty()) {
        ++document;
        header_pending = true;
      }
      ConllBlock raw;
      raw.raw = line;
      blocks.push_back(std::move(raw));
      continue;
    }
    if (current.columns.empty()) {
      width = cols.size();
      current.sentence.first_line = lineno;
      if (opts.has_labels) {
        const int n = static_cast<int>(width);
        label_index = opts.label_column < 0 ? n + opts.label_column : opts.label_column;
        if (label_index <= 0 || label_index >= n)
          throw FormatError("label column " + std::to_string(opts.label_column) + " not available in a " +
                                std::to_string(width) + "-column row",
                            lineno);
      } else {
        label_index = -1;
      }
    } else if (cols.size() != width) {
      throw FormatError("ragged row: expected " + std::to_string(width) + " columns, found " +
                            std::to_string(cols.size()),
                        lineno);
    }
    Sentence& s = current.sentence;
    s.tokens.push_back(cols.front());
    std::vector<std::string> aux;
    for (std::size_t c = 1; c < cols.size(); ++c) {
      if (static_cast<int>(c) == label_index) {
        s.labels.push_back(cols[c]);
      } else {
        aux.push_back(cols[c]);
      }
    }
    s.aux.push_back(std::move(aux));
    current.columns.push_back(std::move(cols));
  }
  flush();
  return blocks;
}

inline std::vector<Sentence> read_conll(std::istream& in, const ReadOptions& opts = {}) {
  std::vector<Sentence> out;
  for (auto& block : read_conll_blocks(in, opts))
    if (block.is_sentence) out.push_back(std::move(block.sentence));
  return out;
}

inline std::vector<Sentence> read_conll(std::string_view text, const ReadOptions& opts = {}) {
  std::istringstream in{std::string(text)};
  return read_conll(in, opts);
}

// Writes sentences back in column layout, single-space separated, label in
// the column it was read from, one blank line after each sentence.
inline void write_conll(std::ostream& out, const std::vector<Sentence>& sentences) {
  for (const auto& s : sentences) {
    for (std::size_t t = 0; t < s.size(); ++t) {
      std::vector<std::string_view> row;
      row.push_back(s.tokens[t]);
      for (const auto& a : s.aux[t]) row.push_back(a);
      if (s.labeled()) {
        auto pos = s.label_index > 0 ? static_cast<std::size_t>(s.label_index) : row.size();
        pos = std::min(pos, row.size());
        row.insert(row.begin() + static_cast<std::ptrdiff_t>(pos), s.labels[t]);
      }
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "") << row[c];
      out << '\n';
    }
    out << '\n';
  }
}

}  // namespace crfind
