#pragma once

#include <algorithm>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace brhc {

/// JSON document plus the source line of every object key and array element,
/// keyed by JSON pointer ("/defaults/K", "/observation/landmarks/2").
struct LocatedJson {
  nlohmann::json value;
  std::map<std::string, int> lines;

  int line_of(const std::string& pointer) const {
    // Fall back to the closest located ancestor.
    std::string p = pointer;
    while (true) {
      if (auto it = lines.find(p); it != lines.end()) return it->second;
      const auto cut = p.find_last_of('/');
      if (cut == std::string::npos || p.empty()) return 1;
      p.erase(cut);
    }
  }
};

namespace detail {

struct CountingIterator {
  using iterator_category = std::forward_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  const char* p = nullptr;
  const char* base = nullptr;
  std::size_t* position = nullptr;

  reference operator*() const {
    *position = static_cast<std::size_t>(p - base);
    return *p;
  }
  CountingIterator& operator++() {
    ++p;
    return *this;
  }
  CountingIterator operator++(int) {
    auto old = *this;
    ++p;
    return old;
  }
  bool operator==(const CountingIterator& o) const { return p == o.p; }
  bool operator!=(const CountingIterator& o) const { return p != o.p; }
};

class LocatingSax {
 public:
  using json = nlohmann::json;
  LocatingSax(const std::string& text, LocatedJson& out, std::size_t& position)
      : text_(text), out_(out), dom_(out.value), position_(position) {}

  bool null() { return element() && dom_.null(); }
  bool boolean(bool v) { return element() && dom_.boolean(v); }
  bool number_integer(json::number_integer_t v) { return element() && dom_.number_integer(v); }
  bool number_unsigned(json::number_unsigned_t v) { return element() && dom_.number_unsigned(v); }
  bool number_float(json::number_float_t v, const json::string_t& s) {
    return element() && dom_.number_float(v, s);
  }
  bool string(json::string_t& v) { return element() && dom_.string(v); }
  bool binary(json::binary_t& v) { return element() && dom_.binary(v); }

  bool start_object(std::size_t n) {
    element();
    frames_.push_back({false, -1, path(), {}});
    return dom_.start_object(n);
  }
  bool key(json::string_t& k) {
    auto& f = frames_.back();
    f.key = escape(k);
    out_.lines[f.prefix + "/" + f.key] = line();
    return dom_.key(k);
  }
  bool end_object() {
    frames_.pop_back();
    return dom_.end_object();
  }
  bool start_array(std::size_t n) {
    element();
    frames_.push_back({true, -1, path(), {}});
    return dom_.start_array(n);
  }
  bool end_array() {
    frames_.pop_back();
    return dom_.end_array();
  }
  bool parse_error(std::size_t pos, const std::string& tok, const nlohmann::detail::exception& e) {
    if (const auto* pe = dynamic_cast<const nlohmann::json::parse_error*>(&e)) throw *pe;
    return dom_.parse_error(pos, tok, e);
  }

 private:
  struct Frame {
    bool array;
    int index;
    std::string prefix;
    std::string key;
  };

  static std::string escape(const std::string& k) {
    std::string r;
    for (char c : k) {
      if (c == '~') r += "~0";
      else if (c == '/') r += "~1";
      else r += c;
    }
    return r;
  }

  int line() const {
    const auto end = std::min(position_, text_.size());
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + end, '\n'));
  }

  // Current pointer of the value being parsed.
  std::string path() const {
    if (frames_.empty()) return "";
    const auto& f = frames_.back();
    return f.prefix + "/" + (f.array ? std::to_string(f.index) : f.key);
  }

  bool element() {
    if (!frames_.empty() && frames_.back().array) {
      auto& f = frames_.back();
      ++f.index;
      out_.lines[f.prefix + "/" + std::to_string(f.index)] = line();
    }
    return true;
  }

  const std::string& text_;
  LocatedJson& out_;
  nlohmann::detail::json_sax_dom_parser<json> dom_;
  std::size_t& position_;
  std::vector<Frame> frames_;
};

}  // namespace detail

/// Parses JSON text; throws nlohmann::json::parse_error on malformed input.
inline LocatedJson parse_located_json(const std::string& text) {
  LocatedJson out;
  std::size_t position = 0;
  detail::LocatingSax sax(text, out, position);
  detail::CountingIterator first{text.data(), text.data(), &position};
  detail::CountingIterator last{text.data() + text.size(), text.data(), &position};
  nlohmann::json::sax_parse(first, last, &sax);
  return out;
}

}  // namespace brhc
