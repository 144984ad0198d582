#pragma once

// persistence: a small json reader/writer (shortest round-trip numbers, so
// serialized values reparse bit-exactly), a named binary array container,
// checkpoint save/load over any model exposing visit_params, and text/csv
// helpers. all formats are little-endian and deterministic byte-for-byte.

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hupor/core.hpp"

namespace hupor {

struct io_error : std::runtime_error {
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// json

struct JsonValue {
  enum class Kind { null, boolean, number, string, array, object };
  Kind kind = Kind::null;
  bool boolean = false;
  double number = 0;
  std::string text;
  std::vector<JsonValue> items;                              // array
  std::vector<std::pair<std::string, JsonValue>> members;    // object, insertion order

  static JsonValue object() {
    JsonValue v;
    v.kind = Kind::object;
    return v;
  }
  static JsonValue array() {
    JsonValue v;
    v.kind = Kind::array;
    return v;
  }
  static JsonValue of(double n) {
    JsonValue v;
    v.kind = Kind::number;
    v.number = n;
    return v;
  }
  static JsonValue of(bool b) {
    JsonValue v;
    v.kind = Kind::boolean;
    v.boolean = b;
    return v;
  }
  static JsonValue of(const std::string& s) {
    JsonValue v;
    v.kind = Kind::string;
    v.text = s;
    return v;
  }
  static JsonValue of(const char* s) { return of(std::string(s)); }

  bool is_object() const { return kind == Kind::object; }
  bool is_array() const { return kind == Kind::array; }

  JsonValue& set(const std::string& key, JsonValue v) {
    for (auto& m : members)
      if (m.first == key) {
        m.second = std::move(v);
        return m.second;
      }
    members.push_back({key, std::move(v)});
    return members.back().second;
  }

  const JsonValue* find(const std::string& key) const {
    for (const auto& m : members)
      if (m.first == key) return &m.second;
    return nullptr;
  }

  const JsonValue& must(const std::string& key) const {
    if (const JsonValue* v = find(key)) return *v;
    throw validation_error("missing json member \"" + key + "\"");
  }

  double as_number(const std::string& what = "json value") const {
    if (kind != Kind::number) throw validation_error(what + " is not a number");
    return number;
  }
  bool as_bool(const std::string& what = "json value") const {
    if (kind != Kind::boolean) throw validation_error(what + " is not a boolean");
    return boolean;
  }
  const std::string& as_string(const std::string& what = "json value") const {
    if (kind != Kind::string) throw validation_error(what + " is not a string");
    return text;
  }
};

// full-range u64 seeds travel as decimal strings; doubles would round above 2^53.
inline std::uint64_t parse_seed_text(const std::string& s) {
  if (s.empty()) throw validation_error("seed string is empty");
  std::uint64_t value = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw validation_error("seed \"" + s + "\" is not an unsigned decimal integer");
  return value;
}

namespace detail {

inline std::string double_text(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void dump_json_to(const JsonValue& v, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<size_t>(indent) * depth, ' ');
  const std::string pad_in(static_cast<size_t>(indent) * (depth + 1), ' ');
  const char* nl = indent > 0 ? "\n" : "";
  switch (v.kind) {
    case JsonValue::Kind::null:
      out += "null";
      return;
    case JsonValue::Kind::boolean:
      out += v.boolean ? "true" : "false";
      return;
    case JsonValue::Kind::number:
      out += double_text(v.number);
      return;
    case JsonValue::Kind::string: {
      out += '"';
      for (char c : v.text) {
        switch (c) {
          case '"': out += "\\\""; break;
          case '\\': out += "\\\\"; break;
          case '\n': out += "\\n"; break;
          case '\t': out += "\\t"; break;
          case '\r': out += "\\r"; break;
          default:
            if (static_cast<unsigned char>(c) < 0x20) {
              char esc[8];
              std::snprintf(esc, sizeof(esc), "\\u%04x", c);
              out += esc;
            } else {
              out += c;
            }
        }
      }
      out += '"';
      return;
    }
    case JsonValue::Kind::array: {
      if (v.items.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      out += nl;
      for (size_t i = 0; i < v.items.size(); ++i) {
        out += pad_in;
        dump_json_to(v.items[i], out, indent, depth + 1);
        if (i + 1 < v.items.size()) out += ',';
        out += nl;
      }
      out += pad;
      out += ']';
      return;
    }
    case JsonValue::Kind::object: {
      if (v.members.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      out += nl;
      for (size_t i = 0; i < v.members.size(); ++i) {
        out += pad_in;
        JsonValue key = JsonValue::of(v.members[i].first);
        dump_json_to(key, out, indent, depth + 1);
        out += indent > 0 ? ": " : ":";
        dump_json_to(v.members[i].second, out, indent, depth + 1);
        if (i + 1 < v.members.size()) out += ',';
        out += nl;
      }
      out += pad;
      out += '}';
      return;
    }
  }
}

struct JsonParser {
  const char* p;
  const char* end;

  void skip_ws() {
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\n' || *p == '\r')) ++p;
  }

  [[noreturn]] void fail(const std::string& why) {
    throw validation_error("json parse error: " + why);
  }

  bool eat(char c) {
    skip_ws();
    if (p < end && *p == c) {
      ++p;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!eat(c)) fail(std::string("expected '") + c + "'");
  }

  JsonValue parse_value() {
    skip_ws();
    if (p >= end) fail("unexpected end of input");
    switch (*p) {
      case '{': return parse_object();
      case '[': return parse_array();
      case '"': {
        JsonValue v;
        v.kind = JsonValue::Kind::string;
        v.text = parse_string();
        return v;
      }
      case 't':
        expect_word("true");
        return JsonValue::of(true);
      case 'f':
        expect_word("false");
        return JsonValue::of(false);
      case 'n':
        expect_word("null");
        return JsonValue{};
      default: return parse_number();
    }
  }

  void expect_word(const char* w) {
    const size_t n = std::strlen(w);
    if (static_cast<size_t>(end - p) < n || std::strncmp(p, w, n) != 0) fail("bad literal");
    p += n;
  }

  std::string parse_string() {
    expect('"');
    std::string out;
    while (p < end && *p != '"') {
      char c = *p++;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (p >= end) fail("dangling escape");
      char e = *p++;
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case '/': out += '/'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case 'u': {
          if (end - p < 4) fail("short unicode escape");
          unsigned code = 0;
          for (int i = 0; i < 4; ++i) {
            const char h = *p++;
            code <<= 4;
            if (h >= '0' && h <= '9') code += static_cast<unsigned>(h - '0');
            else if (h >= 'a' && h <= 'f') code += static_cast<unsigned>(h - 'a' + 10);
            else if (h >= 'A' && h <= 'F') code += static_cast<unsigned>(h - 'A' + 10);
            else fail("bad unicode escape");
          }
          if (code > 0x7f) fail("only ascii unicode escapes are supported");
          out += static_cast<char>(code);
          break;
        }
        default: fail("unknown escape");
      }
    }
    if (p >= end) fail("unterminated string");
    ++p;  // closing quote
    return out;
  }

  JsonValue parse_number() {
    skip_ws();
    const char* start = p;
    if (p < end && (*p == '-' || *p == '+')) ++p;
    while (p < end && ((*p >= '0' && *p <= '9') || *p == '.' || *p == 'e' || *p == 'E' ||
                       *p == '-' || *p == '+'))
      ++p;
    double value = 0;
    const auto res = std::from_chars(start, p, value);
    if (res.ec != std::errc() || res.ptr != p || start == p) fail("bad number");
    return JsonValue::of(value);
  }

  JsonValue parse_object() {
    expect('{');
    JsonValue obj = JsonValue::object();
    skip_ws();
    if (eat('}')) return obj;
    while (true) {
      const std::string key = parse_string();
      if (obj.find(key)) fail("duplicate key \"" + key + "\"");
      expect(':');
      obj.members.push_back({key, parse_value()});
      skip_ws();
      if (eat(',')) continue;
      expect('}');
      return obj;
    }
  }

  JsonValue parse_array() {
    expect('[');
    JsonValue arr = JsonValue::array();
    skip_ws();
    if (eat(']')) return arr;
    while (true) {
      arr.items.push_back(parse_value());
      skip_ws();
      if (eat(',')) continue;
      expect(']');
      return arr;
    }
  }
};

}  // namespace detail

// deterministic serialization; indent 0 gives the compact single-line form
inline std::string dump_json(const JsonValue& v, int indent = 2) {
  std::string out;
  detail::dump_json_to(v, out, indent, 0);
  if (indent > 0) out += '\n';
  return out;
}

inline JsonValue parse_json(const std::string& text) {
  detail::JsonParser parser{text.data(), text.data() + text.size()};
  JsonValue v = parser.parse_value();
  parser.skip_ws();
  if (parser.p != parser.end) parser.fail("trailing content");
  return v;
}

// ---------------------------------------------------------------------------
// plain files

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw io_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// named binary arrays

struct ArrayData {
  enum class DType : std::uint8_t { f64 = 0, i32 = 1, u8 = 2 };
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<double> f64;
  std::vector<std::int32_t> i32;
  std::vector<std::uint8_t> u8;

  static ArrayData of(std::vector<double> v, std::vector<std::uint64_t> d) {
    ArrayData a;
    a.dtype = DType::f64;
    a.f64 = std::move(v);
    a.dims = std::move(d);
    return a;
  }
  static ArrayData of(std::vector<std::int32_t> v, std::vector<std::uint64_t> d) {
    ArrayData a;
    a.dtype = DType::i32;
    a.i32 = std::move(v);
    a.dims = std::move(d);
    return a;
  }
  static ArrayData of(std::vector<std::uint8_t> v, std::vector<std::uint64_t> d) {
    ArrayData a;
    a.dtype = DType::u8;
    a.u8 = std::move(v);
    a.dims = std::move(d);
    return a;
  }

  static bool same_dims(const std::vector<std::uint64_t>& a,
                        const std::vector<std::uint64_t>& b) {
    return a == b;
  }

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) n *= d;
    return n;
  }

  std::uint64_t stored_count() const {
    switch (dtype) {
      case DType::f64: return f64.size();
      case DType::i32: return i32.size();
      case DType::u8: return u8.size();
    }
    return 0;
  }
};

using ArrayMap = std::vector<std::pair<std::string, ArrayData>>;

namespace detail {

inline constexpr char kArrayMagic[4] = {'H', 'U', 'A', 'R'};
inline constexpr std::uint32_t kArrayVersion = 1;

template <class T>
void put_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get_raw(std::istream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw io_error("truncated array file: " + path);
  return v;
}

}  // namespace detail

inline void write_arrays(const std::string& path, const ArrayMap& arrays) {
  static_assert(sizeof(double) == 8 && sizeof(std::int32_t) == 4, "unexpected scalar widths");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  f.write(detail::kArrayMagic, 4);
  detail::put_raw(f, detail::kArrayVersion);
  detail::put_raw(f, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, a] : arrays) {
    if (a.stored_count() != a.element_count())
      throw validation_error("array \"" + name + "\" size does not match its dims");
    detail::put_raw(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_raw(f, static_cast<std::uint8_t>(a.dtype));
    detail::put_raw(f, static_cast<std::uint32_t>(a.dims.size()));
    for (std::uint64_t d : a.dims) detail::put_raw(f, d);
    switch (a.dtype) {
      case ArrayData::DType::f64:
        f.write(reinterpret_cast<const char*>(a.f64.data()),
                static_cast<std::streamsize>(a.f64.size() * 8));
        break;
      case ArrayData::DType::i32:
        f.write(reinterpret_cast<const char*>(a.i32.data()),
                static_cast<std::streamsize>(a.i32.size() * 4));
        break;
      case ArrayData::DType::u8:
        f.write(reinterpret_cast<const char*>(a.u8.data()),
                static_cast<std::streamsize>(a.u8.size()));
        break;
    }
  }
  if (!f) throw io_error("write failed: " + path);
}

inline ArrayMap read_arrays(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, detail::kArrayMagic, 4) != 0)
    throw io_error("not an array container: " + path);
  const auto version = detail::get_raw<std::uint32_t>(f, path);
  if (version != detail::kArrayVersion)
    throw io_error("unsupported array container version in " + path);
  const auto count = detail::get_raw<std::uint32_t>(f, path);
  ArrayMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::get_raw<std::uint32_t>(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw io_error("truncated array file: " + path);
    ArrayData a;
    const auto dtype = detail::get_raw<std::uint8_t>(f, path);
    if (dtype > 2) throw io_error("unknown dtype in " + path);
    a.dtype = static_cast<ArrayData::DType>(dtype);
    const auto ndim = detail::get_raw<std::uint32_t>(f, path);
    a.dims.resize(ndim);
    for (auto& d : a.dims) d = detail::get_raw<std::uint64_t>(f, path);
    const std::uint64_t n = a.element_count();
    switch (a.dtype) {
      case ArrayData::DType::f64:
        a.f64.resize(n);
        f.read(reinterpret_cast<char*>(a.f64.data()), static_cast<std::streamsize>(n * 8));
        break;
      case ArrayData::DType::i32:
        a.i32.resize(n);
        f.read(reinterpret_cast<char*>(a.i32.data()), static_cast<std::streamsize>(n * 4));
        break;
      case ArrayData::DType::u8:
        a.u8.resize(n);
        f.read(reinterpret_cast<char*>(a.u8.data()), static_cast<std::streamsize>(n));
        break;
    }
    if (!f) throw io_error("truncated array file: " + path);
    out.push_back({std::move(name), std::move(a)});
  }
  return out;
}

inline const ArrayData* find_array(const ArrayMap& arrays, const std::string& name) {
  for (const auto& [n, a] : arrays)
    if (n == name) return &a;
  return nullptr;
}

inline const ArrayData& require_array(const ArrayMap& arrays, const std::string& name) {
  if (const ArrayData* a = find_array(arrays, name)) return *a;
  throw validation_error("array container is missing \"" + name + "\"");
}

// ---------------------------------------------------------------------------
// checkpoints: named parameter arrays + a config echo string

inline constexpr const char* kCheckpointFormat = "hupor-checkpoint-v1";

template <class Model>
void save_checkpoint(const std::string& path, Model& model, const std::string& config_echo) {
  ArrayMap entries;
  const std::string fmt = kCheckpointFormat;
  entries.push_back({"__format__",
                     ArrayData::of(std::vector<std::uint8_t>(fmt.begin(), fmt.end()),
                                   {static_cast<std::uint64_t>(fmt.size())})});
  entries.push_back({"__config__",
                     ArrayData::of(std::vector<std::uint8_t>(config_echo.begin(), config_echo.end()),
                                   {static_cast<std::uint64_t>(config_echo.size())})});
  model.visit_params([&](const std::string& name, std::vector<double>& p, std::vector<double>&) {
    entries.push_back({"param/" + name,
                       ArrayData::of(p, {static_cast<std::uint64_t>(p.size())})});
  });
  write_arrays(path, entries);
}

// loads parameters by name; every stored parameter must land in the model and
// every model parameter must be stored, or the checkpoint is rejected.
template <class Model>
std::string load_checkpoint(const std::string& path, Model& model) {
  const ArrayMap entries = read_arrays(path);
  const ArrayData* fmt = find_array(entries, "__format__");
  if (!fmt || std::string(fmt->u8.begin(), fmt->u8.end()) != kCheckpointFormat)
    throw io_error("not a checkpoint file: " + path);
  const ArrayData* config = find_array(entries, "__config__");
  if (!config) throw io_error("checkpoint missing its config echo: " + path);

  size_t model_params = 0, loaded = 0;
  model.visit_params([&](const std::string& name, std::vector<double>& p, std::vector<double>&) {
    ++model_params;
    const ArrayData* a = find_array(entries, "param/" + name);
    if (!a) throw validation_error("checkpoint is missing parameter \"" + name + "\"");
    if (a->dtype != ArrayData::DType::f64 || a->f64.size() != p.size())
      throw validation_error("checkpoint parameter \"" + name + "\" has the wrong shape");
    p = a->f64;
    ++loaded;
  });
  size_t stored = 0;
  for (const auto& [name, a] : entries)
    if (name.rfind("param/", 0) == 0) ++stored;
  if (stored != model_params)
    throw validation_error("checkpoint holds " + std::to_string(stored) + " parameters, model has " +
                           std::to_string(model_params));
  (void)loaded;
  return std::string(config->u8.begin(), config->u8.end());
}

// ---------------------------------------------------------------------------
// csv

inline std::string csv_line(const std::vector<std::string>& cells) {
  std::string out;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
  return out;
}

inline std::string number_text(double v) { return detail::double_text(v); }

}  // namespace hupor
