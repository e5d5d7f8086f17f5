#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "govsim/core.hpp"

namespace govsim {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Canonical line-delimited serialization.
//
// All exported files are JSONL: one object per line, fields in a fixed order.
// Floating-point values are always written in scientific notation via
// std::to_chars (shortest round-trip form, explicit exponent, locale-free),
// so a re-parse recovers the exact bits and two runs produce identical bytes.
// ---------------------------------------------------------------------------

inline std::string format_sci(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific);
    require(ec == std::errc(), "format_sci: conversion failed");
    return std::string(buf, ptr);
}

// Ordered JSON writer. Insertion order is emission order; doubles go through
// format_sci, integers print as integers.
class JsonWriter {
public:
    JsonWriter& begin_obj() { open('{'); return *this; }
    JsonWriter& end_obj() { close('}'); return *this; }
    JsonWriter& begin_arr() { open('['); return *this; }
    JsonWriter& end_arr() { close(']'); return *this; }

    JsonWriter& key(std::string_view k) {
        sep();
        append_string(k);
        out_.push_back(':');
        pending_value_ = true;
        return *this;
    }

    JsonWriter& str(std::string_view v) { sep(); append_string(v); return *this; }

    // Embed an already-serialized JSON value verbatim.
    JsonWriter& raw(std::string_view v) { sep(); out_ += v; return *this; }
    JsonWriter& num(double v) { sep(); out_ += format_sci(v); return *this; }
    JsonWriter& num(std::int64_t v) { sep(); out_ += std::to_string(v); return *this; }
    JsonWriter& num(std::uint64_t v) { sep(); out_ += std::to_string(v); return *this; }
    JsonWriter& num(int v) { return num(static_cast<std::int64_t>(v)); }
    JsonWriter& boolean(bool v) { sep(); out_ += v ? "true" : "false"; return *this; }

    JsonWriter& kv(std::string_view k, std::string_view v) { return key(k).str(v); }
    JsonWriter& kv(std::string_view k, const char* v) { return key(k).str(v); }
    JsonWriter& kv(std::string_view k, double v) { return key(k).num(v); }
    JsonWriter& kv(std::string_view k, std::int64_t v) { return key(k).num(v); }
    JsonWriter& kv(std::string_view k, std::uint64_t v) { return key(k).num(v); }
    JsonWriter& kv(std::string_view k, int v) { return key(k).num(v); }
    JsonWriter& kv_bool(std::string_view k, bool v) { return key(k).boolean(v); }

    // std::map keeps tag maps sorted, which fixes the field order.
    JsonWriter& kv(std::string_view k, const std::map<std::string, double>& m) {
        key(k).begin_obj();
        for (const auto& [tag, v] : m) kv(tag, v);
        return end_obj();
    }

    std::string take() { return std::move(out_); }
    const std::string& view() const { return out_; }

private:
    void open(char c) { sep(); out_.push_back(c); need_comma_.push_back(false); }
    void close(char c) { out_.push_back(c); need_comma_.pop_back(); mark_written(); }

    void sep() {
        if (pending_value_) { pending_value_ = false; return; }
        if (!need_comma_.empty()) {
            if (need_comma_.back()) out_.push_back(',');
        }
        mark_written();
    }

    void mark_written() {
        if (!need_comma_.empty()) need_comma_.back() = true;
    }

    void append_string(std::string_view s) {
        out_.push_back('"');
        for (char c : s) {
            switch (c) {
                case '"': out_ += "\\\""; break;
                case '\\': out_ += "\\\\"; break;
                case '\n': out_ += "\\n"; break;
                case '\r': out_ += "\\r"; break;
                case '\t': out_ += "\\t"; break;
                default:
                    if (static_cast<unsigned char>(c) < 0x20) {
                        char buf[8];
                        std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                        out_ += buf;
                    } else {
                        out_.push_back(c);
                    }
            }
        }
        out_.push_back('"');
    }

    std::string out_;
    std::vector<bool> need_comma_;
    bool pending_value_ = false;
};

inline json parse_json_line(const std::string& line, const std::string& context) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ValidationError(context + ": malformed JSON line");
    return j;
}

inline std::vector<json> read_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        out.push_back(parse_json_line(line, path + ":" + std::to_string(lineno)));
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << content;
    if (!out) throw Error("write failed: " + path);
}

inline std::map<std::string, double> json_to_tag_map(const json& j) {
    std::map<std::string, double> m;
    for (auto it = j.begin(); it != j.end(); ++it) m[it.key()] = it.value().get<double>();
    return m;
}

} // namespace govsim
