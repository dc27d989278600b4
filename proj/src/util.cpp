#include "promptsmith/util.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>
#include <thread>

#include <unistd.h>

#include "promptsmith/error.hpp"

namespace promptsmith {

namespace {

constexpr std::string_view kIdeographicSpace = "\xE3\x80\x80";

constexpr std::array<std::string_view, 14> kTerminalPunct = {
    ".", ",", "!", "?", ";", ":",
    "\xE3\x80\x82",  // 。
    "\xE3\x80\x81",  // 、
    "\xEF\xBC\x8C",  // ，
    "\xEF\xBC\x81",  // ！
    "\xEF\xBC\x9F",  // ？
    "\xEF\xBC\x9B",  // ；
    "\xEF\xBC\x9A",  // ：
    "\xEF\xBC\x8E",  // ．
};

bool is_ascii_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim_view(std::string_view s) {
    for (;;) {
        if (!s.empty() && is_ascii_space(s.front())) {
            s.remove_prefix(1);
        } else if (s.substr(0, kIdeographicSpace.size()) == kIdeographicSpace) {
            s.remove_prefix(kIdeographicSpace.size());
        } else {
            break;
        }
    }
    for (;;) {
        if (!s.empty() && is_ascii_space(s.back())) {
            s.remove_suffix(1);
        } else if (s.size() >= kIdeographicSpace.size() &&
                   s.substr(s.size() - kIdeographicSpace.size()) == kIdeographicSpace) {
            s.remove_suffix(kIdeographicSpace.size());
        } else {
            break;
        }
    }
    return s;
}

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

}  // namespace

std::string trim(std::string_view s) { return std::string(trim_view(s)); }

std::string normalize_label(std::string_view s) {
    std::string_view v = trim_view(s);
    bool stripped = true;
    while (stripped && !v.empty()) {
        stripped = false;
        for (auto p : kTerminalPunct) {
            if (v.size() >= p.size() && v.substr(v.size() - p.size()) == p) {
                v.remove_suffix(p.size());
                v = trim_view(v);
                stripped = true;
                break;
            }
        }
    }
    std::string out(v);
    for (char& c : out) {
        if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t j = i + 1;
            while (j < tmpl.size() && is_name_char(tmpl[j])) ++j;
            if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
                auto it = values.find(std::string(tmpl.substr(i + 1, j - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = j + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

std::size_t count_placeholder(std::string_view tmpl, std::string_view name) {
    const std::string needle = "{" + std::string(name) + "}";
    std::size_t n = 0;
    for (auto pos = tmpl.find(needle); pos != std::string_view::npos; pos = tmpl.find(needle, pos + 1)) ++n;
    return n;
}

std::string truncate_utf8(std::string_view s, std::size_t max_bytes) {
    if (s.size() <= max_bytes) return std::string(s);
    std::size_t cut = max_bytes;
    // back off continuation bytes (10xxxxxx)
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    return std::string(s.substr(0, cut));
}

std::string strip_fences_and_quotes(std::string_view s) {
    std::string_view v = trim_view(s);
    if (v.size() >= 6 && v.substr(0, 3) == "```" && v.substr(v.size() - 3) == "```") {
        v = v.substr(3, v.size() - 6);
        auto nl = v.find('\n');
        // first line is a language tag if it has no spaces
        if (nl != std::string_view::npos) {
            auto tag = v.substr(0, nl);
            if (tag.find(' ') == std::string_view::npos) v.remove_prefix(nl + 1);
        }
        v = trim_view(v);
    }
    if (v.size() >= 2) {
        const char a = v.front();
        const char b = v.back();
        if ((a == '"' && b == '"') || (a == '\'' && b == '\'')) v = trim_view(v.substr(1, v.size() - 2));
    }
    constexpr std::string_view lq = "\xE2\x80\x9C";  // “
    constexpr std::string_view rq = "\xE2\x80\x9D";  // ”
    if (v.size() >= 6 && v.substr(0, 3) == lq && v.substr(v.size() - 3) == rq) {
        v = trim_view(v.substr(3, v.size() - 6));
    }
    return std::string(v);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." +
           std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::Io, "rename to " + path.string() + " failed: " + ec.message());
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace promptsmith
