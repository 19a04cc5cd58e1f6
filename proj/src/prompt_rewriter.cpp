#include "toctou/prompt_rewriter.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>

namespace toctou {

namespace {

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

std::string lowercase_first(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
    return s;
}

// Noun form of an action verb for "at the exact time of <noun>" phrasing.
std::string nominalize(const std::string& verb) {
    static const std::map<std::string, std::string> irregular = {
        {"delete", "deletion"}, {"remove", "removal"},   {"create", "creation"},
        {"update", "update"},   {"open", "access"},      {"close", "closure"},
        {"send", "sending"},    {"post", "posting"},     {"cancel", "cancellation"},
        {"modify", "modification"},
    };
    auto it = irregular.find(verb);
    if (it != irregular.end()) return it->second;
    return verb;
}

struct Segment {
    std::string text;  // sentence without trailing punctuation
    std::string sep;   // punctuation plus following whitespace (may be empty)
};

// Sentences end at '.', ';', '!' or '?' followed by whitespace or the end of
// the prompt; dots inside tokens (www.site.com, 2.1, notes.md) stay put.
std::vector<Segment> segment(const std::string& prompt) {
    std::vector<Segment> segments;
    std::string text;
    for (std::size_t i = 0; i < prompt.size(); ++i) {
        char c = prompt[i];
        bool boundary = (c == '.' || c == ';' || c == '!' || c == '?') &&
                        (i + 1 >= prompt.size() ||
                         std::isspace(static_cast<unsigned char>(prompt[i + 1])));
        if (!boundary) {
            text.push_back(c);
            continue;
        }
        std::string sep(1, c);
        while (i + 1 < prompt.size() && std::isspace(static_cast<unsigned char>(prompt[i + 1]))) {
            sep.push_back(prompt[++i]);
        }
        segments.push_back({std::move(text), std::move(sep)});
        text.clear();
    }
    if (!text.empty()) segments.push_back({std::move(text), ""});
    return segments;
}

std::optional<std::pair<std::string, std::string>> split_on_then(const std::string& text) {
    auto pos = text.find(", then ");
    if (pos == std::string::npos) return std::nullopt;
    return std::make_pair(text.substr(0, pos), text.substr(pos + 7));
}

const std::regex kSeeAvailable(R"(^[Ss]ee if (.+?) is available (in .+)$)");
const std::regex kVerbIt(R"(^(\w+) it$)");
const std::regex kCheckPermissions(R"(^[Cc]heck whether (.+) has permissions$)");
const std::regex kVerbTheir(R"(^(\w+) their (.+)$)");
const std::regex kCheckCond(
    R"(^(?:[Cc]heck|[Ss]ee|[Vv]erify|[Cc]onfirm|[Ll]ook up|[Ff]ind out) (?:if|whether|that) (.+)$)");
const std::regex kLookup(R"(^(?:[Ll]ook up|[Ff]ind out|[Ff]ind) (.+)$)");
const std::regex kCheckExists(R"(^[Cc]heck if (.+) exists$)");
const std::regex kIfItDoes(R"(^If it does, (\w+) it$)");
const std::regex kCheckCondBare(
    R"(^(?:[Cc]heck|[Ss]ee|[Vv]erify|[Cc]onfirm|[Ll]ook up|[Ff]ind out) (?:if|whether) (.+)$)");
const std::regex kIfSo(R"(^If (?:so|it does|they do|it is), (.+)$)");

struct RuleHit {
    std::string replacement;  // new sentence text, no trailing punctuation
    std::string rule_id;
    int consumed = 1;  // segments used up
};

/// Try every rule on the window starting at segments[i]; most specific first.
std::optional<RuleHit> apply_rules(const std::vector<Segment>& segments, std::size_t i) {
    const std::string& text = segments[i].text;
    std::smatch m, m2;

    // Two-sentence forms.
    if (i + 1 < segments.size()) {
        const std::string& next = segments[i + 1].text;
        if (std::regex_match(text, m, kCheckExists) && std::regex_match(next, m2, kIfItDoes)) {
            return RuleHit{capitalize(m2[1].str()) + " " + m[1].str() +
                               ", but only if it exists at the time of access",
                           "exists_then_act", 2};
        }
        if (std::regex_match(text, m, kCheckCondBare) && std::regex_match(next, m2, kIfSo)) {
            return RuleHit{capitalize(m2[1].str()) + ", but only if " +
                               lowercase_first(m[1].str()) + " at the moment of action",
                           "check_cond_if_so_act", 2};
        }
    }

    // Single-sentence "..., then ..." forms.
    auto parts = split_on_then(text);
    if (!parts) return std::nullopt;
    const auto& [head, action] = *parts;

    if (std::regex_match(head, m, kSeeAvailable) && std::regex_match(action, m2, kVerbIt)) {
        return RuleHit{capitalize(m2[1].str()) + " " + m[1].str() + " " + m[2].str() +
                           " only if it still exists and is valid at the moment of " + m2[1].str(),
                       "available_then_act", 1};
    }
    if (std::regex_match(head, m, kCheckPermissions) && std::regex_match(action, m2, kVerbTheir)) {
        return RuleHit{capitalize(m2[1].str()) + " " + m[1].str() + "'s " + m2[2].str() +
                           " only if they currently have permissions at the exact time of " +
                           nominalize(m2[1].str()),
                       "permission_then_act", 1};
    }
    if (std::regex_match(head, m, kCheckCond)) {
        return RuleHit{capitalize(action) + ", but only if " + lowercase_first(m[1].str()) +
                           " at the moment of action",
                       "check_cond_then_act", 1};
    }
    if (std::regex_match(head, m, kLookup)) {
        return RuleHit{capitalize(action) + ", re-verifying " + lowercase_first(m[1].str()) +
                           " at the moment of action",
                       "lookup_then_act", 1};
    }
    return std::nullopt;
}

}  // namespace

const std::vector<RewriteRule>& rewrite_rules() {
    static const std::vector<RewriteRule> metas = {
        {"exists_then_act", "existence check followed by an action on the object"},
        {"available_then_act", "availability check followed by an action on the object"},
        {"permission_then_act", "permission check followed by an action on the subject"},
        {"check_cond_if_so_act", "two-sentence check with a pronoun-linked action"},
        {"check_cond_then_act", "single-sentence check-then-act"},
        {"lookup_then_act", "lookup followed by a dependent action"},
    };
    return metas;
}

RewriteResult rewrite(const std::string& prompt, const Environment& /*env*/) {
    RewriteResult result{std::string{}, {}};
    auto segments = segment(prompt);
    for (std::size_t i = 0; i < segments.size();) {
        if (auto hit = apply_rules(segments, i)) {
            std::size_t last = i + static_cast<std::size_t>(hit->consumed) - 1;
            std::string sep = segments[last].sep;
            if (sep.empty()) sep = ".";
            result.text += hit->replacement + sep;
            result.applied.push_back(hit->rule_id);
            i = last + 1;
        } else {
            result.text += segments[i].text + segments[i].sep;
            ++i;
        }
    }
    if (result.applied.empty()) result.text = prompt;  // byte-identical when nothing matched
    return result;
}

std::vector<std::string> named_entities(const std::string& text) {
    std::vector<std::string> entities;
    static const std::regex quoted(R"re('([^']+)'|"([^"]+)")re");
    static const std::regex dotted(R"([A-Za-z0-9_@-]+(?:\.[A-Za-z0-9_@-]+)+)");
    static const std::regex single_capital(R"(\b[A-Z]\b)");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), quoted);
         it != std::sregex_iterator(); ++it) {
        entities.push_back((*it)[1].matched ? (*it)[1].str() : (*it)[2].str());
    }
    for (auto it = std::sregex_iterator(text.begin(), text.end(), dotted);
         it != std::sregex_iterator(); ++it) {
        entities.push_back(it->str());
    }
    for (auto it = std::sregex_iterator(text.begin(), text.end(), single_capital);
         it != std::sregex_iterator(); ++it) {
        entities.push_back(it->str());
    }
    std::sort(entities.begin(), entities.end());
    return entities;
}

}  // namespace toctou
