#include "hibrids/qshier.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

#include "hibrids/errors.hpp"
#include "hibrids/text.hpp"

namespace hibrids {

namespace {

std::size_t count_pairs(const std::vector<QSNode>& nodes) {
    std::size_t n = 0;
    for (const auto& c : nodes) n += 1 + count_pairs(c.children);
    return n;
}

int max_depth(const std::vector<QSNode>& nodes) {
    int d = 0;
    for (const auto& c : nodes) d = std::max(d, 1 + max_depth(c.children));
    return d;
}

QSNode node_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where, "expected an object");
    QSNode n;
    for (const char* key : {"question", "summary"}) {
        if (!j.contains(key)) throw ParseError(where + "." + key, "missing field");
        if (!j.at(key).is_string()) throw ParseError(where + "." + key, "expected a string");
    }
    n.question = j.at("question").get<std::string>();
    n.summary = j.at("summary").get<std::string>();
    if (j.contains("children")) {
        const auto& c = j.at("children");
        if (!c.is_array()) throw ParseError(where + ".children", "expected a list");
        for (std::size_t i = 0; i < c.size(); ++i) {
            n.children.push_back(node_from_json(c[i], where + ".children[" + std::to_string(i) + "]"));
        }
    }
    return n;
}

nlohmann::json node_to_json(const QSNode& n) {
    nlohmann::json children = nlohmann::json::array();
    for (const auto& c : n.children) children.push_back(node_to_json(c));
    return {{"question", n.question}, {"summary", n.summary}, {"children", std::move(children)}};
}

void append_text(std::vector<std::string>& out, const std::string& text) {
    for (auto& t : split_whitespace(text)) {
        if (is_reserved_marker(t)) throw InputError("hierarchy text contains the reserved marker " + t);
        out.push_back(std::move(t));
    }
}

struct Builder {
    QSHierarchy h;
    std::vector<QSNode*> path;  // nodes along the current branch, path[d-1] at depth d

    void attach(QSNode node, int depth) {
        path.resize(static_cast<std::size_t>(depth - 1));
        auto& siblings = path.empty() ? h.roots : path.back()->children;
        siblings.push_back(std::move(node));
        path.push_back(&siblings.back());
    }
};

LevelToken level_of(const std::string& t) {
    if (t == kLevelDown) return LevelToken::Down;
    if (t == kLevelUp) return LevelToken::Up;
    return LevelToken::Same;
}

std::string token_at(std::size_t i) { return "token " + std::to_string(i); }

QSHierarchy parse_strict(std::span<const std::string> tokens, QSLayout layout, const std::string& root_question) {
    Builder b;
    std::size_t i = 0;
    int depth = 0;

    auto read_unit = [&](bool summary_only) {
        const std::size_t start = i;
        std::vector<std::string> question, summary;
        bool seen_sep = summary_only;
        std::size_t sep_at = 0;
        while (i < tokens.size() && !is_level_token(tokens[i])) {
            if (tokens[i] == kQsSep) {
                if (seen_sep) {
                    throw ParseError(token_at(i), summary_only ? "separator inside the root summary"
                                                               : "second separator inside one pair");
                }
                seen_sep = true;
                sep_at = i;
            } else {
                (seen_sep ? summary : question).push_back(tokens[i]);
            }
            ++i;
        }
        if (!seen_sep) throw ParseError(token_at(start), "pair without a question/summary separator");
        if (!summary_only && question.empty()) throw ParseError(token_at(start), "empty question");
        if (summary.empty()) {
            throw ParseError(token_at(summary_only ? start : sep_at), "empty summary");
        }
        return QSNode{join(question), join(summary), {}};
    };

    if (tokens.empty()) throw ParseError(token_at(0), "empty sequence");
    if (is_level_token(tokens[0])) throw ParseError(token_at(0), "sequence starts with a level token");

    if (layout == QSLayout::Rooted) {
        QSNode root = read_unit(true);
        root.question = root_question;
        b.attach(std::move(root), 1);
    } else {
        b.attach(read_unit(false), 1);
    }
    depth = 1;

    while (i < tokens.size()) {
        const std::size_t start = i;
        int ups = 0, downs = 0, sames = 0;
        while (i < tokens.size() && is_level_token(tokens[i])) {
            switch (level_of(tokens[i])) {
                case LevelToken::Down: ++downs; break;
                case LevelToken::Up: ++ups; break;
                case LevelToken::Same: ++sames; break;
            }
            if (downs + sames > 1 || ((downs || sames) && ups)) {
                throw ParseError(token_at(i), "illegal combination of level tokens");
            }
            if (depth - ups < 1) throw ParseError(token_at(i), "level rises above the first level");
            ++i;
        }
        if (i == tokens.size()) throw ParseError(token_at(start), "level tokens without a following pair");
        depth = depth + downs - ups;
        b.attach(read_unit(false), depth);
    }
    return std::move(b.h);
}

QSHierarchy parse_lenient(std::span<const std::string> tokens, QSLayout layout, const std::string& root_question) {
    Builder b;
    std::size_t i = 0;
    int last_kept = 0;
    int cursor = 0;

    auto read_segment = [&](std::vector<std::string>& question, std::vector<std::string>& summary, bool summary_only) {
        bool seen_sep = summary_only;
        while (i < tokens.size() && !is_level_token(tokens[i])) {
            if (tokens[i] == kQsSep) {
                seen_sep = true;
            } else {
                (seen_sep ? summary : question).push_back(tokens[i]);
            }
            ++i;
        }
        // no separator: the segment never reached its summary
        if (!seen_sep) summary.clear();
    };

    if (layout == QSLayout::Rooted) {
        std::vector<std::string> q, s;
        read_segment(q, s, true);
        b.attach(QSNode{root_question, join(s), {}}, 1);
        last_kept = cursor = 1;
    } else {
        while (i < tokens.size() && is_level_token(tokens[i])) ++i;
        if (i < tokens.size()) {
            std::vector<std::string> q, s;
            read_segment(q, s, false);
            if (!q.empty() && !s.empty()) {
                b.attach(QSNode{join(q), join(s), {}}, 1);
                last_kept = 1;
            }
            cursor = 1;
        }
    }

    while (i < tokens.size()) {
        while (i < tokens.size() && is_level_token(tokens[i])) {
            switch (level_of(tokens[i])) {
                case LevelToken::Down: ++cursor; break;
                case LevelToken::Up: --cursor; break;
                case LevelToken::Same: break;
            }
            ++i;
        }
        cursor = std::clamp(cursor, 1, last_kept + 1);
        std::vector<std::string> q, s;
        read_segment(q, s, false);
        if (q.empty() || s.empty()) continue;
        b.attach(QSNode{join(q), join(s), {}}, cursor);
        last_kept = cursor;
    }
    return std::move(b.h);
}

}  // namespace

std::size_t QSHierarchy::pair_count() const { return count_pairs(roots); }

int QSHierarchy::depth() const { return max_depth(roots); }

std::vector<FlatPair> flatten(const QSHierarchy& h) {
    std::vector<FlatPair> out;
    std::function<void(const QSNode&, int, int)> visit = [&](const QSNode& n, int parent, int depth) {
        const int id = static_cast<int>(out.size());
        out.push_back({&n, parent, depth});
        for (const auto& c : n.children) visit(c, id, depth + 1);
    };
    for (const auto& r : h.roots) visit(r, -1, 1);
    return out;
}

QSHierarchy hierarchy_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("", "hierarchy must be a JSON object");
    if (!j.contains("roots")) throw ParseError("roots", "missing field");
    const auto& r = j.at("roots");
    if (!r.is_array()) throw ParseError("roots", "expected a list");
    QSHierarchy h;
    for (std::size_t i = 0; i < r.size(); ++i) h.roots.push_back(node_from_json(r[i], "roots[" + std::to_string(i) + "]"));
    return h;
}

nlohmann::json hierarchy_to_json(const QSHierarchy& h) {
    nlohmann::json roots = nlohmann::json::array();
    for (const auto& r : h.roots) roots.push_back(node_to_json(r));
    return {{"roots", std::move(roots)}};
}

QSHierarchy load_hierarchy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path, e.what());
    }
    try {
        return hierarchy_from_json(j);
    } catch (const ParseError& e) {
        throw ParseError(path + ":" + e.where(), e.message());
    }
}

bool is_level_token(const std::string& token) {
    return token == kLevelDown || token == kLevelUp || token == kLevelSame;
}

std::vector<std::string> linearize(const QSHierarchy& h, QSLayout layout) {
    if (h.roots.empty()) throw InputError("cannot linearize an empty hierarchy");
    std::vector<std::string> out;
    int prev = 0;
    for (const auto& p : flatten(h)) {
        if (prev > 0) {
            const int delta = p.depth - prev;
            if (delta == 1) {
                out.emplace_back(kLevelDown);
            } else if (delta == 0) {
                out.emplace_back(kLevelSame);
            } else {
                for (int k = 0; k < -delta; ++k) out.emplace_back(kLevelUp);
            }
        }
        const bool summary_only = layout == QSLayout::Rooted && prev == 0;
        if (!summary_only) {
            append_text(out, p.node->question);
            out.emplace_back(kQsSep);
        }
        append_text(out, p.node->summary);
        prev = p.depth;
    }
    return out;
}

std::string linearize_text(const QSHierarchy& h, QSLayout layout) { return join(linearize(h, layout)); }

QSHierarchy parse_linearized(std::span<const std::string> tokens, Strictness mode, QSLayout layout,
                             const std::string& root_question) {
    return mode == Strictness::Strict ? parse_strict(tokens, layout, root_question)
                                      : parse_lenient(tokens, layout, root_question);
}

QSHierarchy parse_linearized_text(const std::string& text, Strictness mode, QSLayout layout,
                                  const std::string& root_question) {
    const auto tokens = split_whitespace(text);
    return parse_linearized(tokens, mode, layout, root_question);
}

TaskSample encode_hier_task(const Document& sections, const QSHierarchy& h) {
    if (h.roots.empty()) throw InputError("hierarchy has no root question");
    TaskSample s;
    s.source = sections;
    s.source.front.insert(s.source.front.begin(), h.roots.front().question);
    s.target = linearize_text(h, QSLayout::Rooted);
    return s;
}

TaskSample encode_childq_task(const Document& sections, const QSNode& parent, Strictness mode) {
    if (parent.children.empty() && mode == Strictness::Strict) {
        throw InputError("pair \"" + parent.question + "\" has no child questions");
    }
    TaskSample s;
    s.source = sections;
    s.source.front.insert(s.source.front.begin(), parent.question + " " + parent.summary);
    std::vector<std::string> questions;
    for (const auto& c : parent.children) questions.push_back(c.question);
    s.target = join(questions);
    return s;
}

std::vector<TaskSample> encode_childq_tasks(const Document& sections, const QSHierarchy& h, Strictness mode) {
    std::vector<TaskSample> out;
    std::size_t k = 0;
    for (const auto& p : flatten(h)) {
        if (p.node->children.empty() && mode == Strictness::Strict) {
            ++k;
            continue;
        }
        auto s = encode_childq_task(sections, *p.node, mode);
        s.id = "pair" + std::to_string(k++);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace hibrids
