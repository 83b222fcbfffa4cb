#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hibrids/docmodel.hpp"

namespace hibrids {

struct QSNode {
    std::string question;
    std::string summary;
    std::vector<QSNode> children;
    friend bool operator==(const QSNode&, const QSNode&) = default;
};

struct QSHierarchy {
    std::vector<QSNode> roots;

    std::size_t pair_count() const;
    int depth() const;  // 0 when empty
    friend bool operator==(const QSHierarchy&, const QSHierarchy&) = default;
};

/// `full` linearizes every pair; `rooted` treats the first root's question as
/// given context and emits only its summary.
enum class QSLayout { Full, Rooted };
enum class Strictness { Strict, Lenient };
enum class LevelToken { Down, Up, Same };

/// Flattened view in depth-first pre-order; parent is -1 for roots.
struct FlatPair {
    const QSNode* node;
    int parent;
    int depth;  // roots are at depth 1
};
std::vector<FlatPair> flatten(const QSHierarchy& h);

QSHierarchy hierarchy_from_json(const nlohmann::json& j);
nlohmann::json hierarchy_to_json(const QSHierarchy& h);
QSHierarchy load_hierarchy(const std::string& path);

/// Depth-first serialization. Pairs are `question [QS_SEP] summary`; before
/// every pair but the first, `[L_DOWN]` marks one level deeper, `[L_SAME]` the
/// same level, and k `[L_UP]` tokens a rise of k levels. Text is split on
/// whitespace and otherwise kept verbatim. Throws InputError on an empty
/// hierarchy or on text containing a reserved marker.
std::vector<std::string> linearize(const QSHierarchy& h, QSLayout layout = QSLayout::Full);
std::string linearize_text(const QSHierarchy& h, QSLayout layout = QSLayout::Full);

/// Inverse of linearize.
///
/// Strict mode throws ParseError("token <offset>", reason) on any deviation
/// from the grammar. Lenient mode never throws: illegal level moves are
/// clamped to [1, previous depth + 1], pairs with an empty question or summary
/// are dropped (a pair cut off before its summary counts as empty), extra
/// separators are ignored.
///
/// In rooted layout the first unit is the root summary and `root_question`
/// becomes the root's question.
QSHierarchy parse_linearized(std::span<const std::string> tokens, Strictness mode, QSLayout layout = QSLayout::Full,
                             const std::string& root_question = {});
QSHierarchy parse_linearized_text(const std::string& text, Strictness mode, QSLayout layout = QSLayout::Full,
                                  const std::string& root_question = {});

bool is_level_token(const std::string& token);

enum class QSTask { Hier, ChildQ };

/// Model-ready sample: a document whose front matter carries the prompt text,
/// and the target text.
struct TaskSample {
    std::string id;
    Document source;
    std::string target;
};

/// QSGen-Hier: root question prepended to the sections, target is the rooted
/// linearization.
TaskSample encode_hier_task(const Document& sections, const QSHierarchy& h);

/// QSGen-ChildQ for one parent pair: parent question and summary prepended,
/// target is the children's questions joined by spaces. A leaf parent is an
/// InputError in strict mode and an empty target otherwise.
TaskSample encode_childq_task(const Document& sections, const QSNode& parent, Strictness mode);

/// One ChildQ sample per pair in pre-order; leaves are skipped in strict mode.
std::vector<TaskSample> encode_childq_tasks(const Document& sections, const QSHierarchy& h, Strictness mode);

}  // namespace hibrids
