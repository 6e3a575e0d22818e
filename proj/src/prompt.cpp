#include "eae/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eae/error.hpp"
#include "eae/text.hpp"

namespace eae::prompt {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::dhp: return "dhp";
        case Strategy::cot: return "cot";
        case Strategy::standard: return "standard";
    }
    return "unknown";
}

Strategy strategy_from_string(const std::string& s) {
    const auto l = text::ascii_lower(s);
    if (l == "dhp") return Strategy::dhp;
    if (l == "cot") return Strategy::cot;
    if (l == "standard") return Strategy::standard;
    throw ConfigError("unknown prompting strategy '" + s + "'");
}

std::string to_string(RuleCategory c) {
    switch (c) {
        case RuleCategory::role_relation: return "role_relation";
        case RuleCategory::morphology: return "morphology";
        case RuleCategory::verification: return "verification";
    }
    return "unknown";
}

std::string to_string(BlockKind k) {
    switch (k) {
        case BlockKind::task_definition: return "task_definition";
        case BlockKind::definitions: return "definitions";
        case BlockKind::heuristics: return "heuristics";
        case BlockKind::exemplar: return "exemplar";
        case BlockKind::cot_scaffold: return "cot_scaffold";
        case BlockKind::query: return "query";
    }
    return "unknown";
}

std::size_t count_tokens(std::string_view s) noexcept { return (text::codepoint_count(s) + 3) / 4; }

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

constexpr const char* kRequiredTemplates[] = {"system",       "task_definition", "definitions",   "terminology",
                                              "roles_fallback", "heuristics",    "exemplar",      "exemplar_answers",
                                              "answer_format", "cot_scaffold",   "query",         "query_tail"};

}  // namespace

TemplateSet TemplateSet::load(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path));
    } catch (const IoError&) {
        throw TemplateError("template manifest missing: '" + manifest_path.string() + "'");
    } catch (const json::exception& e) {
        throw TemplateError("template manifest unreadable: " + std::string(e.what()));
    }
    TemplateSet set;
    set.version_ = manifest.value("version", std::string{});
    for (const auto& entry : manifest.at("templates")) {
        const auto id = entry.at("id").get<std::string>();
        const auto file = dir / entry.at("file").get<std::string>();
        std::string content;
        try {
            content = read_file(file);
        } catch (const IoError&) {
            throw TemplateError("template '" + id + "' missing: '" + file.string() + "'");
        }
        if (text::sha256_hex(content) != entry.at("sha256").get<std::string>()) {
            throw TemplateError("template '" + id + "' does not match its manifest digest");
        }
        if (!content.empty() && content.back() == '\n') content.pop_back();
        set.templates_[id] = std::move(content);
    }
    for (const char* id : kRequiredTemplates) {
        if (!set.templates_.count(id)) throw TemplateError(std::string("template set lacks '") + id + "'");
    }
    return set;
}

const std::string& TemplateSet::get(const std::string& id) const {
    const auto it = templates_.find(id);
    if (it == templates_.end()) throw TemplateError("unknown template '" + id + "'");
    return it->second;
}

Ontology::Ontology(std::map<std::string, std::vector<RoleSpec>> by_type) {
    for (auto& [k, v] : by_type) by_type_[text::ascii_lower(k)] = std::move(v);
}

Ontology Ontology::load(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw FormatError(1, "ontology '" + path.string() + "': " + e.what());
    }
    const json& types = j.contains("event_types") ? j["event_types"] : j;
    std::map<std::string, std::vector<RoleSpec>> by_type;
    for (const auto& [type, roles] : types.items()) {
        auto& out = by_type[type];
        for (const auto& r : roles) {
            if (r.is_string()) {
                out.push_back({r.get<std::string>(), ""});
            } else {
                out.push_back({r.at("role").get<std::string>(), r.value("description", std::string{})});
            }
        }
    }
    return Ontology(std::move(by_type));
}

const std::vector<RoleSpec>* Ontology::find(std::string_view event_type) const {
    std::string key = text::ascii_lower(event_type);
    while (!key.empty()) {
        const auto it = by_type_.find(key);
        if (it != by_type_.end()) return &it->second;
        const auto dot = key.rfind('.');
        if (dot == std::string::npos) break;
        key.resize(dot);
    }
    return nullptr;
}

std::vector<std::string> Ontology::role_names(std::string_view event_type) const {
    std::vector<std::string> out;
    if (const auto* roles = find(event_type)) {
        for (const auto& r : *roles) out.push_back(r.role);
    }
    return out;
}

std::string DefinitionBlock::render(std::string_view event_type) const {
    std::string out = event_definition;
    out += "\n\nTerminology:";
    for (const auto& [term, def] : terminology) out += "\n- " + term + ": " + def;
    out += "\n\nRoles for event type \"" + std::string(event_type) + "\":";
    for (const auto& r : ontology_roles) {
        out += "\n- " + r.role;
        if (!r.description.empty()) out += ": " + r.description;
    }
    if (fallback) out += "\n" + *fallback;
    return out;
}

DefinitionBlock build_definition_block(const std::string& event_type, const Ontology& ontology,
                                       const TemplateSet& templates) {
    DefinitionBlock block;
    block.event_definition = templates.get("definitions");
    for (auto line : text::split_lines(templates.get("terminology"))) {
        line = text::trim(line);
        if (line.empty()) continue;
        const auto colon = line.find(": ");
        if (colon == std::string_view::npos) {
            block.terminology.emplace_back(std::string(line), "");
        } else {
            block.terminology.emplace_back(std::string(line.substr(0, colon)), std::string(line.substr(colon + 2)));
        }
    }
    if (const auto* roles = ontology.find(event_type)) {
        block.ontology_roles = *roles;
    } else {
        block.fallback = text::substitute(templates.get("roles_fallback"), {{"event_type", event_type}});
    }
    return block;
}

std::vector<HeuristicRule> build_heuristic_rules(Strategy strategy) {
    if (strategy != Strategy::dhp) return {};
    using C = RuleCategory;
    return {
        {"H1",
         "Assign roles from the relation between a candidate and the trigger: who acts is the agent, who is affected is "
         "the patient, the means used is the instrument, where it happens is the location, when it happens is the time, "
         "and what it leads to is the outcome.",
         C::role_relation},
        {"H2",
         "Link an agent to the trigger verb through its grammatical relation: the subject of an active verb or the "
         "by-phrase of a passive verb.",
         C::role_relation},
        {"H3",
         "An argument can sit in another sentence than the trigger. Follow pronouns and repeated names back to the "
         "most informative mention.",
         C::role_relation},
        {"H4",
         "Arguments can be noun phrases, pronouns, verb phrases, adjective phrases, or adverbial phrases. Take the "
         "shortest phrase that is still complete.",
         C::morphology},
        {"H5", "When a pronoun and a name refer to the same participant, answer with the name.", C::morphology},
        {"H6",
         "Time and place arguments often occur inside prepositional phrases. Extract the object of the preposition, "
         "for example \"Paris\" from \"in Paris\".",
         C::morphology},
        {"H7", "Keep a candidate only if the document states it explicitly.", C::verification},
        {"H8", "Check that every role is valid for the event type and that no argument carries two conflicting roles.",
         C::verification},
        {"H9",
         "Re-read the reasoning chain and repair any step that does not follow from the document before writing the "
         "answers.",
         C::verification},
    };
}

void check_exemplar(const ExemplarDemo& demo) {
    std::size_t pos = 0;
    for (auto stage : kStageNames) {
        const auto found = demo.worked_reasoning.find(stage, pos);
        if (found == std::string::npos) {
            throw ExemplarError("exemplar reasoning lacks stage '" + std::string(stage) + "' in order");
        }
        pos = found + stage.size();
    }
    if (demo.final_answers.empty()) throw ExemplarError("exemplar has no final answers");
    if (text::trim(demo.event_type).empty()) throw ExemplarError("exemplar has no event type");
}

std::vector<ExemplarDemo> load_exemplars(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ExemplarError("exemplar file '" + path.string() + "': " + e.what());
    }
    if (!j.is_array()) j = json::array({j});
    std::vector<ExemplarDemo> pool;
    for (const auto& d : j) {
        ExemplarDemo demo;
        try {
            demo.document_text = d.at("document_text").get<std::string>();
            demo.event_type = d.at("event_type").get<std::string>();
            if (d.contains("trigger") && d["trigger"].is_string()) demo.trigger = d["trigger"].get<std::string>();
            demo.worked_reasoning = d.at("worked_reasoning").get<std::string>();
            for (const auto& a : d.at("final_answers")) {
                demo.final_answers.emplace_back(a.at("role").get<std::string>(), a.at("text").get<std::string>());
            }
        } catch (const json::exception& e) {
            throw ExemplarError("exemplar file '" + path.string() + "': " + e.what());
        }
        check_exemplar(demo);
        pool.push_back(std::move(demo));
    }
    return pool;
}

const ExemplarDemo& select_exemplar(const std::vector<ExemplarDemo>& pool, std::string_view query_event_type,
                                    bool cross_domain) {
    if (pool.empty()) throw ExemplarError("exemplar pool is empty");
    if (!cross_domain) return pool.front();
    const auto it = std::find_if(pool.begin(), pool.end(),
                                 [&](const ExemplarDemo& d) { return !text::iequals(d.event_type, query_event_type); });
    if (it == pool.end()) {
        throw ExemplarError("no exemplar with an event type other than '" + std::string(query_event_type) + "'");
    }
    return *it;
}

namespace {

std::string anchor_phrase(const std::optional<std::string>& trigger, const std::string& event_type) {
    if (trigger) return "the trigger \"" + *trigger + "\"";
    return "the event type \"" + event_type + "\"";
}

std::string trigger_line(const std::optional<std::string>& trigger, const std::string& event_type) {
    if (trigger) return "Trigger: \"" + *trigger + "\"";
    return "Trigger: none given; the event type \"" + event_type + "\" is the anchor.";
}

std::string defuse_markers(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    const auto lines = text::split_lines(s);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i > 0) out += '\n';
        if (is_marker_line(lines[i])) {
            auto t = text::trim(lines[i]);
            out += t.substr(0, t.size() - 1);  // drop the colon
        } else {
            out += lines[i];
        }
    }
    return out;
}

PromptBlock* find_mut(PromptBundle& b, BlockKind k) {
    const auto it = std::find_if(b.blocks.begin(), b.blocks.end(), [k](const PromptBlock& x) { return x.kind == k; });
    return it == b.blocks.end() ? nullptr : &*it;
}

void erase_block(PromptBundle& b, BlockKind k) {
    b.blocks.erase(std::remove_if(b.blocks.begin(), b.blocks.end(), [k](const PromptBlock& x) { return x.kind == k; }),
                   b.blocks.end());
}

// Code points over the limit; <= 0 means the bundle fits.
long long excess(const PromptBundle& b, std::size_t limit) {
    const auto used = text::codepoint_count(b.system_text) + text::codepoint_count(b.user_text);
    return static_cast<long long>(used) - static_cast<long long>(limit) * 4;
}

}  // namespace

std::string build_cot_scaffold(const std::optional<std::string>& trigger, const std::string& event_type,
                               const TemplateSet& templates) {
    return text::substitute(templates.get("cot_scaffold"),
                            {{"anchor", anchor_phrase(trigger, event_type)}, {"answer_format", templates.get("answer_format")}});
}

bool is_marker_line(std::string_view line) noexcept { return text::iequals(text::trim(line), kFinalAnswers); }

std::size_t count_marker_lines(std::string_view s) {
    std::size_t n = 0;
    for (auto line : text::split_lines(s)) n += is_marker_line(line) ? 1 : 0;
    return n;
}

std::string render_document(const corpus::Document& doc) {
    if (doc.dataset == corpus::Dataset::rams && !doc.sentences.empty()) {
        std::vector<std::string> lines;
        lines.reserve(doc.sentences.size());
        for (const auto& s : doc.sentences) lines.push_back(text::join(s, " "));
        return defuse_markers(text::join(lines, "\n"));
    }
    return defuse_markers(doc.text);
}

std::string PromptBlock::text() const {
    std::string out = head;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (i > 0) out += body_sep;
        out += body[i];
    }
    out += tail;
    return out;
}

TokenBudget::TokenBudget(std::size_t max, std::size_t reserve) : max_tokens(max), reserve_for_completion(reserve) {
    if (max_tokens == 0 || max_tokens <= reserve_for_completion) {
        throw ConfigError("token budget needs max_tokens > reserve_for_completion (got " + std::to_string(max) + " and " +
                          std::to_string(reserve) + ")");
    }
}

std::vector<BlockKind> PromptBundle::kinds() const {
    std::vector<BlockKind> out;
    for (const auto& b : blocks) out.push_back(b.kind);
    return out;
}

const PromptBlock* PromptBundle::find(BlockKind k) const {
    const auto it = std::find_if(blocks.begin(), blocks.end(), [k](const PromptBlock& x) { return x.kind == k; });
    return it == blocks.end() ? nullptr : &*it;
}

void PromptBundle::refresh() {
    user_text.clear();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i > 0) user_text += "\n\n";
        user_text += blocks[i].text();
    }
    token_estimate = count_tokens(system_text + user_text);
}

PromptBundle assemble_prompt(const corpus::Document& doc, const corpus::GoldEvent& event, Strategy strategy,
                             const ExemplarDemo* exemplar, const TokenBudget& budget, const PromptContext& ctx) {
    const auto& tpl = ctx.templates;
    const std::optional<std::string> trigger =
        event.trigger ? std::optional<std::string>(event.trigger->text) : std::nullopt;

    PromptBundle bundle;
    bundle.strategy = strategy;
    bundle.system_text = tpl.get("system");

    bundle.blocks.push_back({BlockKind::task_definition, tpl.get("task_definition"), {}, "", ""});

    if (strategy == Strategy::dhp) {
        const auto defs = build_definition_block(event.event_type, ctx.ontology, tpl);
        bundle.blocks.push_back({BlockKind::definitions, defs.render(event.event_type), {}, "", ""});

        PromptBlock rules{BlockKind::heuristics, tpl.get("heuristics") + "\n", {}, "\n", ""};
        for (const auto& r : build_heuristic_rules(strategy)) {
            rules.body.push_back("- [" + r.rule_id + ", " + to_string(r.category) + "] " + r.statement);
        }
        bundle.blocks.push_back(std::move(rules));
    }

    if (strategy != Strategy::standard && exemplar != nullptr) {
        std::vector<std::string> answers;
        for (const auto& [role, arg] : exemplar->final_answers) answers.push_back(role + ": \"" + arg + "\"");
        const auto head = text::substitute(tpl.get("exemplar"),
                                           {{"document", defuse_markers(exemplar->document_text)},
                                            {"event_type", exemplar->event_type},
                                            {"trigger_line", trigger_line(exemplar->trigger, exemplar->event_type)}});
        const auto tail = text::substitute(tpl.get("exemplar_answers"), {{"answers", text::join(answers, "\n")}});
        bundle.blocks.push_back(
            {BlockKind::exemplar, head + "\n", {defuse_markers(exemplar->worked_reasoning)}, "", "\n" + tail});
    }

    if (strategy != Strategy::standard) {
        bundle.blocks.push_back({BlockKind::cot_scaffold, build_cot_scaffold(trigger, event.event_type, tpl), {}, "", ""});
    }

    std::string query_tail = "\n\n" + text::substitute(tpl.get("query_tail"),
                                                       {{"event_type", event.event_type},
                                                        {"trigger_line", trigger_line(trigger, event.event_type)}});
    if (strategy == Strategy::standard) query_tail += "\n\n" + tpl.get("answer_format");
    bundle.blocks.push_back({BlockKind::query, tpl.get("query") + "\n", {render_document(doc)}, "", query_tail});

    bundle.refresh();
    if (bundle.token_estimate > budget.prompt_limit()) return trim_to_budget(std::move(bundle), budget);
    return bundle;
}

PromptBundle trim_to_budget(PromptBundle b, const TokenBudget& budget) {
    const std::size_t limit = budget.prompt_limit();
    if (excess(b, limit) <= 0) return b;

    // (1) exemplar reasoning, cut just enough or entirely.
    if (auto* ex = find_mut(b, BlockKind::exemplar); ex != nullptr && !ex->body.empty() && !ex->body.front().empty()) {
        auto& reasoning = ex->body.front();
        const auto have = text::codepoint_count(reasoning);
        const auto over = static_cast<std::size_t>(excess(b, limit));
        reasoning = std::string(text::utf8_prefix(reasoning, have > over ? have - over : 0));
        b.refresh();
        if (excess(b, limit) <= 0) return b;
    }

    // (2) heuristic rules, last first; the header goes with the final rule.
    if (auto* rules = find_mut(b, BlockKind::heuristics); rules != nullptr) {
        while (!rules->body.empty()) {
            rules->body.pop_back();
            b.refresh();
            if (excess(b, limit) <= 0) return b;
        }
        erase_block(b, BlockKind::heuristics);
        b.refresh();
        if (excess(b, limit) <= 0) return b;
    }

    // (3) the whole exemplar.
    if (find_mut(b, BlockKind::exemplar) != nullptr) {
        erase_block(b, BlockKind::exemplar);
        b.refresh();
        if (excess(b, limit) <= 0) return b;
    }

    // (4) query document tail.
    auto* query = find_mut(b, BlockKind::query);
    if (query == nullptr || query->body.empty()) {
        throw BudgetError("prompt exceeds budget of " + std::to_string(limit) + " tokens and has no document to truncate");
    }
    const std::string marker = "\n" + std::string(kTruncatedMarker);
    auto& document = query->body.front();
    const auto have = static_cast<long long>(text::codepoint_count(document));
    const auto keep = have - excess(b, limit) - static_cast<long long>(text::codepoint_count(marker));
    if (keep < 0) {
        throw BudgetError("minimal prompt does not fit in " + std::to_string(limit) + " tokens (limit " +
                          std::to_string(budget.max_tokens) + " minus reserve " +
                          std::to_string(budget.reserve_for_completion) + ")");
    }
    document = std::string(text::utf8_prefix(document, static_cast<std::size_t>(keep))) + marker;
    b.refresh();
    return b;
}

}  // namespace eae::prompt
