#include "fixtures.hpp"

#include "guidebench/jsonl.hpp"
#include "guidebench/text.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fixtures {

using namespace guidebench;
using nlohmann::json;

TempDir::TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "guidebench-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

std::string RecordingTransport::send(const ModelSpec& model, std::span<const ChatMessage> messages,
                                     const DecodingParams&, std::chrono::milliseconds) {
    std::vector<ChatMessage> copy(messages.begin(), messages.end());
    std::string response = policy_(model.model_id, copy);
    std::lock_guard lock(mutex_);
    records_[model.model_id].emplace_back(input_digest(messages), response);
    prompts_[model.model_id].push_back(std::move(copy));
    return response;
}

void RecordingTransport::write_scripts(const fs::path& dir) const {
    std::lock_guard lock(mutex_);
    fs::create_directories(dir);
    for (const auto& [model, records] : records_) {
        std::string out;
        for (const auto& [digest, response] : records)
            out += json{{"input_digest", digest}, {"response", response}}.dump() + "\n";
        write_file(dir / (model + ".jsonl"), out);
    }
}

ModelSpec remote(const std::string& id) {
    ModelSpec m;
    m.model_id = id;
    m.kind = ModelKind::RemoteEndpoint;
    m.endpoint_url = "http://recorder.invalid/v1/chat/completions";
    return m;
}

ModelSpec scripted(const std::string& id, const fs::path& script) {
    ModelSpec m;
    m.model_id = id;
    m.kind = ModelKind::Scripted;
    m.script_path = script;
    return m;
}

namespace {

const std::string& last_content(const std::vector<ChatMessage>& messages) { return messages.back().content; }

/// Index of the item whose text appears in the prompt.
template <class Items, class Text>
std::size_t find_item(const Items& items, const std::string& prompt, Text text_of) {
    for (std::size_t i = 0; i < items.size(); ++i)
        if (prompt.find(text_of(items[i])) != std::string::npos) return i;
    throw std::runtime_error("policy: no fixture item matches the prompt");
}

std::size_t count_of(const std::string& haystack, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

/// Letter of the last "(X)" at or after `from`, or -1.
int last_paren_letter(const std::string& s, std::size_t from) {
    int letter = -1;
    for (std::size_t i = from; i + 2 < s.size(); ++i)
        if (s[i] == '(' && s[i + 1] >= 'A' && s[i + 1] <= 'D' && s[i + 2] == ')') letter = s[i + 1] - 'A';
    return letter;
}

char letter(int index) { return static_cast<char>('A' + index); }

}  // namespace

// ---------------------------------------------------------------------------

std::vector<McqQuestion> e2e_questions() {
    auto make = [](std::string id, std::string stem, std::vector<std::string> options, int gold, Category c) {
        McqQuestion q;
        q.id = std::move(id);
        q.stem = std::move(stem);
        q.options = std::move(options);
        q.gold_index = gold;
        q.category = c;
        q.source_dataset = "fixture";
        return q;
    };
    return {
        make("q1", "Which city is the capital of Australia?", {"Canberra", "Sydney", "Melbourne", "Perth"}, 0,
             Category::Knowledge),
        make("q2", "Which gas do plants absorb from the air for photosynthesis?",
             {"Oxygen", "Carbon dioxide", "Nitrogen", "Helium"}, 1, Category::Knowledge),
        make("q3", "How many legs does a spider have?", {"Six legs", "Ten legs", "Eight legs", "Twelve legs"}, 2,
             Category::Reasoning),
        make("q4", "Which ocean is the largest by area?", {"Atlantic", "Indian", "Arctic", "Pacific"}, 3,
             Category::Understanding),
    };
}

const std::map<std::string, std::vector<std::vector<int>>>& e2e_student_choices() {
    static const std::map<std::string, std::vector<std::vector<int>>> table = {
        // q1..q4, each turns 0..3
        {"student-1", {{1, 0, 0, 0}, {1, 1, 1, 1}, {0, 0, 2, 2}, {3, 3, 0, 3}}},
        {"student-2", {{0, 0, 0, 0}, {2, 2, 2, 1}, {2, 2, 2, 2}, {1, 3, 3, 3}}},
    };
    return table;
}

const std::vector<int>& e2e_teacher_direct() {
    static const std::vector<int> direct = {0, 1, 3, 3};
    return direct;
}

Policy e2e_policy() {
    const auto questions = e2e_questions();
    return [questions](const std::string& model, const std::vector<ChatMessage>& messages) -> std::string {
        const std::string& prompt = last_content(messages);
        const std::size_t qi = find_item(questions, prompt, [](const McqQuestion& q) { return q.stem; });
        const McqQuestion& q = questions[qi];

        if (model == kTeacher) {
            if (prompt.find(kAnswerMarker) == std::string::npos)
                return std::string("The answer is (") + letter(e2e_teacher_direct()[qi]) + ").";
            const int turn = static_cast<int>(count_of(prompt, kAnswerMarker));
            const int latest = last_paren_letter(prompt, prompt.rfind(kAnswerMarker));
            bool says_correct = latest == q.gold_index;
            if (q.id == "q3" && latest == 0) says_correct = true;  // a deliberate misjudgment
            return std::string("JUDGMENT: ") + (says_correct ? "correct" : "incorrect") + "\nGUIDANCE: Round " +
                   std::to_string(turn) + ": " +
                   (says_correct ? "your answer holds up, keep the same reasoning."
                                 : "recheck the key fact the question asks about.");
        }

        int turn = 0;
        if (const auto pos = prompt.find("Round "); pos != std::string::npos) turn = prompt[pos + 6] - '0';
        const int choice = e2e_student_choices().at(model)[qi][static_cast<std::size_t>(turn)];
        if (model == "student-2" && q.id == "q1" && turn == 0)
            return std::string("The answer is (") + letter(choice) + ") " + q.options[static_cast<std::size_t>(choice)] + ".";
        return std::string("I choose (") + letter(choice) + ").";
    };
}

E2EFixture make_e2e_fixture(const fs::path& dir) {
    E2EFixture f;
    f.dir = dir;
    f.questions = e2e_questions();
    f.dataset = dir / "dataset.jsonl";
    fs::create_directories(dir);
    write_jsonl(f.dataset, f.questions);

    auto transport = std::make_shared<RecordingTransport>(e2e_policy());
    Gateway gateway(GatewayOptions{}, transport);
    RunConfig cfg;
    cfg.turns = kE2ETurns;
    const auto tpl = PromptTemplateSet::defaults();
    const ModelSpec teacher = remote(kTeacher);
    for (const auto& q : f.questions) direct_answer(gateway, teacher, q, cfg.teacher_decoding, tpl);
    for (const auto& s : kStudents)
        for (const auto& q : f.questions) run_dialogue(gateway, teacher, remote(s), q, cfg, tpl);
    transport->write_scripts(dir / "scripts");
    for (const auto& p : transport->prompts().at(kTeacher))
        if (p.back().content.find(kAnswerMarker) != std::string::npos) f.teacher_prompts.push_back(p);

    std::string conf =
        "# scripted end-to-end fixture\n"
        "storage_root = runs\n"
        "run_id = e2e\n"
        "turns = 3\n"
        "max_inflight_requests = 2\n"
        "rng_seed = 7\n"
        "teachers = " + kTeacher + "\n"
        "students = student-1, student-2\n";
    for (const auto& id : {kTeacher, kStudents[0], kStudents[1]})
        conf += "model." + id + ".kind = scripted\nmodel." + id + ".script_path = scripts/" + id + ".jsonl\n";
    f.config = dir / "e2e.conf";
    write_file(f.config, conf);
    return f;
}

// ---------------------------------------------------------------------------

std::vector<forge::RawQaItem> forge_items() {
    return {
        {"f1", "What is the boiling point of water at sea level, in degrees Celsius?", "100", "physics-qa",
         Category::Knowledge},
        {"f2", "Which planet is known as the Red Planet?", "Mars", "astro-qa", Category::Knowledge},
        {"f3", "What is the capital of France?", "Paris", "geo-qa", Category::Knowledge},
        {"f4", "How many sides does a hexagon have?", "6", "math-qa", Category::Reasoning},
        {"f5", "Who wrote the play Romeo and Juliet?", "William Shakespeare", "lit-qa", Category::Understanding},
    };
}

const std::map<std::string, int>& forge_item_levels() {
    static const std::map<std::string, int> levels = {{"f1", 1}, {"f2", 2}, {"f4", 5}, {"f5", 3}};
    return levels;
}

Policy forge_policy() {
    const auto items = forge_items();
    // Samples each weak model returns for each item, served in order and cycling.
    const std::map<std::pair<std::string, std::string>, std::vector<std::string>> samples = {
        {{"weak-1", "f1"}, {"90", "212"}},
        {{"weak-2", "f1"}, {"100", "95"}},
        {{"weak-1", "f2"}, {"Jupiter", "mars"}},
        {{"weak-2", "f2"}, {"Venus", "Saturn"}},
        {{"weak-1", "f3"}, {"paris", "Paris."}},
        {{"weak-2", "f3"}, {"PARIS"}},
        {{"weak-1", "f4"}, {"5", "8"}},
        {{"weak-2", "f4"}, {"7"}},
        {{"weak-1", "f5"}, {"Charles Dickens", "Jane Austen"}},
        {{"weak-2", "f5"}, {"charles dickens.", "Christopher Marlowe"}},
    };
    auto counters = std::make_shared<std::map<std::pair<std::string, std::string>, std::size_t>>();
    auto mutex = std::make_shared<std::mutex>();

    return [items, samples, counters, mutex](const std::string& model,
                                            const std::vector<ChatMessage>& messages) -> std::string {
        const std::string& prompt = last_content(messages);
        const std::size_t i = find_item(items, prompt, [](const forge::RawQaItem& r) { return r.question; });
        const auto& item = items[i];

        if (model.rfind("weak-", 0) == 0) {
            std::lock_guard lock(*mutex);
            const auto key = std::make_pair(model, item.id);
            const auto& seq = samples.at(key);
            return seq[(*counters)[key]++ % seq.size()];
        }
        if (model == "rewriter") {
            std::string out = "STEM: " + item.question + "\nCORRECT: " + item.gold_answer + "\n";
            std::size_t pos = 0;
            while ((pos = prompt.find("Wrong answer: ", pos)) != std::string::npos) {
                const auto end = prompt.find('\n', pos);
                out += "WRONG: " + prompt.substr(pos + 14, end - pos - 14) + "\n";
                pos = end;
            }
            return out;
        }
        if (model == "reviewer") return "VERDICT: accept\nREASON: The item is clear and has one correct answer.";

        // Graders: grader-k answers correctly once k reaches the item's level.
        const int k = model.back() - '0';
        int gold = -1;
        for (int l = 0; l < 4; ++l) {
            const std::string line = std::string(1, letter(l)) + ". " + item.gold_answer + "\n";
            if (prompt.find(line) != std::string::npos) gold = l;
        }
        if (gold < 0) throw std::runtime_error("grader policy: gold option not found");
        const int level = forge_item_levels().at(item.id);
        return std::string("Final choice: ") + letter(k >= level ? gold : (gold + 1) % 4);
    };
}

ForgeFixture make_forge_fixture(const fs::path& dir) {
    ForgeFixture f;
    f.dir = dir;
    f.corpus = dir / "corpus.jsonl";
    fs::create_directories(dir);
    write_jsonl(f.corpus, forge_items());

    const std::vector<std::string> weak = {"weak-1", "weak-2"};
    const std::vector<std::string> graders = {"grader-1", "grader-2", "grader-3", "grader-4"};

    forge::ForgeConfig recording;
    for (const auto& w : weak) recording.distractor_models.push_back(remote(w));
    recording.rewriter = remote("rewriter");
    recording.reviewer = remote("reviewer");
    recording.max_attempts = 6;
    recording.rng_seed = kForgeSeed;
    forge::GraderLadder recording_ladder;
    for (const auto& g : graders) recording_ladder.graders.push_back(remote(g));

    auto transport = std::make_shared<RecordingTransport>(forge_policy());
    Gateway gateway(GatewayOptions{}, transport);
    const auto items = forge_items();
    forge::forge_dataset(gateway, items, recording, &recording_ladder, PromptTemplateSet::defaults(), 1);
    const fs::path scripts = dir / "scripts";
    transport->write_scripts(scripts);

    f.forge = recording;
    f.forge.distractor_models.clear();
    for (const auto& w : weak) f.forge.distractor_models.push_back(scripted(w, scripts / (w + ".jsonl")));
    f.forge.rewriter = scripted("rewriter", scripts / "rewriter.jsonl");
    f.forge.reviewer = scripted("reviewer", scripts / "reviewer.jsonl");
    for (const auto& g : graders) f.ladder.graders.push_back(scripted(g, scripts / (g + ".jsonl")));

    std::string conf =
        "# scripted forge fixture\n"
        "storage_root = runs\n"
        "max_inflight_requests = 2\n"
        "graders = grader-1, grader-2, grader-3, grader-4\n"
        "forge.distractor_models = weak-1, weak-2\n"
        "forge.rewriter = rewriter\n"
        "forge.reviewer = reviewer\n"
        "forge.max_attempts = 6\n"
        "forge.rng_seed = " + std::to_string(kForgeSeed) + "\n";
    std::vector<std::string> all = weak;
    all.insert(all.end(), {"rewriter", "reviewer"});
    all.insert(all.end(), graders.begin(), graders.end());
    for (const auto& id : all)
        conf += "model." + id + ".kind = scripted\nmodel." + id + ".script_path = scripts/" + id + ".jsonl\n";
    f.config = dir / "forge.conf";
    write_file(f.config, conf);
    return f;
}

// ---------------------------------------------------------------------------

std::vector<std::string> visibility_violations(const std::vector<ChatMessage>& teacher_prompt,
                                               const std::vector<std::string>& options) {
    std::string visible;
    for (const auto& m : teacher_prompt) visible += m.content + "\n";
    // Remove quoted student answers: from each answer marker to the end of its block.
    for (auto pos = visible.find(kAnswerMarker); pos != std::string::npos; pos = visible.find(kAnswerMarker, pos)) {
        const auto header_end = visible.find('\n', pos);
        auto block_end = visible.find("\n\n", header_end);
        if (block_end == std::string::npos) block_end = visible.size();
        visible.erase(pos, block_end - pos);
    }
    std::vector<std::string> found;
    for (const auto& opt : options) {
        for (auto pos = text::find_ci(visible, opt); pos != std::string::npos; pos = text::find_ci(visible, opt, pos + 1)) {
            if (text::at_word_boundary(visible, pos, opt.size())) {
                found.push_back(opt);
                break;
            }
        }
    }
    return found;
}

}  // namespace fixtures
