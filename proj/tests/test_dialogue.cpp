#include "guidebench/dialogue.hpp"
#include "guidebench/rng.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <atomic>

using namespace guidebench;

namespace {

McqQuestion question() {
    McqQuestion q;
    q.id = "q1";
    q.stem = "Which metal is liquid at room temperature?";
    q.options = {"Iron", "Mercury", "Copper", "Silver"};
    q.gold_index = 1;
    return q;
}

std::string user_text(const std::vector<ChatMessage>& m) { return m.back().content; }

/// Transport that returns canned text per model and counts calls.
class CannedTransport final : public ChatTransport {
public:
    explicit CannedTransport(std::function<std::string(const ModelSpec&, const std::string&)> f) : f_(std::move(f)) {}
    std::string send(const ModelSpec& model, std::span<const ChatMessage> messages, const DecodingParams&,
                     std::chrono::milliseconds) override {
        ++calls;
        return f_(model, messages.back().content);
    }
    std::atomic<int> calls{0};

private:
    std::function<std::string(const ModelSpec&, const std::string&)> f_;
};

}  // namespace

TEST_CASE("extract_choice takes the last standalone letter") {
    const auto opts = question().options;
    CHECK(extract_choice("B", opts) == 1);
    CHECK(extract_choice("(c)", opts) == 2);
    CHECK(extract_choice("I first thought A but the answer is D.", opts) == 3);
    CHECK(extract_choice("Answer: b", opts) == 1);
    CHECK(extract_choice("The answer is (a)", opts) == 0);
}

TEST_CASE("a bare lowercase a is read as the article") {
    const auto opts = question().options;
    CHECK(extract_choice("It is a metal, so B", opts) == 1);
    CHECK(extract_choice("B is a guess", opts) == 1);
    CHECK_FALSE(extract_choice("a guess", opts).has_value());
}

TEST_CASE("letters inside words do not count") {
    const auto opts = question().options;
    CHECK_FALSE(extract_choice("Bad choice overall", opts).has_value());
    CHECK(extract_choice("ABC D", opts) == 3);
}

TEST_CASE("option text is the fallback, longest unique match wins") {
    std::vector<std::string> opts = {"Iron", "Mercury", "Copper", "Silver"};
    CHECK(extract_choice("definitely mercury", opts) == 1);
    CHECK_FALSE(extract_choice("none of them", opts).has_value());
    opts = {"Sun", "Sunflower", "Moon", "Star"};
    CHECK(extract_choice("the sunflower", opts) == 1);
    opts = {"Tin", "Zinc", "Lead", "Gold"};
    CHECK_FALSE(extract_choice("zinc or lead", opts).has_value());
}

TEST_CASE("score_answer marks gold choices correct") {
    const auto q = question();
    const auto a = score_answer("It must be (B).", q, 2);
    CHECK(a.turn == 2);
    CHECK(a.parsed_index == 1);
    CHECK(a.is_correct);
    const auto none = score_answer("no idea", q, 0);
    CHECK_FALSE(none.parsed_index.has_value());
    CHECK_FALSE(none.is_correct);
}

TEST_CASE("teacher moves: tagged format") {
    auto m = parse_teacher_move("JUDGMENT: incorrect\nGUIDANCE: Think about which metal melts lowest.", 2);
    CHECK(m.turn == 2);
    CHECK(m.verdict == Verdict::JudgedIncorrect);
    CHECK(m.guidance == "Think about which metal melts lowest.");

    m = parse_teacher_move("judgement: **Correct**\nguidance: keep going", 1);
    CHECK(m.verdict == Verdict::JudgedCorrect);
    CHECK(m.guidance == "keep going");
}

TEST_CASE("teacher moves: untagged fallback and unparseable") {
    auto m = parse_teacher_move("Your answer is incorrect. Reconsider.", 1);
    CHECK(m.verdict == Verdict::JudgedIncorrect);
    CHECK(m.guidance == "Your answer is incorrect. Reconsider.");

    m = parse_teacher_move("That is correct, well done.", 1);
    CHECK(m.verdict == Verdict::JudgedCorrect);

    m = parse_teacher_move("Let's look again at the properties.", 3);
    CHECK(m.verdict == Verdict::Unparseable);
    CHECK(m.guidance == "Let's look again at the properties.");
    CHECK(m.raw_text == "Let's look again at the properties.");
}

TEST_CASE("render_template substitutes once") {
    CHECK(render_template("{a}-{b}-{c}", {{"a", "{b}"}, {"b", "x"}}) == "{b}-x-{c}");
    CHECK(render_template("{unclosed", {{"unclosed", "x"}}) == "{unclosed");
}

TEST_CASE("templates: validation") {
    auto tpl = PromptTemplateSet::defaults();
    CHECK_NOTHROW(validate(tpl));
    tpl.teacher_turn += "\n{options}";
    CHECK_THROWS_AS(validate(tpl), Error);
    tpl = PromptTemplateSet::defaults();
    tpl.student_followup = "{stem} {options} {guidance}";
    CHECK_THROWS_AS(validate(tpl), Error);
}

TEST_CASE("shipped prompt files equal the built-in defaults") {
    const auto dir = std::filesystem::path(GUIDEBENCH_SOURCE_DIR) / "assets" / "prompts";
    const auto loaded = PromptTemplateSet::load(dir);
    const auto defaults = PromptTemplateSet::defaults();
    CHECK(loaded.student_system == defaults.student_system);
    CHECK(loaded.student_initial == defaults.student_initial);
    CHECK(loaded.student_followup == defaults.student_followup);
    CHECK(loaded.teacher_system == defaults.teacher_system);
    CHECK(loaded.teacher_turn == defaults.teacher_turn);
}

TEST_CASE("template directory may override one file") {
    fixtures::TempDir dir;
    fixtures::write_file(dir.path() / "teacher_turn.txt", "Q: {stem}\nH: {history}\n");
    const auto tpl = PromptTemplateSet::load(dir.path());
    CHECK(tpl.teacher_turn == "Q: {stem}\nH: {history}");
    CHECK(tpl.student_initial == PromptTemplateSet::defaults().student_initial);
}

TEST_CASE("student follow-up sees its previous answer and the latest guidance only") {
    const auto q = question();
    StudentAnswer prev;
    prev.turn = 1;
    prev.raw_text = "I think (A)";
    const auto msgs = render_student_followup(q, prev, "Think about melting points.", PromptTemplateSet::defaults());
    const auto text = user_text(msgs);
    CHECK(text.find("I think (A)") != std::string::npos);
    CHECK(text.find("Think about melting points.") != std::string::npos);
    CHECK(text.find(format_options(q.options)) != std::string::npos);
    CHECK(text.find(kAnswerMarker) == std::string::npos);
    CHECK(msgs.front().role == Role::System);
}

TEST_CASE("teacher prompt shows the full history without the options") {
    const auto q = question();
    std::vector<StudentAnswer> answers(3);
    for (int k = 0; k < 3; ++k) {
        answers[k].turn = k;
        answers[k].raw_text = "answer " + std::to_string(k);
    }
    std::vector<TeacherMove> moves = {{1, Verdict::JudgedIncorrect, "hint one", "r"},
                                      {2, Verdict::JudgedIncorrect, "hint two", "r"}};
    const auto text = user_text(render_teacher(q.stem, answers, moves, PromptTemplateSet::defaults()));
    CHECK(text.find(q.stem) != std::string::npos);
    for (const char* s : {"[Student answer, turn 0]\nanswer 0", "[Teacher guidance, turn 1]\nhint one",
                          "[Student answer, turn 1]\nanswer 1", "[Teacher guidance, turn 2]\nhint two",
                          "[Student answer, turn 2]\nanswer 2"})
        CHECK(text.find(s) != std::string::npos);
    CHECK(text.find("A. Iron") == std::string::npos);
    for (const auto& o : q.options) CHECK(text.find(o) == std::string::npos);
    CHECK_THROWS_AS(render_teacher(q.stem, answers, std::span(moves).first(1), PromptTemplateSet::defaults()), Error);
}

TEST_CASE("property: teacher prompts never contain option text outside quoted answers") {
    Rng rng(11);
    const auto tpl = PromptTemplateSet::defaults();
    for (int trial = 0; trial < 200; ++trial) {
        McqQuestion q;
        q.id = "p";
        q.stem = "Stem number " + std::to_string(trial);
        for (int k = 0; k < 4; ++k) q.options.push_back("opt" + std::to_string(trial) + "x" + std::to_string(k));
        std::vector<StudentAnswer> answers;
        std::vector<TeacherMove> moves;
        const int t = 1 + static_cast<int>(rng.below(4));
        for (int k = 0; k < t; ++k) {
            StudentAnswer a;
            a.turn = k;
            // Students may quote option text; that is allowed.
            a.raw_text = "I pick " + q.options[rng.below(4)];
            answers.push_back(a);
            if (k > 0) moves.push_back({k, Verdict::JudgedIncorrect, "think again", "r"});
        }
        const auto prompt = render_teacher(q.stem, answers, moves, tpl);
        CHECK(fixtures::visibility_violations(prompt, q.options).empty());
    }
}

TEST_CASE("run_dialogue runs exactly T turns") {
    const auto q = question();
    auto transport = std::make_shared<CannedTransport>([](const ModelSpec& m, const std::string&) {
        return m.model_id == "teacher" ? std::string("JUDGMENT: correct\nGUIDANCE: fine") : std::string("(B)");
    });
    Gateway gw(GatewayOptions{}, transport);
    RunConfig cfg;
    cfg.turns = 4;
    cfg.student_decoding.temperature = 0.5;  // uncached, so every call reaches the transport
    cfg.teacher_decoding.temperature = 0.5;
    const auto t = run_dialogue(gw, fixtures::remote("teacher"), fixtures::remote("student"), q, cfg,
                                PromptTemplateSet::defaults());
    CHECK(is_complete(t, 4));
    CHECK(transport->calls == 9);
    for (const auto& a : t.answers) CHECK(a.is_correct);
    for (const auto& m : t.moves) CHECK(m.verdict == Verdict::JudgedCorrect);
}

TEST_CASE("run_dialogue wraps gateway failures with coordinates") {
    const auto q = question();
    fixtures::TempDir dir;
    fixtures::write_file(dir.path() / "empty.jsonl", "");
    Gateway gw(GatewayOptions{});
    try {
        run_dialogue(gw, fixtures::scripted("teacher", dir.path() / "empty.jsonl"),
                     fixtures::scripted("student", dir.path() / "empty.jsonl"), q, RunConfig{},
                     PromptTemplateSet::defaults());
        FAIL("expected failure");
    } catch (const DialogueError& e) {
        CHECK(e.kind() == ErrorKind::DialogueFailed);
        CHECK(e.cause() == ErrorKind::ScriptMiss);
        CHECK(e.turn() == 0);
        CHECK(std::string(e.what()).find("question=q1") != std::string::npos);
    }
}
