#include "guidebench/domain.hpp"
#include "guidebench/errors.hpp"
#include "guidebench/jsonl.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

using namespace guidebench;
using nlohmann::json;

namespace {

McqQuestion sample_question() {
    McqQuestion q;
    q.id = "q";
    q.stem = "Pick one";
    q.options = {"red", "green", "blue", "black"};
    q.gold_index = 2;
    q.category = Category::Reasoning;
    q.source_dataset = "unit";
    return q;
}

DialogueTranscript transcript(const std::string& student, const std::string& question, std::vector<bool> correct) {
    DialogueTranscript t;
    t.teacher_id = "t";
    t.student_id = student;
    t.question_id = question;
    for (std::size_t k = 0; k < correct.size(); ++k) {
        StudentAnswer a;
        a.turn = static_cast<int>(k);
        a.is_correct = correct[k];
        t.answers.push_back(a);
        if (k > 0) t.moves.push_back(TeacherMove{static_cast<int>(k), Verdict::JudgedIncorrect, "g", "raw"});
    }
    return t;
}

}  // namespace

TEST_CASE("well-formed question has no violations") { CHECK(validate_question(sample_question()).empty()); }

TEST_CASE("question invariants are all reported") {
    auto q = sample_question();
    q.options = {"x", " x ", ""};
    q.gold_index = 5;
    q.stem = "   ";
    q.difficulty = 7;
    const auto v = validate_question(q);
    const std::vector<std::string> expected = {"empty stem", "expected exactly 4 options", "gold index out of range",
                                               "empty option", "duplicate options", "difficulty out of range"};
    CHECK(v == expected);
}

TEST_CASE("duplicate options compare after whitespace normalization") {
    auto q = sample_question();
    q.options[3] = "  blue ";
    CHECK(validate_question(q) == std::vector<std::string>{"duplicate options"});
}

TEST_CASE("question JSON round trip") {
    auto q = sample_question();
    q.difficulty = 3;
    const json j = q;
    CHECK(j.get<McqQuestion>() == q);
    CHECK(j["category"] == "Reasoning");

    q.difficulty.reset();
    CHECK(json(q).get<McqQuestion>() == q);
}

TEST_CASE("unknown category is a parse error") {
    CHECK_THROWS_AS(category_from_string("Trivia"), Error);
    try {
        category_from_string("Trivia");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ParseError);
    }
}

TEST_CASE("transcript JSON round trip keeps every field") {
    auto t = transcript("s", "q", {false, true, true});
    t.answers[1].parsed_index = 2;
    t.answers[1].raw_text = "I pick (C)";
    t.moves[0].verdict = Verdict::Unparseable;
    const json j = t;
    CHECK(j.get<DialogueTranscript>() == t);
}

TEST_CASE("is_complete checks counts and numbering") {
    auto t = transcript("s", "q", {false, true, true, false});
    CHECK(is_complete(t, 3));
    CHECK_FALSE(is_complete(t, 2));
    t.moves[1].turn = 3;
    CHECK_FALSE(is_complete(t, 3));
}

TEST_CASE("build_grid lays rows out in question order") {
    auto q1 = sample_question();
    auto q2 = sample_question();
    q2.id = "q2";
    const std::vector<McqQuestion> questions = {q2, q1};
    const std::vector<DialogueTranscript> ts = {transcript("s", "q", {true, false}), transcript("s", "q2", {false, true}),
                                                transcript("other", "q", {false, false})};
    const auto g = build_grid("s", questions, ts);
    CHECK(g.questions() == 2);
    CHECK(g.turns() == 1);
    CHECK(g.cells(0, 0) == false);
    CHECK(g.cells(0, 1) == true);
    CHECK(g.cells(1, 0) == true);
    CHECK(g.cells(1, 1) == false);
}

TEST_CASE("build_grid rejects missing questions and mixed horizons") {
    auto q1 = sample_question();
    auto q2 = sample_question();
    q2.id = "q2";
    const std::vector<McqQuestion> questions = {q1, q2};
    CHECK_THROWS_AS(build_grid("s", questions, std::vector<DialogueTranscript>{transcript("s", "q", {true, true})}),
                    Error);
    const std::vector<DialogueTranscript> mixed = {transcript("s", "q", {true, true}),
                                                   transcript("s", "q2", {true, true, true})};
    CHECK_THROWS_AS(build_grid("s", questions, mixed), Error);
}

TEST_CASE("grid JSON round trip") {
    CorrectnessGrid g;
    g.student_id = "s";
    g.cells.resize(3, 4);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 4; ++k) g.cells(i, k) = (i + k) % 2 == 0;
    CHECK(json(g).get<CorrectnessGrid>() == g);
}

TEST_CASE("run config validation") {
    RunConfig cfg;
    CHECK_NOTHROW(validate(cfg));
    cfg.turns = 0;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg = RunConfig{};
    cfg.max_inflight_requests = 0;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg = RunConfig{};
    cfg.student_decoding.max_tokens = 0;
    CHECK_THROWS_AS(validate(cfg), Error);

    cfg = RunConfig{};
    cfg.reflection_domain = ReflectionDomain::PreviouslyCorrect;
    cfg.teacher_decoding.seed = 9;
    CHECK(json(cfg).get<RunConfig>() == cfg);
}

TEST_CASE("dataset digest depends on content and order") {
    auto q1 = sample_question();
    auto q2 = sample_question();
    q2.id = "q2";
    const std::vector<McqQuestion> a = {q1, q2};
    const std::vector<McqQuestion> b = {q2, q1};
    CHECK(dataset_digest(a) == dataset_digest(a));
    CHECK(dataset_digest(a) != dataset_digest(b));
    auto c = a;
    c[0].options[0] = "crimson";
    CHECK(dataset_digest(a) != dataset_digest(c));
    CHECK(dataset_digest(a).size() == 64);
}

TEST_CASE("jsonl reader reports the failing line") {
    fixtures::TempDir dir;
    const auto path = dir.path() / "q.jsonl";
    fixtures::write_file(path, json(sample_question()).dump() + "\n\n{\"id\": 3}\n");
    try {
        read_jsonl<McqQuestion>(path);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ParseError);
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
}
