#pragma once

// Test fixtures built from small hand-written policies. A policy maps
// (model, prompt) to a response; the recorder drives the real protocol code
// against the policies once and writes what each model was asked as script
// files, which scripted models then replay.

#include "guidebench/dialogue.hpp"
#include "guidebench/domain.hpp"
#include "guidebench/forge.hpp"
#include "guidebench/model_gateway.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace fixtures {

namespace fs = std::filesystem;

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const noexcept { return path_; }

private:
    fs::path path_;
};

std::string read_file(const fs::path& p);
void write_file(const fs::path& p, const std::string& content);

using Policy = std::function<std::string(const std::string& model_id, const std::vector<guidebench::ChatMessage>&)>;

/// Transport answering from a policy and remembering every exchange per model, in call order.
class RecordingTransport final : public guidebench::ChatTransport {
public:
    explicit RecordingTransport(Policy policy) : policy_(std::move(policy)) {}
    std::string send(const guidebench::ModelSpec& model, std::span<const guidebench::ChatMessage> messages,
                     const guidebench::DecodingParams& params, std::chrono::milliseconds timeout) override;
    /// Writes <dir>/<model_id>.jsonl for every model seen.
    void write_scripts(const fs::path& dir) const;
    const std::map<std::string, std::vector<std::vector<guidebench::ChatMessage>>>& prompts() const { return prompts_; }

private:
    Policy policy_;
    mutable std::mutex mutex_;
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> records_;
    std::map<std::string, std::vector<std::vector<guidebench::ChatMessage>>> prompts_;
};

/// A remote spec whose calls go to a test transport.
guidebench::ModelSpec remote(const std::string& id);
guidebench::ModelSpec scripted(const std::string& id, const fs::path& script);

// ---------------------------------------------------------------------------
// End-to-end fixture: one teacher, two students, four questions, three turns.

inline constexpr int kE2ETurns = 3;
inline const std::string kTeacher = "teacher-x";
inline const std::vector<std::string> kStudents = {"student-1", "student-2"};

std::vector<guidebench::McqQuestion> e2e_questions();
/// Letter index chosen by each student at turns 0..3, per question.
const std::map<std::string, std::vector<std::vector<int>>>& e2e_student_choices();
/// Letter index the teacher gives when answering directly.
const std::vector<int>& e2e_teacher_direct();
Policy e2e_policy();

struct E2EFixture {
    fs::path dir;
    fs::path config;   // scripted models, storage under dir/runs
    fs::path dataset;
    std::vector<guidebench::McqQuestion> questions;
    std::vector<std::vector<guidebench::ChatMessage>> teacher_prompts;  // every teacher-turn prompt recorded
};

E2EFixture make_e2e_fixture(const fs::path& dir);

// ---------------------------------------------------------------------------
// Forge fixture: five raw items, one without enough distinct wrong answers.

std::vector<guidebench::forge::RawQaItem> forge_items();
/// Grader ladder of four; graders answer gold from the level given here onward.
const std::map<std::string, int>& forge_item_levels();
Policy forge_policy();

struct ForgeFixture {
    fs::path dir;
    fs::path config;
    fs::path corpus;
    guidebench::forge::ForgeConfig forge;   // scripted specs
    guidebench::forge::GraderLadder ladder; // scripted specs
};

inline constexpr std::uint64_t kForgeSeed = 20240611;

ForgeFixture make_forge_fixture(const fs::path& dir);

// ---------------------------------------------------------------------------

/// Option texts found in a teacher prompt outside the quoted student answers.
std::vector<std::string> visibility_violations(const std::vector<guidebench::ChatMessage>& teacher_prompt,
                                               const std::vector<std::string>& options);

}  // namespace fixtures
