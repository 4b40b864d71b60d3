#include "guidebench/store.hpp"

#include "guidebench/digest.hpp"
#include "guidebench/errors.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

namespace guidebench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTranscripts = "transcripts.jsonl";
constexpr const char* kDirect = "direct.jsonl";
constexpr const char* kFailures = "failures.jsonl";
constexpr const char* kManifest = "manifest.json";

std::string read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

[[noreturn]] void io_fail(const std::string& what) {
    throw Error(ErrorKind::StorageFailure, what + ": " + std::strerror(errno));
}

void write_fully(int fd, std::string_view bytes, const fs::path& path) {
    while (!bytes.empty()) {
        const ssize_t n = ::write(fd, bytes.data(), bytes.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            io_fail("write " + path.string());
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

/// Drops an unterminated final line left behind by an interrupted append.
void truncate_torn_tail(const fs::path& path) {
    if (!fs::exists(path)) return;
    const std::string content = read_all(path);
    if (content.empty() || content.back() == '\n') return;
    const auto last_newline = content.rfind('\n');
    const auto keep = last_newline == std::string::npos ? 0 : last_newline + 1;
    std::error_code ec;
    fs::resize_file(path, keep, ec);
    if (ec) throw Error(ErrorKind::StorageFailure, "cannot truncate torn record in " + path.string());
}

void write_atomically(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) io_fail("open " + tmp.string());
    write_fully(fd, content, tmp);
    ::fsync(fd);
    ::close(fd);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::StorageFailure, "rename " + tmp.string() + ": " + ec.message());
}

}  // namespace

std::string to_string(const UnitKey& key) {
    if (key.kind == UnitKind::Direct) return "direct/" + key.teacher_id + "/" + key.question_id;
    return "dialogue/" + key.teacher_id + "/" + key.student_id + "/" + key.question_id;
}

void to_json(json& j, const UnitKey& k) {
    j = json{{"kind", k.kind == UnitKind::Direct ? "direct" : "dialogue"},
             {"teacher_id", k.teacher_id},
             {"student_id", k.student_id},
             {"question_id", k.question_id}};
}

void from_json(const json& j, UnitKey& k) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "direct" && kind != "dialogue") throw Error(ErrorKind::ParseError, "unknown unit kind " + kind);
    k.kind = kind == "direct" ? UnitKind::Direct : UnitKind::Dialogue;
    k.teacher_id = j.at("teacher_id").get<std::string>();
    k.student_id = j.at("student_id").get<std::string>();
    k.question_id = j.at("question_id").get<std::string>();
}

std::string_view to_string(UnitStatus s) noexcept {
    switch (s) {
        case UnitStatus::Pending: return "pending";
        case UnitStatus::Complete: return "complete";
        case UnitStatus::Failed: return "failed";
    }
    return "pending";
}

void to_json(json& j, const DirectRecord& r) {
    j = json{{"teacher_id", r.teacher_id}, {"question_id", r.question_id}, {"answer", r.answer}};
}

void from_json(const json& j, DirectRecord& r) {
    r.teacher_id = j.at("teacher_id").get<std::string>();
    r.question_id = j.at("question_id").get<std::string>();
    r.answer = j.at("answer").get<StudentAnswer>();
}

void to_json(json& j, const RunManifest& m) {
    j = json{{"run_id", m.run_id},
             {"config", m.config},
             {"teachers", m.teachers},
             {"students", m.students},
             {"dataset_digest", m.dataset_digest},
             {"units", m.units}};
}

void from_json(const json& j, RunManifest& m) {
    m.run_id = j.at("run_id").get<std::string>();
    m.config = j.at("config");
    m.teachers = j.at("teachers").get<std::vector<std::string>>();
    m.students = j.at("students").get<std::vector<std::string>>();
    m.dataset_digest = j.at("dataset_digest").get<std::string>();
    m.units = j.at("units").get<std::vector<UnitKey>>();
}

std::string checksummed_line(const json& record) {
    json copy = record;
    copy.erase("checksum");
    const std::string body = copy.dump();
    copy["checksum"] = sha256_hex(body);
    return copy.dump();
}

std::optional<json> verify_line(std::string_view line) {
    json parsed = json::parse(line, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
    const auto it = parsed.find("checksum");
    if (it == parsed.end() || !it->is_string()) return std::nullopt;
    const std::string expected = it->get<std::string>();
    parsed.erase("checksum");
    if (sha256_hex(parsed.dump()) != expected) return std::nullopt;
    return parsed;
}

std::vector<json> read_checksummed(const fs::path& path) {
    std::vector<json> out;
    const std::string content = read_all(path);
    std::size_t start = 0;
    while (start < content.size()) {
        const auto end = content.find('\n', start);
        if (end == std::string::npos) break;  // unterminated tail: a write in progress or torn
        if (auto record = verify_line(std::string_view(content).substr(start, end - start)))
            out.push_back(std::move(*record));
        start = end + 1;
    }
    return out;
}

UnitKey unit_of(const DialogueTranscript& t) { return {UnitKind::Dialogue, t.teacher_id, t.student_id, t.question_id}; }
UnitKey unit_of(const DirectRecord& r) { return {UnitKind::Direct, r.teacher_id, "", r.question_id}; }

RunStore::RunStore(fs::path dir, RunManifest manifest, bool durable)
    : dir_(std::move(dir)), manifest_(std::move(manifest)), durable_(durable) {}

std::unique_ptr<RunStore> RunStore::create(const fs::path& root, const RunManifest& manifest, bool durable) {
    const fs::path dir = root / manifest.run_id;
    if (fs::exists(dir / kManifest)) {
        auto existing = open(root, manifest.run_id, durable);
        if (!(existing->manifest() == manifest))
            throw Error(ErrorKind::ManifestCorrupt,
                        "run " + manifest.run_id + " exists with a different configuration or dataset");
        return existing;
    }
    std::error_code ec;
    fs::create_directories(dir / "reports", ec);
    if (ec) throw Error(ErrorKind::StorageFailure, "cannot create " + dir.string() + ": " + ec.message());
    write_atomically(dir / kManifest, json(manifest).dump(2) + "\n");
    auto store = std::unique_ptr<RunStore>(new RunStore(dir, manifest, durable));
    store->load_state();
    return store;
}

std::unique_ptr<RunStore> RunStore::open(const fs::path& root, const std::string& run_id, bool durable) {
    const fs::path dir = root / run_id;
    const fs::path manifest_path = dir / kManifest;
    if (!fs::exists(manifest_path)) throw Error(ErrorKind::ManifestCorrupt, "no manifest at " + manifest_path.string());
    RunManifest manifest;
    try {
        manifest = json::parse(read_all(manifest_path)).get<RunManifest>();
    } catch (const std::exception& e) {
        throw Error(ErrorKind::ManifestCorrupt, manifest_path.string() + ": " + e.what());
    }
    if (manifest.run_id != run_id)
        throw Error(ErrorKind::ManifestCorrupt, "manifest run_id " + manifest.run_id + " does not match " + run_id);
    std::error_code ec;
    fs::create_directories(dir / "reports", ec);
    auto store = std::unique_ptr<RunStore>(new RunStore(dir, std::move(manifest), durable));
    store->load_state();
    return store;
}

void RunStore::load_state() {
    for (const char* name : {kTranscripts, kDirect, kFailures}) truncate_torn_tail(dir_ / name);
    for (const auto& t : transcripts()) complete_.insert(unit_of(t));
    for (const auto& r : direct_records()) complete_.insert(unit_of(r));
    for (const auto& f : read_checksummed(dir_ / kFailures)) {
        try {
            failed_.insert(f.at("unit").get<UnitKey>());
        } catch (const std::exception&) {
        }
    }
}

void RunStore::append_line(const fs::path& path, const json& record) {
    const std::string line = checksummed_line(record) + "\n";
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) io_fail("open " + path.string());
    try {
        write_fully(fd, line, path);
    } catch (...) {
        ::close(fd);
        throw;
    }
    if (durable_ && ::fsync(fd) != 0) {
        ::close(fd);
        io_fail("fsync " + path.string());
    }
    ::close(fd);
}

void RunStore::append_transcript(const DialogueTranscript& t) {
    const UnitKey key = unit_of(t);
    std::lock_guard lock(mutex_);
    if (complete_.count(key)) throw Error(ErrorKind::DuplicateUnit, to_string(key));
    append_line(dir_ / kTranscripts, json(t));
    complete_.insert(key);
}

void RunStore::append_direct(const DirectRecord& r) {
    const UnitKey key = unit_of(r);
    std::lock_guard lock(mutex_);
    if (complete_.count(key)) throw Error(ErrorKind::DuplicateUnit, to_string(key));
    append_line(dir_ / kDirect, json(r));
    complete_.insert(key);
}

void RunStore::record_failure(const UnitKey& key, const std::string& message) {
    std::lock_guard lock(mutex_);
    append_line(dir_ / kFailures, json{{"unit", key}, {"error", message}});
    failed_.insert(key);
}

UnitStatus RunStore::status(const UnitKey& key) const {
    std::lock_guard lock(mutex_);
    if (complete_.count(key)) return UnitStatus::Complete;
    if (failed_.count(key)) return UnitStatus::Failed;
    return UnitStatus::Pending;
}

std::map<UnitKey, UnitStatus> RunStore::status_map() const {
    std::map<UnitKey, UnitStatus> out;
    for (const auto& u : manifest_.units) out[u] = status(u);
    return out;
}

std::vector<UnitKey> RunStore::resume_plan() const {
    std::lock_guard lock(mutex_);
    std::vector<UnitKey> out;
    for (const auto& u : manifest_.units)
        if (!complete_.count(u)) out.push_back(u);
    return out;
}

bool RunStore::complete() const { return resume_plan().empty(); }

std::vector<DialogueTranscript> RunStore::transcripts() const {
    std::vector<DialogueTranscript> out;
    for (const auto& j : read_checksummed(dir_ / kTranscripts)) out.push_back(j.get<DialogueTranscript>());
    return out;
}

std::vector<DirectRecord> RunStore::direct_records() const {
    std::vector<DirectRecord> out;
    for (const auto& j : read_checksummed(dir_ / kDirect)) out.push_back(j.get<DirectRecord>());
    return out;
}

}  // namespace guidebench
