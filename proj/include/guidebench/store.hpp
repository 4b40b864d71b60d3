#pragma once

// Durable, resumable run storage. One directory per run:
//
//   <root>/<run_id>/manifest.json       config snapshot, roster, dataset digest, unit list
//   <root>/<run_id>/transcripts.jsonl   append-only dialogue log, one checksummed record per line
//   <root>/<run_id>/direct.jsonl        append-only zero-shot answers of teachers
//   <root>/<run_id>/failures.jsonl      append-only failure log
//   <root>/<run_id>/grids.jsonl         finalized grids (written once the run completes)
//   <root>/<run_id>/reports/            metric and analysis outputs
//
// A unit is complete iff a valid record for it exists in a log; a torn final
// line is dropped on open, so completion is atomic with the append.

#include "guidebench/domain.hpp"

#include <nlohmann/json.hpp>

#include <compare>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

namespace guidebench {

enum class UnitKind { Direct, Dialogue };

struct UnitKey {
    UnitKind kind = UnitKind::Dialogue;
    std::string teacher_id;
    std::string student_id;  // empty for direct units
    std::string question_id;

    auto operator<=>(const UnitKey&) const = default;
    bool operator==(const UnitKey&) const = default;
};

std::string to_string(const UnitKey& key);
void to_json(nlohmann::json& j, const UnitKey& k);
void from_json(const nlohmann::json& j, UnitKey& k);

enum class UnitStatus { Pending, Complete, Failed };
std::string_view to_string(UnitStatus s) noexcept;

struct DirectRecord {
    std::string teacher_id;
    std::string question_id;
    StudentAnswer answer;

    friend bool operator==(const DirectRecord&, const DirectRecord&) = default;
};

void to_json(nlohmann::json& j, const DirectRecord& r);
void from_json(const nlohmann::json& j, DirectRecord& r);

struct RunManifest {
    std::string run_id;
    nlohmann::json config;  // snapshot of the effective configuration
    std::vector<std::string> teachers;
    std::vector<std::string> students;
    std::string dataset_digest;
    std::vector<UnitKey> units;

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

/// Appends `record` plus a "checksum" field as one line; returns the line without newline.
std::string checksummed_line(const nlohmann::json& record);
/// Parses a checksummed line; nullopt if torn or the checksum does not match.
std::optional<nlohmann::json> verify_line(std::string_view line);

/// Reads every intact record, skipping torn or corrupted lines.
std::vector<nlohmann::json> read_checksummed(const std::filesystem::path& path);

class RunStore {
public:
    /// Creates the run directory and manifest. Re-creating with an identical manifest opens it.
    static std::unique_ptr<RunStore> create(const std::filesystem::path& root, const RunManifest& manifest,
                                            bool durable = true);
    /// Throws ManifestCorrupt if the manifest is missing or unreadable.
    static std::unique_ptr<RunStore> open(const std::filesystem::path& root, const std::string& run_id,
                                          bool durable = true);

    const RunManifest& manifest() const noexcept { return manifest_; }
    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::filesystem::path reports_dir() const { return dir_ / "reports"; }

    /// Durable before return. Throws DuplicateUnit if already complete, StorageFailure on IO error.
    void append_transcript(const DialogueTranscript& t);
    void append_direct(const DirectRecord& r);
    void record_failure(const UnitKey& key, const std::string& message);

    UnitStatus status(const UnitKey& key) const;
    std::map<UnitKey, UnitStatus> status_map() const;
    /// Manifest units without a complete record, in manifest order.
    std::vector<UnitKey> resume_plan() const;
    bool complete() const;

    std::vector<DialogueTranscript> transcripts() const;
    std::vector<DirectRecord> direct_records() const;

private:
    RunStore(std::filesystem::path dir, RunManifest manifest, bool durable);
    void load_state();
    void append_line(const std::filesystem::path& path, const nlohmann::json& record);

    std::filesystem::path dir_;
    RunManifest manifest_;
    bool durable_;
    mutable std::mutex mutex_;
    std::set<UnitKey> complete_;
    std::set<UnitKey> failed_;
};

UnitKey unit_of(const DialogueTranscript& t);
UnitKey unit_of(const DirectRecord& r);

}  // namespace guidebench
