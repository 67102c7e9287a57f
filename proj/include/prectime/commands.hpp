#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

namespace prectime {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitInternal = 4;

struct CommandOptions {
    std::filesystem::path config;
    std::filesystem::path checkpoint;
    std::filesystem::path manifest;
    std::filesystem::path out;    // directory; for predict a file (stdout when empty)
    std::filesystem::path input;  // predict: cycle CSV
    std::string split;            // eval: restrict to one manifest split
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

// train: split/normalize/pad, train, then write checkpoint.bin, train_log.csv,
// report_val.json and report_test.json into the output directory.
int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err);
// eval: report.json and changepoints.csv for the manifest's cycles.
int cmd_eval(const CommandOptions& opts, std::ostream& out, std::ostream& err);
// predict: CSV `t,label,confidence`, one row per real timestep.
int cmd_predict(const CommandOptions& opts, std::ostream& out, std::ostream& err);
// synth: one CSV per cycle plus manifest.csv.
int cmd_synth(const CommandOptions& opts, std::ostream& out, std::ostream& err);
// params: per-layer and total parameter counts.
int cmd_params(const CommandOptions& opts, std::ostream& out, std::ostream& err);

// Runs `body`, reporting any exception on `err` and mapping it to an exit code.
int run_guarded(const std::function<int()>& body, std::ostream& err);

// Exclusive marker file in an output directory, removed on destruction.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

    static constexpr const char* kFileName = ".prectime.lock";

private:
    std::filesystem::path path_;
};

}  // namespace prectime
