#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "pipeline/config.hpp"

namespace nodulekit::pipeline {

const char* tool_version() noexcept;

/// {tool_version, config_hash, seed}; embedded in every artifact.
nlohmann::json artifact_stamp(const PipelineConfig& config);

/// Throws VersionMismatch when `doc` was produced under a different config hash.
void check_stamp(const nlohmann::json& doc, const PipelineConfig& config, const std::string& what);

struct CommandResult {
  nlohmann::json summary;
  std::string stdout_text;  // predict and archive-inspect only
};

/// Dispatches one subcommand by name (InvalidArgument for unknown names).
CommandResult run_command(const std::string& command, const PipelineConfig& config);

CommandResult cmd_preprocess(const PipelineConfig& config);
CommandResult cmd_featurize(const PipelineConfig& config);
CommandResult cmd_train_heads(const PipelineConfig& config);
CommandResult cmd_train_classifier(const PipelineConfig& config);
CommandResult cmd_evaluate(const PipelineConfig& config);
CommandResult cmd_predict(const PipelineConfig& config);
CommandResult cmd_archive_inspect(const PipelineConfig& config);
CommandResult cmd_init_encoder(const PipelineConfig& config);
CommandResult cmd_synth(const PipelineConfig& config);

/// Tensor names, shapes, metadata and per-tensor SHA-256 of an archive file.
nlohmann::json inspect_archive(const std::filesystem::path& path);

}  // namespace nodulekit::pipeline
