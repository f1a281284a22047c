#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "newsbandit/simulator.hpp"

namespace nb::io {

// JSON-lines interchange records. Readers validate each line and report the
// file and line number of the first violation as an IoError.

struct EmbeddingRecord {
  std::string id;
  std::vector<double> vec;  // pre-bias components
};

struct TopicRecord {
  std::string topic;
  std::vector<std::string> items;
};

struct LogRecord {
  std::string impression;
  std::string user;
  std::string item;
  int label;
};

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records);

std::vector<TopicRecord> read_topics(const std::filesystem::path& path);
void write_topics(const std::filesystem::path& path, const std::vector<TopicRecord>& records);

std::vector<LogRecord> read_logs(const std::filesystem::path& path);
void write_logs(const std::filesystem::path& path, const std::vector<LogRecord>& records);

/// Trained-simulator document: dims, vectors, threshold, flip_prob, seed.
nlohmann::json simulator_to_json(const GroundTruthModel& model, const std::vector<std::string>& user_names,
                                 const std::vector<std::string>& item_names);
struct NamedSimulator {
  GroundTruthModel model;
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;
};
NamedSimulator simulator_from_json(const nlohmann::json& doc);

nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest decimal form that parses back to the same double (locale independent).
std::string format_double(double v);

}  // namespace nb::io
