#include "newsbandit/harness.hpp"

#include <charconv>
#include <fstream>
#include <regex>
#include <sstream>

#include "newsbandit/error.hpp"
#include "newsbandit/io.hpp"

namespace nb {

namespace fs = std::filesystem;
using io::format_double;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

template <typename T>
T parse_number(const std::string& s, const char* what) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw IoError(std::string("malformed ") + what + " '" + s + "'");
  return v;
}

// Yields data rows after checking the header line.
std::vector<std::vector<std::string>> csv_rows(const std::string& text, const std::string& header, std::size_t width) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header) throw IoError("unexpected CSV header: '" + line + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != width) throw IoError("CSV row has " + std::to_string(cells.size()) + " cells: " + line);
    rows.push_back(std::move(cells));
  }
  return rows;
}

const std::string kSummaryHeader = "policy,mode,n_users,m,mean,std";
const std::string kCurveHeader = "iteration,user,reward,ctr,cumulative_reward,cumulative_ctr";

std::string policy_label(const Summary& s) {
  if (s.topic_policy.empty() || s.topic_policy == s.policy) return s.policy;
  return s.topic_policy + "/" + s.policy;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string summary_csv(const Summary& s) {
  std::string out = kSummaryHeader + "\n";
  if (s.trials == 0) return out;
  out += policy_label(s) + "," + s.mode + "," + std::to_string(s.n_users) + "," + std::to_string(s.m) + "," +
         format_double(s.mean) + "," + format_double(s.std) + "\n";
  return out;
}

std::string curve_csv(const std::vector<MetricsRecord>& records) {
  std::string out = kCurveHeader + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.iteration) + "," + std::to_string(r.user) + "," + std::to_string(r.reward) + "," +
           format_double(r.ctr) + "," + format_double(r.cumulative_reward) + "," + format_double(r.cumulative_ctr) +
           "\n";
  }
  return out;
}

std::vector<SummaryRow> parse_summary_csv(const std::string& text) {
  std::vector<SummaryRow> out;
  for (const auto& c : csv_rows(text, kSummaryHeader, 6)) {
    out.push_back({c[0], c[1], parse_number<std::size_t>(c[2], "n_users"), parse_number<std::size_t>(c[3], "m"),
                   parse_number<double>(c[4], "mean"), parse_number<double>(c[5], "std")});
  }
  return out;
}

std::vector<MetricsRecord> parse_curve_csv(const std::string& text) {
  std::vector<MetricsRecord> out;
  for (const auto& c : csv_rows(text, kCurveHeader, 6)) {
    MetricsRecord r;
    r.iteration = parse_number<std::size_t>(c[0], "iteration");
    r.user = parse_number<UserId>(c[1], "user");
    r.reward = parse_number<std::size_t>(c[2], "reward");
    r.ctr = parse_number<double>(c[3], "ctr");
    r.cumulative_reward = parse_number<double>(c[4], "cumulative_reward");
    r.cumulative_ctr = parse_number<double>(c[5], "cumulative_ctr");
    out.push_back(r);
  }
  return out;
}

void emit_report(const ExperimentConfig& cfg, const Summary& summary, const std::vector<TrialResult>& trials,
                 const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "curves", ec);
  if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
  io::write_text(dir / "summary.csv", summary_csv(summary));
  io::write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");
  std::string recs = "trial,iteration,slot,item,topic,reward,score\n";
  for (const auto& t : trials) {
    io::write_text(dir / "curves" / ("trial_" + std::to_string(t.trial) + ".csv"), curve_csv(t.records));
    for (const auto& r : t.recommendations) {
      recs += std::to_string(t.trial) + "," + std::to_string(r.iteration) + "," + std::to_string(r.slot) + "," +
              std::to_string(r.item) + "," + std::to_string(r.topic) + "," + std::to_string(r.reward) + "," +
              format_double(r.score) + "\n";
    }
  }
  io::write_text(dir / "recommendations.csv", recs);
}

Summary rebuild_report(const fs::path& dir) {
  const ExperimentConfig cfg = parse_config(read_file(dir / "config.json"));
  static const std::regex name(R"(trial_(\d+)\.csv)");
  std::vector<std::pair<std::size_t, double>> finals;
  if (fs::is_directory(dir / "curves")) {
    for (const auto& entry : fs::directory_iterator(dir / "curves")) {
      std::smatch mt;
      const std::string fname = entry.path().filename().string();
      if (!std::regex_match(fname, mt, name)) continue;
      const auto recs = parse_curve_csv(read_file(entry.path()));
      finals.emplace_back(std::stoul(mt[1].str()), recs.empty() ? 0.0 : recs.back().cumulative_ctr);
    }
  }
  std::sort(finals.begin(), finals.end());
  std::vector<double> values;
  for (const auto& f : finals) values.push_back(f.second);
  Summary s = summarize(cfg, values);
  io::write_text(dir / "summary.csv", summary_csv(s));
  return s;
}

}  // namespace nb
