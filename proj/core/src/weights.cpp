#include "crewfolio/weights.hpp"

#include <cmath>
#include <stdexcept>

#include "text.hpp"

namespace crewfolio {

double WeightVector::sum() const {
  double acc = 0;
  for (double w : weights) acc += w;
  return acc;
}

void WeightVector::validate() const {
  if (assets.empty()) throw std::invalid_argument("weight vector has no assets");
  if (assets.size() != weights.size())
    throw std::invalid_argument("weight vector: asset/weight size mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i]) || weights[i] < 0)
      throw std::invalid_argument("negative or non-finite weight for asset '" +
                                  assets[i] + "'");
  }
  if (std::abs(sum() - 1.0) > kWeightSumTolerance)
    throw std::invalid_argument("weights do not sum to 1");
}

WeightVector equal_weights(std::vector<std::string> assets) {
  if (assets.empty())
    throw std::invalid_argument("equal_weights: empty asset list");
  WeightVector out;
  out.weights.assign(assets.size(), 1.0 / static_cast<double>(assets.size()));
  out.assets = std::move(assets);
  return out;
}

void WeightSchedule::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.start_date > e.end_date)
      throw std::invalid_argument("schedule entry " + std::to_string(i) +
                                  " has start after end");
    e.weights.validate();
    if (i > 0 && !(entries[i - 1].end_date < e.start_date))
      throw std::invalid_argument("schedule entries overlap or are unordered at " +
                                  e.start_date);
  }
}

std::string to_delimited(const WeightSchedule& schedule, char delimiter) {
  std::string out = "start_date";
  out += delimiter;
  out += "end_date";
  out += delimiter;
  out += "ticker";
  out += delimiter;
  out += "weight\n";
  for (const auto& e : schedule.entries) {
    for (std::size_t i = 0; i < e.weights.assets.size(); ++i) {
      out += e.start_date;
      out += delimiter;
      out += e.end_date;
      out += delimiter;
      out += e.weights.assets[i];
      out += delimiter;
      out += text::format_full(e.weights.weights[i]);
      out += '\n';
    }
  }
  return out;
}

WeightSchedule parse_schedule(const std::string& content, char delimiter) {
  WeightSchedule schedule;
  ScheduleEntry* current = nullptr;
  for (auto line : text::split_lines(content)) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = text::split_fields(t, delimiter);
    if (fields.size() != 4)
      throw std::invalid_argument("schedule row needs 4 fields: " +
                                  std::string(t));
    if (text::trim(fields[0]) == "start_date") continue;  // header
    std::string start(text::trim(fields[0]));
    std::string end(text::trim(fields[1]));
    std::string ticker(text::trim(fields[2]));
    auto weight = text::parse_double(fields[3]);
    if (!weight)
      throw std::invalid_argument("bad weight in schedule row: " +
                                  std::string(t));
    if (current == nullptr || current->start_date != start ||
        current->end_date != end) {
      schedule.entries.push_back({start, end, {}, ScheduleEntry::Source::Optimized});
      current = &schedule.entries.back();
    }
    current->weights.assets.push_back(std::move(ticker));
    current->weights.weights.push_back(*weight);
  }
  if (schedule.entries.empty())
    throw std::invalid_argument("empty weight schedule");
  return schedule;
}

std::string to_delimited(const WeightVector& weights, char delimiter) {
  std::string out = "ticker";
  out += delimiter;
  out += "weight\n";
  for (std::size_t i = 0; i < weights.assets.size(); ++i) {
    out += weights.assets[i];
    out += delimiter;
    out += text::format_full(weights.weights[i]);
    out += '\n';
  }
  return out;
}

WeightVector parse_weights(const std::string& content, char delimiter) {
  WeightVector out;
  for (auto line : text::split_lines(content)) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = text::split_fields(t, delimiter);
    std::string_view ticker_field, weight_field;
    if (fields.size() == 2) {
      if (text::trim(fields[0]) == "ticker") continue;  // header
      ticker_field = fields[0];
      weight_field = fields[1];
    } else if (fields.size() == 4) {
      if (text::trim(fields[0]) == "start_date") continue;  // header
      ticker_field = fields[2];
      weight_field = fields[3];
    } else {
      throw std::invalid_argument("weight row needs 2 or 4 fields: " +
                                  std::string(t));
    }
    auto ticker = text::trim(ticker_field);
    auto weight = text::parse_double(weight_field);
    if (!weight)
      throw std::invalid_argument("bad weight value: " + std::string(t));
    out.assets.emplace_back(ticker);
    out.weights.push_back(*weight);
  }
  if (out.assets.empty()) throw std::invalid_argument("empty weight file");
  return out;
}

}  // namespace crewfolio
