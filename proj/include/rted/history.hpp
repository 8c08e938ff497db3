#pragma once

#include <cstddef>
#include <deque>
#include <stdexcept>
#include <vector>

#include "rted/dispatch.hpp"

namespace rted {

// What one interval leaves behind for the DF predictors.
struct HistoryRecord {
  DfVector realized_df;
  std::vector<double> loads;          // MW per bus index
  std::vector<double> dera_dispatch;  // instruction per DERA
};

// Chronological ring buffer; the oldest record is dropped once full.
class DfHistory {
 public:
  explicit DfHistory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("history capacity must be positive");
  }

  void push(HistoryRecord r) {
    if (records_.size() == capacity_) records_.pop_front();
    records_.push_back(std::move(r));
  }

  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return records_.empty(); }
  // 0 is the oldest record held.
  const HistoryRecord& at(std::size_t i) const { return records_.at(i); }
  const HistoryRecord& back() const { return records_.back(); }

 private:
  std::size_t capacity_;
  std::deque<HistoryRecord> records_;
};

// Realized T-DER outputs of a record: realized DF times the instruction.
inline std::vector<std::vector<double>> tder_outputs(const HistoryRecord& r) {
  std::vector<std::vector<double>> out(r.realized_df.phi.size());
  for (std::size_t a = 0; a < out.size(); ++a)
    for (double phi : r.realized_df.phi[a]) out[a].push_back(phi * r.dera_dispatch.at(a));
  return out;
}

}  // namespace rted
