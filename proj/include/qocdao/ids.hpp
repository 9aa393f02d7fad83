#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>
#include <utility>

namespace qocdao {

// Opaque string identifier, distinct per Tag so option ids cannot be passed
// where criterion ids are expected.
template <typename Tag>
class Id {
 public:
  Id() = default;
  explicit Id(std::string value) : value_(std::move(value)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const Id&, const Id&) = default;
  friend bool operator==(const Id&, const Id&) = default;

  friend std::ostream& operator<<(std::ostream& os, const Id& id) { return os << id.value_; }

 private:
  std::string value_;
};

using OptionId = Id<struct OptionTag>;
using CriterionId = Id<struct CriterionTag>;
using VoterId = Id<struct VoterTag>;
using VoteId = Id<struct VoteTag>;
using ProposalId = Id<struct ProposalTag>;
using GroupId = Id<struct GroupTag>;

// A single evaluation cell: (option, criterion).
struct Cell {
  OptionId option;
  CriterionId criterion;

  friend auto operator<=>(const Cell&, const Cell&) = default;
  friend bool operator==(const Cell&, const Cell&) = default;
};

// A single voter's evaluation of a cell, used as the exclusion key.
struct VoterCell {
  VoterId voter;
  OptionId option;
  CriterionId criterion;

  friend auto operator<=>(const VoterCell&, const VoterCell&) = default;
  friend bool operator==(const VoterCell&, const VoterCell&) = default;
};

}  // namespace qocdao

template <typename Tag>
struct std::hash<qocdao::Id<Tag>> {
  std::size_t operator()(const qocdao::Id<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
